"""Sliding-window attention blocks with rotary positions, plus streaming.

Two forward paths share one set of parameters:

* `block_forward` / `stack_forward` run whole sequences through full-matrix
  masked attention. This is the training path and the reference the streaming
  kernel is tested against.
* `StreamState` + `stream_push` process one frame at a time against per-layer
  ring buffers of the last `left - 1` keys and values. Pushed stacks must be
  strictly causal (window.right == 0); any lookahead is the caller's job to
  arrange by delaying reads, as the codec decoder does.

Offline inference in the codec reuses the streaming kernel frame by frame, so
"offline" and "streamed" token sequences agree bit for bit by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from . import tensor as T
from .errors import ContractError, ShapeError
from .tensor import Tensor

ROTARY_BASE = 10000.0
INIT_STD = 0.02
LN_EPS = 1e-5


@dataclass(frozen=True)
class WindowSpec:
    """Attention window: `left` positions back including self, `right` ahead."""

    left: int
    right: int

    def __post_init__(self):
        if self.left < 1 or self.right < 0:
            raise ContractError("WindowSpec needs left >= 1 and right >= 0")


def window_mask(t_len: int, w: WindowSpec) -> np.ndarray:
    """Boolean (t_len, t_len) matrix; [t, u] is True iff t may attend to u.

    Position t sees u exactly when max(0, t - left + 1) <= u <= min(t + right,
    t_len - 1). Every row allows at least itself.
    """
    t = np.arange(t_len)[:, None]
    u = np.arange(t_len)[None, :]
    return (u >= t - w.left + 1) & (u <= t + w.right)


@dataclass
class BlockParams:
    """Parameters of one pre-norm attention + feed-forward block."""

    heads: int
    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    ln1_gain: Tensor
    ln1_bias: Tensor
    ln2_gain: Tensor
    ln2_bias: Tensor
    ff1_w: Tensor
    ff1_b: Tensor
    ff2_w: Tensor
    ff2_b: Tensor


@dataclass
class StackParams:
    """A stack of blocks sharing one window, closed by a final layer norm."""

    blocks: list[BlockParams]
    final_gain: Tensor
    final_bias: Tensor
    window: WindowSpec
    rope: bool = True


def init_block(hidden: int, heads: int, rng: np.random.Generator,
               ffn_mult: int = 4) -> BlockParams:
    """Gaussian(0, 0.02^2) projections, zero biases, unit layer-norm gains."""
    if hidden % heads != 0:
        raise ShapeError("hidden size must divide evenly into heads")
    if (hidden // heads) % 2 != 0:
        raise ShapeError("head dim must be even for rotary positions")

    def w(rows, cols):
        return T.parameter(rng.normal(0.0, INIT_STD, (rows, cols)).astype(np.float32))

    def b(n):
        return T.parameter(np.zeros(n, dtype=np.float32))

    def g(n):
        return T.parameter(np.ones(n, dtype=np.float32))

    ffn = ffn_mult * hidden
    return BlockParams(
        heads=heads,
        wq=w(hidden, hidden), bq=b(hidden),
        wk=w(hidden, hidden), bk=b(hidden),
        wv=w(hidden, hidden), bv=b(hidden),
        wo=w(hidden, hidden), bo=b(hidden),
        ln1_gain=g(hidden), ln1_bias=b(hidden),
        ln2_gain=g(hidden), ln2_bias=b(hidden),
        ff1_w=w(hidden, ffn), ff1_b=b(ffn),
        ff2_w=w(ffn, hidden), ff2_b=b(hidden),
    )


def init_stack(hidden: int, heads: int, layers: int, window: WindowSpec,
               rng: np.random.Generator, rope: bool = True) -> StackParams:
    return StackParams(
        blocks=[init_block(hidden, heads, rng) for _ in range(layers)],
        final_gain=T.parameter(np.ones(hidden, dtype=np.float32)),
        final_bias=T.parameter(np.zeros(hidden, dtype=np.float32)),
        window=window,
        rope=rope,
    )


def block_param_items(prefix: str, p: BlockParams) -> list[tuple[str, Tensor]]:
    return [(f"{prefix}.{k}", getattr(p, k))
            for k in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo",
                      "ln1_gain", "ln1_bias", "ln2_gain", "ln2_bias",
                      "ff1_w", "ff1_b", "ff2_w", "ff2_b")]


def stack_param_items(prefix: str, sp: StackParams) -> list[tuple[str, Tensor]]:
    items: list[tuple[str, Tensor]] = []
    for i, blk in enumerate(sp.blocks):
        items.extend(block_param_items(f"{prefix}.blocks.{i}", blk))
    items.append((f"{prefix}.final_gain", sp.final_gain))
    items.append((f"{prefix}.final_bias", sp.final_bias))
    return items


def _rotary_tables(pos0: int, t_len: int, head_dim: int,
                   dtype) -> tuple[np.ndarray, np.ndarray]:
    half = head_dim // 2
    inv = ROTARY_BASE ** (-np.arange(half, dtype=np.float64) * 2.0 / head_dim)
    angles = np.arange(pos0, pos0 + t_len, dtype=np.float64)[:, None] * inv[None, :]
    return np.cos(angles).astype(dtype), np.sin(angles).astype(dtype)


def _apply_rotary(x: Tensor, cos: Tensor, sin: Tensor) -> Tensor:
    # x is (..., T, head_dim); the two halves rotate as a complex pair.
    hd = x.shape[-1]
    a = T.slice_axis(x, x.ndim - 1, 0, hd // 2)
    b = T.slice_axis(x, x.ndim - 1, hd // 2, hd)
    return T.concat([T.sub(T.mul(a, cos), T.mul(b, sin)),
                     T.add(T.mul(a, sin), T.mul(b, cos))], axis=x.ndim - 1)


def block_forward(x: Tensor, p: BlockParams, w: WindowSpec,
                  pos0: int = 0, rope: bool = True) -> Tensor:
    """One pre-norm block over a whole sequence.

    `x` is (T, hidden) or (batch, T, hidden); positions are absolute,
    starting at pos0, which is what lets a suffix of a longer stream be
    recomputed consistently.
    """
    squeeze = x.ndim == 2
    if squeeze:
        x = T.reshape(x, (1,) + x.shape)
    if x.ndim != 3:
        raise ShapeError("block_forward expects (T, H) or (B, T, H)")
    bsz, t_len, hidden = x.shape
    heads = p.heads
    hd = hidden // heads
    scale = 1.0 / math.sqrt(hd)

    xn = T.layer_norm(x, p.ln1_gain, p.ln1_bias, eps=LN_EPS)

    def heads_of(t: Tensor) -> Tensor:
        return T.transpose(T.reshape(t, (bsz, t_len, heads, hd)), (0, 2, 1, 3))

    q = heads_of(T.add(T.matmul(xn, p.wq), p.bq))
    k = heads_of(T.add(T.matmul(xn, p.wk), p.bk))
    v = heads_of(T.add(T.matmul(xn, p.wv), p.bv))

    if rope:
        cos_np, sin_np = _rotary_tables(pos0, t_len, hd, x.dtype)
        cos = T.constant(cos_np, dtype=x.dtype)
        sin = T.constant(sin_np, dtype=x.dtype)
        q = _apply_rotary(q, cos, sin)
        k = _apply_rotary(k, cos, sin)

    scores = T.mul(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), scale)
    probs = T.masked_softmax(scores, window_mask(t_len, w))
    ctx = T.matmul(probs, v)
    merged = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (bsz, t_len, hidden))
    att = T.add(T.matmul(merged, p.wo), p.bo)

    h = T.add(x, att)
    hn = T.layer_norm(h, p.ln2_gain, p.ln2_bias, eps=LN_EPS)
    ff = T.add(T.matmul(T.gelu(T.add(T.matmul(hn, p.ff1_w), p.ff1_b)), p.ff2_w), p.ff2_b)
    out = T.add(h, ff)
    if squeeze:
        out = T.reshape(out, out.shape[1:])
    return out


def stack_forward(x: Tensor, sp: StackParams, pos0: int = 0) -> Tensor:
    """All blocks in order, then the final layer norm."""
    for blk in sp.blocks:
        x = block_forward(x, blk, sp.window, pos0=pos0, rope=sp.rope)
    return T.layer_norm(x, sp.final_gain, sp.final_bias, eps=LN_EPS)


# -- streaming kernel ----------------------------------------------------------
#
# Everything below works on raw float32 numpy rows; no graph is recorded.


@dataclass
class _LayerMemory:
    keys: list[np.ndarray] = field(default_factory=list)
    values: list[np.ndarray] = field(default_factory=list)


@dataclass
class StreamState:
    """Rolling attention state: position counter plus per-layer K/V memory.

    Memory never exceeds left - 1 rows per layer, so a session is O(layers *
    left * hidden) regardless of how long the stream runs.
    """

    stack: StackParams
    pos: int = 0
    layers: list[_LayerMemory] = field(default_factory=list)

    def __post_init__(self):
        if self.stack.window.right != 0:
            raise ContractError("streaming requires a strictly causal stack")
        self.layers = [_LayerMemory() for _ in self.stack.blocks]


def _ln_row(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mu = x.mean(dtype=np.float64)
    c = (x.astype(np.float64) - mu)
    var = (c * c).mean()
    y = c / np.sqrt(var + LN_EPS)
    return (y * gain + bias).astype(np.float32)


def _gelu_row(x: np.ndarray) -> np.ndarray:
    return (x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))).astype(np.float32)


def _rotate_row(x: np.ndarray, cos: np.ndarray, sin: np.ndarray) -> np.ndarray:
    half = x.shape[-1] // 2
    a, b = x[..., :half], x[..., half:]
    return np.concatenate([a * cos - b * sin, a * sin + b * cos], axis=-1)


def stream_push(state: StreamState, frame_row: np.ndarray) -> np.ndarray:
    """Feed one frame through the stack; returns the final-normed output row.

    The result matches the same row of `stack_forward` on the full history to
    within 1e-5 (float32 reduction orders differ between the two paths).
    """
    sp = state.stack
    x = np.asarray(frame_row, dtype=np.float32)
    pos = state.pos
    for blk, mem in zip(sp.blocks, state.layers):
        x = _push_block(x, blk, mem, pos, sp.window.left, sp.rope)
    state.pos += 1
    return _ln_row(x, sp.final_gain.data, sp.final_bias.data)


def _push_block(x: np.ndarray, p: BlockParams, mem: _LayerMemory,
                pos: int, left: int, rope: bool) -> np.ndarray:
    heads = p.heads
    hidden = x.shape[-1]
    hd = hidden // heads

    xn = _ln_row(x, p.ln1_gain.data, p.ln1_bias.data)
    q = (xn @ p.wq.data + p.bq.data).reshape(heads, hd)
    k = (xn @ p.wk.data + p.bk.data).reshape(heads, hd)
    v = (xn @ p.wv.data + p.bv.data).reshape(heads, hd)

    if rope:
        cos, sin = _rotary_tables(pos, 1, hd, np.float32)
        q = _rotate_row(q, cos[0], sin[0])
        k = _rotate_row(k, cos[0], sin[0])

    window_k = mem.keys + [k]
    window_v = mem.values + [v]
    kmat = np.stack(window_k, axis=1)          # (heads, w, hd)
    vmat = np.stack(window_v, axis=1)
    scores = np.einsum("hd,hwd->hw", q, kmat) / np.float32(math.sqrt(hd))
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    probs = (e / e.sum(axis=-1, keepdims=True, dtype=np.float64)).astype(np.float32)
    ctx = np.einsum("hw,hwd->hd", probs, vmat).reshape(hidden).astype(np.float32)
    att = ctx @ p.wo.data + p.bo.data

    h = x + att
    hn = _ln_row(h, p.ln2_gain.data, p.ln2_bias.data)
    ff = _gelu_row(hn @ p.ff1_w.data + p.ff1_b.data) @ p.ff2_w.data + p.ff2_b.data
    out = h + ff

    mem.keys.append(k)
    mem.values.append(v)
    if len(mem.keys) > left - 1:
        del mem.keys[0]
        del mem.values[0]
    return out.astype(np.float32)
