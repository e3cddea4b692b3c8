"""Model assembly and inference for the streaming codec.

The signal path, shared by training and inference:

  encode:  frames of `frame_size` samples -> two-layer lift (gelu between)
           -> [training only: frame-masked noise] -> causal windowed encoder
           -> linear head to `code_dim` latents -> nearest-code tokens
  decode:  effective-code lookup -> linear lift -> causal windowed decoder,
           read `dec_window.right` positions late -> linear head back to
           `frame_size` samples per frame

The decoder's lookahead is realized as an output delay over a strictly causal
stack: the lifted token sequence is extended with `right` zero rows and audio
frame t is read from stack position t + right. That fixes total lookahead at
exactly `right` frames regardless of depth, and gives streaming its flush
rule (push the zero rows at end of stream).

Offline encode() and decode() drive the same per-frame kernels as
StreamSession, so offline and chunk-size-1 streaming results are identical
bit for bit, not merely close.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .attention import (StreamState, WindowSpec, _gelu_row, init_stack,
                        stack_param_items, stream_push)
from .errors import ContractError, ShapeError
from .noise import NoiseConfig
from .quantizer import Codebook, quantize
from .tensor import Tensor

INIT_STD = 0.02


@dataclass
class ModelConfig:
    sample_rate: int = 16000
    frame_size: int = 320
    hidden_dim: int = 64
    code_dim: int = 8
    codebook_size: int = 256
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 4
    enc_window: WindowSpec = field(default_factory=lambda: WindowSpec(32, 0))
    dec_window: WindowSpec = field(default_factory=lambda: WindowSpec(32, 2))
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def validate(self) -> None:
        if self.sample_rate <= 0 or self.frame_size <= 0:
            raise ContractError("sample_rate and frame_size must be positive")
        if self.hidden_dim % self.heads != 0:
            raise ContractError("hidden_dim must divide evenly into heads")
        if (self.hidden_dim // self.heads) % 2 != 0:
            raise ContractError("head dim must be even for rotary positions")
        if self.enc_window.right != 0:
            raise ContractError("encoder must be strictly causal (right == 0)")
        if self.codebook_size < 1 or self.code_dim < 1:
            raise ContractError("codebook_size and code_dim must be positive")
        self.noise.validate()

    @property
    def token_rate(self) -> float:
        return self.sample_rate / self.frame_size


def bitrate(cfg: ModelConfig) -> float:
    """Token rate times bits per token, ceil(log2(codebook_size))."""
    bits = (cfg.codebook_size - 1).bit_length()
    return cfg.token_rate * bits


def latency_samples(cfg: ModelConfig) -> int:
    """Algorithmic decode delay: lookahead frames times samples per frame."""
    return cfg.dec_window.right * cfg.frame_size


def latent_reg(z: Tensor) -> Tensor:
    """Mean squared latent entry; keeps encoder outputs in a bounded box."""
    return T.mean_(T.square(z))


def adv_losses(real_logits: Tensor, fake_logits: Tensor,
               real_feats: Sequence[Tensor], fake_feats: Sequence[Tensor],
               ) -> tuple[Tensor, Tensor, Tensor]:
    """Least-squares adversarial losses plus L1 feature matching.

    generator: mean (fake - 1)^2; discriminator: mean (real - 1)^2 + mean
    fake^2, driving real toward 1 and fake toward 0; feature matching sums
    mean |real - fake| over the given activation pairs with the real side
    detached. Which logits are attached to which graph is the caller's job:
    pass fakes computed from detached input when building the discriminator
    update.
    """
    gen = T.mean_(T.square(T.sub(fake_logits, 1.0)))
    disc = T.add(T.mean_(T.square(T.sub(real_logits, 1.0))),
                 T.mean_(T.square(fake_logits)))
    if len(real_feats) != len(fake_feats):
        raise ShapeError("feature lists must pair up layer by layer")
    feat = T.constant(np.zeros((), dtype=np.float32))
    for rf, ff in zip(real_feats, fake_feats):
        feat = T.add(feat, T.mean_(T.absolute(T.sub(T.stop_gradient(rf), ff))))
    return gen, disc, feat


@dataclass
class _Linear:
    w: Tensor
    b: Tensor


def _init_linear(rows: int, cols: int, rng: np.random.Generator) -> _Linear:
    return _Linear(
        w=T.parameter(rng.normal(0.0, INIT_STD, (rows, cols)).astype(np.float32)),
        b=T.parameter(np.zeros(cols, dtype=np.float32)),
    )


def _apply(linear: _Linear, x: Tensor) -> Tensor:
    return T.add(T.matmul(x, linear.w), linear.b)


def _apply_row(linear: _Linear, x: np.ndarray) -> np.ndarray:
    return (x @ linear.w.data + linear.b.data).astype(np.float32)


class FrameDiscriminator:
    """Per-frame MLP over log-mel rows: n_mels -> hidden -> hidden -> 1.

    forward() returns the final logits and the two intermediate activations,
    which are what the feature-matching loss compares.
    """

    def __init__(self, n_mels: int, hidden: int, rng: np.random.Generator):
        self.n_mels = n_mels
        self.l1 = _init_linear(n_mels, hidden, rng)
        self.l2 = _init_linear(hidden, hidden, rng)
        self.l3 = _init_linear(hidden, 1, rng)

    def forward(self, logmel: Tensor) -> tuple[Tensor, list[Tensor]]:
        h1 = T.leaky_relu(_apply(self.l1, logmel))
        h2 = T.leaky_relu(_apply(self.l2, h1))
        return _apply(self.l3, h2), [h1, h2]

    def params(self, prefix: str = "disc") -> dict[str, Tensor]:
        out = {}
        for i, lin in enumerate((self.l1, self.l2, self.l3), start=1):
            out[f"{prefix}.l{i}.w"] = lin.w
            out[f"{prefix}.l{i}.b"] = lin.b
        return out


class Codec:
    """Parameters plus the offline/streaming inference entry points."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        cfg.validate()
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        h = cfg.hidden_dim
        self.enc_in1 = _init_linear(cfg.frame_size, h, rng)
        self.enc_in2 = _init_linear(h, h, rng)
        self.enc_stack = init_stack(h, cfg.heads, cfg.enc_layers, cfg.enc_window, rng)
        self.enc_out = _init_linear(h, cfg.code_dim, rng)
        self.dec_in = _init_linear(cfg.code_dim, h, rng)
        self.dec_stack = init_stack(h, cfg.heads, cfg.dec_layers,
                                    WindowSpec(cfg.dec_window.left, 0), rng)
        self.dec_out = _init_linear(h, cfg.frame_size, rng)
        self.codebook = Codebook(cfg.codebook_size, cfg.code_dim, rng)
        self.disc = FrameDiscriminator(n_mels=32, hidden=64, rng=rng)

    # -- parameter registry ---------------------------------------------------

    def params(self) -> dict[str, Tensor]:
        """Stable name -> tensor map covering every trainable parameter."""
        items: list[tuple[str, Tensor]] = []
        for name, lin in (("enc.in1", self.enc_in1), ("enc.in2", self.enc_in2),
                          ("enc.out", self.enc_out), ("dec.in", self.dec_in),
                          ("dec.out", self.dec_out)):
            items.append((f"{name}.w", lin.w))
            items.append((f"{name}.b", lin.b))
        items.extend(stack_param_items("enc.stack", self.enc_stack))
        items.extend(stack_param_items("dec.stack", self.dec_stack))
        items.append(("quant.map", self.codebook.map))
        items.extend(self.disc.params().items())
        return dict(items)

    def all_tensors(self) -> dict[str, np.ndarray]:
        """Everything a checkpoint must carry, including the frozen codebook."""
        out = {name: p.data for name, p in self.params().items()}
        out["quant.frozen"] = self.codebook.frozen
        return out

    def set_trainable(self, prefixes: tuple[str, ...]) -> dict[str, Tensor]:
        """Mark parameters under `prefixes` trainable, freeze the rest.

        Frozen parameters drop out of the graph entirely, which is what makes
        the per-stage freeze contracts structural rather than best-effort.
        Returns the trainable subset.
        """
        chosen: dict[str, Tensor] = {}
        for name, p in self.params().items():
            on = name.startswith(prefixes)
            p.requires_grad = on
            p.grad = None
            if on:
                chosen[name] = p
        return chosen

    def load_tensors(self, tensors: dict[str, np.ndarray]) -> None:
        """Overwrite parameters from a checkpoint's tensor table, by name."""
        want = self.all_tensors()
        for name, arr in want.items():
            if name not in tensors:
                raise ShapeError(f"checkpoint is missing tensor '{name}'")
            new = tensors[name]
            if tuple(new.shape) != tuple(arr.shape):
                raise ShapeError(
                    f"tensor '{name}' has shape {tuple(new.shape)}, "
                    f"model expects {tuple(arr.shape)}")
        params = self.params()
        for name, p in params.items():
            p.data[...] = tensors[name]
            p.version += 1
        self.codebook.frozen[...] = tensors["quant.frozen"]
        self.codebook._cache_version = -1

    # -- offline inference ------------------------------------------------------

    def pad_wave(self, wave: np.ndarray) -> np.ndarray:
        """Zero-pad the tail so the length is a whole number of frames."""
        wave = np.asarray(wave, dtype=np.float32).reshape(-1)
        r = self.cfg.frame_size
        rem = len(wave) % r
        if rem:
            wave = np.concatenate([wave, np.zeros(r - rem, dtype=np.float32)])
        return wave

    def encode(self, wave: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Tokens and latents for a waveform; runs the streaming kernel.

        The wave is zero-padded to a whole number of frames; one token per
        frame comes back along with the (frames, code_dim) latent rows.
        """
        wave = self.pad_wave(wave)
        frames = wave.reshape(-1, self.cfg.frame_size)
        enc = EncoderSession(self)
        tokens = np.empty(len(frames), dtype=np.int64)
        latents = np.empty((len(frames), self.cfg.code_dim), dtype=np.float32)
        for i, fr in enumerate(frames):
            tokens[i], latents[i] = enc.push_frame(fr)
        return tokens, latents

    def decode(self, tokens: np.ndarray) -> np.ndarray:
        """Waveform for a token sequence, length tokens * frame_size."""
        dec = DecoderSession(self)
        parts = [fr for tok in np.asarray(tokens).reshape(-1)
                 if (fr := dec.push_token(int(tok))) is not None]
        parts.extend(dec.flush())
        if not parts:
            return np.zeros(0, dtype=np.float32)
        return np.concatenate(parts)


class EncoderSession:
    """Frame-at-a-time encoder: push a frame, get its token immediately."""

    def __init__(self, codec: Codec):
        self.codec = codec
        self.state = StreamState(codec.enc_stack)

    def push_frame(self, frame: np.ndarray) -> tuple[int, np.ndarray]:
        c = self.codec
        frame = np.asarray(frame, dtype=np.float32)
        if frame.shape != (c.cfg.frame_size,):
            raise ShapeError("push_frame expects exactly one frame of samples")
        h = _gelu_row(_apply_row(c.enc_in1, frame))
        h = _apply_row(c.enc_in2, h)
        out = stream_push(self.state, h)
        z = _apply_row(c.enc_out, out)
        token, _ = quantize(z[None, :], c.codebook)
        return int(token[0]), z


class DecoderSession:
    """Token-at-a-time decoder with `right` frames of delay.

    push_token returns an audio frame once the lookahead is satisfied and
    None before that; flush() pushes the zero pad rows that close the stream
    and returns the delayed tail frames.
    """

    def __init__(self, codec: Codec):
        self.codec = codec
        self.state = StreamState(codec.dec_stack)
        self._emitted = 0

    def _advance(self, stack_input: np.ndarray) -> np.ndarray | None:
        c = self.codec
        out = stream_push(self.state, stack_input)
        position = self.state.pos - 1
        if position >= c.cfg.dec_window.right:
            self._emitted += 1
            return _apply_row(c.dec_out, out)
        return None

    def push_token(self, token: int) -> np.ndarray | None:
        c = self.codec
        if not 0 <= token < c.cfg.codebook_size:
            raise ContractError(f"token {token} outside the codebook")
        code = c.codebook.codes_data()[token]
        return self._advance(_apply_row(c.dec_in, code))

    def flush(self) -> list[np.ndarray]:
        c = self.codec
        zeros = np.zeros(c.cfg.hidden_dim, dtype=np.float32)
        tail = []
        for _ in range(c.cfg.dec_window.right):
            fr = self._advance(zeros)
            if fr is not None:
                tail.append(fr)
        return tail


class StreamSession:
    """Joint push/pull interface over the encoder and decoder sessions.

    Samples go in via push(), which returns each new token as soon as its
    frame completes; decoded audio becomes available exactly
    `dec_window.right` tokens later and is collected with pull(). pull()
    returning an empty array means "not ready", never an error. close() pads
    the final partial frame with zeros, flushes the decoder, and leaves the
    tail for one last pull().
    """

    def __init__(self, codec: Codec):
        self.codec = codec
        self.encoder = EncoderSession(codec)
        self.decoder = DecoderSession(codec)
        self.tokens: list[int] = []
        self._pending = np.zeros(0, dtype=np.float32)
        self._ready: list[np.ndarray] = []
        self._closed = False

    @property
    def latency_samples(self) -> int:
        return latency_samples(self.codec.cfg)

    def push(self, samples: np.ndarray) -> np.ndarray:
        """Feed samples; returns the tokens completed by this call."""
        if self._closed:
            raise ContractError("push after close")
        self._pending = np.concatenate(
            [self._pending, np.asarray(samples, dtype=np.float32).reshape(-1)])
        r = self.codec.cfg.frame_size
        new_tokens = []
        while len(self._pending) >= r:
            frame, self._pending = self._pending[:r], self._pending[r:]
            token, _ = self.encoder.push_frame(frame)
            self.tokens.append(token)
            new_tokens.append(token)
            audio = self.decoder.push_token(token)
            if audio is not None:
                self._ready.append(audio)
        return np.asarray(new_tokens, dtype=np.int64)

    @property
    def available(self) -> int:
        """Samples a pull() would return right now."""
        return int(sum(len(a) for a in self._ready))

    def pull(self) -> np.ndarray:
        """All decoded audio ready so far; empty array when none is (yet)."""
        if not self._ready:
            return np.zeros(0, dtype=np.float32)
        out = np.concatenate(self._ready)
        self._ready = []
        return out

    def close(self) -> None:
        """Pad the last partial frame, flush the decoder's delayed tail."""
        if self._closed:
            return
        if len(self._pending):
            r = self.codec.cfg.frame_size
            pad = np.zeros(r - len(self._pending), dtype=np.float32)
            self.push(pad)
        self._closed = True
        self._ready.extend(self.decoder.flush())
