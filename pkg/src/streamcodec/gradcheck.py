"""Finite-difference verification of the autodiff engine.

`gradcheck` compares analytic gradients against central differences computed
in float64 with a fixed step. `run_suite` applies it to every differentiable
op in the engine, sampling inputs away from non-smooth points (the kink of
abs and leaky_relu, division near zero) so the comparison is meaningful.

straight_through is checked in its identity configuration (values equal to
the input), which is the one case where its surrogate gradient coincides with
the true derivative; its off-identity behavior is pinned by direct unit tests
instead, since disagreeing with finite differences there is its entire point.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import Tensor

DEFAULT_STEP = 1e-4


def gradcheck(fn: Callable[..., Tensor], inputs: Sequence[np.ndarray],
              step: float = DEFAULT_STEP) -> float:
    """Max relative error between analytic and numeric gradients of `fn`.

    `fn` maps float64 Tensors to a scalar Tensor and must be pure. The error
    for each input element is |analytic - numeric| / max(1, |numeric|), with
    numeric = (f(x + h) - f(x - h)) / 2h.
    """
    leaves = [Tensor(np.array(x, dtype=np.float64), requires_grad=True)
              for x in inputs]
    fn(*leaves).backward()

    probes = [Tensor(np.array(x, dtype=np.float64)) for x in inputs]

    def evaluate() -> float:
        with T.no_grad():
            return fn(*probes).item()

    worst = 0.0
    for slot, leaf in enumerate(leaves):
        analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        flat = probes[slot].data.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            hi = evaluate()
            flat[i] = saved - step
            lo = evaluate()
            flat[i] = saved
            numeric = (hi - lo) / (2.0 * step)
            err = abs(float(aflat[i]) - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst


def _away_from_zero(rng: np.random.Generator, shape, margin: float = 1e-2) -> np.ndarray:
    """Uniform in [-1, 1] with |x| >= margin, keeping kinks out of FD reach."""
    x = rng.uniform(-1.0, 1.0, size=shape)
    small = np.abs(x) < margin
    x[small] = np.sign(x[small] + 0.5) * (margin + np.abs(x[small]))
    return x


def _projector(rng: np.random.Generator, shape) -> np.ndarray:
    # Random projection folds a full Jacobian check into one scalar output.
    return rng.standard_normal(shape)


def _suite_entries(rng: np.random.Generator):
    u = lambda *s: rng.uniform(-1.0, 1.0, size=s)
    entries: list[tuple[str, Callable[..., Tensor], list[np.ndarray]]] = []

    def proj_of(build, *inputs):
        sample = build(*[Tensor(np.asarray(x, dtype=np.float64)) for x in inputs])
        r = _projector(rng, sample.shape)
        entries.append((name, lambda *ts: T.sum_(T.mul(build(*ts), Tensor(r, dtype=np.float64))), list(inputs)))

    name = "add"
    proj_of(T.add, u(3, 4), u(3, 4))
    name = "add_broadcast"
    proj_of(T.add, u(3, 4), u(4))
    name = "sub"
    proj_of(T.sub, u(3, 4), u(3, 4))
    name = "mul"
    proj_of(T.mul, u(3, 4), u(3, 4))
    name = "mul_broadcast"
    proj_of(T.mul, u(2, 3, 4), u(4))
    name = "div"
    proj_of(T.div, u(3, 4), rng.uniform(0.5, 1.5, size=(3, 4)))
    name = "neg"
    proj_of(T.neg, u(3, 4))
    name = "exp"
    proj_of(T.exp, u(3, 4))
    name = "log"
    proj_of(T.log, rng.uniform(0.5, 2.0, size=(3, 4)))
    name = "sqrt"
    proj_of(T.sqrt, rng.uniform(0.5, 2.0, size=(3, 4)))
    name = "square"
    proj_of(T.square, u(3, 4))
    name = "abs"
    proj_of(T.absolute, _away_from_zero(rng, (3, 4)))
    name = "tanh"
    proj_of(T.tanh, u(3, 4))
    name = "gelu"
    proj_of(T.gelu, 2.0 * u(3, 4))
    name = "leaky_relu"
    proj_of(T.leaky_relu, _away_from_zero(rng, (3, 4)))
    name = "matmul"
    proj_of(T.matmul, u(3, 4), u(4, 2))
    name = "matmul_batched"
    proj_of(T.matmul, u(2, 3, 4), u(2, 4, 5))
    name = "matmul_broadcast"
    proj_of(T.matmul, u(2, 3, 4), u(4, 5))
    name = "transpose"
    proj_of(lambda t: T.transpose(t, (1, 2, 0)), u(2, 3, 4))
    name = "reshape"
    proj_of(lambda t: T.reshape(t, (4, 3)), u(3, 4))
    name = "concat"
    proj_of(lambda a, b: T.concat([a, b], axis=1), u(3, 2), u(3, 3))
    name = "slice"
    proj_of(lambda t: T.slice_axis(t, 1, 1, 3), u(3, 4))
    name = "sum_axis"
    proj_of(lambda t: T.sum_(t, axis=0), u(3, 4))
    name = "mean_axis"
    proj_of(lambda t: T.mean_(t, axis=1, keepdims=True), u(3, 4))
    name = "mean_all"
    entries.append(("mean_all", lambda t: T.mean_(t), [u(3, 4)]))
    name = "softmax"
    proj_of(lambda t: T.softmax(t, axis=-1), u(3, 5))
    name = "masked_softmax"
    mask = rng.random((3, 5)) < 0.6
    mask[:, 0] = True
    proj_of(lambda t: T.masked_softmax(t, mask), u(3, 5))
    name = "layer_norm"
    proj_of(T.layer_norm, u(3, 8), rng.uniform(0.5, 1.5, size=8), u(8))
    name = "gather_rows"
    ids = np.array([0, 2, 2, 4, 1])
    proj_of(lambda t: T.gather_rows(t, ids), u(5, 3))
    name = "straight_through"
    proj_of(lambda t: T.straight_through(t, t.data), u(3, 4))
    name = "reflect_pad"
    proj_of(lambda t: T.reflect_pad(t, 3), u(2, 9))
    name = "frame"
    proj_of(lambda t: T.frame(t, 4, 2), u(11))
    name = "rfft_magnitude"
    proj_of(T.rfft_magnitude, u(3, 8))
    return entries


def run_suite(seed: int, step: float = DEFAULT_STEP) -> dict[str, float]:
    """Gradcheck every op with inputs drawn from `seed`; returns name -> error."""
    rng = np.random.default_rng(seed)
    results: dict[str, float] = {}
    for name, fn, inputs in _suite_entries(rng):
        results[name] = gradcheck(fn, inputs, step=step)
    return results


def gradcheck_params(build_loss: Callable[[], Tensor], params: Sequence[Tensor],
                     step: float = DEFAULT_STEP) -> float:
    """Finite differences with a model's own parameters as the variables.

    `build_loss` must rebuild the scalar loss from scratch on each call;
    `params` are its float64 requires_grad leaves. Same error measure as
    `gradcheck`.
    """
    build_loss().backward()
    grads = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data)
             for p in params]
    for p in params:
        p.grad = None

    def evaluate() -> float:
        with T.no_grad():
            return build_loss().item()

    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            hi = evaluate()
            flat[i] = saved - step
            lo = evaluate()
            flat[i] = saved
            numeric = (hi - lo) / (2.0 * step)
            worst = max(worst, abs(float(gflat[i]) - numeric) / max(1.0, abs(numeric)))
    return worst


def run_composite(seed: int, step: float = DEFAULT_STEP) -> float:
    """Gradcheck the composed 2-frame micro-codec end to end.

    Builds the smallest legal model, promotes every parameter to float64,
    and differentiates a smooth reconstruction objective (mean squared error
    plus a small latent penalty) through the full encoder, windowed stacks,
    delayed decoder, and output head on a 2-frame batch. The quantization
    bypass path is the checkable composition; the straight-through branch is
    excluded by design, as in the op suite.
    """
    from .attention import WindowSpec
    from .codec import Codec, ModelConfig, latent_reg
    from .noise import NoiseConfig
    from .training import reconstruct

    rng = np.random.default_rng(seed)
    cfg = ModelConfig(sample_rate=8, frame_size=4, hidden_dim=4, code_dim=3,
                      codebook_size=5, enc_layers=1, dec_layers=1, heads=2,
                      enc_window=WindowSpec(2, 0), dec_window=WindowSpec(2, 1),
                      noise=NoiseConfig(p=0.0))
    codec = Codec(cfg, seed=seed)
    params = [p for name, p in sorted(codec.params().items())
              if not name.startswith("disc.")]
    for p in params:
        p.data = p.data.astype(np.float64)
        p.requires_grad = True
        p.grad = None
    batch = rng.uniform(-0.5, 0.5, (1, 2 * cfg.frame_size))
    target = Tensor(rng.uniform(-0.5, 0.5, (1, 2 * cfg.frame_size)))

    def build_loss() -> Tensor:
        out = reconstruct(codec, batch, stage=1, train=False)
        err = T.mean_(T.square(T.sub(out.wave, target)))
        return T.add(err, T.mul(latent_reg(out.z), 0.01))

    return gradcheck_params(build_loss, params, step)
