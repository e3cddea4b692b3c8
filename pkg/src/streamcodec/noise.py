"""Frame-masked Gaussian corruption and its spectral attenuation law.

During training, a Bernoulli(p) draw per frame selects whole latent rows and
either replaces them with N(0, sigma^2 I) ("replacement") or adds that noise
to them ("gated-additive"). In expectation this multiplies the clean
frequency content by (1 - p) + p e^{-sigma^2 ||omega||^2 / 2}: masking acts
as a low-pass filter whose knee is set by p and sigma.

`mc_verify` checks that prediction empirically against a cosine probe
f(u) = cos(<omega, u> + phi), whose exact expectation is known for both
noise models:

  gated-additive:  A(p, sigma, ||omega||) * cos(<omega, x> + phi)
  replacement:     (1 - p) cos(<omega, x> + phi)
                     + p e^{-sigma^2 ||omega||^2 / 2} cos(phi)

with A the attenuation factor above. The two laws agree only when x or phi
makes the probe phase-free, which is what the verification grid exploits to
show they are genuinely different models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError
from .tensor import Tensor

NOISE_MODELS = ("replacement", "gated-additive")
MIN_VERIFY_SAMPLES = 10_000


@dataclass
class NoiseConfig:
    """Mask probability, noise scale, corruption model, per-stage switches."""

    p: float = 0.2
    sigma: float = 1.0
    model: str = "replacement"
    active: tuple[bool, bool, bool] = (True, True, True)

    def validate(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ContractError("noise p must lie in [0, 1]")
        if self.sigma < 0.0:
            raise ContractError("noise sigma must be nonnegative")
        if self.model not in NOISE_MODELS:
            raise ContractError(f"noise model must be one of {NOISE_MODELS}")
        if len(self.active) != 3:
            raise ContractError("noise.active needs one switch per stage")


def sample_mask(count: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Bernoulli(p) frame mask of length `count` (True = corrupt this frame)."""
    if not 0.0 <= p <= 1.0:
        raise ContractError("mask probability must lie in [0, 1]")
    return rng.random(count) < p


def inject(x: Tensor, cfg: NoiseConfig, rng: np.random.Generator) -> Tensor:
    """Corrupt whole frames of x (..., frames, width) per the config.

    The mask and noise are constants in the graph: no gradient flows into the
    corruption, and under the replacement model masked frames pass no gradient
    back to x at all. Draw order is mask first, then noise, so a fixed rng
    seed reproduces the corruption bit for bit.
    """
    cfg.validate()
    if x.ndim < 2:
        raise ContractError("inject expects (..., frames, width)")
    frames = x.shape[-2]
    lead = x.shape[:-2]
    mask = sample_mask(int(np.prod(lead, dtype=np.int64)) * frames, cfg.p, rng)
    mask = mask.reshape(lead + (frames, 1)).astype(np.float32)
    eps = rng.normal(0.0, cfg.sigma, x.shape).astype(np.float32)
    noise_rows = T.constant(mask * eps, dtype=x.dtype)
    if cfg.model == "replacement":
        keep = T.constant(1.0 - mask, dtype=x.dtype)
        return T.add(T.mul(x, keep), noise_rows)
    return T.add(x, noise_rows)


def attenuation_factor(p: float, sigma: float, omega_norm) -> np.ndarray | float:
    """Expected spectral gain (1 - p) + p e^{-sigma^2 ||omega||^2 / 2}."""
    if not 0.0 <= p <= 1.0:
        raise ContractError("p must lie in [0, 1]")
    if sigma < 0.0:
        raise ContractError("sigma must be nonnegative")
    w2 = np.asarray(omega_norm, dtype=np.float64) ** 2
    out = (1.0 - p) + p * np.exp(-0.5 * sigma * sigma * w2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class VerifyRow:
    """One cell of the analytic-vs-Monte-Carlo comparison."""

    omega_norm: float
    p: float
    sigma: float
    model: str
    analytic: float
    mc_mean: float
    mc_stderr: float
    n: int


def mc_verify(p: float, sigma: float, omega: np.ndarray, phi: float,
              x: np.ndarray, n: int, model: str,
              rng: np.random.Generator) -> VerifyRow:
    """Monte-Carlo estimate of E[cos(<omega, corrupt(x)> + phi)] vs closed form.

    Requires n >= 10^4 so the reported standard error means something. The
    whole vector x is treated as one frame: a single Bernoulli(p) draw either
    corrupts all of it or none of it, matching how frames are masked in
    training.
    """
    if n < MIN_VERIFY_SAMPLES:
        raise ContractError(f"mc_verify needs n >= {MIN_VERIFY_SAMPLES}")
    if model not in NOISE_MODELS:
        raise ContractError(f"noise model must be one of {NOISE_MODELS}")
    omega = np.asarray(omega, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if omega.shape != x.shape or omega.ndim != 1:
        raise ContractError("omega and x must be 1-d vectors of equal length")

    masks = rng.random(n) < p
    eps = rng.normal(0.0, sigma, (n, x.size))
    if model == "replacement":
        samples = np.where(masks[:, None], eps, x[None, :])
    else:
        samples = x[None, :] + masks[:, None] * eps
    f = np.cos(samples @ omega + phi)
    mc_mean = float(f.mean())
    mc_stderr = float(f.std(ddof=1) / np.sqrt(n))

    wnorm = float(np.sqrt(omega @ omega))
    clean = float(np.cos(x @ omega + phi))
    damp = float(np.exp(-0.5 * sigma * sigma * wnorm * wnorm))
    if model == "replacement":
        analytic = (1.0 - p) * clean + p * damp * float(np.cos(phi))
    else:
        analytic = ((1.0 - p) + p * damp) * clean
    return VerifyRow(omega_norm=wnorm, p=p, sigma=sigma, model=model,
                     analytic=analytic, mc_mean=mc_mean, mc_stderr=mc_stderr, n=n)
