"""Single-layer vector quantizer over a linearly reparameterized codebook.

The codebook factors as C = E @ W: E is a frozen Gaussian matrix drawn once
at init and never updated, W is a trainable square map initialized to the
identity. Training moves every effective code through W at once, which is
what keeps dead codes from accumulating. Assignment is a plain nearest
neighbor under squared L2, computed from the expanded form
||z||^2 - 2 z C^T + ||C||^2 with cached code norms; ties go to the lowest
code index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ContractError
from .tensor import Tensor

COMMIT_WEIGHT = 0.25


class Codebook:
    def __init__(self, codebook_size: int, code_dim: int, rng: np.random.Generator):
        if codebook_size < 1 or code_dim < 1:
            raise ContractError("codebook needs positive size and dim")
        self.codebook_size = codebook_size
        self.code_dim = code_dim
        # Variance 1/code_dim keeps effective codes near unit norm at init.
        self.frozen = rng.normal(0.0, 1.0 / np.sqrt(code_dim),
                                 (codebook_size, code_dim)).astype(np.float32)
        self.map = T.parameter(np.eye(code_dim, dtype=np.float32))
        self._cache_version = -1
        self._cache_codes: np.ndarray | None = None
        self._cache_sqnorm: np.ndarray | None = None

    def codes(self) -> Tensor:
        """Effective codes E @ W as a graph node; gradients reach W."""
        return T.matmul(T.constant(self.frozen), self.map)

    def _refresh(self) -> None:
        if self._cache_version != self.map.version:
            with T.no_grad():
                codes = self.codes().data
            self._cache_codes = codes
            self._cache_sqnorm = (codes.astype(np.float64) ** 2).sum(axis=1)
            self._cache_version = self.map.version

    def codes_data(self) -> np.ndarray:
        """Effective codes as a plain array, recomputed after any W update."""
        self._refresh()
        return self._cache_codes

    def codes_sqnorm(self) -> np.ndarray:
        self._refresh()
        return self._cache_sqnorm


def quantize(z, codebook: Codebook) -> tuple[np.ndarray, np.ndarray]:
    """Nearest effective code for each row of z: (tokens, code rows).

    Distances are evaluated in float64 via the expanded form; np.argmin
    returns the first minimum, which is the lowest index on exact ties.
    """
    zd = z.data if isinstance(z, Tensor) else np.asarray(z)
    if zd.ndim != 2 or zd.shape[1] != codebook.code_dim:
        raise ContractError("quantize expects (rows, code_dim) input")
    codes = codebook.codes_data()
    z64 = zd.astype(np.float64)
    c64 = codes.astype(np.float64)
    dist = ((z64 * z64).sum(axis=1, keepdims=True)
            - 2.0 * (z64 @ c64.T)
            + codebook.codes_sqnorm()[None, :])
    tokens = np.argmin(dist, axis=1)
    return tokens, codes[tokens]


def ste_quantize(z: Tensor, codebook: Codebook) -> tuple[np.ndarray, Tensor]:
    """Quantize with a straight-through backward: grad(z_q) flows to z as is.

    The returned tensor's value is the selected codes; W receives nothing
    through this path (the codebook is trained by vq_loss, not by the
    reconstruction gradient).
    """
    tokens, rows = quantize(z.data, codebook)
    return tokens, T.straight_through(z, rows)


def vq_loss(z: Tensor, z_q: Tensor,
            commit_weight: float = COMMIT_WEIGHT) -> tuple[Tensor, Tensor, Tensor]:
    """L1 codebook loss and its commitment counterpart.

    codebook term: mean |stopgrad(z) - z_q|, pulls codes toward latents;
    commit term:   mean |z - stopgrad(z_q)|, pulls latents toward codes;
    total = codebook + commit_weight * commit. Returns (total, codebook,
    commit). Pass z_q as a differentiable lookup of codebook.codes() so the
    codebook term reaches W.
    """
    codebook_term = T.mean_(T.absolute(T.sub(T.stop_gradient(z), z_q)))
    commit_term = T.mean_(T.absolute(T.sub(z, T.stop_gradient(z_q))))
    total = T.add(codebook_term, T.mul(commit_term, commit_weight))
    return total, codebook_term, commit_term


@dataclass(frozen=True)
class UsageStats:
    usage: float
    perplexity: float
    counts: np.ndarray


def usage_stats(tokens: np.ndarray, codebook_size: int) -> UsageStats:
    """Distinct-code fraction and exp-entropy of the empirical token law."""
    tokens = np.asarray(tokens).reshape(-1)
    if tokens.size == 0:
        raise ContractError("usage_stats needs at least one token")
    if tokens.min() < 0 or tokens.max() >= codebook_size:
        raise ContractError("token id outside the codebook")
    counts = np.bincount(tokens, minlength=codebook_size)
    usage = float((counts > 0).sum()) / codebook_size
    p = counts[counts > 0].astype(np.float64) / tokens.size
    perplexity = float(np.exp(-(p * np.log(p)).sum()))
    return UsageStats(usage=usage, perplexity=perplexity, counts=counts)
