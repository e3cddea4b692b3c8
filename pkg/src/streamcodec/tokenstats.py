"""Rank-frequency analysis of token streams.

Counts n-grams within utterances (never across boundaries), ranks them by
frequency with a deterministic tie order, optionally drops hapaxes, fits a
power law on the log-log curve, and produces an endpoint-pinned normalized
curve so vocabularies of different sizes can be overlaid.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

MAX_ORDER = 6


@dataclass
class NgramTable:
    """Occurrence counts for all order-n windows of a set of streams."""

    n: int
    counts: dict[tuple[int, ...], int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def ngram_counts(streams, n: int) -> NgramTable:
    """Sliding-window counts per utterance, summed over the corpus.

    Windows never cross utterance boundaries; an utterance shorter than n
    contributes nothing.
    """
    if not 1 <= n <= MAX_ORDER:
        raise ContractError(f"n-gram order must lie in 1..{MAX_ORDER}")
    counts: Counter = Counter()
    for stream in streams:
        toks = [int(t) for t in stream]
        for i in range(len(toks) - n + 1):
            counts[tuple(toks[i:i + n])] += 1
    return NgramTable(n=n, counts=dict(counts))


@dataclass
class RankCurve:
    """(rank, count) pairs, rank starting at 1, counts non-increasing."""

    entries: list[tuple[int, float]]

    def __len__(self) -> int:
        return len(self.entries)

    def ranks(self) -> np.ndarray:
        return np.array([r for r, _ in self.entries], dtype=np.float64)

    def counts(self) -> np.ndarray:
        return np.array([c for _, c in self.entries], dtype=np.float64)


def rank_curve(table: NgramTable, drop_hapax: bool = False) -> RankCurve:
    """Descending-count ranking; ties broken by tuple lexicographic order."""
    items = [(key, c) for key, c in table.counts.items()
             if not (drop_hapax and c == 1)]
    items.sort(key=lambda kv: (-kv[1], kv[0]))
    return RankCurve([(i + 1, float(c)) for i, (_, c) in enumerate(items)])


@dataclass
class ZipfFit:
    s: float
    intercept: float
    r2: float


def zipf_fit(curve: RankCurve) -> ZipfFit:
    """Least squares of ln count on ln rank: ln f = intercept - s ln r.

    A constant curve fits exactly with s = 0, reported with r² = 1 since the
    horizontal line leaves no residual.
    """
    if len(curve) < 3:
        raise ContractError("power-law fit needs at least 3 points")
    x = np.log(curve.ranks())
    y = np.log(curve.counts())
    if np.all(y == y[0]):
        # Exact horizontal line; the generic path would report s around
        # +-1e-16 from mean-rounding noise.
        return ZipfFit(s=0.0, intercept=float(y[0]), r2=1.0)
    xm, ym = x.mean(), y.mean()
    var = float(((x - xm) ** 2).sum())
    if var == 0.0:
        raise ContractError("all ranks identical; nothing to fit")
    slope = float(((x - xm) * (y - ym)).sum()) / var
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    ss_tot = float(((y - ym) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float((resid ** 2).sum()) / ss_tot
    return ZipfFit(s=-slope, intercept=float(intercept), r2=r2)


def normalized_curve(curve: RankCurve) -> list[tuple[float, float]]:
    """Endpoint-pinned log-log curve: both axes mapped onto [0, 1].

    x = ln rank / ln max_rank and y = ln(count/count_1) / ln(count_R/count_1),
    so non-degenerate curves run exactly from (0, 0) to (1, 1) and an exact
    power law becomes the diagonal. With all counts equal y is defined as 0.
    """
    if len(curve) < 2:
        raise ContractError("normalized curve needs at least 2 points")
    r = curve.ranks()
    c = curve.counts()
    log_r_max = np.log(r[-1])
    x = np.log(r) / log_r_max
    denom = np.log(c[-1] / c[0])
    if denom == 0.0:
        y = np.zeros_like(x)
    else:
        y = np.log(c / c[0]) / denom
    # +0.0 turns the -0.0 that ln(1)/negative-denom produces into plain 0.
    return list(zip((x + 0.0).tolist(), (y + 0.0).tolist()))
