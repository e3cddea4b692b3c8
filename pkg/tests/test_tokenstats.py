"""N-gram counting, ranking, power-law fitting, curve normalization."""

import itertools

import numpy as np
import pytest

from streamcodec.errors import ContractError
from streamcodec.tokenstats import (MAX_ORDER, NgramTable, RankCurve,
                                    ngram_counts, normalized_curve,
                                    rank_curve, zipf_fit)


def brute_force_counts(streams, n):
    out = {}
    for s in streams:
        s = [int(t) for t in s]
        for i in range(len(s)):
            key = tuple(s[i:i + n])
            if len(key) == n:
                out[key] = out.get(key, 0) + 1
    return out


# ------------------------------------------------------------- counting

def test_ngram_counts_worked_example():
    t = ngram_counts([[1, 2, 1, 2, 3]], n=2)
    assert t.counts == {(1, 2): 2, (2, 1): 1, (2, 3): 1}
    assert t.total == 4


def test_ngram_counts_single_token():
    t = ngram_counts([[7]], n=1)
    assert t.counts == {(7,): 1}


def test_ngram_counts_window_longer_than_stream():
    t = ngram_counts([[1, 2]], n=3)
    assert t.counts == {}
    assert t.total == 0


def test_ngram_counts_never_cross_utterances():
    joined = ngram_counts([[1, 2, 3, 4]], n=2)
    split = ngram_counts([[1, 2], [3, 4]], n=2)
    assert (2, 3) in joined.counts
    assert (2, 3) not in split.counts
    assert split.counts == {(1, 2): 1, (3, 4): 1}


def test_ngram_counts_match_brute_force_on_random_streams():
    rng = np.random.default_rng(42)
    streams = [rng.integers(0, 8, size=rng.integers(0, 20)).tolist()
               for _ in range(100)]
    for n in range(1, MAX_ORDER + 1):
        got = ngram_counts(streams, n).counts
        assert got == brute_force_counts(streams, n)


def test_ngram_counts_total_conservation():
    rng = np.random.default_rng(3)
    streams = [rng.integers(0, 5, size=int(k)).tolist()
               for k in rng.integers(0, 15, size=40)]
    for n in (1, 2, 4):
        expected = sum(max(0, len(s) - n + 1) for s in streams)
        assert ngram_counts(streams, n).total == expected


def test_ngram_counts_accepts_numpy_streams():
    t = ngram_counts([np.array([5, 5, 5], dtype=np.uint16)], n=2)
    assert t.counts == {(5, 5): 2}


@pytest.mark.parametrize("n", [0, 7, -1])
def test_ngram_counts_rejects_bad_order(n):
    with pytest.raises(ContractError):
        ngram_counts([[1, 2, 3]], n)


# -------------------------------------------------------------- ranking

def test_rank_curve_descending_with_consecutive_ranks():
    t = NgramTable(n=1, counts={(1,): 5, (2,): 9, (3,): 1, (4,): 7})
    curve = rank_curve(t)
    assert curve.entries == [(1, 9.0), (2, 7.0), (3, 5.0), (4, 1.0)]


def test_rank_curve_hapax_exclusion():
    t = NgramTable(n=1, counts={(1,): 3, (2,): 1})
    assert rank_curve(t, drop_hapax=True).entries == [(1, 3.0)]
    assert rank_curve(t, drop_hapax=False).entries == [(1, 3.0), (2, 1.0)]


def test_rank_curve_tie_order_lexicographic():
    t = NgramTable(n=2, counts={(3, 1): 2, (1, 9): 2, (1, 2): 2})
    curve = rank_curve(t)
    assert [c for _, c in curve.entries] == [2.0, 2.0, 2.0]
    # Equal counts are ordered by tuple value, so the listing is stable.
    items = sorted(t.counts.items(), key=lambda kv: (-kv[1], kv[0]))
    assert [k for k, _ in items] == [(1, 2), (1, 9), (3, 1)]


def test_rank_curve_empty_table():
    assert rank_curve(NgramTable(n=1, counts={})).entries == []


def test_rank_curve_permutation_invariant():
    counts = {(i,): c for i, c in enumerate([4, 2, 2, 7, 1])}
    shuffled = dict(reversed(list(counts.items())))
    a = rank_curve(NgramTable(n=1, counts=counts))
    b = rank_curve(NgramTable(n=1, counts=shuffled))
    assert a.counts().tolist() == b.counts().tolist()


# ------------------------------------------------------------- fitting

def test_zipf_fit_exact_power_law():
    curve = RankCurve([(r, 1000.0 / r) for r in range(1, 101)])
    fit = zipf_fit(curve)
    assert abs(fit.s - 1.0) < 1e-6
    assert fit.r2 > 0.999999
    assert abs(fit.intercept - np.log(1000.0)) < 1e-9


@pytest.mark.parametrize("s_true", [0.5, 1.0, 1.5, 2.0])
def test_zipf_fit_recovers_constructed_exponent(s_true):
    curve = RankCurve([(r, 500.0 * r ** (-s_true)) for r in range(1, 200)])
    fit = zipf_fit(curve)
    assert abs(fit.s - s_true) < 1e-6
    assert fit.r2 > 1 - 1e-12


def test_zipf_fit_constant_counts():
    fit = zipf_fit(RankCurve([(r, 4.0) for r in range(1, 10)]))
    assert fit.s == 0.0
    assert fit.r2 == 1.0
    assert fit.intercept == pytest.approx(np.log(4.0))


def test_zipf_fit_needs_three_points():
    with pytest.raises(ContractError):
        zipf_fit(RankCurve([(1, 5.0), (2, 3.0)]))


def test_zipf_fit_on_sampled_zipf_draws():
    """10^6 draws from a true Zipf(s=1) over 500 types land within 0.05."""
    rng = np.random.default_rng(8)
    types = 500
    weights = 1.0 / np.arange(1, types + 1)
    weights /= weights.sum()
    draws = rng.choice(types, size=1_000_000, p=weights)
    counts = np.bincount(draws, minlength=types)
    table = NgramTable(n=1, counts={(i,): int(c) for i, c in enumerate(counts)
                                    if c > 0})
    fit = zipf_fit(rank_curve(table))
    assert 0.95 <= fit.s <= 1.05


# -------------------------------------------------------- normalization

def test_normalized_curve_two_points():
    rows = normalized_curve(RankCurve([(1, 10.0), (2, 2.0)]))
    assert rows == [(0.0, 0.0), (1.0, 1.0)]


def test_normalized_curve_endpoints_exact():
    curve = RankCurve([(r, float(100 - 3 * r)) for r in range(1, 20)])
    rows = normalized_curve(curve)
    assert rows[0] == (0.0, 0.0)
    assert rows[-1] == (1.0, 1.0)


def test_normalized_curve_exact_zipf_is_diagonal():
    curve = RankCurve([(r, 1.0e6 / r) for r in range(1, 301)])
    rows = np.array(normalized_curve(curve))
    np.testing.assert_allclose(rows[:, 1], rows[:, 0], atol=1e-9)


def test_normalized_curve_degenerate_counts_pin_y_zero():
    rows = normalized_curve(RankCurve([(1, 5.0), (2, 5.0), (3, 5.0)]))
    ys = [y for _, y in rows]
    assert ys == [0.0, 0.0, 0.0]
    # No -0.0 leaks out of the log of 1 over a negative denominator.
    assert all(np.copysign(1.0, y) == 1.0 for y in ys)


def test_normalized_curve_monotone_in_rank():
    rng = np.random.default_rng(5)
    counts = np.sort(rng.integers(2, 1000, size=50))[::-1].astype(float)
    curve = RankCurve([(i + 1, c) for i, c in enumerate(counts)])
    rows = np.array(normalized_curve(curve))
    assert np.all(np.diff(rows[:, 0]) > 0)
    assert np.all(np.diff(rows[:, 1]) >= 0)


def test_normalized_curve_needs_two_points():
    with pytest.raises(ContractError):
        normalized_curve(RankCurve([(1, 2.0)]))


def test_pipeline_on_codec_like_streams():
    """End to end over integer streams shaped like codec output."""
    rng = np.random.default_rng(17)
    streams = [rng.integers(0, 64, size=50).tolist() for _ in range(30)]
    table = ngram_counts(streams, 2)
    curve = rank_curve(table, drop_hapax=True)
    assert all(c >= 2 for c in curve.counts())
    fit = zipf_fit(curve)
    assert np.isfinite(fit.s) and 0.0 <= fit.r2 <= 1.0
    rows = normalized_curve(curve)
    assert rows[0] == (0.0, 0.0) and rows[-1] == (1.0, 1.0)
