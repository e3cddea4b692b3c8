"""Vector quantizer: nearest-neighbor exactness, losses, telemetry."""

import numpy as np
import pytest

from streamcodec import tensor as T
from streamcodec.errors import ContractError
from streamcodec.quantizer import (Codebook, quantize, ste_quantize,
                                   usage_stats, vq_loss)


def brute_force_tokens(z: np.ndarray, codes: np.ndarray) -> np.ndarray:
    out = np.empty(len(z), dtype=np.int64)
    for i, row in enumerate(z.astype(np.float64)):
        d = ((codes.astype(np.float64) - row) ** 2).sum(axis=1)
        out[i] = int(np.argmin(d))
    return out


def test_quantize_matches_exhaustive_scan(rng):
    cb = Codebook(128, 6, rng)
    z = rng.standard_normal((1000, 6)).astype(np.float32)
    tokens, rows = quantize(z, cb)
    want = brute_force_tokens(z, cb.codes_data())
    np.testing.assert_array_equal(tokens, want)
    np.testing.assert_array_equal(rows, cb.codes_data()[want])


def test_quantize_tie_goes_to_lowest_index(rng):
    cb = Codebook(4, 2, rng)
    # Duplicate code rows force exact ties.
    cb.frozen[2] = cb.frozen[0]
    cb._cache_version = -1
    z = cb.codes_data()[[0]].copy()
    tokens, _ = quantize(z, cb)
    assert tokens[0] == 0


def test_quantize_accepts_tensor_input(rng):
    cb = Codebook(16, 3, rng)
    z = rng.standard_normal((5, 3)).astype(np.float32)
    a, _ = quantize(z, cb)
    b, _ = quantize(T.constant(z), cb)
    np.testing.assert_array_equal(a, b)


def test_quantize_rejects_wrong_width(rng):
    cb = Codebook(16, 3, rng)
    with pytest.raises(ContractError):
        quantize(rng.standard_normal((5, 4)), cb)


def test_codes_are_frozen_times_map(rng):
    cb = Codebook(8, 4, rng)
    np.testing.assert_allclose(cb.codes().data, cb.frozen @ cb.map.data,
                               rtol=1e-6)
    # Map starts at the identity, so effective codes start at E itself.
    np.testing.assert_array_equal(cb.map.data, np.eye(4, dtype=np.float32))


def test_codes_cache_tracks_map_updates(rng):
    cb = Codebook(8, 4, rng)
    before = cb.codes_data().copy()
    with T.no_grad():
        cb.map.data = cb.map.data * 2.0
        cb.map.version += 1
    after = cb.codes_data()
    np.testing.assert_allclose(after, before * 2.0, rtol=1e-6)


def test_ste_forward_is_code_rows_backward_is_identity(rng):
    cb = Codebook(16, 3, rng)
    z = T.parameter(rng.standard_normal((6, 3)))
    tokens, zq = ste_quantize(z, cb)
    np.testing.assert_array_equal(zq.data, cb.codes_data()[tokens])
    T.sum_(zq).backward()
    np.testing.assert_allclose(z.grad, np.ones((6, 3)))
    assert cb.map.grad is None


def test_vq_loss_closed_form(rng):
    z = rng.standard_normal((4, 3)).astype(np.float32)
    q = rng.standard_normal((4, 3)).astype(np.float32)
    total, cb_term, commit = vq_loss(T.constant(z), T.constant(q))
    want_each = np.mean(np.abs(z - q))
    assert cb_term.item() == pytest.approx(want_each, rel=1e-6)
    assert commit.item() == pytest.approx(want_each, rel=1e-6)
    assert total.item() == pytest.approx(want_each * 1.25, rel=1e-6)


def test_vq_loss_gradient_split(rng):
    # The codebook term must reach only z_q, the commitment term only z.
    z = T.parameter(rng.standard_normal((5, 3)))
    q = T.parameter(rng.standard_normal((5, 3)))
    total, _, _ = vq_loss(z, q)
    total.backward()
    sign = np.sign(z.data - q.data)
    np.testing.assert_allclose(q.grad, -sign / q.data.size, rtol=1e-6)
    np.testing.assert_allclose(z.grad, 0.25 * sign / z.data.size, rtol=1e-6)


def test_vq_loss_reaches_map_through_codes(rng):
    cb = Codebook(16, 3, rng)
    z = T.constant(rng.standard_normal((6, 3)))
    tokens, _ = quantize(z, cb)
    zq = T.gather_rows(cb.codes(), tokens)
    total, _, _ = vq_loss(z, zq)
    total.backward()
    assert cb.map.grad is not None
    assert np.any(cb.map.grad != 0)


def test_usage_stats_uniform_and_degenerate():
    uniform = np.arange(16)
    s = usage_stats(uniform, 16)
    assert s.usage == pytest.approx(1.0)
    assert s.perplexity == pytest.approx(16.0, rel=1e-9)

    single = np.zeros(100, dtype=np.int64)
    s = usage_stats(single, 16)
    assert s.usage == pytest.approx(1 / 16)
    assert s.perplexity == pytest.approx(1.0, rel=1e-9)


def test_usage_stats_counts_and_bounds():
    s = usage_stats(np.array([0, 0, 3, 3, 3, 7]), 8)
    np.testing.assert_array_equal(s.counts, [2, 0, 0, 3, 0, 0, 0, 1])
    with pytest.raises(ContractError):
        usage_stats(np.array([8]), 8)
    with pytest.raises(ContractError):
        usage_stats(np.array([], dtype=np.int64), 8)


def test_codebook_rejects_degenerate_dims(rng):
    with pytest.raises(ContractError):
        Codebook(0, 4, rng)
    with pytest.raises(ContractError):
        Codebook(4, 0, rng)
