"""Finite-difference verification machinery and the composed-model check."""

import numpy as np
import pytest

from streamcodec import tensor as T
from streamcodec.gradcheck import (gradcheck, gradcheck_params, run_composite,
                                   run_suite)


def test_gradcheck_accepts_correct_gradient(rng):
    x = rng.uniform(0.5, 1.5, (4, 3))
    err = gradcheck(lambda a: T.mean_(T.mul(T.exp(a), a)), [x])
    assert err < 1e-6


def test_gradcheck_flags_wrong_gradient():
    # straight_through away from its identity point: forward slope is 2 but
    # the backward pass claims 1, which finite differences must catch.
    def mismatched(a: T.Tensor) -> T.Tensor:
        return T.mean_(T.straight_through(a, (a.data * 2.0).astype(a.dtype)))

    err = gradcheck(mismatched, [np.full((3,), 0.7)])
    assert err > 0.1


def test_suite_all_ops_below_unit_tolerance():
    worst = run_suite(seed=0)
    assert max(worst.values()) < 1e-4, worst


def test_suite_covers_core_ops():
    names = set(run_suite(seed=1))
    for op in ("matmul", "masked_softmax", "layer_norm", "gelu",
               "rfft_magnitude", "straight_through"):
        assert any(op in n for n in names), f"suite misses {op}"


def test_gradcheck_params_matches_dense_fd(rng):
    w = T.parameter(rng.standard_normal((3, 3)).astype(np.float64),
                    dtype=np.float64)
    x = T.constant(rng.standard_normal((5, 3)), dtype=np.float64)

    def build():
        return T.mean_(T.square(T.matmul(x, w)))

    err = gradcheck_params(build, [w])
    assert err < 1e-8


def test_composite_micro_model_passes():
    assert run_composite(seed=0) < 1e-3


def test_composite_error_shrinks_with_step():
    coarse = run_composite(seed=3, step=1e-4)
    fine = run_composite(seed=3, step=1e-5)
    assert fine < coarse
