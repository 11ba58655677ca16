import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metric_screen.kernels import KernelSpec, f_derivative, f_eval, f_prime, pair_delta

nonneg = st.floats(0, 50, allow_nan=False)


def test_negexp_values():
    spec = KernelSpec.laplace()
    assert f_eval(spec, 0.0) == -1.0
    assert f_eval(spec, math.log(2)) == pytest.approx(-0.5, abs=1e-15)
    assert f_prime(spec, 0.0) == 1.0
    assert f_prime(spec, 1.0) == pytest.approx(0.36787944117144233, abs=1e-12)


def test_sqrt_shift_values():
    spec = KernelSpec.sqrt_shift(epsilon=0.0)
    assert f_eval(spec, 2.25) == 1.5
    assert f_prime(spec, 1.0) == 0.5


def test_sqrt_shift_zero_epsilon_rejected_for_gradients():
    with pytest.raises(ValueError):
        KernelSpec.sqrt_shift(epsilon=0.0).check_differentiable()
    KernelSpec.sqrt_shift().check_differentiable()


def test_invalid_specs():
    with pytest.raises(ValueError):
        KernelSpec.laplace(scale=0)
    with pytest.raises(ValueError):
        KernelSpec(q=3)
    with pytest.raises(ValueError):
        KernelSpec.sqrt_shift(epsilon=-1)


@pytest.mark.parametrize("fn", [f_eval, f_prime])
def test_negative_argument_is_domain_error(fn):
    with pytest.raises(ValueError):
        fn(KernelSpec.laplace(), -0.1)


def test_pair_delta_examples():
    np.testing.assert_array_equal(pair_delta([3, -1], [1, 0], 2), [4, 1])
    np.testing.assert_array_equal(pair_delta([3, -1], [1, 0], 1), [2, 1])
    np.testing.assert_array_equal(pair_delta([1.5, 2], [1.5, 2], 1), [0, 0])
    with pytest.raises(ValueError):
        pair_delta([1, 2], [1], 1)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8), st.integers(0, 10**6),
       st.sampled_from([1, 2]))
def test_pair_delta_symmetric_and_nonnegative(x, seed, q):
    x = np.array(x)
    xp = np.random.default_rng(seed).normal(size=len(x)) * 10
    d = pair_delta(x, xp, q)
    np.testing.assert_array_equal(d, pair_delta(xp, x, q))
    assert np.all(d >= 0)


@given(nonneg, nonneg, st.sampled_from(["laplace", "gaussian", "sqrt"]))
def test_f_strictly_increasing(a, b, family):
    spec = {"laplace": KernelSpec.laplace(), "gaussian": KernelSpec.gaussian(scale=3.0),
            "sqrt": KernelSpec.sqrt_shift()}[family]
    lo, hi = min(a, b), max(a, b)
    if hi - lo < 1e-6:
        return
    assert f_eval(spec, lo) < f_eval(spec, hi)
    assert f_prime(spec, lo) > f_prime(spec, hi) > 0


def test_sampled_complete_monotonicity():
    spec = KernelSpec.laplace()
    h = 1e-2
    xs = np.arange(0, 5.01, 0.1)
    for k in range(1, 5):
        # k-th central difference of f around x + k h (keeps the stencil in the domain)
        coeffs = [(-1) ** i * math.comb(k, i) for i in range(k + 1)]
        for x in xs:
            pts = x + h * (k / 2 + np.arange(k + 1)[::-1] - k / 2) + h * k / 2
            est = sum(c * f_eval(spec, pt) for c, pt in zip(coeffs, pts)) / h ** k
            assert (-1) ** (k - 1) * est > 0
            assert (-1) ** (k - 1) * f_derivative(spec, x, k) > 0


def test_spec_round_trip():
    for spec in (KernelSpec.laplace(2.0), KernelSpec.gaussian(), KernelSpec.sqrt_shift(q=2)):
        assert KernelSpec.from_dict(spec.to_dict()) == spec
