import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from metric_screen import KernelSpec
from metric_screen.oracles import central_difference
from metric_screen.simgen import (QDA, XOR, BinaryMainEffects, DiscreteDist, RatioLogistic,
                                  class_balance_weights,
                                  UnequalVariance, binary_main_effects_dist, generate,
                                  model_from_params, model_params, population_gradient,
                                  population_objective, population_screen, rebalance_weights,
                                  xor_closed_form, xor_dist)

XOR_VALUE = 0.5 * (1 - math.exp(-1)) ** 2
LAPLACE = KernelSpec.laplace()


def test_xor_population_examples():
    assert population_objective(xor_dist(2), [1.0, 1.0], LAPLACE) == pytest.approx(
        XOR_VALUE, abs=1e-15)
    assert population_objective(xor_dist(2), [0.0, 0.0], LAPLACE) == 0.0
    np.testing.assert_allclose(population_gradient(xor_dist(1), [0.0], LAPLACE), [1.0])


def test_xor_closed_form_examples():
    assert xor_closed_form(1, 1, 0) == pytest.approx(XOR_VALUE, abs=1e-15)
    assert xor_closed_form(1, 1, 1) == pytest.approx(math.exp(-1) * XOR_VALUE, rel=1e-14)
    assert xor_closed_form(3.0, 0.0, 2.0) == 0.0
    with pytest.raises(ValueError):
        xor_closed_form(-1, 1, 0)


@given(st.floats(0, 5), st.floats(0, 5))
def test_closed_form_matches_enumeration(b1, b2):
    got = population_objective(xor_dist(2), [b1, b2], LAPLACE)
    assert got == pytest.approx(xor_closed_form(b1, b2), abs=1e-13)


def test_independent_distribution_gives_zero():
    pts = np.array([[0.0], [1.0], [0.0], [1.0]])
    dist = DiscreteDist(pts, [0, 0, 1, 1], [0.12, 0.18, 0.28, 0.42])
    assert population_objective(dist, [2.0], LAPLACE) == pytest.approx(0.0, abs=1e-15)


def test_population_gradient_finite_differences():
    dist = binary_main_effects_dist([0.4, 0.2], noise=1)
    for spec in (LAPLACE, KernelSpec.gaussian()):
        beta = np.array([0.7, 0.3, 0.5])
        fd = central_difference(lambda b: population_objective(dist, b, spec), beta)
        np.testing.assert_allclose(population_gradient(dist, beta, spec), fd, rtol=1e-9)


@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_positivity_under_dependence(seed, k):
    rng = np.random.default_rng(seed)
    pts = rng.integers(-2, 3, size=(k, 2)).astype(float)
    labels = rng.integers(0, 2, k)
    labels[:2] = (0, 1)
    probs = rng.dirichlet(np.ones(k))
    dist = DiscreteDist(pts, labels, probs)
    # independence means the law of X is the same in both classes
    p1 = probs[labels == 1].sum()
    cond = {}
    for x, y, pr in zip(map(tuple, pts), labels, probs):
        cond.setdefault(x, [0.0, 0.0])[y] += pr
    dependent = any(abs(m[1] / p1 - m[0] / (1 - p1)) > 1e-9 for m in cond.values())
    # positivity needs balanced classes, which the class-prior weights provide
    w = class_balance_weights(dist)
    for b in (0.1, 0.5, 2.0):
        for spec in (LAPLACE, KernelSpec.gaussian()):
            val = population_objective(dist, [b, b * 0.7], spec, w)
            if dependent and len({tuple(x) for x in pts}) == k:
                assert val > 0
            assert val >= -1e-14


def test_discrete_dist_validation():
    with pytest.raises(ValueError):
        DiscreteDist([[0.0], [1.0]], [0, 1], [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteDist([[0.0], [1.0]], [0, 1], [1.0, 0.0])
    with pytest.raises(ValueError):
        DiscreteDist([[0.0], [1.0]], [0, 2], [0.5, 0.5])


def test_rebalance_weights_remove_dependence():
    dist = binary_main_effects_dist([0.45, 0.15], noise=1)
    w = rebalance_weights(dist, [0])
    assert population_objective(dist, [1.0, 0.0, 0.0], LAPLACE, w) == pytest.approx(0, abs=1e-15)
    assert population_objective(dist, [0.0, 1.0, 0.0], LAPLACE, w) > 0


def test_population_screen_masking_and_xor():
    assert population_screen(binary_main_effects_dist([0.45, 0.15], 2), LAPLACE) == [[0], [1]]
    assert population_screen(xor_dist(2, 2), LAPLACE, budget=10.0) == [[0, 1]]


def test_model_defaults():
    assert UnequalVariance().sigma2 == 1.0
    assert UnequalVariance().deltas == (0.4, 0.35, 0.3, 0.25)
    q = QDA()
    assert (q.delta1, q.delta2, q.xi, q.rho) == (0.25, 0.2, 0.1, 0.5)


def test_ratio_logistic_class_imbalance():
    _, y = generate(RatioLogistic(), 100_000, seed=1)
    assert y.mean() == pytest.approx(0.87, abs=0.01)


def test_xor_marginal_independence():
    X, y = generate(XOR(p=5), 10_000, seed=2)
    assert abs(np.corrcoef(X[:, 0], y)[0, 1]) <= 0.05
    assert abs(np.corrcoef(X[:, 1], y)[0, 1]) <= 0.05


def test_qda_within_class_correlation_signs():
    X, y = generate(QDA(p=6), 10_000, seed=3)
    for a, b in ((0, 1), (2, 3)):
        assert np.corrcoef(X[y == 1, a], X[y == 1, b])[0, 1] == pytest.approx(0.5, abs=0.1)
        assert np.corrcoef(X[y == 0, a], X[y == 0, b])[0, 1] == pytest.approx(-0.5, abs=0.1)


def test_unequal_variance_orientation():
    X, y = generate(UnequalVariance(p=6), 20_000, seed=4)
    assert X[y == 1, 0].var() == pytest.approx(1.4, rel=0.05)
    assert X[y == 0, 0].var() == pytest.approx(0.6, rel=0.05)
    assert X[:, 5].var() == pytest.approx(1.0, rel=0.05)


def test_binary_main_effects_marginals():
    X, y = generate(BinaryMainEffects(p=4, deltas=(0.4, 0.2)), 40_000, seed=5)
    assert np.mean(X[y == 1, 0] > 0) == pytest.approx(0.7, abs=0.01)
    assert np.mean(X[y == 0, 0] > 0) == pytest.approx(0.3, abs=0.01)
    assert np.mean(X[:, 3] > 0) == pytest.approx(0.5, abs=0.01)


@pytest.mark.parametrize("model", [UnequalVariance(p=8), QDA(p=8), RatioLogistic(p=6), XOR(p=4),
                                   BinaryMainEffects(p=5)])
def test_generation_is_seeded(model):
    X1, y1 = generate(model, 50, seed=9)
    X2, y2 = generate(model, 50, seed=9)
    X3, _ = generate(model, 50, seed=10)
    np.testing.assert_array_equal(X1, X2)
    np.testing.assert_array_equal(y1, y2)
    assert not np.array_equal(X1, X3)
    assert X1.shape == (50, model.p)
    assert model_from_params(model_params(model)) == model


@pytest.mark.parametrize("bad", [QDA(p=3), QDA(rho=1.0), UnequalVariance(p=2), XOR(p=1),
                                 UnequalVariance(deltas=(1.2,))])
def test_invalid_models(bad):
    with pytest.raises(ValueError):
        generate(bad, 10, seed=0)


def test_generate_needs_two_rows():
    with pytest.raises(ValueError):
        generate(XOR(), 1, seed=0)
