"""Slow reference implementations and the self-check suite.

Nothing here shares code with the fast paths it checks: the objective is a
plain double loop, projection is an enumeration over active sets, and
derivatives are central differences.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .kernels import KernelSpec, f_eval, f_prime
from .objective import WeightedDataset, evaluate, gradient
from .optimizer import ConstraintSet, project
from .rebalance import BoostConfig, compute_weights, fit_conditional
from .simgen import make_rng, population_gradient, population_objective, xor_closed_form, xor_dist


def naive_objective(X, y, w, beta, spec: KernelSpec) -> float:
    """Between-minus-within average over ordered pairs ``i != j``."""
    X = np.asarray(X, dtype=float)
    n = len(y)
    sums = {True: 0.0, False: 0.0}
    mass = {True: 0.0, False: 0.0}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            t = float(np.dot(beta, np.abs(X[i] - X[j]) ** spec.q))
            between = bool(y[i] != y[j])
            sums[between] += w[i] * w[j] * float(f_eval(spec, t))
            mass[between] += w[i] * w[j]
    return sums[True] / mass[True] - sums[False] / mass[False]


def naive_gradient(X, y, w, beta, spec: KernelSpec) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    sums = {True: np.zeros(p), False: np.zeros(p)}
    mass = {True: 0.0, False: 0.0}
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d = np.abs(X[i] - X[j]) ** spec.q
            between = bool(y[i] != y[j])
            sums[between] += w[i] * w[j] * float(f_prime(spec, float(np.dot(beta, d)))) * d
            mass[between] += w[i] * w[j]
    return sums[True] / mass[True] - sums[False] / mass[False]


def central_difference(fun, beta, rel_step: float = 1e-5) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    out = np.empty_like(beta)
    for j in range(len(beta)):
        h = rel_step * max(1.0, abs(beta[j]))
        up, dn = beta.copy(), beta.copy()
        up[j] += h
        dn[j] -= h
        out[j] = (fun(up) - fun(dn)) / (2 * h)
    return out


def brute_force_projection(v, budget: float, pinned: dict | None = None) -> np.ndarray:
    """Projection by enumerating supports and whether the budget binds."""
    v = np.asarray(v, dtype=float)
    pinned = pinned or {}
    free = [j for j in range(len(v)) if j not in pinned]
    r = budget - sum(pinned.values())
    best, best_dist = None, math.inf
    for size in range(len(free) + 1):
        for S in itertools.combinations(free, size):
            S = list(S)
            cands = [v[S].copy()]
            if S:
                cands.append(v[S] - (v[S].sum() - r) / len(S))
            for vals in cands:
                if np.any(vals < -1e-15) or vals.sum() > r + 1e-12:
                    continue
                beta = np.zeros_like(v)
                beta[S] = np.maximum(vals, 0.0)
                for k, val in pinned.items():
                    beta[k] = val
                dist = float(np.sum((beta - v) ** 2))
                if dist < best_dist:
                    best, best_dist = beta, dist
    return best


# --------------------------------------------------------------------------
# self-check suite
# --------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str


def _random_instance(rng, n, p, spec):
    X = rng.standard_normal((n, p))
    y = rng.integers(0, 2, n)
    y[:2] = (0, 1)
    w = rng.uniform(0.2, 1.0, n)
    return WeightedDataset(X, y, w), rng.uniform(0.05, 1.0, p) / p


def check_xor_closed_form(scale: float = 1.0) -> Check:
    spec = KernelSpec.laplace(scale=scale)
    dist = xor_dist(2)
    worst = 0.0
    for b1, b2 in ((1.0, 1.0), (0.3, 2.0), (5.0, 0.0)):
        got = population_objective(dist, np.array([b1, b2]), spec)
        worst = max(worst, abs(got - xor_closed_form(b1 / scale, b2 / scale)))
    return Check("xor_closed_form", bool(worst <= 1e-12), f"max abs error {worst:.3g}")


def check_gradient(scale: float = 1.0, reps: int = 8, seed: int = 0,
                   sign_error: bool = False) -> Check:
    rng = make_rng(seed)
    worst = 0.0
    for r in range(reps):
        spec = (KernelSpec.laplace, KernelSpec.gaussian)[r % 2](scale=scale)
        ds, beta = _random_instance(rng, 30, 6, spec)
        g = gradient(ds, beta, spec)
        if sign_error:
            g = -g
        fd = central_difference(lambda b: evaluate(ds, b, spec), beta)
        worst = max(worst, float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8))))
        pg = population_gradient(xor_dist(2, 1), beta[:3] * 10, spec)
        if sign_error:
            pg = -pg
        pfd = central_difference(lambda b: population_objective(xor_dist(2, 1), b, spec),
                                 beta[:3] * 10)
        worst = max(worst, float(np.max(np.abs(pg - pfd) / np.maximum(np.abs(pfd), 1e-8))))
    return Check("gradient_finite_difference", bool(worst <= 1e-6), f"max rel error {worst:.3g}")


def check_naive_objective(scale: float = 1.0, seed: int = 1) -> Check:
    rng = make_rng(seed)
    worst = 0.0
    for mk in (KernelSpec.laplace, KernelSpec.gaussian):
        spec = mk(scale=scale)
        ds, beta = _random_instance(rng, 15, 4, spec)
        args = (ds.features, ds.labels, ds.weights, beta, spec)
        worst = max(worst, abs(evaluate(ds, beta, spec) - naive_objective(*args)),
                    float(np.max(np.abs(gradient(ds, beta, spec) - naive_gradient(*args)))))
    return Check("naive_pair_loop", bool(worst <= 1e-12), f"max abs error {worst:.3g}")


def check_projection(reps: int = 50, seed: int = 2) -> Check:
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(reps):
        p = int(rng.integers(1, 7))
        v = rng.normal(0, 2, p)
        budget = float(rng.uniform(0.1, 3))
        pinned = {}
        if p > 1 and rng.random() < 0.3:
            pinned = {0: float(rng.uniform(0, budget / 2))}
        cs = ConstraintSet(budget, pinned)
        worst = max(worst, float(np.max(np.abs(project(v, cs)
                                               - brute_force_projection(v, budget, pinned)))))
    return Check("projection_qp", bool(worst <= 1e-9), f"max abs error {worst:.3g}")


def check_balance(reps: int = 5, seed: int = 3) -> Check:
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(reps):
        n = 200
        X = rng.standard_normal((n, 3))
        y = (rng.random(n) < 1 / (1 + np.exp(-2 * X[:, 0]))).astype(int)
        ds = WeightedDataset(X, y)
        w = compute_weights(fit_conditional(ds, [0, 1], BoostConfig(n_rounds=30)), ds).weights
        worst = max(worst, abs(w[y == 1].sum() - w[y == 0].sum()) / n)
    return Check("class_balance", bool(worst <= 1e-10), f"max |imbalance|/n {worst:.3g}")


def run_checks(scale: float = 1.0, sign_error: bool = False) -> list[Check]:
    """Run every oracle check; ``scale`` perturbs the kernel bandwidth."""
    return [check_xor_closed_form(scale), check_gradient(scale, sign_error=sign_error),
            check_naive_objective(scale), check_projection(), check_balance()]
