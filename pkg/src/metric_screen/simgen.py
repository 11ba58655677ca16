"""Simulation models and an exact oracle for finite-support distributions.

Generators draw from a Philox (counter-based) bit generator so that a seed
fully determines the dataset.  ``DiscreteDist`` holds a finite joint law of
``(X, Y)``; on it the population objective, its gradient and the exact
rebalancing weights are computed by enumeration.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegeneratePairs
from .kernels import KernelSpec, f_eval, f_prime
from .optimizer import AscentConfig, ConstraintSet, ascend


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


# --------------------------------------------------------------------------
# finite-support distributions
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DiscreteDist:
    """Support points ``points[k]`` with labels ``labels[k]`` and masses ``probs[k]``."""

    points: np.ndarray
    labels: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        y = np.asarray(self.labels).astype(np.int8)
        pr = np.asarray(self.probs, dtype=float)
        if not (len(pts) == len(y) == len(pr)):
            raise ValueError("points, labels and probs must have equal length")
        if np.any(pr <= 0):
            raise ValueError("support probabilities must be positive")
        if abs(pr.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {pr.sum()}, not 1")
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("labels must be 0/1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "probs", pr / pr.sum())

    @property
    def p(self) -> int:
        return self.points.shape[1]

    def sample(self, n: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
        idx = make_rng(seed).choice(len(self.probs), size=n, p=self.probs)
        return self.points[idx].copy(), self.labels[idx].astype(np.int64)

    def product(self, other: "DiscreteDist") -> "DiscreteDist":
        """Append ``other``'s coordinates as independent noise (its labels are ignored)."""
        pts, ys, prs = [], [], []
        for k, l in itertools.product(range(len(self.probs)), range(len(other.probs))):
            pts.append(np.concatenate([self.points[k], other.points[l]]))
            ys.append(self.labels[k])
            prs.append(self.probs[k] * other.probs[l])
        return DiscreteDist(np.array(pts), np.array(ys), np.array(prs))


def xor_dist(order: int = 2, noise: int = 0) -> DiscreteDist:
    """Order-``s`` XOR: ``X_j = +-1/2`` fair signs, ``Y = 1{prod X_j > 0}``."""
    pts = np.array(list(itertools.product([-0.5, 0.5], repeat=order + noise)))
    y = (np.prod(pts[:, :order], axis=1) > 0).astype(int)
    return DiscreteDist(pts, y, np.full(len(pts), 1.0 / len(pts)))


def binary_main_effects_dist(deltas, noise: int = 0) -> DiscreteDist:
    """Balanced classes; ``Q(X_j = +-1/2 | Y=1) = (1 +- d_j)/2`` and mirrored for ``Y=0``."""
    deltas = np.asarray(deltas, dtype=float)
    s = len(deltas)
    pts, ys, prs = [], [], []
    for yv in (0, 1):
        for signs in itertools.product([-1, 1], repeat=s + noise):
            sg = np.array(signs, dtype=float)
            d = deltas if yv == 1 else -deltas
            pr = 0.5 * np.prod(0.5 * (1 + sg[:s] * d)) * 0.5 ** noise
            if pr > 0:
                pts.append(0.5 * sg)
                ys.append(yv)
                prs.append(pr)
    return DiscreteDist(np.array(pts), np.array(ys), np.array(prs))


def _resolve_weights(dist: DiscreteDist, weights) -> np.ndarray:
    if weights is None:
        return np.ones(len(dist.probs))
    if callable(weights):
        return np.array([float(weights(x, y)) for x, y in zip(dist.points, dist.labels)])
    w = np.asarray(weights, dtype=float)
    if w.shape != dist.probs.shape:
        raise ValueError("weights must have one entry per support point")
    return w


def class_balance_weights(dist: DiscreteDist) -> np.ndarray:
    """``w = Q(Y = 1 - y)`` for each support point."""
    p1 = dist.probs[dist.labels == 1].sum()
    return np.where(dist.labels == 1, 1.0 - p1, p1)


def rebalance_weights(dist: DiscreteDist, subset) -> np.ndarray:
    """Exact ``w = Q(Y = 1 - y | X_A = x_A)`` for each support point."""
    subset = sorted(subset)
    if not subset:
        return class_balance_weights(dist)
    keys = [tuple(row) for row in dist.points[:, subset]]
    mass1: dict = {}
    mass: dict = {}
    for key, y, pr in zip(keys, dist.labels, dist.probs):
        mass[key] = mass.get(key, 0.0) + pr
        mass1[key] = mass1.get(key, 0.0) + pr * y
    w = np.empty(len(keys))
    for k, (key, y) in enumerate(zip(keys, dist.labels)):
        p1 = mass1[key] / mass[key]
        w[k] = 1.0 - p1 if y == 1 else p1
    return w


def _pair_tables(dist, beta, spec, weights):
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (dist.p,) or np.any(beta < 0):
        raise ValueError("beta must be a nonnegative vector of length p")
    w = _resolve_weights(dist, weights)
    m = dist.probs * w
    diff = np.abs(dist.points[:, None, :] - dist.points[None, :, :]) ** spec.q
    t = diff @ beta
    mass = np.outer(m, m)
    between = dist.labels[:, None] != dist.labels[None, :]
    bm, wm = mass[between].sum(), mass[~between].sum()
    if bm <= 1e-15 or wm <= 1e-15:
        raise DegeneratePairs("reweighted class mass is zero")
    signed = np.where(between, mass / bm, -mass / wm)
    return diff, t, signed


def population_objective(dist: DiscreteDist, beta, spec: KernelSpec, weights=None) -> float:
    """Exact ``F(beta; Q^w)`` over all ordered support pairs (diagonal included)."""
    _, t, signed = _pair_tables(dist, beta, spec, weights)
    return float((signed * f_eval(spec, t)).sum())


def population_gradient(dist: DiscreteDist, beta, spec: KernelSpec, weights=None) -> np.ndarray:
    spec.check_differentiable()
    diff, t, signed = _pair_tables(dist, beta, spec, weights)
    return np.einsum("kl,klj->j", signed * f_prime(spec, t), diff)


class PopulationObjective:
    """Optimizer adapter for the exact population objective."""

    def __init__(self, dist: DiscreteDist, spec: KernelSpec, weights=None):
        self.dist = dist
        self.spec = spec
        self.weights = _resolve_weights(dist, weights)

    @property
    def p(self) -> int:
        return self.dist.p

    def value(self, beta) -> float:
        return population_objective(self.dist, beta, self.spec, self.weights)

    def value_and_grad(self, beta):
        return (population_objective(self.dist, beta, self.spec, self.weights),
                population_gradient(self.dist, beta, self.spec, self.weights))


def population_screen(dist: DiscreteDist, spec: KernelSpec, budget: float = 1.0,
                      cfg: AscentConfig | None = None, tol: float = 1e-12,
                      max_rounds: int = 20) -> list[list[int]]:
    """Population screening by iterative rebalancing on an exact distribution.

    Returns the support found in each round; the union is the selected set.
    The loop stops once the objective at the uniform point vanishes (to
    ``tol``) under the rebalanced law.
    """
    cfg = cfg or AscentConfig(max_iters=2000, step_rule="adaptive")
    p = dist.p
    selected: set[int] = set()
    rounds: list[list[int]] = []
    weights = class_balance_weights(dist)
    for _ in range(max_rounds):
        obj = PopulationObjective(dist, spec, weights)
        try:
            if abs(obj.value(np.full(p, 1.0 / p))) <= tol:
                break
        except DegeneratePairs:
            # the selected set explains Y completely
            break
        free = [j for j in range(p) if j not in selected]
        res = ascend(obj, ConstraintSet(budget), cfg, np.full(p, budget / p))
        new = [j for j in res.support if j in free]
        rounds.append(res.support)
        if not new:
            break
        selected |= set(res.support)
        weights = rebalance_weights(dist, selected)
    return rounds


def xor_closed_form(beta1: float, beta2: float, c: float = 0.0) -> float:
    """Order-2 XOR objective under ``f(x) = -exp(-x)``, q=1, with offset ``c``.

    ``F_c = E_B[f(c + t)] - E_W[f(c + t)] = exp(-c)/2 * (1-exp(-beta1)) * (1-exp(-beta2))``.
    """
    if beta1 < 0 or beta2 < 0 or c < 0:
        raise ValueError("arguments must be nonnegative")
    return 0.5 * math.exp(-c) * (-math.expm1(-beta1)) * (-math.expm1(-beta2))


# --------------------------------------------------------------------------
# continuous simulation models
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class UnequalVariance:
    """``X_j | Y=1 ~ N(0, s2 (1+d_j))``, ``X_j | Y=0 ~ N(0, s2 (1-d_j))``; noise ``N(0, s2)``."""

    p: int = 54
    sigma2: float = 1.0
    deltas: tuple = (0.4, 0.35, 0.3, 0.25)
    name = "uneq_var"

    @property
    def signals(self) -> list[int]:
        return list(range(len(self.deltas)))

    def validate(self):
        if self.p < len(self.deltas):
            raise ValueError("p smaller than the number of signal coordinates")
        if not all(0 < d < 1 for d in self.deltas) or self.sigma2 <= 0:
            raise ValueError("deltas must lie in (0, 1) and sigma2 > 0")

    def draw(self, n, rng):
        y = rng.integers(0, 2, size=n)
        X = rng.standard_normal((n, self.p)) * math.sqrt(self.sigma2)
        d = np.asarray(self.deltas)
        scale = np.sqrt(np.where(y[:, None] == 1, 1 + d, 1 - d))
        X[:, :len(d)] *= scale
        return X, y


@dataclass(frozen=True)
class QDA:
    """Class means ``+-(d1, xi, d2, xi)``; within-class correlation ``+-rho`` on (1,2) and (3,4)."""

    p: int = 54
    delta1: float = 0.25
    delta2: float = 0.2
    xi: float = 0.1
    rho: float = 0.5
    name = "qda"

    @property
    def signals(self) -> list[int]:
        return [0, 1, 2, 3]

    def validate(self):
        if self.p < 4:
            raise ValueError("QDA needs p >= 4")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")

    def draw(self, n, rng):
        y = rng.integers(0, 2, size=n)
        X = rng.standard_normal((n, self.p))
        sign = np.where(y == 1, 1.0, -1.0)
        mu = np.array([self.delta1, self.xi, self.delta2, self.xi])
        z = X[:, :4].copy()
        # correlate each pair (a, b) with corr sign*rho via a Cholesky factor
        c = math.sqrt(1 - self.rho ** 2)
        for a, b in ((0, 1), (2, 3)):
            X[:, a] = z[:, a]
            X[:, b] = sign * self.rho * z[:, a] + c * z[:, b]
        X[:, :4] += sign[:, None] * mu
        return X, y


@dataclass(frozen=True)
class RatioLogistic:
    """``logit P(Y=1|X) = c1 |X2|/|X1| + c2 |X4|/|X3|`` with iid ``N(0,1)`` features."""

    p: int = 54
    coef: tuple = (1.0, 0.8)
    name = "ratio"

    @property
    def signals(self) -> list[int]:
        return [0, 1, 2, 3]

    def validate(self):
        if self.p < 4:
            raise ValueError("ratio model needs p >= 4")

    def draw(self, n, rng):
        X = rng.standard_normal((n, self.p))
        eta = (self.coef[0] * np.abs(X[:, 1]) / np.abs(X[:, 0])
               + self.coef[1] * np.abs(X[:, 3]) / np.abs(X[:, 2]))
        prob = 1.0 / (1.0 + np.exp(-eta))
        y = (rng.random(n) < prob).astype(np.int64)
        return X, y


@dataclass(frozen=True)
class XOR:
    """``Y = 1{X1 X2 > 0}`` with iid ``N(0,1)`` features."""

    p: int = 100
    name = "xor"

    @property
    def signals(self) -> list[int]:
        return [0, 1]

    def validate(self):
        if self.p < 2:
            raise ValueError("XOR needs p >= 2")

    def draw(self, n, rng):
        X = rng.standard_normal((n, self.p))
        y = (X[:, 0] * X[:, 1] > 0).astype(np.int64)
        return X, y


@dataclass(frozen=True)
class BinaryMainEffects:
    """Balanced classes, ``X_j = +-1/2`` with ``P(+1/2 | Y=1) = (1+d_j)/2``; noise fair signs."""

    p: int = 10
    deltas: tuple = (0.45, 0.15)
    name = "binary"

    @property
    def signals(self) -> list[int]:
        return [j for j, d in enumerate(self.deltas) if d != 0]

    def validate(self):
        if self.p < len(self.deltas):
            raise ValueError("p smaller than the number of signal coordinates")
        if not all(0 <= d < 1 for d in self.deltas):
            raise ValueError("deltas must lie in [0, 1)")

    def draw(self, n, rng):
        y = rng.integers(0, 2, size=n)
        d = np.zeros(self.p)
        d[:len(self.deltas)] = self.deltas
        sign = np.where(y == 1, 1.0, -1.0)
        p_plus = 0.5 * (1 + sign[:, None] * d[None, :])
        X = np.where(rng.random((n, self.p)) < p_plus, 0.5, -0.5)
        return X, y


@dataclass(frozen=True)
class Discrete:
    dist: DiscreteDist = field(default=None)
    name = "discrete"

    @property
    def p(self) -> int:
        return self.dist.p

    @property
    def signals(self) -> list[int]:
        return list(range(self.dist.p))

    def validate(self):
        if self.dist is None:
            raise ValueError("Discrete model needs a distribution")

    def draw(self, n, rng):
        return self.dist.sample(n, rng)


MODELS = {m.name: m for m in (UnequalVariance, QDA, RatioLogistic, XOR, BinaryMainEffects)}


def generate(model, n: int, seed=None) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` iid samples ``(X, y)`` from ``model``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    model.validate()
    return model.draw(n, make_rng(seed))


def model_params(model) -> dict:
    """JSON-friendly parameter echo of a continuous model."""
    d = asdict(model)
    d = {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}
    return {"model": model.name, **d}


def model_from_params(params: dict):
    params = dict(params)
    cls = MODELS[params.pop("model")]
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in params.items()})

