"""Rebalancing weights ``w_i = P(Y = 1 - y_i | x_{i,A})``.

``P(Y=1 | X_A)`` is estimated by logistic-loss gradient boosting on small
regression trees restricted to the columns in ``A``.  After boosting, the
intercept is re-solved so that ``sum(y_i - p_i) = 0``; that identity is what
makes the rebalanced classes carry equal total weight.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit
from sklearn.tree import DecisionTreeRegressor

from .errors import DataError, DegenerateWeights
from .objective import WeightedDataset, evaluate

PROB_CLAMP = 1e-6


@dataclass(frozen=True)
class BoostConfig:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_leaves: int = 8
    max_depth: int | None = None  # None: depth |A|
    min_samples_leaf: int = 5


@dataclass
class CondProbModel:
    """Boosted estimate of ``P(Y=1 | X_A)`` on the logit scale."""

    subset: list[int]
    intercept: float
    learning_rate: float
    trees: list = field(default_factory=list)
    leaf_values: list = field(default_factory=list)
    near_degenerate: bool = False

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[0], self.intercept)
        if not self.subset:
            return out
        XA = X[:, self.subset]
        for tree, values in zip(self.trees, self.leaf_values):
            out += self.learning_rate * values[tree.apply(XA)]
        return out

    def predict_proba(self, X) -> np.ndarray:
        """Clamped ``P(Y=1 | x_A)`` for each row of the full feature matrix."""
        return np.clip(expit(self.decision_function(X)), PROB_CLAMP, 1 - PROB_CLAMP)


@dataclass(frozen=True)
class WeightUpdate:
    weights: np.ndarray
    between_mass: float
    within_mass: float
    effective_size_class0: float
    effective_size_class1: float

    def summary(self) -> dict:
        return {"between_mass": self.between_mass, "within_mass": self.within_mass,
                "effective_size_class0": self.effective_size_class0,
                "effective_size_class1": self.effective_size_class1,
                "min_weight": float(self.weights.min()),
                "max_weight": float(self.weights.max())}


def _recalibrate(raw: np.ndarray, y: np.ndarray) -> float:
    """Shift ``c`` solving ``sum(y - clip(sigmoid(raw + c))) = 0``."""

    def balance(c):
        return float(np.sum(y - np.clip(expit(raw + c), PROB_CLAMP, 1 - PROB_CLAMP)))

    lo, hi = -1.0, 1.0
    while balance(lo) < 0:
        lo *= 2
    while balance(hi) > 0:
        hi *= 2
    return brentq(balance, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


def fit_conditional(ds: WeightedDataset, subset, cfg: BoostConfig | None = None) -> CondProbModel:
    """Estimate ``P(Y=1 | X_A)`` from the (unweighted) sample."""
    cfg = cfg or BoostConfig()
    y = ds.labels.astype(float)
    n = len(y)
    if n == 0:
        raise DataError("empty dataset")
    n1 = y.sum()
    if n1 == 0 or n1 == n:
        raise DataError("both classes must be present")
    subset = sorted(int(j) for j in subset)
    base = float(np.log(n1 / (n - n1)))
    model = CondProbModel(subset, base, cfg.learning_rate)
    if subset:
        XA = ds.features[:, subset]
        depth = cfg.max_depth or len(subset)
        raw = np.full(n, base)
        for _ in range(cfg.n_rounds):
            prob = expit(raw)
            resid = y - prob
            tree = DecisionTreeRegressor(max_depth=depth, max_leaf_nodes=cfg.max_leaves,
                                         min_samples_leaf=cfg.min_samples_leaf, random_state=0)
            tree.fit(XA, resid)
            leaves = tree.apply(XA)
            # one Newton step per leaf for the logistic loss
            num = np.bincount(leaves, weights=resid, minlength=tree.tree_.node_count)
            den = np.bincount(leaves, weights=prob * (1 - prob), minlength=tree.tree_.node_count)
            values = np.where(den > 1e-12, num / np.maximum(den, 1e-12), 0.0)
            values = np.clip(values, -10.0, 10.0)
            raw += cfg.learning_rate * values[leaves]
            model.trees.append(tree)
            model.leaf_values.append(values)
    raw = model.decision_function(ds.features)
    model.intercept += _recalibrate(raw, y)
    prob = model.predict_proba(ds.features)
    model.near_degenerate = bool(np.any((prob <= PROB_CLAMP) | (prob >= 1 - PROB_CLAMP)))
    return model


def class_prior_weights(labels) -> np.ndarray:
    """Closed-form weights for ``A = {}``: ``#{y = 1 - y_i} / n``."""
    y = np.asarray(labels)
    n = len(y)
    n1 = int(np.sum(y == 1))
    return np.where(y == 1, (n - n1) / n, n1 / n).astype(float)


def compute_weights(model: CondProbModel, ds: WeightedDataset) -> WeightUpdate:
    """Opposite-class probabilities as weights, with mass summaries."""
    y = ds.labels
    if model.subset:
        prob1 = model.predict_proba(ds.features)
        w = np.where(y == 1, 1.0 - prob1, prob1)
    else:
        w = class_prior_weights(y)
    s1, s0 = float(w[y == 1].sum()), float(w[y == 0].sum())
    q1, q0 = float((w[y == 1] ** 2).sum()), float((w[y == 0] ** 2).sum())
    return WeightUpdate(w, 2.0 * s1 * s0, max(s1 * s1 - q1, 0.0) + max(s0 * s0 - q0, 0.0), s0, s1)


def rebalance(ds: WeightedDataset, subset, cfg: BoostConfig | None = None,
              min_effective_size: float = 1.0) -> tuple[WeightedDataset, WeightUpdate]:
    """Refit on ``subset`` and return the reweighted dataset.

    Raises ``DegenerateWeights`` when either class keeps less than
    ``min_effective_size`` total weight.
    """
    update = compute_weights(fit_conditional(ds, subset, cfg), ds)
    if min(update.effective_size_class0, update.effective_size_class1) < min_effective_size:
        raise DegenerateWeights(
            f"effective sizes {update.effective_size_class0:.3g} / "
            f"{update.effective_size_class1:.3g} below {min_effective_size}")
    return ds.with_weights(update.weights), update


def residual_dependence(ds: WeightedDataset, subset, spec, budget: float) -> float:
    """``F((b/|A|) 1_A)`` on the columns of ``A`` under the current weights."""
    subset = sorted(subset)
    if not subset:
        return 0.0
    sub = WeightedDataset(ds.features[:, subset], ds.labels, ds.weights)
    return evaluate(sub, np.full(len(subset), budget / len(subset)), spec)
