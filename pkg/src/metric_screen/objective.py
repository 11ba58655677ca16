"""Sample metric objective and its gradient.

For a weighted sample ``(x_i, y_i, w_i)`` the objective is

    F(beta) = E_B[f(<beta, delta>)] - E_W[f(<beta, delta>)]

where ``E_B`` / ``E_W`` average over distinct pairs ``i != j`` with
different / equal labels, each pair weighted by ``w_i * w_j`` and each
average normalized by its own pair mass.  The gradient is the same
difference applied to ``delta_j * f'(<beta, delta>)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _pairs
from .errors import DataError, DegeneratePairs
from .kernels import KernelSpec

MASS_FLOOR = 1e-12


@dataclass(frozen=True)
class PairMass:
    """Weighted pair counts over ordered distinct pairs."""

    between_mass: float
    within_mass: float
    total_weight: float

    @property
    def degenerate(self) -> bool:
        floor = MASS_FLOOR * self.total_weight ** 2
        return self.between_mass <= floor or self.within_mass <= floor


@dataclass(frozen=True, eq=False)
class WeightedDataset:
    """Features, binary labels and per-sample weights in ``[0, 1]``."""

    features: np.ndarray
    labels: np.ndarray
    weights: np.ndarray = None
    bound: float = field(init=False)

    def __post_init__(self):
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        if X.ndim != 2:
            raise DataError("features must be a 2-d array")
        n = X.shape[0]
        y = np.asarray(self.labels)
        if y.shape != (n,):
            raise DataError(f"expected {n} labels, got shape {y.shape}")
        if not np.all((y == 0) | (y == 1)):
            raise DataError("labels must be 0/1")
        y = y.astype(np.int8)
        w = np.ones(n) if self.weights is None else np.asarray(self.weights, dtype=np.float64)
        if w.shape != (n,):
            raise DataError(f"expected {n} weights, got shape {w.shape}")
        if np.any(w < 0) or np.any(w > 1) or np.any(np.isnan(w)):
            raise DataError("weights must lie in [0, 1]")
        if not np.all(np.isfinite(X)):
            raise DataError("features must be finite")
        if not (np.any(w[y == 1] > 0) and np.any(w[y == 0] > 0)):
            raise DegeneratePairs("each class needs a sample with positive weight")
        X.setflags(write=False)
        w = np.ascontiguousarray(w)
        w.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bound", float(np.max(np.abs(X))) if X.size else 0.0)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def with_weights(self, weights) -> "WeightedDataset":
        return WeightedDataset(self.features, self.labels, weights)

    def with_labels(self, labels, weights=None) -> "WeightedDataset":
        return WeightedDataset(self.features, labels,
                               self.weights if weights is None else weights)


def pair_mass(ds: WeightedDataset) -> PairMass:
    w, y = ds.weights, ds.labels
    s1, s0 = w[y == 1].sum(), w[y == 0].sum()
    q1, q0 = (w[y == 1] ** 2).sum(), (w[y == 0] ** 2).sum()
    between = 2.0 * s1 * s0
    within = max(s1 * s1 - q1, 0.0) + max(s0 * s0 - q0, 0.0)
    return PairMass(float(between), float(within), float(s1 + s0))


def _normalizers(ds: WeightedDataset) -> tuple[float, float]:
    mass = pair_mass(ds)
    if mass.degenerate:
        raise DegeneratePairs(
            f"pair mass below floor (between={mass.between_mass:.3g}, "
            f"within={mass.within_mass:.3g})")
    # kernels visit unordered pairs, masses are over ordered pairs
    return 2.0 / mass.between_mass, 2.0 / mass.within_mass


def _check_beta(beta, p: int) -> np.ndarray:
    beta = np.ascontiguousarray(beta, dtype=np.float64)
    if beta.shape != (p,):
        raise ValueError(f"beta must have shape ({p},), got {beta.shape}")
    if np.any(beta < 0) or not np.all(np.isfinite(beta)):
        raise ValueError("beta must be finite and nonnegative")
    return beta


def _run(ds, beta, spec, want_grad, pairs=None):
    spec.check_differentiable()
    beta = _check_beta(beta, ds.p)
    inv_b, inv_w = _normalizers(ds)
    active = np.flatnonzero(beta).astype(np.int64)
    if pairs is None:
        vals, grads = _pairs.fused_blocks(
            ds.features, ds.labels, ds.weights, beta, active,
            _pairs.row_order(ds.n), int(spec.family), spec.param, spec.q,
            inv_b, inv_w, want_grad)
        return _pairs.reduce_blocks(vals, grads)
    I, J = pairs
    return _pairs.fused_pairs(
        ds.features, ds.labels, ds.weights, beta, active, I, J,
        int(spec.family), spec.param, spec.q, inv_b, inv_w, want_grad)


def evaluate(ds: WeightedDataset, beta, spec: KernelSpec) -> float:
    """Weighted between-minus-within average of ``f(<beta, delta>)``."""
    value, _ = _run(ds, beta, spec, False)
    return float(value)


def gradient(ds: WeightedDataset, beta, spec: KernelSpec) -> np.ndarray:
    _, g = _run(ds, beta, spec, True)
    return g


def evaluate_with_gradient(ds: WeightedDataset, beta, spec: KernelSpec):
    """Objective value and gradient from a single pass over the pairs."""
    value, g = _run(ds, beta, spec, True)
    return float(value), g


class SampleObjective:
    """Objective bound to a dataset and kernel, as consumed by the optimizer.

    With ``batch_pairs`` set, each gradient call draws that many unordered
    pairs without replacement (stochastic ascent); ``value`` stays exact.
    """

    def __init__(self, ds: WeightedDataset, spec: KernelSpec,
                 batch_pairs: int | None = None, seed=None):
        self.ds = ds
        self.spec = spec
        self.batch_pairs = batch_pairs
        self._rng = np.random.default_rng(seed)

    @property
    def p(self) -> int:
        return self.ds.p

    def value(self, beta) -> float:
        return evaluate(self.ds, beta, self.spec)

    def value_and_grad(self, beta):
        if self.batch_pairs is None:
            return evaluate_with_gradient(self.ds, beta, self.spec)
        _, g = _run(self.ds, beta, self.spec, True, self._sample_pairs())
        # rescale the mini-batch sum to the full pair count
        g = g * (self.ds.n * (self.ds.n - 1) / 2) / len(self._last_pairs)
        return evaluate(self.ds, beta, self.spec), g

    def _sample_pairs(self):
        n = self.ds.n
        total = n * (n - 1) // 2
        m = min(int(self.batch_pairs), total)
        idx = self._rng.choice(total, size=m, replace=False)
        # invert the row-major index of the strict upper triangle
        i = (n - 2 - np.floor(np.sqrt(-8 * idx + 4 * n * (n - 1) - 7) / 2 - 0.5)).astype(np.int64)
        j = (idx + i + 1 - n * (n - 1) // 2 + (n - i) * ((n - i) - 1) // 2).astype(np.int64)
        self._last_pairs = idx
        return i, j
