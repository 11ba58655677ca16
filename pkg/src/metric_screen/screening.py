"""Metric screening: iterate (ascend, union support, rebalance) until done.

Three variants share one loop:

* ``low``  - unpenalized ascent; continue while ``F(beta0)^2 > gamma``.
* ``high`` - l1-penalized ascent; continue while new variables appear.
* ``hier`` - as ``high`` but previously selected coordinates are pinned at
  ``tau`` instead of being left free.

``beta0`` is the uniform point ``(b/p) 1`` (over the free coordinates for
``hier``).  The threshold ``gamma`` either follows the theory form
``c * sqrt(log p / n) * (1 + t)`` or is calibrated by label permutation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import _pairs
from .errors import DataError, DegeneratePairs, DegenerateWeights
from .kernels import KernelSpec
from .objective import SampleObjective, WeightedDataset, evaluate, gradient, pair_mass
from .optimizer import AscentConfig, AscentResult, ConstraintSet, ascend
from .rebalance import BoostConfig, class_prior_weights, rebalance

log = logging.getLogger(__name__)

MODES = ("low", "high", "hier")

# screening defaults to the growing step rule; see AscentConfig
SCREEN_ASCENT = AscentConfig(step_rule="adaptive")


@dataclass(frozen=True)
class TheoryThreshold:
    """``coeff * sqrt(log p / n) * (1 + t)``."""

    coeff: float = 1.0
    t: float = 0.0

    def value(self, n: int, p: int) -> float:
        return self.coeff * math.sqrt(math.log(max(p, 2)) / n) * (1 + self.t)


@dataclass(frozen=True)
class PermutationThreshold:
    n_perm: int = 200
    quantile: float = 0.95


@dataclass(frozen=True)
class ScreenConfig:
    mode: str = "low"
    gamma: TheoryThreshold | PermutationThreshold = field(default_factory=PermutationThreshold)
    lambda_coeff: float = 0.0
    t: float = 0.0
    budget: float = 10.0
    ascent: AscentConfig = SCREEN_ASCENT
    tau: float | None = None
    max_rounds: int = 10
    max_selected: int | None = None
    kernel: KernelSpec = field(default_factory=KernelSpec.laplace)
    boost: BoostConfig = field(default_factory=BoostConfig)
    min_effective_size: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.budget <= 0 or self.lambda_coeff < 0 or self.t < 0:
            raise ValueError("budget must be positive; lambda_coeff and t nonnegative")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be positive")
        if self.tau is not None and self.tau < 0:
            raise ValueError("tau must be nonnegative")
        if self.mode == "hier" and self.pin_value * self.max_rounds > self.budget * (1 + 1e-12):
            raise ValueError("tau * max_rounds exceeds the budget")

    @property
    def pin_value(self) -> float:
        return self.budget / (2 * self.max_rounds) if self.tau is None else self.tau

    def l1_penalty(self, n: int, p: int) -> float:
        return TheoryThreshold(self.lambda_coeff, self.t).value(n, p)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = self.kernel.to_dict()
        d["gamma"] = {"kind": type(self.gamma).__name__, **asdict(self.gamma)}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScreenConfig":
        d = dict(d)
        gamma = dict(d.pop("gamma"))
        kind = {"TheoryThreshold": TheoryThreshold,
                "PermutationThreshold": PermutationThreshold}[gamma.pop("kind")]
        return cls(gamma=kind(**gamma), kernel=KernelSpec.from_dict(d.pop("kernel")),
                   ascent=AscentConfig(**d.pop("ascent")), boost=BoostConfig(**d.pop("boost")),
                   **d)


@dataclass
class RoundDiagnostics:
    objective_at_beta0: float
    threshold: float | None
    ascent: AscentResult | None = None
    new_variables: list[int] = field(default_factory=list)
    weight_summary: dict | None = None
    termination_reason: str | None = None

    def to_dict(self) -> dict:
        return {"objective_at_beta0": self.objective_at_beta0, "threshold": self.threshold,
                "ascent": None if self.ascent is None else self.ascent.to_dict(),
                "new_variables": self.new_variables, "weight_summary": self.weight_summary,
                "termination_reason": self.termination_reason}


@dataclass
class ScreenResult:
    """Selected set after each round plus per-round diagnostics."""

    trajectory: list[list[int]]
    rounds: list[RoundDiagnostics]
    termination_reason: str

    @property
    def selected(self) -> list[int]:
        return self.trajectory[-1] if self.trajectory else []

    @property
    def round_supports(self) -> list[list[int]]:
        return [r.ascent.support for r in self.rounds if r.ascent is not None]

    def to_dict(self) -> dict:
        return {"selected": self.selected, "trajectory": self.trajectory,
                "termination_reason": self.termination_reason,
                "rounds": [r.to_dict() for r in self.rounds]}


# --------------------------------------------------------------------------
# thresholds
# --------------------------------------------------------------------------

def _initial_point(p: int, budget: float, pinned: dict[int, float]) -> np.ndarray:
    beta = np.full(p, (budget - sum(pinned.values())) / p)
    for k, v in pinned.items():
        beta[k] = v
    return beta


def permutation_statistics(ds: WeightedDataset, beta, spec: KernelSpec,
                           n_perm: int, seed=0) -> np.ndarray:
    """``F(beta)`` under ``n_perm`` joint permutations of ``(y_i, w_i)``.

    Class counts and the class-balance of the weights are preserved; the
    link between features and labels is broken.  The pair kernel is built
    once, so each permutation costs ``O(n^2)``.
    """
    beta = np.asarray(beta, dtype=float)
    active = np.flatnonzero(beta).astype(np.int64)
    K = _pairs.kernel_matrix(ds.features, beta, active, int(spec.family), spec.param, spec.q)
    rng = np.random.Generator(np.random.Philox(seed))
    n = ds.n
    perms = np.stack([rng.permutation(n) for _ in range(n_perm)], axis=1)
    y = ds.labels.astype(float)[perms]
    w = ds.weights[perms]
    a, c = w * y, w * (1 - y)
    Ka, Kc = K @ a, K @ c
    diag = np.diag(K)[:, None]
    between = np.einsum("ij,ij->j", a, Kc)
    within = 0.5 * (np.einsum("ij,ij->j", a, Ka) - (diag * a * a).sum(0)
                    + np.einsum("ij,ij->j", c, Kc) - (diag * c * c).sum(0))
    s1, s0 = a.sum(0), c.sum(0)
    bm = s1 * s0
    wm = 0.5 * (s1 ** 2 - (a * a).sum(0) + s0 ** 2 - (c * c).sum(0))
    return between / bm - within / wm


def calibrate_gamma_permutation(ds: WeightedDataset, cfg: ScreenConfig,
                                n_perm: int = 200, quantile: float = 0.95,
                                beta0=None, seed=None) -> float:
    """Empirical ``quantile`` of ``F(beta0)^2`` over label permutations."""
    if n_perm < 20:
        raise ValueError("n_perm must be at least 20")
    if not 0 < quantile <= 1:
        raise ValueError("quantile must lie in (0, 1]")
    if pair_mass(ds).degenerate:
        raise DegeneratePairs("degenerate classes")
    if beta0 is None:
        beta0 = _initial_point(ds.p, cfg.budget, {})
    stats = permutation_statistics(ds, beta0, cfg.kernel, n_perm,
                                   cfg.seed if seed is None else seed)
    return float(np.quantile(stats ** 2, quantile))


def calibrate_lambda_permutation(ds: WeightedDataset, cfg: ScreenConfig,
                                 n_perm: int = 50, quantile: float = 0.95,
                                 seed=None) -> float:
    """Coefficient ``c`` such that ``c * sqrt(log p / n) * (1 + t)`` is the
    ``quantile`` of the largest gradient coordinate over label permutations.

    The gradient is taken at both ``beta0`` and the origin, since for a
    decreasing ``f'`` the origin is where pure noise pulls hardest. A penalty
    above that level keeps label-independent coordinates at zero.
    """
    if n_perm < 1 or not 0 < quantile <= 1:
        raise ValueError("need n_perm >= 1 and quantile in (0, 1]")
    rng = np.random.Generator(np.random.Philox(cfg.seed if seed is None else seed))
    points = (_initial_point(ds.p, cfg.budget, {}), np.zeros(ds.p))
    peaks = []
    for _ in range(n_perm):
        perm = rng.permutation(ds.n)
        shuffled = ds.with_labels(ds.labels[perm], ds.weights[perm])
        peaks.append(max(0.0, *(float(np.max(gradient(shuffled, b, cfg.kernel)))
                                for b in points)))
    lam = float(np.quantile(peaks, quantile))
    return lam / TheoryThreshold(1.0, cfg.t).value(ds.n, ds.p)


def tune_lambda(ds: WeightedDataset, cfg: ScreenConfig, n_perm: int = 50,
                quantile: float = 0.95, max_passes: int = 3, seed=None) -> float:
    """Penalty coefficient tuned on a calibration sample.

    Starts from the permutation level of the class-prior weighted data, runs
    the penalized screen with it, and raises the level to the permutation
    level under each round's rebalanced weights. Repeats until the selected
    sets stop changing.
    """
    seed = cfg.seed if seed is None else seed
    base = ds.with_weights(class_prior_weights(ds.labels))
    coeff = calibrate_lambda_permutation(base, cfg, n_perm, quantile, seed)
    seen: list[list[int]] = []
    for _ in range(max_passes):
        res = screen(ds, replace(cfg, mode="high", lambda_coeff=coeff))
        fresh = [s for s in res.trajectory if s not in seen]
        if not fresh:
            break
        for subset in fresh:
            seen.append(subset)
            try:
                cur, _ = rebalance(ds, subset, cfg.boost, cfg.min_effective_size)
            except (DegenerateWeights, DegeneratePairs):
                continue
            coeff = max(coeff, calibrate_lambda_permutation(cur, cfg, n_perm, quantile,
                                                            seed + 31 * len(seen)))
    return coeff


# --------------------------------------------------------------------------
# signal diagnostics
# --------------------------------------------------------------------------

def signal_strength_main(ds: WeightedDataset, j: int,
                         spec: KernelSpec | None = None) -> float:
    """``f'(0) * E_{B-W}[|x_j - x'_j|]`` under the current weights."""
    spec = spec or KernelSpec.laplace()
    if not 0 <= j < ds.p:
        raise IndexError(f"column {j} out of range")
    col = WeightedDataset(ds.features[:, [j]], ds.labels, ds.weights)
    # the q=1 gradient at beta=0 is exactly f'(0) E_{B-W}|delta_j|
    return float(gradient(col, np.zeros(1), replace(spec, q=1))[0])


def signal_strength_hier(ds: WeightedDataset, subset, tau: float,
                         spec: KernelSpec | None = None) -> float:
    """``(1/tau) * E_{B-W}[f(tau * |x_A - x'_A|_1)]`` under the current weights."""
    spec = spec or KernelSpec.laplace()
    subset = sorted(subset)
    if not subset:
        raise ValueError("subset must be nonempty")
    if not tau > 0:
        raise ValueError("tau must be positive")
    sub = WeightedDataset(ds.features[:, subset], ds.labels, ds.weights)
    return evaluate(sub, np.full(len(subset), tau), replace(spec, q=1)) / tau


# --------------------------------------------------------------------------
# the screening loop
# --------------------------------------------------------------------------

def _check_data(ds: WeightedDataset):
    y = ds.labels
    if y.min() == y.max():
        raise DataError("both classes must be present")


def _threshold(ds, cfg, beta0, round_index):
    if isinstance(cfg.gamma, PermutationThreshold):
        return calibrate_gamma_permutation(ds, cfg, cfg.gamma.n_perm, cfg.gamma.quantile,
                                           beta0=beta0, seed=cfg.seed + 7919 * round_index)
    return cfg.gamma.value(ds.n, ds.p)


def _cap(selected: list[int], support: list[int], beta: np.ndarray,
         cap: int | None) -> list[int]:
    """New variables from ``support``; if a cap binds, keep the largest coefficients."""
    new = [j for j in support if j not in selected]
    if cap is not None and len(selected) + len(new) > cap:
        new = sorted(new, key=lambda j: (-beta[j], j))[:max(cap - len(selected), 0)]
    return sorted(new)


def screen(ds: WeightedDataset, cfg: ScreenConfig) -> ScreenResult:
    """Run the screening variant selected by ``cfg.mode``."""
    _check_data(ds)
    n, p = ds.n, ds.p
    spec = cfg.kernel
    penalty = 0.0 if cfg.mode == "low" else cfg.l1_penalty(n, p)
    ascent_cfg = replace(cfg.ascent, l1_penalty=penalty)
    cur = ds.with_weights(class_prior_weights(ds.labels))
    selected: list[int] = []
    trajectory: list[list[int]] = []
    rounds: list[RoundDiagnostics] = []
    reason = "max_rounds"
    for r in range(cfg.max_rounds):
        if cfg.max_selected is not None and len(selected) >= cfg.max_selected:
            reason = "cap"
            break
        pinned = {k: cfg.pin_value for k in selected} if cfg.mode == "hier" else {}
        beta0 = _initial_point(p, cfg.budget, pinned)
        f0 = evaluate(cur, beta0, spec)
        diag = RoundDiagnostics(f0, None)
        rounds.append(diag)
        if cfg.mode == "low":
            diag.threshold = _threshold(cur, cfg, beta0, r)
            if not f0 * f0 > diag.threshold:
                reason = "threshold_failed"
                break
        res = ascend(SampleObjective(cur, spec), ConstraintSet(cfg.budget, pinned),
                     ascent_cfg, beta0)
        diag.ascent = res
        new = _cap(selected, res.support, res.beta, cfg.max_selected)
        diag.new_variables = new
        if not new:
            reason = "converged" if cfg.mode != "low" else "no_new_variables"
            break
        selected = sorted(selected + new)
        trajectory.append(list(selected))
        log.info("round %d: +%s -> %s", r + 1, new, selected)
        try:
            cur, update = rebalance(ds, selected, cfg.boost, cfg.min_effective_size)
        except (DegenerateWeights, DegeneratePairs) as exc:
            log.info("stopping: %s", exc)
            reason = "degenerate_weights"
            break
        diag.weight_summary = update.summary()
    else:
        reason = "max_rounds"
    if rounds:
        rounds[-1].termination_reason = reason
    return ScreenResult(trajectory, rounds, reason)


def screen_low_dim(ds: WeightedDataset, cfg: ScreenConfig | None = None) -> ScreenResult:
    return screen(ds, replace(cfg or ScreenConfig(), mode="low"))


def screen_high_dim(ds: WeightedDataset, cfg: ScreenConfig | None = None) -> ScreenResult:
    return screen(ds, replace(cfg or ScreenConfig(), mode="high"))


def screen_hier(ds: WeightedDataset, cfg: ScreenConfig | None = None) -> ScreenResult:
    return screen(ds, replace(cfg or ScreenConfig(), mode="hier"))


def rescale_features(X) -> tuple[np.ndarray, np.ndarray]:
    """Divide each column by its max absolute value; returns ``(X_scaled, scales)``.

    Constant columns carry no information and are rejected.
    """
    X = np.asarray(X, dtype=float)
    scales = np.max(np.abs(X), axis=0)
    constant = np.ptp(X, axis=0) == 0
    if np.any(constant):
        bad = [int(j) for j in np.flatnonzero(constant)]
        raise DataError(f"degenerate feature column(s) {bad}: constant values")
    return X / scales, scales
