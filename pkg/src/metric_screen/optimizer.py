"""Projected gradient ascent over ``{beta >= 0, |beta|_1 <= b}``.

Coordinates can be pinned to fixed values (used by the hierarchical
screen); the free block is projected onto what is left of the budget.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .errors import InfeasibleConstraint

log = logging.getLogger(__name__)


class Objective(Protocol):
    p: int

    def value(self, beta) -> float: ...

    def value_and_grad(self, beta) -> tuple[float, np.ndarray]: ...


@dataclass(frozen=True)
class ConstraintSet:
    budget: float
    pinned: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        if any(v < 0 for v in self.pinned.values()):
            raise InfeasibleConstraint("pinned values must be nonnegative")
        if sum(self.pinned.values()) > self.budget * (1 + 1e-12):
            raise InfeasibleConstraint(
                f"pinned mass {sum(self.pinned.values()):.6g} exceeds budget {self.budget:.6g}")

    def free_mask(self, p: int) -> np.ndarray:
        mask = np.ones(p, dtype=bool)
        mask[list(self.pinned)] = False
        return mask

    def is_feasible(self, beta, tol: float = 1e-12) -> bool:
        beta = np.asarray(beta, dtype=float)
        if np.any(beta < 0) or beta.sum() > self.budget + tol:
            return False
        return all(beta[k] == v for k, v in self.pinned.items())


STEP_RULES = ("fixed", "backtrack", "adaptive")
MAX_STEP_GROWTH = 1e12


@dataclass(frozen=True)
class AscentConfig:
    """Ascent settings; tolerances are relative to the budget.

    The initial step is ``c_alpha / p``.  ``step_rule`` selects how it
    evolves: ``"fixed"`` keeps it, ``"backtrack"`` halves it until the
    penalized objective does not decrease, ``"adaptive"`` also grows it by
    ``growth`` after every accepted step.  Before the first step the
    adaptive rule enlarges the step (up to ``1e12`` times) until it moves
    some coordinate by more than the stationarity tolerance, so tiny
    gradients are not mistaken for stationarity.
    """

    c_alpha: float = 1.0
    l1_penalty: float = 0.0
    max_iters: int = 200
    stationarity_rtol: float = 1e-8
    support_rtol: float = 1e-6
    step_rule: str = "fixed"
    growth: float = 1.5

    def __post_init__(self):
        if not self.c_alpha > 0:
            raise ValueError("c_alpha must be positive")
        if self.l1_penalty < 0:
            raise ValueError("l1_penalty must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step_rule must be one of {STEP_RULES}")

    def stepsize(self, p: int) -> float:
        return self.c_alpha / p


@dataclass
class AscentResult:
    beta: np.ndarray
    objective_trace: list[float]
    converged: bool
    iterations: int
    support: list[int]

    def to_dict(self) -> dict:
        return {"beta": self.beta.tolist(), "objective_trace": list(self.objective_trace),
                "converged": self.converged, "iterations": self.iterations,
                "support": list(self.support)}


def simplex_threshold(v: np.ndarray, radius: float) -> float:
    """Threshold ``theta`` with ``sum(max(v - theta, 0)) == radius`` (sort-based)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, len(u) + 1)
    rho = np.nonzero(u * k > css - radius)[0][-1]
    return (css[rho] - radius) / (rho + 1.0)


def project(v, cs: ConstraintSet) -> np.ndarray:
    """Euclidean projection onto the constraint set, pins held fixed."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot project a non-finite vector")
    out = np.empty_like(v)
    free = cs.free_mask(len(v))
    for k, val in cs.pinned.items():
        out[k] = val
    residual = max(cs.budget - sum(cs.pinned.values()), 0.0)
    w = np.maximum(v[free], 0.0)
    # the slack absorbs rounding in the thresholded sum, keeping projection idempotent
    if w.sum() > residual * (1 + 1e-12):
        if residual == 0.0:
            w[:] = 0.0
        else:
            w = np.maximum(v[free] - simplex_threshold(v[free], residual), 0.0)
    out[free] = w
    return out


def _support(beta, cs: ConstraintSet, cfg: AscentConfig) -> list[int]:
    tol = cfg.support_rtol * cs.budget
    free = cs.free_mask(len(beta))
    return [int(j) for j in np.flatnonzero(free & (beta > tol))]


def _step(beta, grad, cs, cfg, alpha):
    direction = grad - cfg.l1_penalty
    return project(beta + alpha * direction, cs)


def ascend(objective: Objective, cs: ConstraintSet, cfg: AscentConfig,
           beta0) -> AscentResult:
    """Run projected gradient ascent on ``F(beta) - lambda * |beta|_1``.

    Stops once a full step moves no coordinate by more than
    ``stationarity_rtol * budget``; otherwise returns the last iterate with
    ``converged=False`` after ``max_iters`` steps.
    """
    beta = np.array(beta0, dtype=float)
    if not cs.is_feasible(beta, tol=1e-9 * cs.budget):
        raise ValueError("beta0 is not feasible for the constraint set")
    p = len(beta)
    alpha = cfg.stepsize(p)
    tol = cfg.stationarity_rtol * cs.budget
    value, grad = objective.value_and_grad(beta)
    trace = [value - cfg.l1_penalty * beta.sum()]
    converged = False
    it = 0
    min_alpha = 1e-12 * alpha
    max_alpha = MAX_STEP_GROWTH * alpha
    if cfg.step_rule == "adaptive":
        # calibrate the step to the gradient scale with projections only; a
        # short step is conclusive once the step length is maxed out
        while (np.max(np.abs(_step(beta, grad, cs, cfg, alpha) - beta)) <= tol
               and alpha < max_alpha):
            alpha = min(alpha * 4.0, max_alpha)
    for it in range(1, cfg.max_iters + 1):
        new = _step(beta, grad, cs, cfg, alpha)
        if np.max(np.abs(new - beta)) <= tol:
            converged = True
            break
        new_value, new_grad = objective.value_and_grad(new)
        penalized = new_value - cfg.l1_penalty * new.sum()
        if cfg.step_rule != "fixed":
            while penalized < trace[-1] and alpha > min_alpha and not np.array_equal(new, beta):
                alpha *= 0.5
                new = _step(beta, grad, cs, cfg, alpha)
                new_value, new_grad = objective.value_and_grad(new)
                penalized = new_value - cfg.l1_penalty * new.sum()
            if penalized < trace[-1]:
                # no ascent direction at any step length: numerically stationary
                converged = True
                break
            if cfg.step_rule == "adaptive":
                alpha *= cfg.growth
        beta, value, grad = new, new_value, new_grad
        trace.append(penalized)
    log.debug("ascent: %d iterations, converged=%s, value=%.6g", it, converged, trace[-1])
    return AscentResult(beta, trace, converged, it, _support(beta, cs, cfg))


def is_stationary(objective: Objective, cs: ConstraintSet, cfg: AscentConfig,
                  beta) -> bool:
    beta = np.asarray(beta, dtype=float)
    _, grad = objective.value_and_grad(beta)
    new = _step(beta, grad, cs, cfg, cfg.stepsize(len(beta)))
    return bool(np.max(np.abs(new - beta)) <= cfg.stationarity_rtol * cs.budget)
