"""Kernel family ``(f, q)`` for the weighted metric objective.

The objective applies a scalar link ``f`` to the weighted distance
``<beta, delta>`` where ``delta_j = |x_j - x'_j| ** q``.  Two links are
provided, both with strictly completely monotone derivative:

* ``NegExp``:    ``f(x) = -exp(-x / scale)``   (Laplace kernel for q=1,
  Gaussian kernel for q=2)
* ``SqrtShift``: ``f(x) = sqrt(x + epsilon)``  (distance-covariance type)
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Family(enum.IntEnum):
    NEG_EXP = 0
    SQRT_SHIFT = 1


@dataclass(frozen=True)
class KernelSpec:
    """Link function and distance exponent.

    ``epsilon = 0`` is accepted for scalar evaluation of ``f`` but the
    derivative is then singular at 0, so objective evaluation refuses it.
    """

    family: Family = Family.NEG_EXP
    q: int = 1
    scale: float = 1.0
    epsilon: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.q not in (1, 2):
            raise ValueError(f"q must be 1 or 2, got {self.q!r}")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")

    @classmethod
    def laplace(cls, scale: float = 1.0) -> "KernelSpec":
        return cls(Family.NEG_EXP, q=1, scale=scale)

    @classmethod
    def gaussian(cls, scale: float = 1.0) -> "KernelSpec":
        return cls(Family.NEG_EXP, q=2, scale=scale)

    @classmethod
    def sqrt_shift(cls, q: int = 1, epsilon: float = 1e-8) -> "KernelSpec":
        return cls(Family.SQRT_SHIFT, q=q, epsilon=epsilon)

    @property
    def param(self) -> float:
        """The family's single numeric parameter (scale or epsilon)."""
        return self.scale if self.family == Family.NEG_EXP else self.epsilon

    def check_differentiable(self) -> None:
        if self.family == Family.SQRT_SHIFT and self.epsilon <= 0:
            raise ValueError("SqrtShift needs epsilon > 0 for gradient evaluation")

    def to_dict(self) -> dict:
        return {"family": self.family.name, "q": self.q,
                "scale": self.scale, "epsilon": self.epsilon}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(Family[d["family"]], q=int(d["q"]),
                   scale=float(d.get("scale", 1.0)),
                   epsilon=float(d.get("epsilon", 1e-8)))


def _check_domain(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValueError("kernel argument must be nonnegative")
    return x


def f_eval(spec: KernelSpec, x):
    """Evaluate ``f`` at ``x >= 0`` (scalar or array)."""
    x = _check_domain(x)
    if spec.family == Family.NEG_EXP:
        out = -np.exp(-x / spec.scale)
    else:
        out = np.sqrt(x + spec.epsilon)
    return float(out) if out.ndim == 0 else out


def f_prime(spec: KernelSpec, x):
    """Evaluate ``f'`` at ``x >= 0`` (scalar or array)."""
    x = _check_domain(x)
    if spec.family == Family.NEG_EXP:
        out = np.exp(-x / spec.scale) / spec.scale
    else:
        with np.errstate(divide="ignore"):
            out = 0.5 / np.sqrt(x + spec.epsilon)
    return float(out) if out.ndim == 0 else out


def f_derivative(spec: KernelSpec, x, k: int):
    """Closed-form ``k``-th derivative of ``f`` (k >= 0)."""
    x = _check_domain(x)
    if k == 0:
        return f_eval(spec, x)
    if spec.family == Family.NEG_EXP:
        out = -((-1.0 / spec.scale) ** k) * np.exp(-x / spec.scale)
    else:
        # d^k/dx^k (x+e)^(1/2) = prod_{i<k}(1/2 - i) * (x+e)^(1/2-k)
        c = math.prod(0.5 - i for i in range(k))
        out = c * (x + spec.epsilon) ** (0.5 - k)
    return float(out) if np.ndim(out) == 0 else out


def pair_delta(x, x_prime, q: int) -> np.ndarray:
    """Coordinate-wise ``|x_j - x'_j| ** q``."""
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if x.shape != x_prime.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x_prime.shape}")
    if q not in (1, 2):
        raise ValueError(f"q must be 1 or 2, got {q!r}")
    d = np.abs(x - x_prime)
    return d if q == 1 else d * d
