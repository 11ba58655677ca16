"""Recovery experiments, the distance-correlation baseline and a kernel scaling probe.

A plan fixes a simulation model, a list of noise dimensions, a sample size
and a number of repetitions.  Every (noise_dim, rep) cell draws fresh data
from its own seed stream; each method then picks ``select_k`` variables and
the report records which signal variables were picked.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import jsonschema
import numpy as np
from scipy.special import ndtr

from .errors import MetricScreenError
from .kernels import KernelSpec
from .objective import WeightedDataset
from .screening import ScreenConfig, TheoryThreshold, rescale_features, screen
from .simgen import MODELS, Discrete, generate, make_rng, model_from_params, model_params

log = logging.getLogger(__name__)

METHODS = ("MetricLaplace", "MetricGaussian", "MarginalDCor")
DEFAULT_NOISE_DIMS = (50, 250, 500, 750, 1000)


# --------------------------------------------------------------------------
# distance correlation
# --------------------------------------------------------------------------

def _centered_distances(v: np.ndarray) -> np.ndarray:
    d = np.abs(v[:, None] - v[None, :])
    return d - d.mean(0) - d.mean(1)[:, None] + d.mean()


def distance_correlation(x, y) -> float:
    """Sample distance correlation of two real columns (V-statistic form).

    A constant column gives 0.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if len(x) != len(y):
        raise ValueError("x and y must have equal length")
    if len(x) < 4:
        raise ValueError("need at least 4 observations")
    A, B = _centered_distances(x), _centered_distances(y)
    dxy = (A * B).mean()
    dxx, dyy = (A * A).mean(), (B * B).mean()
    if dxx <= 0 or dyy <= 0:
        return 0.0
    r2 = max(dxy, 0.0) / math.sqrt(dxx * dyy)
    return float(min(math.sqrt(r2), 1.0))


def marginal_dcor(X, y) -> np.ndarray:
    """Distance correlation of each column of ``X`` with ``y``."""
    X = np.asarray(X, dtype=float)
    B = _centered_distances(np.asarray(y, dtype=float))
    dyy = (B * B).mean()
    out = np.zeros(X.shape[1])
    if dyy <= 0:
        return out
    for j in range(X.shape[1]):
        A = _centered_distances(X[:, j])
        dxx = (A * A).mean()
        if dxx > 0:
            out[j] = math.sqrt(max((A * B).mean(), 0.0) / math.sqrt(dxx * dyy))
    return out


# --------------------------------------------------------------------------
# plans and reports
# --------------------------------------------------------------------------

PLAN_SCHEMA = {
    "type": "object",
    "required": ["model", "n", "reps", "select_k"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": 1},
        "model": {"type": "object", "required": ["model"],
                  "properties": {"model": {"enum": sorted(MODELS)}}},
        "noise_dims": {"type": "array", "minItems": 1,
                       "items": {"type": "integer", "minimum": 0}},
        "n": {"type": "integer", "minimum": 4},
        "reps": {"type": "integer", "minimum": 1},
        "methods": {"type": "array", "minItems": 1, "items": {"enum": list(METHODS)}},
        "select_k": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "budget": {"type": "number", "exclusiveMinimum": 0},
        "rescale": {"type": "boolean"},
    },
}


class PlanError(MetricScreenError, ValueError):
    pass


@dataclass(frozen=True)
class ExperimentPlan:
    model: object
    n: int
    reps: int
    select_k: int
    noise_dims: tuple = DEFAULT_NOISE_DIMS
    methods: tuple = METHODS
    seed: int = 0
    budget: float = 10.0
    rescale: bool = True

    def __post_init__(self):
        if isinstance(self.model, Discrete):
            raise PlanError("model: discrete models have a fixed dimension")
        if self.reps < 1:
            raise PlanError("reps: must be at least 1")
        if self.select_k < 1:
            raise PlanError("select_k: must be at least 1")
        if self.n < 4:
            raise PlanError("n: must be at least 4")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise PlanError(f"methods: unknown method(s) {bad}")
        object.__setattr__(self, "noise_dims", tuple(int(d) for d in self.noise_dims))
        object.__setattr__(self, "methods", tuple(self.methods))

    @property
    def signals(self) -> list[int]:
        return self.model.signals

    def model_for(self, noise_dim: int):
        return replace(self.model, p=len(self.model.signals) + noise_dim)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = model_params(self.model)
        d["noise_dims"] = list(self.noise_dims)
        d["methods"] = list(self.methods)
        return {"schema": 1, **d}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        try:
            jsonschema.validate(d, PLAN_SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(str(k) for k in exc.absolute_path) or "(plan)"
            raise PlanError(f"{where}: {exc.message}") from None
        d = {k: v for k, v in d.items() if k != "schema"}
        try:
            d["model"] = model_from_params(d["model"])
        except TypeError as exc:
            raise PlanError(f"model: {exc}") from None
        return cls(**d)


@dataclass
class CellResult:
    method: str
    noise_dim: int
    rep: int
    chosen: list[int]
    recovered: dict[int, bool]
    seconds: float
    error: str | None = None

    @property
    def all_recovered(self) -> bool:
        return all(self.recovered.values())


@dataclass
class RecoveryReport:
    plan: ExperimentPlan
    cells: list[CellResult] = field(default_factory=list)

    def probability(self, method: str, noise_dim: int, variable: int | None = None) -> float:
        """Recovery rate of ``variable`` (or of all signals when ``None``)."""
        hits = [c.all_recovered if variable is None else c.recovered[variable]
                for c in self.cells if c.method == method and c.noise_dim == noise_dim]
        return float(np.mean(hits)) if hits else float("nan")

    def count(self, method: str, noise_dim: int) -> int:
        return sum(c.method == method and c.noise_dim == noise_dim for c in self.cells)

    def table(self) -> list[dict]:
        rows = []
        for m in self.plan.methods:
            for d in self.plan.noise_dims:
                cells = [c for c in self.cells if c.method == m and c.noise_dim == d]
                row = {"method": m, "noise_dim": d, "reps": len(cells),
                       "failed": sum(c.error is not None for c in cells),
                       "all": self.probability(m, d),
                       "mean_seconds": float(np.mean([c.seconds for c in cells])),
                       "max_seconds": float(np.max([c.seconds for c in cells]))}
                for j in self.plan.signals:
                    row[f"x{j + 1}"] = self.probability(m, d, j)
                rows.append(row)
        return rows

    def write_csv(self, path):
        names = ["method", "noise_dim", "rep", "chosen"] + \
            [f"x{j + 1}" for j in self.plan.signals] + ["all", "seconds", "error"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            for c in self.cells:
                w.writerow([c.method, c.noise_dim, c.rep, " ".join(map(str, c.chosen))]
                           + [int(c.recovered[j]) for j in self.plan.signals]
                           + [int(c.all_recovered), f"{c.seconds:.4f}", c.error or ""])

    def summary(self) -> dict:
        return {"schema": 1, "plan": self.plan.to_dict(), "recovery": self.table()}

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2)


def _cell_rng(seed: int, noise_dim: int, rep: int):
    return make_rng(np.random.SeedSequence([seed, noise_dim, rep]))


def _metric_choice(X, y, k, spec, budget) -> list[int]:
    # the experiments stop once k variables are chosen rather than test a threshold
    cfg = ScreenConfig(mode="low", gamma=TheoryThreshold(0.0), budget=budget,
                       max_selected=k, kernel=spec)
    return screen(WeightedDataset(X, y), cfg).selected


def choose(method: str, X, y, k: int, budget: float = 10.0) -> list[int]:
    """Variables picked by ``method`` (at most ``k``)."""
    if method == "MetricLaplace":
        return _metric_choice(X, y, k, KernelSpec.laplace(), budget)
    if method == "MetricGaussian":
        return _metric_choice(X, y, k, KernelSpec.gaussian(), budget)
    if method == "MarginalDCor":
        stats = marginal_dcor(X, y)
        return sorted(int(j) for j in np.argsort(-stats, kind="stable")[:k])
    raise ValueError(f"unknown method {method!r}")


def run_plan(plan: ExperimentPlan, progress=None) -> RecoveryReport:
    """Run every (noise_dim, rep, method) cell of ``plan``."""
    report = RecoveryReport(plan)
    for d in plan.noise_dims:
        model = plan.model_for(d)
        for rep in range(plan.reps):
            X, y = generate(model, plan.n, _cell_rng(plan.seed, d, rep))
            if plan.rescale:
                X, _ = rescale_features(X)
            for m in plan.methods:
                t0 = time.perf_counter()
                error = None
                try:
                    chosen = choose(m, X, y, plan.select_k, plan.budget)
                except (MetricScreenError, ValueError) as exc:
                    chosen, error = [], f"{type(exc).__name__}: {exc}"
                cell = CellResult(m, d, rep, chosen, {j: j in chosen for j in plan.signals},
                                  time.perf_counter() - t0, error)
                report.cells.append(cell)
                log.info("cell %s noise=%d rep=%d chosen=%s (%.2fs)%s", m, d, rep, chosen,
                         cell.seconds, f" error: {error}" if error else "")
                if progress is not None:
                    progress(cell)
    return report


# --------------------------------------------------------------------------
# kernel scaling probe
# --------------------------------------------------------------------------

@dataclass
class ScalingRow:
    p: int
    F_gauss: float
    F_laplace: float
    grad_gauss: float
    grad_laplace: float
    se: dict


@dataclass
class ScalingProbe:
    rows: list[ScalingRow]
    slopes: dict

    def to_dict(self) -> dict:
        return {"rows": [asdict(r) for r in self.rows], "slopes": self.slopes}


def _probe_point(p, delta, sigma2, q, z, u):
    """Estimates at ``beta = (1/p) 1`` for one signal coordinate with unequal variances.

    With ``f = -exp(-x)`` the kernel factorizes over coordinates, so
    ``F = E[exp(-N)] * (E_W - E_B)[exp(-s)]`` where ``N`` collects the noise
    coordinates and ``s`` the signal one.  Between and within signal
    differences share the normal draws ``z`` (common random numbers); ``u``
    drives the noise factor.  Returns ``(F, dF/dbeta_1)`` and their standard
    errors.
    """
    v = 2 * sigma2 * np.array([1.0, 1 - delta, 1 + delta])  # between, within0, within1
    d = np.abs(np.sqrt(v)[:, None] * z[None, :]) ** q
    e = np.exp(-d / p)
    gval = 0.5 * (e[1] + e[2]) - e[0]
    ggrad = d[0] * e[0] - 0.5 * (d[1] * e[1] + d[2] * e[2])
    noise = np.exp(-np.abs(math.sqrt(2 * sigma2) * u) ** q / p)
    m, m_se = noise.mean(), noise.std(ddof=1) / math.sqrt(len(u))
    factor = m ** (p - 1)
    factor_rse = (p - 1) * m_se / m

    def combine(g):
        mean = g.mean()
        rse = g.std(ddof=1) / math.sqrt(len(g)) / abs(mean)
        return factor * mean, abs(factor * mean) * math.hypot(rse, factor_rse)

    return combine(gval), combine(ggrad)


def l1_vs_l2_scaling_probe(p_list=(10, 30, 100, 300), delta: float = 0.4, sigma2: float = 1.0,
                           n_pairs: int = 100_000, seed: int = 0) -> ScalingProbe:
    """Objective and first-coordinate gradient at ``(1/p) 1`` for q=1 and q=2.

    Uses the single-signal unequal-variance model (signal variances
    ``sigma2 (1 +- delta)``, noise variance ``sigma2``) and ``f = -exp(-x)``.
    Slopes are least-squares fits of ``log |value|`` on ``log p``.
    """
    p_list = [int(p) for p in p_list]
    if any(b <= a for a, b in zip(p_list, p_list[1:])):
        raise ValueError("p_list must be increasing")
    rows = []
    for p in p_list:
        rng = make_rng(np.random.SeedSequence([seed, p]))
        z, u = rng.standard_normal(n_pairs), rng.standard_normal(n_pairs)
        (fg, fg_se), (gg, gg_se) = _probe_point(p, delta, sigma2, 2, z, u)
        (fl, fl_se), (gl, gl_se) = _probe_point(p, delta, sigma2, 1, z, u)
        rows.append(ScalingRow(p, fg, fl, gg, gl, {"F_gauss": fg_se, "F_laplace": fl_se,
                                                   "grad_gauss": gg_se, "grad_laplace": gl_se}))
    logp = np.log(p_list)
    slopes = {}
    for key in ("F_gauss", "F_laplace", "grad_gauss", "grad_laplace"):
        vals = np.abs([getattr(r, key) for r in rows])
        slopes[key] = float(np.polyfit(logp, np.log(vals), 1)[0])
    return ScalingProbe(rows, slopes)


def scaling_probe_exact(p: int, delta: float = 0.4, sigma2: float = 1.0) -> dict:
    """Closed-form values of the quantities estimated by the probe."""

    def laplace_mgf(var, a):
        # E exp(-a|Z|), Z ~ N(0, var)
        s = math.sqrt(var)
        return 2 * math.exp(a * a * var / 2) * ndtr(-a * s)

    def laplace_abs_mgf(var, a):
        # E |Z| exp(-a|Z|)
        s = math.sqrt(var)
        return 2 * (s / math.sqrt(2 * math.pi) - a * var * math.exp(a * a * var / 2) * ndtr(-a * s))

    def gauss_mgf(var, a):
        # E exp(-a Z^2)
        return (1 + 2 * a * var) ** -0.5

    def gauss_sq_mgf(var, a):
        # E Z^2 exp(-a Z^2)
        return var * (1 + 2 * a * var) ** -1.5

    a = 1.0 / p
    vb, v0, v1 = 2 * sigma2, 2 * sigma2 * (1 - delta), 2 * sigma2 * (1 + delta)
    out = {}
    for name, mgf, dmgf in (("laplace", laplace_mgf, laplace_abs_mgf),
                            ("gauss", gauss_mgf, gauss_sq_mgf)):
        factor = mgf(vb, a) ** (p - 1)
        out[f"F_{name}"] = factor * (0.5 * (mgf(v0, a) + mgf(v1, a)) - mgf(vb, a))
        out[f"grad_{name}"] = factor * (dmgf(vb, a) - 0.5 * (dmgf(v0, a) + dmgf(v1, a)))
    return out
