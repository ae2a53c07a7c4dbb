"""Curvature-invariant cost functionals and their constrained minimization
over parametric families of closed-loop metrics."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from geoshape.errors import AllCandidatesDegenerate, DegenerateMetric, DomainError
from geoshape.geometry import DEFAULT_RIEMANN_STEP, MetricField, metric_eval, riemann
from geoshape.neldermead import minimize_bounded
from geoshape.shaping import DEFAULT_MATCH_TOL, OpenLoopSystem, StateSampler, jacobi_metric, verify_matching

DEFAULT_MU_MATCH = 1e6


def scalar_invariants(G: MetricField, q, fd_step: float = DEFAULT_RIEMANN_STEP) -> dict:
    """Scalar curvature ``R = g^jl R^i_jil`` and ``riem2 = R_ijkl R^ijkl`` at ``q``."""
    curv = riemann(G, q, fd_step)
    ginv = np.linalg.inv(curv.g)
    low = curv.lowered()
    up = np.einsum("ia,jb,kc,ld,abcd->ijkl", ginv, ginv, ginv, ginv, low)
    return {"R": curv.scalar(), "riem2": float(np.sum(low * up))}


@dataclass(frozen=True)
class CostSpec:
    """Integrand ``F = one + R * S + R2 * S**2 + riem2 * Riem^2`` with ``S = R - R_target(q)``.

    ``R_target`` defaults to zero. At least one coefficient must be non-zero.
    """

    one: float = 0.0
    R: float = 0.0
    R2: float = 0.0
    riem2: float = 0.0
    R_target: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if not any((self.one, self.R, self.R2, self.riem2)):
            raise ValueError("cost spec needs at least one active term")

    @property
    def needs_curvature(self) -> bool:
        return bool(self.R or self.R2 or self.riem2)

    def integrand(self, G: MetricField, q, fd_step: float = DEFAULT_RIEMANN_STEP) -> float:
        val = self.one
        if self.needs_curvature:
            inv = scalar_invariants(G, q, fd_step)
            s = inv["R"] - (self.R_target(q) if self.R_target is not None else 0.0)
            val += self.R * s + self.R2 * s * s + self.riem2 * inv["riem2"]
        return val

    def to_dict(self) -> dict:
        return {"one": self.one, "R": self.R, "R2": self.R2, "riem2": self.riem2,
                "R_target": self.R_target is not None}


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product rule over a box; ``midpoint`` uses cell centres,
    ``trapezoid`` includes the end points."""

    lower: Sequence[float]
    upper: Sequence[float]
    counts: Sequence[int]
    rule: str = "midpoint"

    def __post_init__(self):
        if self.rule not in ("midpoint", "trapezoid"):
            raise ValueError("rule must be 'midpoint' or 'trapezoid'")
        if not (len(self.lower) == len(self.upper) == len(self.counts)):
            raise ValueError("grid bounds and counts must have equal length")
        for lo, hi, c in zip(self.lower, self.upper, self.counts):
            if not lo < hi or int(c) < (1 if self.rule == "midpoint" else 2):
                raise ValueError("grid needs lower < upper and enough nodes per axis")

    def _axis(self, lo, hi, c):
        c = int(c)
        if self.rule == "midpoint":
            h = (hi - lo) / c
            return lo + (np.arange(c) + 0.5) * h, np.full(c, h)
        x = np.linspace(lo, hi, c)
        w = np.full(c, (hi - lo) / (c - 1))
        w[0] *= 0.5
        w[-1] *= 0.5
        return x, w

    def nodes_weights(self):
        axes = [self._axis(lo, hi, c) for lo, hi, c in zip(self.lower, self.upper, self.counts)]
        xs = np.stack(np.meshgrid(*[a[0] for a in axes], indexing="ij"), axis=-1).reshape(-1, len(axes))
        ws = np.ones(xs.shape[0])
        for i, wgrid in enumerate(np.meshgrid(*[a[1] for a in axes], indexing="ij")):
            ws = ws * wgrid.ravel()
        return xs, ws

    def refined(self, factor: int = 2) -> "QuadratureGrid":
        if self.rule == "midpoint":
            counts = [int(c) * factor for c in self.counts]
        else:
            counts = [(int(c) - 1) * factor + 1 for c in self.counts]
        return QuadratureGrid(self.lower, self.upper, counts, self.rule)

    def to_dict(self) -> dict:
        return {"lower": [float(x) for x in self.lower], "upper": [float(x) for x in self.upper],
                "counts": [int(c) for c in self.counts], "rule": self.rule}


def cost_evaluate(spec: CostSpec, G: MetricField, grid: QuadratureGrid, fd_step: float = DEFAULT_RIEMANN_STEP) -> float:
    """Quadrature of ``F * sqrt|det G|`` over the grid region."""
    xs, ws = grid.nodes_weights()
    total = 0.0
    for q, w in zip(xs, ws):
        vol = math.sqrt(abs(float(np.linalg.det(metric_eval(G, q)))))
        total += w * spec.integrand(G, q, fd_step) * vol
    return float(total)


def scalar_curvature_profile(G: MetricField, fd_step: float = DEFAULT_RIEMANN_STEP) -> Callable:
    """``q -> R(q)`` of a fixed metric, for use as ``CostSpec.R_target``."""
    return lambda q: scalar_invariants(G, q, fd_step)["R"]


@dataclass(frozen=True)
class MetricFamily:
    """Parametric metric family ``params -> MetricField`` with box bounds."""

    instantiate: Callable
    bounds: Sequence[tuple]
    x0: Optional[Sequence[float]] = None
    names: Sequence[str] = ()

    @property
    def param_dim(self) -> int:
        return len(self.bounds)

    def start(self) -> np.ndarray:
        if self.x0 is not None:
            return np.asarray(self.x0, dtype=float)
        return np.array([0.5 * (lo + hi) for lo, hi in self.bounds])


def conformal_family(G: MetricField, bounds=(0.5, 2.0), x0=None) -> MetricFamily:
    """``lambda -> lambda * G``."""
    return MetricFamily(lambda p: G.scaled(p[0]), [tuple(bounds)], x0, ("lambda",))


def energy_family(M: MetricField, V, bounds, jacobi_epsilon: float = 1e-8, x0=None) -> MetricFamily:
    """``E -> 2 (E - V) M``, the Jacobi metrics of one natural system."""
    return MetricFamily(lambda p: jacobi_metric(M, V, p[0], jacobi_epsilon), [tuple(bounds)], x0, ("E",))


def bump_family(G: MetricField, index: int, center, width: float, bounds, x0=None) -> MetricFamily:
    """``a -> G + a * exp(-|q - c|^2 / w^2) e_k e_k^T`` (a bump in one diagonal block)."""
    c = np.asarray(center, dtype=float)
    n = G.dim

    def make(p):
        a = float(p[0])

        def func(q):
            out = np.array(G.func(q), dtype=float)
            out[index, index] += a * math.exp(-float((q - c) @ (q - c)) / width ** 2)
            return out

        def deriv(q):
            base = np.zeros((n, n, n)) if G.deriv is None else np.array(G.deriv(q), dtype=float)
            b = a * math.exp(-float((q - c) @ (q - c)) / width ** 2)
            base[:, index, index] += -2.0 * (q - c) / width ** 2 * b
            return base

        return MetricField(G.chart, func, deriv if G.deriv is not None else None, None, f"bump({a:g})")

    return MetricFamily(make, [tuple(bounds)], x0, ("amplitude",))


@dataclass
class OptimizationResult:
    best_params: np.ndarray
    best_cost: float
    best_objective: float
    max_residual: float
    evaluations: int
    seed: int
    history: list

    @property
    def best_so_far(self) -> np.ndarray:
        return np.minimum.accumulate(np.array([h["objective"] for h in self.history]))

    def report(self) -> dict:
        return {
            "best_params": [float(x) for x in self.best_params],
            "best_cost": float(self.best_cost),
            "best_objective": float(self.best_objective),
            "max_residual": float(self.max_residual),
            "evaluations": int(self.evaluations),
            "seed": int(self.seed),
        }

    def history_csv(self) -> str:
        k = len(self.best_params)
        out = io.StringIO()
        out.write(",".join(["iter"] + [f"param{i + 1}" for i in range(k)] + ["cost", "residual"]) + "\n")
        for h in self.history:
            row = [str(h["iter"])] + [format(float(x), ".17g") for x in h["params"]]
            row += [format(float(h["cost"]), ".17g"), format(float(h["residual"]), ".17g")]
            out.write(",".join(row) + "\n")
        return out.getvalue()


def constrained_optimize(
    family: MetricFamily,
    sys: OpenLoopSystem,
    spec: CostSpec,
    grid: QuadratureGrid,
    sampler: Optional[StateSampler],
    mu_match: float = DEFAULT_MU_MATCH,
    budget: int = 200,
    seed: int = 0,
    fd_step: float = DEFAULT_RIEMANN_STEP,
    match_fd_step: float = 1e-5,
    xtol: float = 1e-7,
) -> OptimizationResult:
    """Minimize ``cost + mu_match * (max matching residual)^2`` over the family.

    ``budget`` counts Nelder-Mead iterations; building a simplex (the initial
    one or a restart) counts as one. Parameters are projected onto the bounds
    before every evaluation. Fully actuated systems skip the residual
    computation since their residual is identically zero.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    full = sys.frame.m == sys.dim

    def evaluate(p):
        try:
            G = family.instantiate(p)
            cost = cost_evaluate(spec, G, grid, fd_step)
            res = 0.0
            if sampler is not None and not full:
                res = verify_matching(sys, G, sampler, DEFAULT_MATCH_TOL, match_fd_step).max_residual
        except (DegenerateMetric, DomainError):
            return math.inf, math.nan, math.nan
        if not (math.isfinite(cost) and math.isfinite(res)):
            return math.inf, math.nan, math.nan
        return cost + mu_match * res * res, cost, res

    nm = minimize_bounded(evaluate, family.start(), family.bounds, budget, seed, xtol=xtol)
    if not math.isfinite(nm.best_value):
        raise AllCandidatesDegenerate("no in-bounds parameter produced a valid metric")
    best = nm.best_record
    return OptimizationResult(nm.best_x, best["cost"], nm.best_value, best["residual"], len(nm.history), seed, nm.history)
