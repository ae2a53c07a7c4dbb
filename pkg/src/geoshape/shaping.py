"""Geometry shaping: Jacobi metrics, connection differences and matching.

A candidate closed-loop metric ``G_cl`` is matched against an open-loop
system ``{Q, G_ol, frame}`` point by point: the connection difference
``(Gamma_cl - Gamma_ol)(v, v)`` is split into a part along the actuated
directions, which the feedback supplies, and a ``G_ol``-orthogonal
remainder, which no admissible input can produce.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from geoshape import kernels
from geoshape.errors import HillBoundary, MatchingFailed
from geoshape.geometry import (
    DEFAULT_FD_STEP,
    ActuationFrame,
    Chart,
    MetricField,
    ScalarField,
    TangentState,
    christoffel_array,
    metric_eval,
)

DEFAULT_JACOBI_EPSILON = 1e-8
DEFAULT_MATCH_TOL = 1e-8
DEFAULT_SAMPLE_COUNT = 100
SHELL_TOL = 1e-8


def jacobi_metric(M: MetricField, V: ScalarField, E: float, jacobi_epsilon: float = DEFAULT_JACOBI_EPSILON) -> MetricField:
    """The conformally rescaled kinetic metric ``2 (E - V) M``.

    Points with ``E - V < jacobi_epsilon`` raise ``HillBoundary``.
    """
    E = float(E)
    n = M.dim

    def slack(q):
        w = E - float(V.func(q))
        if w < jacobi_epsilon:
            raise HillBoundary(f"E - V = {w:.3e} < {jacobi_epsilon:.1e} at q={np.asarray(q).tolist()}")
        return w

    def func(q):
        return 2.0 * slack(q) * np.asarray(M.func(q), dtype=float)

    deriv = None
    if M.deriv is not None and V.grad is not None:

        def deriv(q):
            w = slack(q)
            dV = np.asarray(V.grad(q), dtype=float).reshape(n)
            return 2.0 * w * np.asarray(M.deriv(q), dtype=float) - 2.0 * dV[:, None, None] * np.asarray(M.func(q), dtype=float)[None]

    return MetricField(M.chart, func, deriv, M.positive_definite, f"jacobi({M.name}, E={E:g})")


@dataclass(frozen=True)
class OpenLoopSystem:
    """Open-loop triad ``{Q, G_ol, W}``; ``M`` and ``V`` are kept for reference."""

    chart: Chart
    G_ol: MetricField
    frame: ActuationFrame
    E: float
    M: MetricField
    V: ScalarField
    jacobi_epsilon: float = DEFAULT_JACOBI_EPSILON

    @classmethod
    def from_natural(cls, M: MetricField, V: ScalarField, frame: ActuationFrame, E: float,
                     jacobi_epsilon: float = DEFAULT_JACOBI_EPSILON) -> "OpenLoopSystem":
        return cls(M.chart, jacobi_metric(M, V, E, jacobi_epsilon), frame, float(E), M, V, jacobi_epsilon)

    @classmethod
    def from_spec(cls, spec, E: float, jacobi_epsilon: float = DEFAULT_JACOBI_EPSILON) -> "OpenLoopSystem":
        return cls.from_natural(spec.M, spec.V, spec.frame, E, jacobi_epsilon)

    @property
    def dim(self) -> int:
        return self.chart.dim

    def slack(self, q) -> float:
        return self.E - self.V(self.chart.check(q))

    def energy(self, s: TangentState) -> float:
        v = np.asarray(s.v)
        return float(0.5 * v @ metric_eval(self.M, s.q) @ v + self.V(self.chart.check(s.q)))


@dataclass(frozen=True)
class ClosedLoopSystem:
    chart: Chart
    G_cl: MetricField


@dataclass(frozen=True)
class MatchingReport:
    """Pointwise split of the connection difference.

    ``u_coeffs`` are the feedback coefficients in the ``G_ol`` coframe,
    ``residual_vector`` is the unactuated remainder and ``condition`` the
    condition number of the frame's Gram matrix.
    """

    u_coeffs: np.ndarray
    residual_vector: np.ndarray
    residual_norm: float
    condition: float
    point: np.ndarray
    velocity: np.ndarray
    euclidean_fallback: bool = False
    off_shell: bool = False

    def to_dict(self) -> dict:
        return {
            "u_coeffs": [float(x) for x in self.u_coeffs],
            "residual_vector": [float(x) for x in self.residual_vector],
            "residual_norm": float(self.residual_norm),
            "condition": float(self.condition),
            "point": [float(x) for x in self.point],
            "velocity": [float(x) for x in self.velocity],
            "euclidean_fallback": bool(self.euclidean_fallback),
            "off_shell": bool(self.off_shell),
        }


def connection_difference(G_cl: MetricField, G_ol: MetricField, s: TangentState, fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """``(Gamma_cl - Gamma_ol)^k_ij v^i v^j`` at the state ``s``."""
    diff = christoffel_array(G_cl, s.q, fd_step) - christoffel_array(G_ol, s.q, fd_step)
    return kernels.quadratic_contract(diff, s.v)


def _positive_definite(g: np.ndarray) -> bool:
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        return False
    return True


def solve_pointwise_matching(sys: OpenLoopSystem, G_cl: MetricField, s: TangentState,
                             fd_step: float = DEFAULT_FD_STEP) -> MatchingReport:
    """Split the matching requirement at one state.

    Open-loop motion forced by ``sum_i u_i e_i`` follows closed-loop
    geodesics when ``sum_i u_i e_i = -(Gamma_cl - Gamma_ol)(v, v)``; the
    coefficients are the ``G_ol``-orthogonal projection of that vector onto
    the frame, and the residual is what is left over.
    """
    q = sys.chart.check(s.q)
    v = np.asarray(s.v, dtype=float)
    required = -connection_difference(G_cl, sys.G_ol, TangentState(q, v), fd_step)
    e = sys.frame.matrix(q)
    g = metric_eval(sys.G_ol, q)
    riemannian = _positive_definite(g)
    w = g if riemannian else np.eye(sys.dim)
    gram = e.T @ w @ e
    cond = float(np.linalg.cond(gram))
    if e.shape[1] == e.shape[0]:
        u = np.linalg.solve(e, required)
        r = np.zeros_like(required)
    else:
        u = np.linalg.solve(gram, e.T @ w @ required)
        r = required - e @ u
    norm = math.sqrt(abs(float(r @ w @ r)))
    off_shell = abs(sys.energy(TangentState(q, v)) - sys.E) > SHELL_TOL * max(1.0, abs(sys.E))
    return MatchingReport(u, r, norm, cond, q, v, not riemannian, off_shell)


class ControlLaw:
    """Feedback ``s -> u(s)`` extracted from a closed-loop metric.

    Coefficients are in the ``G_ol`` coframe, so as a force on the forced
    geodesic equation of ``G_ol`` the law contributes ``sum_i u_i e_i``.
    """

    def __init__(self, sys: OpenLoopSystem, G_cl: MetricField, fd_step: float = DEFAULT_FD_STEP):
        self.sys = sys
        self.G_cl = G_cl
        self.fd_step = fd_step

    @property
    def m(self) -> int:
        return self.sys.frame.m

    def __call__(self, s: TangentState) -> np.ndarray:
        return solve_pointwise_matching(self.sys, self.G_cl, s, self.fd_step).u_coeffs

    def evaluate(self, q, v) -> np.ndarray:
        return self(TangentState(q, v))


@dataclass(frozen=True)
class StateSampler:
    """Deterministic state sampler: jittered grid in ``q``, Gaussian velocities.

    ``count`` grid cells are drawn from a ``ceil(count ** (1/n))`` per-axis
    grid over ``[q_lower, q_upper]``; each point is jittered by up to
    ``jitter`` of a cell width. States with ``E - V < jacobi_epsilon`` are dropped.
    """

    q_lower: Sequence[float]
    q_upper: Sequence[float]
    v_scale: float = 1.0
    count: int = DEFAULT_SAMPLE_COUNT
    seed: int = 0
    jitter: float = 0.5

    def states(self, sys: Optional[OpenLoopSystem] = None) -> list:
        lo = np.asarray(self.q_lower, dtype=float)
        hi = np.asarray(self.q_upper, dtype=float)
        n = lo.size
        rng = np.random.default_rng(self.seed)
        per_axis = max(1, math.ceil(self.count ** (1.0 / n) - 1e-9))
        cell = (hi - lo) / per_axis
        axes = [lo[i] + (np.arange(per_axis) + 0.5) * cell[i] for i in range(n)]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)[: self.count]
        jit = rng.uniform(-0.5, 0.5, size=grid.shape) * self.jitter * cell
        qs = np.clip(grid + jit, lo, hi)
        vs = rng.normal(size=grid.shape) * self.v_scale
        out = []
        for q, v in zip(qs, vs):
            if sys is not None and sys.slack(q) < sys.jacobi_epsilon:
                continue
            out.append(TangentState(q, v))
        return out

    def to_dict(self) -> dict:
        return {
            "q_lower": [float(x) for x in self.q_lower],
            "q_upper": [float(x) for x in self.q_upper],
            "v_scale": float(self.v_scale),
            "count": int(self.count),
            "seed": int(self.seed),
            "jitter": float(self.jitter),
        }


@dataclass
class MatchingSummary:
    max_residual: float
    worst_point: Optional[np.ndarray]
    worst_velocity: Optional[np.ndarray]
    passed: bool
    tol: float
    reports: list = field(default_factory=list)

    def to_dict(self, include_reports: bool = True) -> dict:
        d = {
            "max_residual": float(self.max_residual),
            "worst_point": None if self.worst_point is None else [float(x) for x in self.worst_point],
            "worst_velocity": None if self.worst_velocity is None else [float(x) for x in self.worst_velocity],
            "pass": bool(self.passed),
            "tol": float(self.tol),
            "samples": len(self.reports),
            "off_shell_samples": sum(1 for r in self.reports if r.off_shell),
            "euclidean_fallback_samples": sum(1 for r in self.reports if r.euclidean_fallback),
        }
        if include_reports:
            d["reports"] = [r.to_dict() for r in self.reports]
        return d


def verify_matching(sys: OpenLoopSystem, G_cl: MetricField, sampler: StateSampler,
                    tol: float = DEFAULT_MATCH_TOL, fd_step: float = DEFAULT_FD_STEP,
                    threads: int = 1) -> MatchingSummary:
    """Maximum matching residual over the sampled states."""
    states = sampler.states(sys)

    def one(s):
        return solve_pointwise_matching(sys, G_cl, s, fd_step)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(one, states))
    else:
        reports = [one(s) for s in states]
    if not reports:
        return MatchingSummary(0.0, None, None, True, tol, [])
    norms = np.array([r.residual_norm for r in reports])
    i = int(np.argmax(norms))
    return MatchingSummary(float(norms[i]), reports[i].point, reports[i].velocity,
                           bool(norms[i] <= tol), tol, reports)


def extract_control_law(sys: OpenLoopSystem, G_cl: MetricField, sampler: Optional[StateSampler] = None,
                        match_tol: float = DEFAULT_MATCH_TOL, fd_step: float = DEFAULT_FD_STEP) -> ControlLaw:
    """Feedback law realizing ``G_cl``; checked on ``sampler`` states when given."""
    if sampler is not None:
        summary = verify_matching(sys, G_cl, sampler, match_tol, fd_step)
        if not summary.passed:
            raise MatchingFailed(
                f"matching residual {summary.max_residual:.3e} exceeds {match_tol:.1e} "
                f"at q={None if summary.worst_point is None else summary.worst_point.tolist()}"
            )
    return ControlLaw(sys, G_cl, fd_step)
