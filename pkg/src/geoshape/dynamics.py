"""Integration of Euler-Lagrange and (forced) geodesic flows, plus the
quantities used to compare them: energy, action, residuals, path distance.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import RK45, cumulative_simpson, trapezoid
from scipy.spatial import cKDTree

from geoshape import kernels
from geoshape.errors import DegenerateMetric, DomainError, DomainExit, StepFailure, ZeroSpeed
from geoshape.geometry import (
    DEFAULT_FD_STEP,
    ActuationFrame,
    Chart,
    MetricField,
    ScalarField,
    TangentState,
    christoffel_array,
    local_geometry,
    metric_eval,
    spray,
)

PARAMETER_KINDS = ("time", "g-arclength", "unit-interval")
ZERO_SPEED_THRESHOLD = 1e-24

ControlLawLike = Callable[[TangentState], np.ndarray]


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "rk4"
    step: float = 1e-3
    rtol: float = 1e-10
    atol: float = 1e-12
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.scheme not in ("rk4", "adaptive-rk45"):
            raise ValueError(f"unknown integrator scheme {self.scheme!r}")
        if not (self.step > 0 and self.rtol > 0 and self.atol > 0):
            raise ValueError("step and tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


class Trajectory:
    """Sampled curve in the tangent bundle.

    Stored as arrays: ``tau`` (N,), ``q`` (N, n) and ``v`` (N, n). Positions
    are kept reduced into the chart; iterating yields ``(tau, TangentState)``.
    """

    def __init__(self, tau, q, v, parameter_kind: str = "time", chart: Optional[Chart] = None):
        tau = np.asarray(tau, dtype=float).ravel()
        q = np.atleast_2d(np.asarray(q, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        if q.shape != v.shape or q.shape[0] != tau.shape[0]:
            raise ValueError("tau, q and v must describe the same number of samples")
        if tau.size > 1 and np.any(np.diff(tau) <= 0):
            raise ValueError("trajectory parameter must be strictly increasing")
        if parameter_kind not in PARAMETER_KINDS:
            raise ValueError(f"parameter_kind must be one of {PARAMETER_KINDS}")
        self.tau, self.q, self.v = tau, q, v
        self.parameter_kind = parameter_kind
        self.chart = chart

    def __len__(self):
        return self.tau.size

    def __iter__(self):
        for i in range(len(self)):
            yield self.tau[i], TangentState(self.q[i], self.v[i])

    @property
    def dim(self) -> int:
        return self.q.shape[1]

    def state(self, i: int) -> TangentState:
        return TangentState(self.q[i], self.v[i])

    def to_csv(self, fh=None) -> Optional[str]:
        """Write ``tau,q1..qn,v1..vn`` rows with 17 significant digits."""
        n = self.dim
        header = ",".join(["tau"] + [f"q{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)])
        own = fh is None
        out = io.StringIO() if own else fh
        out.write(header + "\n")
        data = np.column_stack([self.tau, self.q, self.v])
        for row in data:
            out.write(",".join(format(float(x), ".17g") for x in row) + "\n")
        return out.getvalue() if own else None

    @classmethod
    def from_csv(cls, text: str, parameter_kind: str = "time") -> "Trajectory":
        rows = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2)
        n = (rows.shape[1] - 1) // 2
        return cls(rows[:, 0], rows[:, 1:1 + n], rows[:, 1 + n:], parameter_kind)


def _forcing(frame: Optional[ActuationFrame], u: Optional[ControlLawLike], q, v) -> Optional[np.ndarray]:
    if u is None:
        return None
    if frame is None:
        raise ValueError("a control law needs an actuation frame")
    coeffs = np.atleast_1d(np.asarray(u(TangentState(q, v)), dtype=float))
    if coeffs.shape != (frame.m,):
        raise ValueError(f"control law returned {coeffs.shape}, expected ({frame.m},)")
    return frame.matrix(q) @ coeffs


def step_flow(rhs, chart: Chart, y0, t0: float, t1: float, cfg: IntegratorConfig):
    """Integrate ``y' = rhs(t, y)`` whose first ``n`` entries are chart coordinates.

    Returns the sample parameters and raw states (positions not reduced).
    Errors raised inside ``rhs`` for points outside the chart become ``DomainExit``.
    """
    n = chart.dim
    y = np.array(y0, dtype=float)
    chart.check(y[:n])

    def f(t, y):
        try:
            return rhs(t, y)
        except DegenerateMetric:
            raise
        except DomainError as exc:
            raise DomainExit(f"trajectory left the chart near t={t:.6g}: {exc}") from exc

    ts, ys = [t0], [y.copy()]
    if cfg.scheme == "rk4":
        steps = max(1, int(round((t1 - t0) / cfg.step)))
        if steps > cfg.max_steps:
            raise StepFailure(f"{steps} rk4 steps needed, max_steps={cfg.max_steps}")
        h = (t1 - t0) / steps
        t = t0
        for i in range(steps):
            k1 = f(t, y)
            k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = f(t + h, y + h * k3)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            t = t0 + (i + 1) * h
            if not chart.contains(y[:n]):
                raise DomainExit(f"trajectory left the chart at t={t:.6g}")
            ts.append(t)
            ys.append(y.copy())
    else:
        solver = RK45(f, t0, y, t1, rtol=cfg.rtol, atol=cfg.atol)
        count = 0
        while solver.status == "running":
            msg = solver.step()
            count += 1
            if solver.status == "failed":
                raise StepFailure(f"adaptive step control failed: {msg}")
            if count > cfg.max_steps:
                raise StepFailure(f"exceeded max_steps={cfg.max_steps}")
            if not chart.contains(solver.y[:n]):
                raise DomainExit(f"trajectory left the chart at t={solver.t:.6g}")
            ts.append(solver.t)
            ys.append(solver.y.copy())
    return np.array(ts), np.array(ys)


def _run(rhs, chart: Chart, q0, v0, t0: float, t1: float, cfg: IntegratorConfig, kind: str) -> Trajectory:
    n = chart.dim
    y0 = np.concatenate([np.asarray(q0, dtype=float), np.asarray(v0, dtype=float)])
    ts, ys = step_flow(rhs, chart, y0, t0, t1, cfg)
    q = np.array([chart.wrap(row) for row in ys[:, :n]])
    return Trajectory(ts, q, ys[:, n:], kind, chart)


def integrate_euler_lagrange(
    M: MetricField,
    V: ScalarField,
    frame: Optional[ActuationFrame],
    u: Optional[ControlLawLike],
    s0: TangentState,
    t_span,
    cfg: IntegratorConfig = IntegratorConfig(),
    fd_step: float = DEFAULT_FD_STEP,
) -> Trajectory:
    """Integrate the (controlled) Euler-Lagrange equations of ``L = 1/2 M(v, v) - V``.

    The control enters as the force ``sum_i u_i M^flat(e_i)``; raised with
    ``M^sharp`` this is just ``sum_i u_i e_i`` in the acceleration.
    """

    def rhs(t, y):
        n = y.size // 2
        q, v = y[:n], y[n:]
        _, ginv, dg = local_geometry(M, q, fd_step)
        acc = -kernels.geodesic_spray(ginv, dg, v) - ginv @ V.gradient(M.chart.wrap(q), fd_step)
        force = _forcing(frame, u, q, v)
        if force is not None:
            acc += force
        return np.concatenate([v, acc])

    return _run(rhs, M.chart, s0.q, s0.v, float(t_span[0]), float(t_span[1]), cfg, "time")


def integrate_geodesic(
    G: MetricField,
    frame: Optional[ActuationFrame],
    u: Optional[ControlLawLike],
    s0: TangentState,
    t_span,
    cfg: IntegratorConfig = IntegratorConfig(),
    fd_step: float = DEFAULT_FD_STEP,
    parameter_kind: str = "time",
) -> Trajectory:
    """Integrate ``nabla_U U = G^sharp[sum_i u_i theta^(i)]``, ``theta^(i) = G^flat(e_i)``.

    With ``u=None`` this is the free geodesic flow of ``G``.
    """

    def rhs(t, y):
        n = y.size // 2
        q, v = y[:n], y[n:]
        acc = -spray(G, q, v, fd_step)
        force = _forcing(frame, u, q, v)
        if force is not None:
            acc += force
        return np.concatenate([v, acc])

    return _run(rhs, G.chart, s0.q, s0.v, float(t_span[0]), float(t_span[1]), cfg, parameter_kind)


def energy(M: MetricField, V: ScalarField, s: TangentState) -> float:
    v = np.asarray(s.v, dtype=float)
    return float(0.5 * v @ metric_eval(M, s.q) @ v + V(M.chart.check(s.q)))


def energies(M: MetricField, V: ScalarField, traj: Trajectory) -> np.ndarray:
    return np.array([energy(M, V, s) for _, s in traj])


def lagrangian(M: MetricField, V: ScalarField, s: TangentState) -> float:
    v = np.asarray(s.v, dtype=float)
    return float(0.5 * v @ metric_eval(M, s.q) @ v - V(M.chart.check(s.q)))


def action_evaluate(M: MetricField, V: ScalarField, traj: Trajectory) -> float:
    """Trapezoidal quadrature of ``L = T - V`` along the samples."""
    if len(traj) < 2:
        raise ValueError("action needs at least two samples")
    L = np.array([lagrangian(M, V, s) for _, s in traj])
    return float(trapezoid(L, traj.tau))


def el_residual(M: MetricField, V: ScalarField, q, v, a, u_force=None, fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """Euler-Lagrange residual as a covector: ``M a + M Gamma(v, v) + dV - u_force``."""
    q = M.chart.check(q)
    v = np.asarray(v, dtype=float)
    g = metric_eval(M, q)
    res = g @ (np.asarray(a, dtype=float) + kernels.quadratic_contract(christoffel_array(M, q, fd_step), v))
    res = res + V.gradient(q, fd_step)
    if u_force is not None:
        res = res - np.asarray(u_force, dtype=float)
    return res


def trajectory_el_residual(
    M: MetricField,
    V: ScalarField,
    traj: Trajectory,
    frame: Optional[ActuationFrame] = None,
    u: Optional[ControlLawLike] = None,
    fd_step: float = DEFAULT_FD_STEP,
) -> np.ndarray:
    """``el_residual`` at every sample, accelerations by central differences."""
    acc = np.gradient(traj.v, traj.tau, axis=0, edge_order=2)
    out = np.empty_like(traj.v)
    for i, (_, s) in enumerate(traj):
        force = _forcing(frame, u, s.q, s.v)
        uf = None if force is None else metric_eval(M, s.q) @ force
        out[i] = el_residual(M, V, s.q, s.v, acc[i], uf, fd_step)
    return out


def speeds(G: MetricField, traj: Trajectory) -> np.ndarray:
    """``sqrt(G(v, v))`` at every sample."""
    sq = np.array([s.v @ metric_eval(G, s.q) @ s.v for _, s in traj])
    if np.any(sq < ZERO_SPEED_THRESHOLD):
        i = int(np.argmin(sq))
        raise ZeroSpeed(f"G(v, v) = {sq[i]:.3e} at sample {i}")
    return np.sqrt(sq)


def _cumulative(y, x) -> np.ndarray:
    if y.size >= 3:
        return cumulative_simpson(y, x=x, initial=0.0)
    return np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))])


def reparametrize_by_arclength(G: MetricField, traj: Trajectory) -> Trajectory:
    """Re-sample the parameter as ``G``-arclength, velocities rescaled to unit ``G``-norm."""
    sp = speeds(G, traj)
    s = traj.tau[0] + _cumulative(sp, traj.tau)
    return Trajectory(s, traj.q, traj.v / sp[:, None], "g-arclength", traj.chart)


def arclength(G: MetricField, traj: Trajectory) -> float:
    return float(_cumulative(speeds(G, traj), traj.tau)[-1])


def densify(traj: Trajectory, factor: int) -> np.ndarray:
    """Sample points with ``factor - 1`` cubic Hermite points inserted per interval."""
    if factor <= 1 or len(traj) < 2:
        return traj.q.copy()
    chart = traj.chart
    q0 = traj.q[:-1]
    dq = traj.q[1:] - q0 if chart is None else chart.difference(traj.q[1:], q0)
    h = np.diff(traj.tau)[:, None]
    m0, m1 = traj.v[:-1] * h, traj.v[1:] * h
    pieces = []
    for s in np.arange(factor) / factor:
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        pieces.append(q0 + h10 * m0 + h01 * dq + h11 * m1)
    pts = np.stack(pieces, axis=1).reshape(-1, traj.dim)
    pts = np.vstack([pts, traj.q[-1:]])
    if chart is not None:
        pts = np.array([chart.wrap(p) for p in pts])
    return pts


def _periodic_trees(a: np.ndarray, b: np.ndarray, periods: np.ndarray):
    """KD-tree over ``b`` (toroidal along periodic axes) and ``a`` mapped into its box."""
    if not np.any(periods > 0):
        return cKDTree(b), a
    per = periods > 0
    both = np.vstack([a, b])
    lo = np.where(per, 0.0, both.min(axis=0))
    span = both.max(axis=0) - both.min(axis=0)
    # non-periodic axes get a box wide enough that wrapping never shortens a distance
    box = np.where(per, periods, 2.0 * span + 1.0)
    safe = np.where(per, periods, 1.0)

    def into(x):
        return np.where(per, np.mod(x, safe), x - lo)

    return cKDTree(into(b), boxsize=box), into(a)


def _directed(a: np.ndarray, b: np.ndarray, chart: Optional[Chart], polyline: bool) -> float:
    periods = chart.periods if chart is not None else np.zeros(a.shape[1])
    tree, qa = _periodic_trees(a, b, periods)
    if not polyline or b.shape[0] < 2:
        dist, _ = tree.query(qa, k=1)
        return float(np.max(dist))
    k = min(8, b.shape[0])
    _, idx = tree.query(qa, k=k)
    last = b.shape[0] - 2
    starts = np.concatenate([np.clip(idx - 1, 0, last), np.clip(idx, 0, last)], axis=1)
    s0 = b[starts]
    p = np.broadcast_to(a[:, None, :], s0.shape)
    if chart is not None:
        seg = chart.difference(b[starts + 1], s0)
        rel = chart.difference(p, s0)
    else:
        seg = b[starts + 1] - s0
        rel = p - s0
    L2 = np.sum(seg * seg, axis=-1)
    t = np.where(L2 > 0, np.sum(rel * seg, axis=-1) / np.where(L2 > 0, L2, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    d = np.linalg.norm(rel - t[..., None] * seg, axis=-1)
    return float(np.max(np.min(d, axis=1)))


def path_distance(t1: Trajectory, t2: Trajectory, mode: str = "polyline", refine: int = 1) -> float:
    """Symmetric Hausdorff distance between two sampled paths in chart coordinates.

    ``mode="points"`` compares the sample sets directly. ``mode="polyline"``
    measures each sample's distance to the other path's piecewise-linear
    interpolant, which removes the half-spacing floor of point sets sampled at
    different parameters. ``refine`` inserts cubic Hermite points (using the
    stored velocities) before comparing. Periodic coordinates are compared
    modulo their period.
    """
    if len(t1) == 0 or len(t2) == 0:
        raise ValueError("path_distance needs non-empty trajectories")
    if mode not in ("polyline", "points"):
        raise ValueError("mode must be 'polyline' or 'points'")
    chart = t1.chart or t2.chart
    a, b = densify(t1, refine), densify(t2, refine)
    poly = mode == "polyline"
    return max(_directed(a, b, chart, poly), _directed(b, a, chart, poly))


def jacobi_compare(
    M: MetricField,
    V: ScalarField,
    s0: TangentState,
    t_end: float,
    cfg: IntegratorConfig = IntegratorConfig(),
    fd_step: float = DEFAULT_FD_STEP,
    refine: int = 4,
    jacobi_epsilon: Optional[float] = None,
):
    """Integrate a natural system and the geodesic of its Jacobi metric, compare paths.

    The geodesic starts at the same point with the EL velocity rescaled to
    unit Jacobi norm; it is run for the Jacobi arclength of the EL path with
    the same number of steps. Returns ``(el, geodesic, distance, E)``.
    """
    from geoshape.shaping import DEFAULT_JACOBI_EPSILON, jacobi_metric

    eps = DEFAULT_JACOBI_EPSILON if jacobi_epsilon is None else jacobi_epsilon
    E = energy(M, V, s0)
    el = integrate_euler_lagrange(M, V, None, None, s0, (0.0, t_end), cfg, fd_step)
    G = jacobi_metric(M, V, E, eps)
    # Jacobi arclength element: ds = 2 (E - V) dt on shell
    slack = np.array([E - V(q) for q in el.q])
    if np.min(slack) < eps:
        from geoshape.errors import HillBoundary

        raise HillBoundary(f"E - V = {np.min(slack):.3e} on the EL path")
    s_end = float(_cumulative(2.0 * slack, el.tau)[-1])
    v0 = np.asarray(s0.v, dtype=float)
    v0 = v0 / math.sqrt(v0 @ metric_eval(G, s0.q) @ v0)
    steps = len(el) - 1 if cfg.scheme == "rk4" else max(1, int(round(t_end / cfg.step)))
    gcfg = IntegratorConfig("rk4", s_end / steps, cfg.rtol, cfg.atol, cfg.max_steps) if cfg.scheme == "rk4" else cfg
    geo = integrate_geodesic(G, None, None, TangentState(s0.q, v0), (0.0, s_end), gcfg, fd_step, "g-arclength")
    return el, geo, path_distance(el, geo, refine=refine), E
