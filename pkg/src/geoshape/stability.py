"""Curvature-based stability assessment.

The object studied is the tidal operator ``A(U) = R(., U) U`` with
components ``A^i_j = R^i_kjl U^k U^l``, which drives geodesic deviation
``D^2 J / dt^2 + A J = 0``. Negative eigenvalues on the complement of ``U``
mean exponentially diverging neighbours (unstable), positive ones mean
oscillation (stable). ``A U = 0`` always, so the eigenvalue along the flow
direction carries no information and classification uses the transverse
spectrum only.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from geoshape import kernels
from geoshape.dynamics import IntegratorConfig, step_flow
from geoshape.errors import DegenerateMetric, DomainError
from geoshape.geometry import (
    DEFAULT_RIEMANN_STEP,
    MetricField,
    TangentState,
    christoffel_with_derivatives,
    metric_eval,
    riemann,
)


@dataclass(frozen=True)
class TidalOperator:
    matrix: np.ndarray
    g: np.ndarray
    v: np.ndarray

    def _lowered(self) -> np.ndarray:
        s = self.g @ self.matrix
        return 0.5 * (s + s.T)

    def _riemannian(self) -> bool:
        try:
            np.linalg.cholesky(self.g)
        except np.linalg.LinAlgError:
            return False
        return True

    def eigenvalues(self) -> np.ndarray:
        """All ``n`` eigenvalues, ascending."""
        if self._riemannian():
            return scipy.linalg.eigh(self._lowered(), self.g, eigvals_only=True)
        return np.sort(np.real(np.linalg.eigvals(self.matrix)))

    def transverse_eigenvalues(self) -> np.ndarray:
        """Eigenvalues restricted to the ``g``-orthogonal complement of ``v``."""
        n = self.g.shape[0]
        if not np.any(self.v):
            return self.eigenvalues()
        if not self._riemannian():
            ev = np.real(np.linalg.eigvals(self.matrix))
            return np.sort(np.delete(ev, int(np.argmin(np.abs(ev)))))
        basis = _orthonormal_complement(self.g, self.v)
        if basis.shape[1] == 0:
            return np.zeros(0)
        return np.linalg.eigvalsh(basis.T @ self._lowered() @ basis)


def _orthonormal_complement(g: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Columns spanning the ``g``-orthogonal complement of ``v``, ``g``-orthonormal."""
    n = g.shape[0]
    vecs = [v / math.sqrt(v @ g @ v)]
    for e in np.eye(n):
        w = e.copy()
        for b in vecs:
            w = w - (b @ g @ w) * b
        nrm2 = w @ g @ w
        if nrm2 > 1e-12:
            vecs.append(w / math.sqrt(nrm2))
        if len(vecs) == n:
            break
    return np.column_stack(vecs[1:]) if len(vecs) > 1 else np.zeros((n, 0))


def tidal_operator(G: MetricField, s: TangentState, fd_step: float = DEFAULT_RIEMANN_STEP) -> TidalOperator:
    curv = riemann(G, s.q, fd_step)
    v = np.asarray(s.v, dtype=float)
    return TidalOperator(kernels.tidal_matrix(curv.riem, v), curv.g, v)


def stability_eigenvalues(G: MetricField, s: TangentState, fd_step: float = DEFAULT_RIEMANN_STEP) -> np.ndarray:
    """Eigenvalues of the tidal operator, ascending."""
    return tidal_operator(G, s, fd_step).eigenvalues()


class DeviationTrajectory:
    """Base geodesic samples ``(tau, q, v)`` with a Jacobi field ``J`` and its
    covariant derivative ``DJ`` along the curve."""

    def __init__(self, tau, q, v, J, DJ, g_norms):
        self.tau, self.q, self.v, self.J, self.DJ = tau, q, v, J, DJ
        self.norms = g_norms

    def __len__(self):
        return self.tau.size


def integrate_deviation(
    G: MetricField,
    s0: TangentState,
    J0,
    DJ0,
    t_span,
    cfg: IntegratorConfig = IntegratorConfig(),
    fd_step: float = DEFAULT_RIEMANN_STEP,
) -> DeviationTrajectory:
    """Jointly integrate a geodesic and a Jacobi field along it.

    The field is propagated through the linearized geodesic equation in
    coordinates, which is the deviation equation
    ``D^2 J + R(J, U) U = 0`` written with partial derivatives. ``DJ0`` is the
    covariant derivative at the start; it is converted with
    ``dJ/dt = DJ/dt - Gamma(U, J)``.
    """
    n = G.dim
    q0 = G.chart.check(s0.q)
    v0 = np.asarray(s0.v, dtype=float)
    J0 = np.asarray(J0, dtype=float)
    gamma0, _ = christoffel_with_derivatives(G, q0, fd_step)
    dJ0 = np.asarray(DJ0, dtype=float) - kernels.bilinear_contract(gamma0, v0, J0)

    def rhs(t, y):
        q, v, J, dJ = y[:n], y[n:2 * n], y[2 * n:3 * n], y[3 * n:]
        gamma, dgamma = christoffel_with_derivatives(G, q, fd_step)
        acc = -kernels.quadratic_contract(gamma, v)
        dacc = -np.einsum("mkij,m,i,j->k", dgamma, J, v, v) - 2.0 * kernels.bilinear_contract(gamma, v, dJ)
        return np.concatenate([v, acc, dJ, dacc])

    ts, ys = step_flow(rhs, G.chart, np.concatenate([q0, v0, J0, dJ0]), float(t_span[0]), float(t_span[1]), cfg)
    q, v, J, dJ = ys[:, :n], ys[:, n:2 * n], ys[:, 2 * n:3 * n], ys[:, 3 * n:]
    DJ = np.empty_like(J)
    norms = np.empty(ts.size)
    for i in range(ts.size):
        gamma, _ = christoffel_with_derivatives(G, q[i], fd_step)
        DJ[i] = dJ[i] + kernels.bilinear_contract(gamma, v[i], J[i])
        norms[i] = math.sqrt(abs(J[i] @ metric_eval(G, q[i]) @ J[i]))
    qw = np.array([G.chart.wrap(row) for row in q])
    return DeviationTrajectory(ts, qw, v, J, DJ, norms)


def unit_directions(n: int) -> np.ndarray:
    """Deterministic Euclidean unit directions: 16 angles in 2D, 64 Fibonacci points in 3D."""
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        a = 2.0 * math.pi * np.arange(16) / 16
        return np.column_stack([np.cos(a), np.sin(a)])
    if n == 3:
        k = np.arange(64) + 0.5
        z = 1.0 - 2.0 * k / 64
        r = np.sqrt(1.0 - z * z)
        phi = math.pi * (3.0 - math.sqrt(5.0)) * k
        return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
    d = np.random.default_rng(0).normal(size=(16 * n, n))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def grid_points(lower, upper, counts) -> np.ndarray:
    """Tensor grid including the end points, row-major over axes."""
    axes = [np.linspace(lo, hi, int(c)) for lo, hi, c in zip(lower, upper, counts)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))


@dataclass
class StabilityMap:
    points: np.ndarray
    min_eig: np.ndarray
    classes: list

    @property
    def unstable_fraction(self) -> float:
        valid = [c for c in self.classes if c != "excluded"]
        return sum(c == "unstable" for c in valid) / len(valid) if valid else 0.0

    @property
    def min_eig_global(self) -> Optional[float]:
        finite = self.min_eig[np.isfinite(self.min_eig)]
        return float(np.min(finite)) if finite.size else None

    def summary(self) -> dict:
        return {
            "unstable_fraction": float(self.unstable_fraction),
            "min_eig_global": self.min_eig_global,
            "points": int(self.points.shape[0]),
            "excluded": sum(c == "excluded" for c in self.classes),
        }

    def to_csv(self) -> str:
        n = self.points.shape[1]
        out = io.StringIO()
        out.write(",".join([f"q{i + 1}" for i in range(n)] + ["min_eig", "class"]) + "\n")
        for p, e, c in zip(self.points, self.min_eig, self.classes):
            out.write(",".join([format(float(x), ".17g") for x in p] + [format(float(e), ".17g"), c]) + "\n")
        return out.getvalue()


def min_transverse_eigenvalue(G: MetricField, q, directions: Optional[np.ndarray] = None,
                              fd_step: float = DEFAULT_RIEMANN_STEP) -> float:
    """Minimum over unit-``G``-norm directions of the smallest transverse tidal eigenvalue."""
    curv = riemann(G, q, fd_step)
    g = curv.g
    n = g.shape[0]
    if n == 1:
        return 0.0
    dirs = unit_directions(n) if directions is None else np.asarray(directions, dtype=float)
    try:
        L = np.linalg.cholesky(g)
        vs = scipy.linalg.solve_triangular(L.T, dirs.T, lower=False).T
    except np.linalg.LinAlgError:
        vs = []
        for d in dirs:
            nrm = abs(d @ g @ d)
            if nrm > 1e-12:
                vs.append(d / math.sqrt(nrm))
        vs = np.array(vs)
    best = math.inf
    for v in vs:
        op = TidalOperator(kernels.tidal_matrix(curv.riem, v), g, v)
        ev = op.transverse_eigenvalues()
        if ev.size:
            best = min(best, float(ev[0]))
    return best


def classify_region(G: MetricField, points, directions: Optional[np.ndarray] = None,
                    fd_step: float = DEFAULT_RIEMANN_STEP, threads: int = 1) -> StabilityMap:
    """Stability class per point: ``stable`` if the minimum transverse tidal
    eigenvalue is ``>= 0``, ``unstable`` if negative, ``excluded`` where the
    metric degenerates (e.g. Hill boundary) or the stencil leaves the chart."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))

    def one(q):
        try:
            return min_transverse_eigenvalue(G, q, directions, fd_step)
        except (DegenerateMetric, DomainError):
            return math.nan

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = list(pool.map(one, pts))
    else:
        vals = [one(q) for q in pts]
    vals = np.array(vals, dtype=float)
    classes = ["excluded" if not np.isfinite(x) else ("unstable" if x < 0 else "stable") for x in vals]
    return StabilityMap(pts, vals, classes)
