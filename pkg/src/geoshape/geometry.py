"""Charts, fields and pointwise Riemannian geometry.

Everything here works on a single coordinate chart. Metric derivatives come
from an analytic hook when the field provides one and from central finite
differences otherwise. Array layouts are row-major:

========================  ==========================
metric                    ``g[i, j]``
metric derivatives        ``dg[k, i, j] = d_k g_ij``
Christoffel symbols       ``gamma[k, i, j] = Gamma^k_ij``
Riemann tensor            ``riem[i, j, k, l] = R^i_jkl``
========================  ==========================

with ``R^i_jkl = d_k Gamma^i_lj - d_l Gamma^i_kj + Gamma^i_km Gamma^m_lj
- Gamma^i_lm Gamma^m_kj``, so that a round sphere has ``R_{th ph th ph} > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from geoshape import kernels
from geoshape.errors import DegenerateMetric, DomainError, RankDeficientFrame

DEFAULT_FD_STEP = 1e-5
DEFAULT_RIEMANN_STEP = 1e-4
DEGENERACY_THRESHOLD = 1e-12
RANK_THRESHOLD = 1e-10
SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class Chart:
    """Coordinate domain of a configuration space.

    Periodic coordinates live on ``[lower, upper)`` and are reduced modulo
    their period before any evaluation.
    """

    dim: int
    coord_names: tuple = ()
    lower: tuple = ()
    upper: tuple = ()
    periodic: tuple = ()

    def __post_init__(self):
        n = int(self.dim)
        if n < 1:
            raise ValueError("chart dimension must be >= 1")
        names = tuple(self.coord_names) or tuple(f"q{i + 1}" for i in range(n))
        lower = tuple(float(x) for x in self.lower) or (-math.inf,) * n
        upper = tuple(float(x) for x in self.upper) or (math.inf,) * n
        periodic = tuple(bool(p) for p in self.periodic) or (False,) * n
        if not (len(names) == len(lower) == len(upper) == len(periodic) == n):
            raise ValueError("chart fields must all have length dim")
        for lo, hi, per in zip(lower, upper, periodic):
            if not lo < hi:
                raise ValueError(f"chart bounds must satisfy lower < upper, got [{lo}, {hi}]")
            if per and not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError("periodic coordinates need finite bounds")
        object.__setattr__(self, "dim", n)
        object.__setattr__(self, "coord_names", names)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "periodic", periodic)
        object.__setattr__(self, "_lo", np.array(lower))
        object.__setattr__(self, "_hi", np.array(upper))
        object.__setattr__(self, "_per", np.array(periodic, dtype=bool))
        object.__setattr__(self, "_any_per", any(periodic))
        object.__setattr__(self, "_per_idx", tuple((i, lower[i], upper[i] - lower[i]) for i in range(n) if periodic[i]))
        object.__setattr__(self, "_bounded", bool(np.any(np.isfinite(lower) | np.isfinite(upper))))

    @classmethod
    def euclidean(cls, n: int, names: Optional[Sequence[str]] = None) -> "Chart":
        return cls(n, tuple(names or ()))

    @property
    def periods(self) -> np.ndarray:
        """Period per coordinate, 0 for non-periodic ones."""
        return np.array(
            [hi - lo if per else 0.0 for lo, hi, per in zip(self.lower, self.upper, self.periodic)]
        )

    def wrap(self, q) -> np.ndarray:
        q = np.array(q, dtype=float).reshape(self.dim)
        for i, lo, period in self._per_idx:
            q[i] = lo + (q[i] - lo) % period
        return q

    def _inside(self, w: np.ndarray) -> bool:
        if not np.isfinite(w).all():
            return False
        if not self._bounded:
            return True
        ok = (w >= self._lo) & (w <= self._hi)
        return bool(np.all(ok | self._per))

    def contains(self, q) -> bool:
        return self._inside(self.wrap(q))

    def check(self, q) -> np.ndarray:
        """Wrap ``q`` and raise DomainError if it lies outside the chart."""
        w = np.array(q, dtype=float)
        if w.shape != (self.dim,):
            raise DomainError(f"expected a point with {self.dim} coordinates, got shape {w.shape}")
        w = self.wrap(w)
        if not self._inside(w):
            raise DomainError(f"point {np.asarray(q).tolist()} outside chart")
        return w

    def difference(self, a, b) -> np.ndarray:
        """``a - b`` with periodic components reduced to ``[-P/2, P/2)``."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        p = self.periods
        mask = p > 0
        if np.any(mask):
            d[..., mask] = (d[..., mask] + 0.5 * p[mask]) % p[mask] - 0.5 * p[mask]
        return d

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "coord_names": list(self.coord_names),
            "lower": list(self.lower),
            "upper": list(self.upper),
            "periodic": list(self.periodic),
        }


def _steps(q: np.ndarray, fd_step: float) -> np.ndarray:
    return fd_step * np.maximum(1.0, np.abs(q))


def _stencil_point(chart: Chart, q: np.ndarray, k: int, h: float) -> np.ndarray:
    p = q.copy()
    p[k] += h
    if not chart.periodic[k] and not (chart.lower[k] <= p[k] <= chart.upper[k]):
        raise DomainError(f"finite-difference stencil leaves the chart along {chart.coord_names[k]}")
    return p


class ScalarField:
    """Real function on a chart, e.g. a potential energy."""

    def __init__(self, func: Callable, grad: Optional[Callable] = None, chart: Optional[Chart] = None):
        self.func = func
        self.grad = grad
        self.chart = chart

    @classmethod
    def constant(cls, value: float, n: int) -> "ScalarField":
        return cls(lambda q: float(value), lambda q: np.zeros(n))

    def _point(self, q):
        return self.chart.check(q) if self.chart is not None else np.asarray(q, dtype=float)

    def __call__(self, q) -> float:
        return float(self.func(self._point(q)))

    def gradient(self, q, fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
        q = self._point(q)
        if self.grad is not None:
            return np.asarray(self.grad(q), dtype=float).reshape(q.shape)
        out = np.empty_like(q)
        for k, h in enumerate(_steps(q, fd_step)):
            qp, qm = q.copy(), q.copy()
            qp[k] += h
            qm[k] -= h
            out[k] = (self.func(qp) - self.func(qm)) / (2 * h)
        return out


class MetricField:
    """Symmetric, non-degenerate (0, 2)-tensor field on a chart.

    Parameters
    ----------
    chart : Chart
        Coordinate domain the field is defined on.
    func : callable
        ``q -> (n, n)`` array.
    deriv : callable, optional
        ``q -> (n, n, n)`` array with ``deriv(q)[k, i, j] = d_k g_ij``. When
        omitted, derivatives are taken by central differences.
    positive_definite : bool, optional
        Declared signature. Only checked on request (see ``is_positive_definite``).
    """

    def __init__(
        self,
        chart: Chart,
        func: Callable,
        deriv: Optional[Callable] = None,
        positive_definite: Optional[bool] = None,
        name: str = "",
    ):
        self.chart = chart
        self.func = func
        self.deriv = deriv
        self.positive_definite = positive_definite
        self.name = name

    @property
    def dim(self) -> int:
        return self.chart.dim

    @classmethod
    def identity(cls, chart_or_n) -> "MetricField":
        chart = chart_or_n if isinstance(chart_or_n, Chart) else Chart.euclidean(int(chart_or_n))
        n = chart.dim
        return cls(chart, lambda q: np.eye(n), lambda q: np.zeros((n, n, n)), True, "identity")

    @classmethod
    def constant(cls, chart: Chart, matrix) -> "MetricField":
        g = np.array(matrix, dtype=float)
        n = chart.dim
        return cls(chart, lambda q: g.copy(), lambda q: np.zeros((n, n, n)))

    def scaled(self, factor: float) -> "MetricField":
        """The metric ``factor * g`` (same Levi-Civita connection)."""
        c = float(factor)
        d = None if self.deriv is None else (lambda q: c * np.asarray(self.deriv(q), dtype=float))
        pd = None
        if self.positive_definite is not None:
            pd = self.positive_definite if c > 0 else False
        return MetricField(self.chart, lambda q: c * np.asarray(self.func(q), dtype=float), d, pd,
                           f"{c}*{self.name}")

    def raw(self, q, checked: bool = False) -> np.ndarray:
        """Evaluate at a chart point without the degeneracy check."""
        if not checked:
            q = self.chart.check(q)
        g = np.asarray(self.func(q), dtype=float).reshape(self.dim, self.dim)
        return g

    def __call__(self, q) -> np.ndarray:
        return metric_eval(self, q)

    def derivatives(self, q, fd_step: float = DEFAULT_FD_STEP, checked: bool = False) -> np.ndarray:
        """``dg[k, i, j] = d_k g_ij`` at ``q``."""
        if not checked:
            q = self.chart.check(q)
        n = self.dim
        if self.deriv is not None:
            return np.asarray(self.deriv(q), dtype=float).reshape(n, n, n)
        dg = np.empty((n, n, n))
        for k, h in enumerate(_steps(q, fd_step)):
            gp = self.raw(self.chart.wrap(_stencil_point(self.chart, q, k, h)), True)
            gm = self.raw(self.chart.wrap(_stencil_point(self.chart, q, k, -h)), True)
            dg[k] = (gp - gm) / (2 * h)
        return dg

    def is_positive_definite(self, q) -> bool:
        try:
            np.linalg.cholesky(metric_eval(self, q))
        except np.linalg.LinAlgError:
            return False
        return True


@dataclass(frozen=True)
class TangentState:
    """A point of the tangent bundle: chart point ``q`` and velocity ``v``."""

    q: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        q = np.array(self.q, dtype=float).ravel()
        v = np.array(self.v, dtype=float).ravel()
        if q.shape != v.shape:
            raise ValueError("q and v must have the same length")
        q.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)

    def scaled(self, c: float) -> "TangentState":
        return TangentState(self.q, c * self.v)


class ActuationFrame:
    """The ``m`` vector fields along which control forces act.

    Parameters
    ----------
    fields : sequence of callables
        Each maps a chart point to an ``n``-vector.
    """

    def __init__(self, fields: Sequence[Callable]):
        self.fields = tuple(fields)
        if not self.fields:
            raise ValueError("an actuation frame needs at least one vector field")

    @property
    def m(self) -> int:
        return len(self.fields)

    @classmethod
    def coordinate(cls, n: int, indices: Optional[Sequence[int]] = None) -> "ActuationFrame":
        """Frame of coordinate basis vectors; all of them when ``indices`` is None."""
        idx = range(n) if indices is None else indices

        def basis(i):
            e = np.zeros(n)
            e[i] = 1.0
            return lambda q: e.copy()

        return cls([basis(i) for i in idx])

    def matrix(self, q) -> np.ndarray:
        """``(n, m)`` array whose columns are the frame vectors at ``q``."""
        cols = [np.asarray(f(np.asarray(q, dtype=float)), dtype=float).ravel() for f in self.fields]
        e = np.column_stack(cols)
        if e.shape[1] > e.shape[0]:
            raise RankDeficientFrame(f"{e.shape[1]} frame vectors in dimension {e.shape[0]}")
        s = np.linalg.svd(e, compute_uv=False)
        if s[0] == 0.0 or s[-1] <= RANK_THRESHOLD * s[0]:
            raise RankDeficientFrame(f"actuation frame rank deficient at q={np.asarray(q).tolist()}")
        return e

    def is_full(self, n: int) -> bool:
        return self.m == n


@dataclass(frozen=True)
class ConnectionCoefficients:
    """Levi-Civita symbols ``gamma[k, i, j] = Gamma^k_ij`` at a point."""

    gamma: np.ndarray

    def contract(self, v, w=None) -> np.ndarray:
        """``Gamma^k_ij v^i w^j`` (``w`` defaults to ``v``)."""
        if w is None:
            return kernels.quadratic_contract(self.gamma, v)
        return kernels.bilinear_contract(self.gamma, v, w)


@dataclass(frozen=True)
class CurvatureTensor:
    """Riemann tensor ``riem[i, j, k, l] = R^i_jkl`` together with the metric at the point."""

    riem: np.ndarray
    g: np.ndarray = field(repr=False)

    def lowered(self) -> np.ndarray:
        """``R_ijkl = g_im R^m_jkl``."""
        return np.einsum("im,mjkl->ijkl", self.g, self.riem)

    def ricci(self) -> np.ndarray:
        # R_jl = R^i_jil
        return np.einsum("ijil->jl", self.riem)

    def scalar(self) -> float:
        return float(np.einsum("jl,jl->", np.linalg.inv(self.g), self.ricci()))

    def sectional(self, u, w) -> float:
        """Sectional curvature of the plane spanned by ``u`` and ``w``."""
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        num = np.einsum("ijkl,i,j,k,l->", self.lowered(), u, w, u, w)
        den = (u @ self.g @ u) * (w @ self.g @ w) - (u @ self.g @ w) ** 2
        return float(num / den)


def metric_eval(metric: MetricField, q, checked: bool = False) -> np.ndarray:
    """Metric matrix at ``q``, checked for symmetry and degeneracy."""
    g = metric.raw(q, checked)
    code, det = kernels.inspect_metric(g, SYMMETRY_TOL, DEGENERACY_THRESHOLD)
    if code == 1:
        raise DegenerateMetric(f"non-finite metric at q={np.asarray(q).tolist()}")
    if code == 2:
        raise ValueError("metric evaluator returned a non-symmetric matrix")
    if code == 3:
        raise DegenerateMetric(f"metric degenerate at q={np.asarray(q).tolist()} (det={det:.3e})")
    return 0.5 * (g + g.T)


def local_geometry(metric: MetricField, q, fd_step: float = DEFAULT_FD_STEP):
    """``(g, g^-1, dg)`` at ``q`` with a single domain check."""
    q = metric.chart.check(q)
    g = metric_eval(metric, q, checked=True)
    return g, kernels.invert(g), metric.derivatives(q, fd_step, checked=True)


def spray(metric: MetricField, q, v, fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
    """``Gamma^k_ij v^i v^j`` without forming the full symbol array."""
    _, ginv, dg = local_geometry(metric, q, fd_step)
    return kernels.geodesic_spray(ginv, dg, v)


def flat(metric: MetricField, q, x) -> np.ndarray:
    """Lower an index: ``g x``."""
    return metric_eval(metric, q) @ np.asarray(x, dtype=float)


def sharp(metric: MetricField, q, w) -> np.ndarray:
    """Raise an index: ``g^{-1} w``."""
    return np.linalg.solve(metric_eval(metric, q), np.asarray(w, dtype=float))


def coframe(metric: MetricField, frame: ActuationFrame, q) -> np.ndarray:
    """Covectors ``theta^(i) = g^flat(e_(i))`` as the rows of an ``(m, n)`` array."""
    e = frame.matrix(metric.chart.check(q))
    return (metric_eval(metric, q) @ e).T


def christoffel_array(metric: MetricField, q, fd_step: float = DEFAULT_FD_STEP) -> np.ndarray:
    _, ginv, dg = local_geometry(metric, q, fd_step)
    return kernels.christoffel_from_derivs(ginv, dg)


def christoffel(metric: MetricField, q, fd_step: float = DEFAULT_FD_STEP) -> ConnectionCoefficients:
    """Levi-Civita connection coefficients at ``q``."""
    return ConnectionCoefficients(christoffel_array(metric, q, fd_step))


def christoffel_with_derivatives(metric: MetricField, q, fd_step: float = DEFAULT_RIEMANN_STEP):
    """Christoffel symbols and their derivatives ``dgamma[m, k, i, j] = d_m Gamma^k_ij``.

    The outer derivative is a central difference of step ``fd_step``; the
    inner one (when the metric has no analytic derivatives) reuses the same step.
    """
    q = metric.chart.check(q)
    n = metric.dim
    gamma = christoffel_array(metric, q, fd_step)
    dgamma = np.empty((n, n, n, n))
    for m, h in enumerate(_steps(q, fd_step)):
        gp = christoffel_array(metric, _stencil_point(metric.chart, q, m, h), fd_step)
        gm = christoffel_array(metric, _stencil_point(metric.chart, q, m, -h), fd_step)
        dgamma[m] = (gp - gm) / (2 * h)
    return gamma, dgamma


def riemann(metric: MetricField, q, fd_step: float = DEFAULT_RIEMANN_STEP) -> CurvatureTensor:
    """Riemann tensor at ``q``."""
    gamma, dgamma = christoffel_with_derivatives(metric, q, fd_step)
    return CurvatureTensor(kernels.riemann_from_christoffel(gamma, dgamma), metric_eval(metric, q))
