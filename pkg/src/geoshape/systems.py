"""Catalog of canonical test systems with exact metrics and reference values."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from geoshape.errors import UnknownSystem
from geoshape.geometry import ActuationFrame, Chart, MetricField, ScalarField

G0 = 9.81


@dataclass(frozen=True)
class SystemSpec:
    """A natural mechanical system ``L = 1/2 M(v, v) - V(q)`` with actuation.

    ``reference_data`` maps a name to ``(value, tag)`` where the tag is
    ``"TRIVIAL"`` or ``"DERIVED"``.
    """

    name: str
    chart: Chart
    M: MetricField
    V: ScalarField
    frame: ActuationFrame
    params: dict = field(default_factory=dict)
    reference_data: dict = field(default_factory=dict)
    description: str = ""

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def fully_actuated(self) -> bool:
        return self.frame.m == self.chart.dim

    def summary(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "dim": self.dim,
            "chart": self.chart.to_dict(),
            "params": dict(self.params),
            "actuated_dofs": self.frame.m,
            "fully_actuated": self.fully_actuated,
            "reference_data": {k: {"value": v, "tag": t} for k, (v, t) in self.reference_data.items()},
        }


def _flat_free():
    chart = Chart(2, ("x", "y"))
    return SystemSpec(
        "flat_free", chart, MetricField.identity(chart), ScalarField.constant(0.0, 2),
        ActuationFrame.coordinate(2),
        reference_data={"curvature": (0.0, "TRIVIAL")},
        description="free particle in the plane, M = I, V = 0",
    )


def _harmonic2d(k: float = 1.0):
    chart = Chart(2, ("x", "y"))
    V = ScalarField(lambda q: 0.5 * k * float(q @ q), lambda q: k * np.asarray(q, dtype=float))
    return SystemSpec(
        "harmonic2d", chart, MetricField.identity(chart), V, ActuationFrame.coordinate(2),
        params={"k": k},
        reference_data={"period": (2 * math.pi / math.sqrt(k), "DERIVED")},
        description="isotropic 2D harmonic oscillator, M = I, V = k |q|^2 / 2",
    )


def _pendulum(m: float = 1.0, l: float = 0.5, g: float = G0):
    chart = Chart(1, ("theta",), (-math.pi,), (math.pi,), (True,))
    M = MetricField(chart, lambda q: np.array([[m * l * l]]), lambda q: np.zeros((1, 1, 1)), True, "pendulum")
    V = ScalarField(
        lambda q: m * g * l * (1.0 - math.cos(q[0])),
        lambda q: np.array([m * g * l * math.sin(q[0])]),
    )
    return SystemSpec(
        "pendulum", chart, M, V, ActuationFrame.coordinate(1),
        params={"m": m, "l": l, "g": g},
        reference_data={"small_oscillation_period": (2 * math.pi * math.sqrt(l / g), "DERIVED")},
        description="simple pendulum, M = m l^2, V = m g l (1 - cos theta), theta = 0 hanging",
    )


def _cart_pendulum(m_c: float = 1.0, m_p: float = 0.1, l: float = 0.5, g: float = G0):
    chart = Chart(2, ("x", "theta"), (-math.inf, -math.pi), (math.inf, math.pi), (False, True))

    def mass(q):
        c = math.cos(q[1])
        return np.array([[m_c + m_p, m_p * l * c], [m_p * l * c, m_p * l * l]])

    def dmass(q):
        s = math.sin(q[1])
        d = np.zeros((2, 2, 2))
        d[1] = [[0.0, -m_p * l * s], [-m_p * l * s, 0.0]]
        return d

    V = ScalarField(
        lambda q: m_p * g * l * math.cos(q[1]),
        lambda q: np.array([0.0, -m_p * g * l * math.sin(q[1])]),
    )
    return SystemSpec(
        "cart_pendulum", chart, MetricField(chart, mass, dmass, True, "cart_pendulum"), V,
        ActuationFrame.coordinate(2, [0]),
        params={"m_c": m_c, "m_p": m_p, "l": l, "g": g},
        reference_data={
            "det_M_at_theta0": (m_p * l * l * m_c, "DERIVED"),
            "V_max_upright": (m_p * g * l, "TRIVIAL"),
        },
        description="pendulum on a cart, q = (x, theta), theta = 0 upright, cart force only",
    )


def _sphere(radius: float = 1.0):
    r2 = radius * radius
    chart = Chart(2, ("theta", "phi"), (0.0, -math.pi), (math.pi, math.pi), (False, True))

    def metric(q):
        return np.diag([r2, r2 * math.sin(q[0]) ** 2])

    def dmetric(q):
        d = np.zeros((2, 2, 2))
        d[0, 1, 1] = 2.0 * r2 * math.sin(q[0]) * math.cos(q[0])
        return d

    return SystemSpec(
        "sphere", chart, MetricField(chart, metric, dmetric, True, "sphere"), ScalarField.constant(0.0, 2),
        ActuationFrame.coordinate(2),
        params={"radius": radius},
        reference_data={
            "gaussian_curvature": (1.0 / r2, "DERIVED"),
            "scalar_curvature": (2.0 / r2, "DERIVED"),
            "area": (4 * math.pi * r2, "DERIVED"),
        },
        description="round sphere of given radius, G = r^2 diag(1, sin^2 theta)",
    )


def _neg_curv_patch():
    chart = Chart(2, ("u", "w"), (-5.0, -5.0), (5.0, 5.0), (False, False))

    def metric(q):
        return np.diag([1.0, math.exp(2.0 * q[0])])

    def dmetric(q):
        d = np.zeros((2, 2, 2))
        d[0, 1, 1] = 2.0 * math.exp(2.0 * q[0])
        return d

    return SystemSpec(
        "neg_curv_patch", chart, MetricField(chart, metric, dmetric, True, "neg_curv_patch"),
        ScalarField.constant(0.0, 2), ActuationFrame.coordinate(2),
        reference_data={"gaussian_curvature": (-1.0, "DERIVED")},
        description="hyperbolic patch, G = diag(1, exp(2 u)), K = -1",
    )


_REGISTRY = {
    "flat_free": _flat_free,
    "harmonic2d": _harmonic2d,
    "pendulum": _pendulum,
    "cart_pendulum": _cart_pendulum,
    "sphere": _sphere,
    "neg_curv_patch": _neg_curv_patch,
}


def list_systems() -> list:
    return sorted(_REGISTRY)


def get_system(name: str, params: Optional[dict] = None) -> SystemSpec:
    """Build a catalog system, optionally overriding its default parameters."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownSystem(f"unknown system {name!r}; known: {', '.join(list_systems())}") from None
    try:
        return factory(**(params or {}))
    except TypeError as exc:
        raise ValueError(f"bad parameters for system {name!r}: {exc}") from None
