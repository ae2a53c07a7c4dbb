"""Geometric control toolkit.

Mechanical systems are geometrized through their Jacobi metric, feedback is
designed by shaping the closed-loop geometry (connection-difference
matching), stability is read off the geodesic-deviation operator, and
candidate closed-loop metrics are ranked with curvature cost functionals.
"""

from geoshape.geometry import (
    ActuationFrame,
    Chart,
    ConnectionCoefficients,
    CurvatureTensor,
    MetricField,
    ScalarField,
    TangentState,
    christoffel,
    coframe,
    flat,
    metric_eval,
    riemann,
    sharp,
)
from geoshape.kernels import BACKEND
from geoshape.systems import SystemSpec, get_system, list_systems

__version__ = "0.1.0"
