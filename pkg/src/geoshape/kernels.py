"""Backend selection for the tensor kernels.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy implementations in ``_pykernels`` are used. Setting the environment
variable ``GEOSHAPE_PURE_PYTHON=1`` forces the fallback.
"""

import os

import numpy as np

from geoshape import _pykernels

_impl = _pykernels
BACKEND = "python"

if os.environ.get("GEOSHAPE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from geoshape import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def christoffel_from_derivs(ginv, dg):
    return _impl.christoffel_from_derivs(_c(ginv), _c(dg))


def riemann_from_christoffel(gamma, dgamma):
    return _impl.riemann_from_christoffel(_c(gamma), _c(dgamma))


def quadratic_contract(gamma, v):
    return _impl.quadratic_contract(_c(gamma), _c(v))


def bilinear_contract(gamma, v, w):
    return _impl.bilinear_contract(_c(gamma), _c(v), _c(w))


def tidal_matrix(riem, v):
    return _impl.tidal_matrix(_c(riem), _c(v))


def inspect_metric(g, sym_tol, deg_thresh):
    return _impl.inspect_metric(_c(g), float(sym_tol), float(deg_thresh))


def invert(g):
    return _impl.invert(_c(g))


def geodesic_spray(ginv, dg, v):
    return _impl.geodesic_spray(_c(ginv), _c(dg), _c(v))
