import json
import os
import subprocess
import sys

import numpy as np
import pytest

from geoshape import _pykernels, kernels

ck = pytest.importorskip("geoshape._ckernels", reason="compiled kernels not built")


def _spd(rng, n):
    a = rng.normal(size=(n, n))
    return a @ a.T + n * np.eye(n)


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_backends_agree(n, rng):
    g = _spd(rng, n)
    ginv = np.linalg.inv(g)
    dg = rng.normal(size=(n, n, n))
    dg = 0.5 * (dg + np.transpose(dg, (0, 2, 1)))
    v, w = rng.normal(size=n), rng.normal(size=n)
    gam_py = _pykernels.christoffel_from_derivs(ginv, dg)
    gam_c = ck.christoffel_from_derivs(ginv, dg)
    np.testing.assert_allclose(gam_c, gam_py, rtol=1e-12, atol=1e-13)
    dgam = rng.normal(size=(n, n, n, n))
    np.testing.assert_allclose(ck.riemann_from_christoffel(gam_py, dgam),
                               _pykernels.riemann_from_christoffel(gam_py, dgam), atol=1e-12)
    np.testing.assert_allclose(ck.quadratic_contract(gam_py, v), _pykernels.quadratic_contract(gam_py, v), atol=1e-12)
    np.testing.assert_allclose(ck.bilinear_contract(gam_py, v, w), _pykernels.bilinear_contract(gam_py, v, w),
                               atol=1e-12)
    riem = rng.normal(size=(n, n, n, n))
    np.testing.assert_allclose(ck.tidal_matrix(riem, v), _pykernels.tidal_matrix(riem, v), atol=1e-12)
    np.testing.assert_allclose(ck.invert(g), _pykernels.invert(g), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(ck.geodesic_spray(ginv, dg, v), _pykernels.geodesic_spray(ginv, dg, v), atol=1e-12)
    # spray equals the contracted Christoffel symbols
    np.testing.assert_allclose(_pykernels.geodesic_spray(ginv, dg, v), _pykernels.quadratic_contract(gam_py, v),
                               atol=1e-12)
    cc, dc = ck.inspect_metric(g, 1e-12, 1e-12)
    cp, dp = _pykernels.inspect_metric(g, 1e-12, 1e-12)
    assert cc == cp == 0
    assert abs(dc - dp) <= 1e-10 * abs(dp)


@pytest.mark.parametrize("g, code", [
    (np.array([[1.0, np.nan], [np.nan, 1.0]]), 1),
    (np.array([[1.0, 0.5], [0.0, 1.0]]), 2),
    (np.array([[1.0, 1.0], [1.0, 1.0]]), 3),
    (np.zeros((2, 2)), 3),
])
def test_inspect_metric_codes(g, code):
    assert ck.inspect_metric(g, 1e-12, 1e-12)[0] == code
    assert _pykernels.inspect_metric(g, 1e-12, 1e-12)[0] == code


def test_wrappers_accept_non_contiguous(rng):
    g = _spd(rng, 3)
    gt = np.asfortranarray(g)
    np.testing.assert_allclose(kernels.invert(gt), np.linalg.inv(g), rtol=1e-12)


SCRIPT = """
import json, numpy as np
from geoshape import BACKEND, get_system
from geoshape.dynamics import integrate_euler_lagrange, IntegratorConfig
from geoshape.geometry import TangentState, riemann
from geoshape.stability import min_transverse_eigenvalue
from geoshape.shaping import jacobi_metric
cp = get_system("cart_pendulum")
tr = integrate_euler_lagrange(cp.M, cp.V, None, None, TangentState([0.0, 2.5], [0.3, 0.0]), (0, 1), IntegratorConfig(step=1e-2))
G = jacobi_metric(cp.M, cp.V, 0.5405)
print(json.dumps({"backend": BACKEND, "q": tr.q[-1].tolist(), "R": riemann(cp.M, [0.1, 0.7]).scalar(),
                  "eig": min_transverse_eigenvalue(G, [0.0, 0.1])}))
"""


def _run(pure):
    env = dict(os.environ)
    env.pop("GEOSHAPE_PURE_PYTHON", None)
    if pure:
        env["GEOSHAPE_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def test_end_to_end_backend_parity():
    c, p = _run(False), _run(True)
    assert c["backend"] == "cython" and p["backend"] == "python"
    np.testing.assert_allclose(c["q"], p["q"], rtol=1e-11, atol=1e-12)
    assert abs(c["R"] - p["R"]) < 1e-8 * max(1.0, abs(p["R"]))
    assert abs(c["eig"] - p["eig"]) < 1e-8 * abs(p["eig"])
