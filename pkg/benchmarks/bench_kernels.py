"""Compare the compiled and numpy kernel backends.

Kernel timings call both implementations directly in this process; the
end-to-end timings run each backend in a fresh interpreter, since the
backend is chosen once at import.

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from geoshape import _pykernels

try:
    from geoshape import _ckernels
except ImportError:
    _ckernels = None

END_TO_END = """
import json, time
from geoshape import BACKEND, get_system
from geoshape.dynamics import IntegratorConfig, integrate_euler_lagrange
from geoshape.geometry import TangentState
from geoshape.shaping import jacobi_metric
from geoshape.stability import classify_region, grid_points
cp = get_system("cart_pendulum")
t0 = time.perf_counter()
integrate_euler_lagrange(cp.M, cp.V, None, None, TangentState([0.0, 0.4], [0.2, 0.0]), (0, 1.0), IntegratorConfig(step=1e-3))
t1 = time.perf_counter()
classify_region(jacobi_metric(cp.M, cp.V, 0.5405), grid_points([-0.5, -0.3], [0.5, 0.3], [3, 7]))
t2 = time.perf_counter()
print(json.dumps({"backend": BACKEND, "integrate_el_1000_steps": t1 - t0, "classify_21_points": t2 - t1}))
"""


def kernel_cases(n, rng):
    a = rng.normal(size=(n, n))
    g = a @ a.T + n * np.eye(n)
    ginv = np.linalg.inv(g)
    dg = rng.normal(size=(n, n, n))
    dg = 0.5 * (dg + np.transpose(dg, (0, 2, 1)))
    gam = _pykernels.christoffel_from_derivs(ginv, dg)
    dgam = rng.normal(size=(n, n, n, n))
    riem = np.ascontiguousarray(_pykernels.riemann_from_christoffel(gam, dgam))
    v = rng.normal(size=n)
    return {
        "christoffel_from_derivs": (ginv, dg),
        "riemann_from_christoffel": (gam, dgam),
        "quadratic_contract": (gam, v),
        "tidal_matrix": (riem, v),
        "inspect_metric": (g, 1e-12, 1e-12),
        "invert": (g,),
        "geodesic_spray": (ginv, dg, v),
    }


def time_call(fn, args, repeat):
    number = 2000
    best = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat))
    return best / number * 1e6


def end_to_end(pure):
    env = dict(os.environ)
    env.pop("GEOSHAPE_PURE_PYTHON", None)
    if pure:
        env["GEOSHAPE_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled kernels are not built; only the numpy backend is available")
        return 1
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'n':>2s} {'numpy us':>10s} {'cython us':>10s} {'speedup':>8s}")
    for n in (2, 3, 4):
        for name, args_ in kernel_cases(n, rng).items():
            tp = time_call(getattr(_pykernels, name), args_, args.repeat)
            tc = time_call(getattr(_ckernels, name), args_, args.repeat)
            print(f"{name:28s} {n:2d} {tp:10.2f} {tc:10.2f} {tp / tc:8.1f}")
    print()
    runs = [end_to_end(False), end_to_end(True)]
    print(f"{'end to end':28s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for key in ("integrate_el_1000_steps", "classify_21_points"):
        tp = runs[1][key]
        tc = runs[0][key]
        print(f"{key:28s}    {tp:10.3f} {tc:10.3f} {tp / tc:8.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
