"""``geoshape`` command-line front end.

Exit codes: 0 success, 1 analysis failure (matching failed), 2 config or
usage error, 3 numerical error. Every report embeds the fully resolved
config; outputs are written only after the whole computation succeeded,
each one atomically.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from typing import Optional

import numpy as np

from geoshape import config as cfgmod
from geoshape.cost import (
    CostSpec,
    QuadratureGrid,
    bump_family,
    conformal_family,
    constrained_optimize,
    energy_family,
    scalar_curvature_profile,
)
from geoshape.dynamics import (
    IntegratorConfig,
    energies,
    integrate_euler_lagrange,
    integrate_geodesic,
    jacobi_compare,
    path_distance,
)
from geoshape.errors import ConfigError, GeoshapeError, HillBoundary, NumericalError, UnknownSystem
from geoshape.geometry import MetricField, TangentState
from geoshape.shaping import OpenLoopSystem, StateSampler, extract_control_law, jacobi_metric, verify_matching
from geoshape.stability import classify_region, grid_points
from geoshape.systems import get_system, list_systems

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_outputs(out_dir: str, files: dict) -> None:
    """Write ``{name: text}`` into ``out_dir``, each file via temp file + rename."""
    os.makedirs(out_dir, exist_ok=True)
    for name, text in files.items():
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, os.path.join(out_dir, name))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def _integrator(c: dict) -> IntegratorConfig:
    return IntegratorConfig(**c["integrator"])


def _state(spec, q0, v0) -> TangentState:
    if len(q0) != spec.dim or len(v0) != spec.dim:
        raise ConfigError(f"q0 and v0 need {spec.dim} components for system {spec.name!r}")
    return TangentState(spec.chart.wrap(np.asarray(q0, dtype=float)), v0)


def _sampler(d: dict, seed: int, dim: int) -> StateSampler:
    if len(d["q_lower"]) != dim or len(d["q_upper"]) != dim:
        raise ConfigError(f"sampler bounds need {dim} components")
    return StateSampler(d["q_lower"], d["q_upper"], d["v_scale"], d["count"], seed, d["jitter"])


def _grid(d: dict, dim: int) -> QuadratureGrid:
    if not (len(d["lower"]) == len(d["upper"]) == len(d["counts"]) == dim):
        raise ConfigError(f"grid lower/upper/counts need {dim} components")
    return QuadratureGrid(d["lower"], d["upper"], d["counts"], d["rule"])


def _center(d: dict, dim: int) -> np.ndarray:
    c = np.zeros(dim) if d.get("center") is None else np.asarray(d["center"], dtype=float)
    if c.size != dim:
        raise ConfigError(f"center needs {dim} components")
    return c


def _closed_loop(d: dict, sysm: OpenLoopSystem) -> MetricField:
    kind = d["kind"]
    if kind == "same":
        return sysm.G_ol
    if kind == "conformal":
        return sysm.G_ol.scaled(d["scale"])
    if kind == "identity":
        return MetricField.identity(sysm.chart)
    if kind == "bump":
        if not 0 <= d["index"] < sysm.dim:
            raise ConfigError("bump index out of range")
        a = d["amplitude"]
        return bump_family(sysm.G_ol, d["index"], _center(d, sysm.dim), d["width"], (a, a)).instantiate([a])
    if "metric" not in d:
        raise ConfigError("closed_loop kind 'inline' needs a 'metric' matrix")
    return cfgmod.inline_metric(sysm.chart, d["metric"])


# -- subcommands -----------------------------------------------------------------
# Each ``_prepare_*`` builds everything from the config (errors there exit 2)
# and returns a thunk doing the numerical work (errors there exit 3).


def _prepare_simulate(c, args):
    spec = cfgmod.build_system(c["system"])
    b = c["simulate"]
    s0 = _state(spec, b["q0"], b["v0"])
    icfg = _integrator(c)

    def run():
        if b["flow"] == "euler-lagrange":
            traj = integrate_euler_lagrange(spec.M, spec.V, None, None, s0, (0.0, b["t_end"]), icfg, c["fd_step"])
            e = energies(spec.M, spec.V, traj)
            label = "energy"
        else:
            G = spec.M if b["energy"] is None else jacobi_metric(spec.M, spec.V, b["energy"], c["jacobi_epsilon"])
            traj = integrate_geodesic(G, None, None, s0, (0.0, b["t_end"]), icfg, c["fd_step"])
            e = np.array([float(v @ G(q) @ v) for q, v in zip(traj.q, traj.v)])
            label = "speed2"
        drift = float(np.max(np.abs(e - e[0])))
        report = {
            "config": c,
            "flow": b["flow"],
            "steps": len(traj.tau) - 1,
            "conserved_quantity": label,
            "initial": float(e[0]),
            "max_abs_drift": drift,
            "relative_drift": drift / abs(e[0]) if e[0] != 0 else drift,
        }
        return EXIT_OK, {"trajectory.csv": traj.to_csv(), "simulate.json": dumps(report)}

    return run


def _prepare_jacobi_compare(c, args):
    spec = cfgmod.build_system(c["system"])
    b = c["jacobi_compare"]
    s0 = _state(spec, b["q0"], b["v0"])
    icfg = _integrator(c)
    if icfg.scheme != "rk4":
        raise ConfigError("jacobi-compare needs the fixed-step rk4 scheme")

    def run():
        s = s0
        if b["energy"] is not None:
            # rescale the velocity onto the requested energy shell
            slack = b["energy"] - spec.V(s.q)
            if slack < c["jacobi_epsilon"]:
                raise HillBoundary(f"E - V = {slack:.3e} at q0: energy below the potential")
            k2 = float(s.v @ spec.M(s.q) @ s.v)
            if k2 <= 0.0:
                raise ConfigError("v0 must be nonzero to set an energy")
            s = TangentState(s.q, s.v * math.sqrt(2.0 * slack / k2))
        el, geo, dist, E = jacobi_compare(spec.M, spec.V, s, b["t_end"], icfg, c["fd_step"], b["refine"],
                                          c["jacobi_epsilon"])
        report = {"config": c, "path_distance": dist, "E": E, "steps": len(el.tau) - 1,
                  "geodesic_parameter_end": float(geo.tau[-1])}
        return EXIT_OK, {"jacobi_compare.json": dumps(report), "el_trajectory.csv": el.to_csv(),
                         "geodesic_trajectory.csv": geo.to_csv()}

    return run


def _prepare_match(c, args):
    spec = cfgmod.build_system(c["system"])
    b = c["match"]
    sysm = OpenLoopSystem.from_spec(spec, b["energy"], c["jacobi_epsilon"])
    G_cl = _closed_loop(b["closed_loop"], sysm)
    sampler = _sampler(b["sampler"], c["seed"], spec.dim)
    rt = b["round_trip"]
    s_rt = None if rt is None else _state(spec, rt["q0"], rt["v0"])
    icfg = _integrator(c)

    def run():
        summary = verify_matching(sysm, G_cl, sampler, b["tol"], c["fd_step"], args.threads)
        norms = [float(np.linalg.norm(r.u_coeffs)) for r in summary.reports]
        report = {
            "config": c,
            "summary": summary.to_dict(include_reports=b["include_reports"]),
            "max_control_norm": max(norms) if norms else 0.0,
            "round_trip": None,
        }
        if summary.passed and s_rt is not None:
            law = extract_control_law(sysm, G_cl, None, b["tol"], c["fd_step"])
            span = (0.0, rt["t_end"])
            forced = integrate_geodesic(sysm.G_ol, sysm.frame, law, s_rt, span, icfg, c["fd_step"])
            target = integrate_geodesic(G_cl, None, None, s_rt, span, icfg, c["fd_step"])
            report["round_trip"] = {"path_distance": path_distance(forced, target), "steps": len(forced.tau) - 1}
        return (EXIT_OK if summary.passed else EXIT_FAIL), {"match.json": dumps(report)}

    return run


def _prepare_stability(c, args):
    spec = cfgmod.build_system(c["system"])
    b = c["stability"]
    if b["metric"] == "kinetic":
        G = spec.M
    elif b["energy"] is None:
        raise ConfigError("stability with metric 'jacobi' needs an 'energy'")
    else:
        G = jacobi_metric(spec.M, spec.V, b["energy"], c["jacobi_epsilon"])
    g = b["grid"]
    if not (len(g["lower"]) == len(g["upper"]) == len(g["counts"]) == spec.dim):
        raise ConfigError(f"grid lower/upper/counts need {spec.dim} components")
    pts = grid_points(g["lower"], g["upper"], g["counts"])

    def run():
        smap = classify_region(G, pts, None, c["riemann_step"], args.threads)
        report = {"config": c, **smap.summary()}
        return EXIT_OK, {"stability.csv": smap.to_csv(), "stability.json": dumps(report)}

    return run


def _prepare_optimize(c, args):
    spec = cfgmod.build_system(c["system"])
    b = c["optimize"]
    sysm = OpenLoopSystem.from_spec(spec, b["energy"], c["jacobi_epsilon"])
    f = b["family"]
    lo, hi = f["bounds"]
    if not lo < hi:
        raise ConfigError("family bounds must satisfy lower < upper")
    x0 = None if f["x0"] is None else [f["x0"]]
    if f["kind"] == "conformal":
        family = conformal_family(sysm.G_ol, (lo, hi), x0)
    elif f["kind"] == "energy":
        family = energy_family(spec.M, spec.V, (lo, hi), c["jacobi_epsilon"], x0)
    else:
        if not 0 <= f["index"] < spec.dim:
            raise ConfigError("bump index out of range")
        family = bump_family(sysm.G_ol, f["index"], _center(f, spec.dim), f["width"], (lo, hi), x0)
    k = b["cost"]
    target = scalar_curvature_profile(sysm.G_ol, c["riemann_step"]) if k["target"] == "open-loop" else None
    cost = CostSpec(k["one"], k["R"], k["R2"], k["riem2"], target)
    grid = _grid(b["grid"], spec.dim)
    sampler = None if b["sampler"] is None else _sampler(b["sampler"], c["seed"], spec.dim)

    def run():
        res = constrained_optimize(family, sysm, cost, grid, sampler, b["mu_match"], b["budget"], c["seed"],
                                   c["riemann_step"], c["fd_step"])
        report = {"config": c, "param_names": list(family.names), **res.report()}
        return EXIT_OK, {"optimize.json": dumps(report), "history.csv": res.history_csv()}

    return run


PREPARE = {
    "simulate": _prepare_simulate,
    "jacobi-compare": _prepare_jacobi_compare,
    "match": _prepare_match,
    "stability": _prepare_stability,
    "optimize": _prepare_optimize,
}


def _cmd_systems(args) -> int:
    if args.action == "list":
        if args.name is not None:
            print("geoshape: 'systems list' takes no name", file=sys.stderr)
            return EXIT_CONFIG
        sys.stdout.write(dumps(list_systems()))
        return EXIT_OK
    if args.name is None:
        print("geoshape: 'systems show' needs a system name", file=sys.stderr)
        return EXIT_CONFIG
    try:
        spec = get_system(args.name)
    except UnknownSystem as exc:
        print(f"geoshape: {exc.args[0]}", file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(dumps(spec.summary()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    def add_globals(p, default):
        p.add_argument("--config", default=default, help="YAML run config")
        p.add_argument("--out", default=default, help="output directory (env GEOSHAPE_OUT, default .)")
        p.add_argument("--seed", type=int, default=default, help="overrides the config seed")
        p.add_argument("--threads", type=int, default=default, help="worker threads (env GEOSHAPE_THREADS)")

    parser = argparse.ArgumentParser(prog="geoshape", description="Geometric analysis of controlled mechanical systems.")
    add_globals(parser, None)
    common = argparse.ArgumentParser(add_help=False)
    add_globals(common, argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("systems", parents=[common], help="list catalog systems or show one as JSON")
    p.add_argument("action", nargs="?", choices=["list", "show"], default="list")
    p.add_argument("name", nargs="?")
    for name, text in [
        ("simulate", "integrate the natural or geodesic flow"),
        ("jacobi-compare", "compare natural motion with the Jacobi-metric geodesic"),
        ("match", "verify the matching condition for a closed-loop metric"),
        ("stability", "tidal-eigenvalue stability map over a grid"),
        ("optimize", "optimize a metric family under the cost functional"),
    ]:
        sub.add_parser(name, parents=[common], help=text)
    return parser


def _threads(args) -> int:
    raw = args.threads if args.threads is not None else os.environ.get("GEOSHAPE_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"thread count must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "systems":
        return _cmd_systems(args)
    try:
        args.threads = _threads(args)
        if args.config is None:
            raise ConfigError(f"{args.command} needs --config")
        if args.seed is not None and args.seed < 0:
            raise ConfigError("seed must be non-negative")
        data = cfgmod.load(args.config)
        resolved = cfgmod.resolve(data, args.command, args.seed)
        run = PREPARE[args.command](resolved, args)
    except (ConfigError, ValueError) as exc:
        print(f"geoshape: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        code, files = run()
    except NumericalError as exc:
        print(f"geoshape: numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except np.linalg.LinAlgError as exc:
        print(f"geoshape: numerical error (LinAlgError): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"geoshape: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GeoshapeError as exc:
        print(f"geoshape: {exc}", file=sys.stderr)
        return EXIT_FAIL
    out = args.out if args.out is not None else os.environ.get("GEOSHAPE_OUT", ".")
    write_outputs(out, files)
    if code == EXIT_FAIL:
        print("geoshape: analysis failed (see report)", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
