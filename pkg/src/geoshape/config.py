"""Run configuration: loading, schema validation, defaults and system assembly.

Configs are YAML documents checked against ``schema/config.schema.json``
(unknown keys are rejected). ``resolve`` fills every default so the result
can be embedded verbatim in reports.
"""

from __future__ import annotations

import copy
import json
import math
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np
import yaml

from geoshape.errors import ConfigError, UnknownSystem
from geoshape.geometry import ActuationFrame, Chart, MetricField, ScalarField
from geoshape.systems import SystemSpec, get_system

COMMAND_BLOCKS = {
    "simulate": "simulate",
    "jacobi-compare": "jacobi_compare",
    "match": "match",
    "stability": "stability",
    "optimize": "optimize",
}

GLOBAL_DEFAULTS = {
    "seed": 0,
    "fd_step": 1e-5,
    "riemann_step": 1e-4,
    "jacobi_epsilon": 1e-8,
    "integrator": {"scheme": "rk4", "step": 1e-3, "rtol": 1e-10, "atol": 1e-12, "max_steps": 10_000_000},
}

SAMPLER_DEFAULTS = {"v_scale": 1.0, "count": 100, "jitter": 0.5}

BLOCK_DEFAULTS = {
    "simulate": {"flow": "euler-lagrange", "energy": None},
    "jacobi_compare": {"energy": None, "refine": 4},
    "match": {"tol": 1e-8, "include_reports": False, "round_trip": None},
    "stability": {"metric": "kinetic", "energy": None},
    "optimize": {"sampler": None, "mu_match": 1e6, "budget": 200},
}

METRIC_SPEC_DEFAULTS = {"scale": 1.0, "amplitude": 0.5, "index": 0, "width": 0.5}
FAMILY_DEFAULTS = {"x0": None, "index": 0, "width": 0.5}
COST_DEFAULTS = {"one": 0.0, "R": 0.0, "R2": 0.0, "riem2": 0.0, "target": "zero"}


def schema() -> dict:
    """The published JSON schema for run configs."""
    text = resources.files("geoshape").joinpath("schema/config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def load(path) -> dict:
    """Read and validate a YAML config file; raises ``ConfigError``."""
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return validate({} if data is None else data)


def validate(data) -> dict:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    try:
        jsonschema.validate(data, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config error at {where}: {exc.message}") from None
    return data


def _fill(base: dict, defaults: dict) -> dict:
    out = copy.deepcopy(defaults)
    for k, v in base.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _fill(v, out[k])
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(data: dict, command: str, seed: Optional[int] = None) -> dict:
    """Return the config for ``command`` with every default filled in."""
    if "system" not in data:
        raise ConfigError("config needs a 'system' entry")
    block = COMMAND_BLOCKS[command]
    if block not in data:
        raise ConfigError(f"command {command!r} needs a '{block}' block")
    out = _fill({k: v for k, v in data.items() if k in GLOBAL_DEFAULTS or k == "system"}, GLOBAL_DEFAULTS)
    if seed is not None:
        out["seed"] = int(seed)
    sysconf = data["system"]
    if isinstance(sysconf, str):
        sysconf = {"name": sysconf}
    if ("name" in sysconf) == ("inline" in sysconf):
        raise ConfigError("system needs exactly one of 'name' or 'inline'")
    if "name" in sysconf:
        sysconf = {"name": sysconf["name"], "params": dict(sysconf.get("params", {}))}
    out["system"] = sysconf
    b = _fill(data[block], BLOCK_DEFAULTS[block])
    if block == "match":
        b["sampler"] = _fill(b["sampler"], SAMPLER_DEFAULTS)
        b["closed_loop"] = _fill(b["closed_loop"], METRIC_SPEC_DEFAULTS)
    elif block == "optimize":
        b["family"] = _fill(b["family"], FAMILY_DEFAULTS)
        b["cost"] = _fill(b["cost"], COST_DEFAULTS)
        if b["sampler"] is not None:
            b["sampler"] = _fill(b["sampler"], SAMPLER_DEFAULTS)
    if "grid" in b:
        b["grid"] = _fill(b["grid"], {"rule": "midpoint"})
    out[block] = b
    return out


def build_system(sysconf: dict) -> SystemSpec:
    """Catalog lookup or inline (symbolic) system definition."""
    if "name" in sysconf:
        try:
            return get_system(sysconf["name"], sysconf.get("params"))
        except (UnknownSystem, ValueError) as exc:
            raise ConfigError(str(exc)) from None
    return inline_system(sysconf["inline"])


def _bound(values, n, fill):
    if values is None:
        return (fill,) * n
    if len(values) != n:
        raise ConfigError("inline chart bounds must have one entry per coordinate")
    return tuple(fill if x is None else float(x) for x in values)


def _symbols(names):
    import sympy as sp

    syms = tuple(sp.Symbol(nm, real=True) for nm in names)
    local = dict(zip(names, syms))

    def parse(e):
        try:
            return sp.sympify(e, locals=local)
        except (sp.SympifyError, TypeError, SyntaxError) as exc:
            raise ConfigError(f"cannot parse expression {e!r}: {exc}") from None

    return syms, parse


def _metric_matrix(rows, n, parse):
    import sympy as sp

    if len(rows) != n or any(len(r) != n for r in rows):
        raise ConfigError(f"inline metric must be a {n} x {n} matrix")
    Mx = sp.Matrix([[parse(e) for e in r] for r in rows])
    if Mx != Mx.T:
        raise ConfigError("inline metric must be symmetric")
    return Mx


def _metric_functions(Mx, syms):
    import sympy as sp

    n = len(syms)
    m_f = sp.lambdify([syms], Mx, "numpy")
    dM = [[[sp.diff(Mx[i, j], syms[k]) for j in range(n)] for i in range(n)] for k in range(n)]
    dm_f = sp.lambdify([syms], dM, "numpy")
    return (lambda q: np.array(m_f(q), dtype=float)), (lambda q: np.array(dm_f(q), dtype=float))


def inline_metric(chart: Chart, rows) -> MetricField:
    """Metric given symbolically in the chart's coordinate names."""
    syms, parse = _symbols(chart.coord_names)
    Mx = _metric_matrix(rows, chart.dim, parse)
    free = Mx.free_symbols - set(syms)
    if free:
        raise ConfigError(f"unknown symbols in inline metric: {sorted(str(s) for s in free)}")
    m_f, dm_f = _metric_functions(Mx, syms)
    return MetricField(chart, m_f, dm_f, name="inline")


def inline_system(d: dict) -> SystemSpec:
    """Build a system from symbolic expressions in the coordinate names.

    The metric and potential are differentiated symbolically, so the
    resulting fields carry exact derivatives.
    """
    import sympy as sp

    names = list(d["coords"])
    n = len(names)
    syms, parse = _symbols(names)
    Mx = _metric_matrix(d["metric"], n, parse)
    free = Mx.free_symbols - set(syms)
    Vx = parse(d.get("potential", 0))
    free |= Vx.free_symbols - set(syms)
    frame_rows = d.get("frame")
    if frame_rows is None:
        frame_rows = [[1 if i == j else 0 for j in range(n)] for i in range(n)]
    if any(len(r) != n for r in frame_rows) or not frame_rows:
        raise ConfigError("each inline frame vector needs n components")
    Fx = [sp.Matrix([parse(e) for e in r]) for r in frame_rows]
    for f in Fx:
        free |= f.free_symbols - set(syms)
    if free:
        raise ConfigError(f"unknown symbols in inline system: {sorted(str(s) for s in free)}")

    m_f, dm_f = _metric_functions(Mx, syms)
    v_f = sp.lambdify([syms], Vx, "numpy")
    gv_f = sp.lambdify([syms], [sp.diff(Vx, s) for s in syms], "numpy")
    frame_f = [sp.lambdify([syms], list(f), "numpy") for f in Fx]

    chart = Chart(n, tuple(names), _bound(d.get("lower"), n, -math.inf), _bound(d.get("upper"), n, math.inf),
                  tuple(d.get("periodic", (False,) * n)))
    M = MetricField(chart, m_f, dm_f, name="inline")
    V = ScalarField(lambda q: float(v_f(q)), lambda q: np.array(gv_f(q), dtype=float))
    frame = ActuationFrame([lambda q, f=f: np.array(f(q), dtype=float) for f in frame_f])
    return SystemSpec("inline", chart, M, V, frame, description="inline symbolic system")
