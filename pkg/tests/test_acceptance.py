"""Acceptance criteria 1-10.

Each test prints one ``[ACCEPTANCE n] PASS|FAIL`` line with the measured
quantities; the lines are repeated in the terminal summary.
"""

import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from geoshape import cli
from geoshape.cost import CostSpec, QuadratureGrid, conformal_family, constrained_optimize, cost_evaluate, \
    scalar_curvature_profile
from geoshape.dynamics import IntegratorConfig, energies, integrate_euler_lagrange, integrate_geodesic, \
    jacobi_compare, path_distance
from geoshape.geometry import MetricField, TangentState, metric_eval, riemann
from geoshape.shaping import OpenLoopSystem, StateSampler, extract_control_law, solve_pointwise_matching, \
    verify_matching
from geoshape.cost import bump_family
from geoshape.stability import integrate_deviation, tidal_operator
from geoshape.systems import get_system

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
RESULTS = []


def report(n, title, ok, detail):
    line = f"[ACCEPTANCE {n:2d}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_criterion_01_curvature_oracle():
    worst_exact, worst_fd = 0.0, 0.0
    for r in (1.0, 2.0):
        sph = get_system("sphere", {"radius": r})
        numeric = MetricField(sph.chart, sph.M.func)
        for th in (0.4, 0.9, math.pi / 2, 2.3):
            for ph in (-2.0, 0.5):
                K = riemann(sph.M, [th, ph]).sectional([1, 0], [0, 1])
                Kfd = riemann(numeric, [th, ph]).sectional([1, 0], [0, 1])
                worst_exact = max(worst_exact, abs(K - 1 / r ** 2))
                worst_fd = max(worst_fd, abs(Kfd - 1 / r ** 2))
    ok = worst_exact < 1e-6 and worst_fd < 1e-4
    report(1, "sphere sectional curvature (r = 1, 2)", ok,
           f"max |K - 1/r^2| analytic {worst_exact:.2e} (< 1e-6), finite-difference {worst_fd:.2e} (< 1e-4)")


def _pendulum_drift(step):
    p = get_system("pendulum")
    tr = integrate_euler_lagrange(p.M, p.V, None, None, TangentState([1.0], [0.0]), (0, 10.0),
                                  IntegratorConfig("rk4", step))
    e = energies(p.M, p.V, tr)
    return float(np.max(np.abs(e - e[0])) / abs(e[0])), len(tr.tau) - 1


def test_criterion_02_energy_conservation():
    steps = (2e-3, 1e-3, 5e-4)
    drifts = {}
    for h in steps:
        drifts[h], n = _pendulum_drift(h)
        if h == 1e-3:
            assert n == 10_000
    order = np.polyfit(np.log(steps), np.log([drifts[h] for h in steps]), 1)[0]
    ok = drifts[1e-3] < 1e-8 and 3.5 <= order <= 5.0
    report(2, "pendulum rk4 energy drift", ok,
           f"drift(1e-3, 10^4 steps) = {drifts[1e-3]:.2e} (< 1e-8); drifts {[f'{drifts[h]:.2e}' for h in steps]}, "
           f"fitted order {order:.2f} (expect 4, window [3.5, 5])")


def test_criterion_03_jacobi_correspondence():
    h = get_system("harmonic2d")
    s0 = TangentState([0.8, 0.0], math.sqrt(2 * 0.68) * np.array([0.3, math.sqrt(0.91)]))
    dists, slack = [], None
    for step in (2e-3, 1e-3, 5e-4):
        el, geo, d, E = jacobi_compare(h.M, h.V, s0, 2 * math.pi, IntegratorConfig("rk4", step))
        dists.append(d)
        if slack is None:
            slack = min(E - h.V(q) for q in el.q)
    ok = abs(E - 1.0) < 1e-12 and slack > 0.2 and dists[1] < 1e-4 and dists[0] > dists[1] > dists[2]
    report(3, "harmonic2d EL path vs Jacobi geodesic (E = 1)", ok,
           f"min(E - V) = {slack:.3f} (> 0.2); distance at steps 2e-3/1e-3/5e-4 = "
           f"{dists[0]:.2e}/{dists[1]:.2e}/{dists[2]:.2e} (< 1e-4, decreasing)")


def test_criterion_04_matching_identities():
    rng = np.random.default_rng(2024)
    harm = OpenLoopSystem.from_spec(get_system("harmonic2d"), 1.0)
    cart = OpenLoopSystem.from_spec(get_system("cart_pendulum"), 1.0)
    curved = MetricField(harm.chart, lambda q: np.array([[1 + q[0] ** 2, 0.3 * q[1]], [0.3 * q[1], 2 + math.sin(q[0])]]))
    bump = bump_family(cart.G_ol, 1, [0.1, 0.0], 0.5, (0.5, 0.5)).instantiate([0.5])
    a = b = c = d = 0.0
    for _ in range(100):
        q, v = rng.uniform(-0.6, 0.6, 2), rng.normal(size=2) * 2
        s = TangentState(q, v)
        a = max(a, solve_pointwise_matching(harm, curved, s).residual_norm)
        b = max(b, float(np.linalg.norm(solve_pointwise_matching(cart, cart.G_ol, s).u_coeffs)),
                float(np.linalg.norm(solve_pointwise_matching(harm, harm.G_ol, s).u_coeffs)))
        rep = solve_pointwise_matching(cart, bump, s)
        e, g = cart.frame.matrix(q), metric_eval(cart.G_ol, q)
        c = max(c, float(np.max(np.abs(e.T @ g @ rep.residual_vector))))
        rep2 = solve_pointwise_matching(cart, bump, TangentState(q, 2 * v))
        d = max(d, float(np.max(np.abs(rep2.u_coeffs - 4 * rep.u_coeffs))))
    ok = a <= 1e-12 and b <= 1e-12 and c <= 1e-10 and d <= 1e-9
    report(4, "matching identities on 100 random states", ok,
           f"(a) full-actuation residual {a:.1e} (<= 1e-12); (b) |u| for G_cl = G_ol {b:.1e} (<= 1e-12); "
           f"(c) G_ol(r, e_i) {c:.1e} (<= 1e-10); (d) |u(2v) - 4u(v)| {d:.1e} (<= 1e-9)")


def test_criterion_05_round_trip():
    harm = OpenLoopSystem.from_spec(get_system("harmonic2d"), 1.0)
    G_cl = MetricField.identity(harm.chart)
    law = extract_control_law(harm, G_cl, StateSampler([-0.5, -0.5], [0.5, 0.5], count=100))
    cfg = IntegratorConfig("rk4", 1e-3)
    worst, control = 0.0, math.inf
    for q0, v0 in (([0.1, -0.2], [1.0, 0.4]), ([-0.4, 0.3], [0.2, -0.9]), ([0.0, 0.0], [-0.7, 0.7])):
        s0 = TangentState(q0, v0)
        forced = integrate_geodesic(harm.G_ol, harm.frame, law, s0, (0, 1), cfg)
        target = integrate_geodesic(G_cl, None, None, s0, (0, 1), cfg)
        free = integrate_geodesic(harm.G_ol, None, None, s0, (0, 1), cfg)
        worst = max(worst, path_distance(forced, target))
        control = min(control, path_distance(free, target))
    report(5, "flat target on curved fully actuated G_ol", worst < 1e-4 and control > 1e-2,
           f"max path_distance(forced G_ol, unforced G_cl) over 3 starts = {worst:.2e} (< 1e-4); "
           f"without the law the paths separate by >= {control:.2e}")


def test_criterion_06_underactuation_demo():
    cart = OpenLoopSystem.from_spec(get_system("cart_pendulum"), 1.0)
    smp = StateSampler([-1.0, -0.6], [1.0, 0.6], v_scale=1.0, count=100, seed=0)
    worst, n = 0.0, 0
    for lam in (0.5, 1.0, 1.7, 2.0):
        summ = verify_matching(cart, cart.G_ol.scaled(lam), smp, tol=1e-10)
        worst = max(worst, summ.max_residual)
        n = len(summ.reports)
    ok = worst <= 1e-10 and n == 100 and cart.frame.m == 1
    report(6, "cart_pendulum (m = 1, n = 2), constant-conformal family", ok,
           f"max residual over {n} states x 4 family members = {worst:.1e} (<= 1e-10)")


def test_criterion_07_stability_criterion():
    flat = np.max(np.abs(tidal_operator(MetricField.identity(2), TangentState([0.3, -0.1], [1.0, 0.5])).eigenvalues()))
    sph = get_system("sphere")
    sph_err = 0.0
    for th, v in ((1.0, [0.3, 0.8]), (2.0, [1.0, 0.0]), (0.7, [-0.5, 1.5])):
        v = np.array(v)
        op = tidal_operator(sph.M, TangentState([th, 0.2], v))
        gvv = float(v @ metric_eval(sph.M, [th, 0.2]) @ v)
        sph_err = max(sph_err, abs(op.transverse_eigenvalues()[0] - gvv))
    neg = get_system("neg_curv_patch")
    s0 = TangentState([0.0, 0.0], [1.0, 0.0])
    lam = float(tidal_operator(neg.M, s0).transverse_eigenvalues()[0])
    dev = integrate_deviation(neg.M, s0, [0.0, 1e-3], [0.0, 1e-3], (0, 1), IntegratorConfig("rk4", 1e-2))
    rate = math.log(dev.norms[-1] / dev.norms[0]) / dev.tau[-1]
    rate_err = abs(rate / math.sqrt(abs(lam)) - 1)
    osc = integrate_deviation(sph.M, TangentState([math.pi / 2, 0.0], [0.0, 1.0]), [0.1, 0.0], [0.0, 0.0],
                              (0, 2 * math.pi), IntegratorConfig("rk4", 1e-2))
    osc_err = float(np.max(np.abs(osc.J[:, 0] - 0.1 * np.cos(osc.tau))))
    ok = flat < 1e-9 and sph_err < 1e-5 and lam < 0 and rate_err < 0.05 and osc_err < 1e-5
    report(7, "tidal spectrum and deviation", ok,
           f"flat |lambda| {flat:.1e} (< 1e-9); sphere |lambda_T - G(v,v)| {sph_err:.1e} (< 1e-5); "
           f"neg patch lambda {lam:.6f} < 0, e-folding rate error {rate_err:.1e} (< 5%); "
           f"sphere |J - J0 cos t| {osc_err:.1e} (< 1e-5)")


def test_criterion_08_cost_functional():
    sph = get_system("sphere").M
    delta = 1e-3

    def band(counts):
        return QuadratureGrid([delta, -math.pi], [math.pi - delta, math.pi], counts)

    area = cost_evaluate(CostSpec(one=1), sph, band([64, 32]))
    area_err = abs(area / (4 * math.pi) - 1)
    R_err = abs(cost_evaluate(CostSpec(R=1), sph, band([64, 32])) / (2 * area) - 1)
    exact = 4 * math.pi * math.cos(delta)
    errs = [abs(cost_evaluate(CostSpec(one=1), sph, band([n, 4])) - exact) for n in (8, 16, 32)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    ok = area_err < 1e-3 and R_err < 1e-2 and all(3.5 < r < 4.5 for r in ratios)
    report(8, "sphere band cost functional", ok,
           f"area rel. error {area_err:.1e} (< 1e-3); int R sqrt(G) / (2 area) - 1 = {R_err:.1e} (< 1e-2); "
           f"midpoint error ratios under 2x refinement {ratios[0]:.2f}, {ratios[1]:.2f} (order 2 -> 4)")


def test_criterion_09_optimizer_recovery():
    cart = OpenLoopSystem.from_spec(get_system("cart_pendulum"), 1.0)
    fam = conformal_family(cart.G_ol, (0.5, 2.0))
    spec = CostSpec(R2=1.0, R_target=scalar_curvature_profile(cart.G_ol))
    grid = QuadratureGrid([-1, -0.5], [1, 0.5], [4, 6])
    smp = StateSampler([-1, -0.5], [1, 0.5], count=16)
    r1 = constrained_optimize(fam, cart, spec, grid, smp, budget=60, seed=11)
    r2 = constrained_optimize(fam, cart, spec, grid, smp, budget=60, seed=11)
    err = abs(r1.best_params[0] - 1.0)
    same = r1.history_csv() == r2.history_csv() and r1.report() == r2.report()
    report(9, "optimizer recovers the planted member lambda = 1", err < 1e-3 and same,
           f"|lambda - 1| = {err:.1e} (< 1e-3) after {r1.evaluations} evaluations; "
           f"repeat run identical: {same}")


def test_criterion_10_cli_determinism(tmp_path):
    runs = [("cart_pendulum_optimize", "optimize"), ("cart_pendulum_match", "match"),
            ("sphere_stability", "stability"), ("pendulum_simulate", "simulate"),
            ("harmonic2d_jacobi", "jacobi-compare")]
    identical = True
    for name, cmd in runs:
        outs = []
        for k in range(2):
            d = tmp_path / f"{name}_{k}"
            assert cli.main([cmd, "--config", str(CONFIGS / f"{name}.yaml"), "--out", str(d)]) == 0
            outs.append({p.name: p.read_bytes() for p in sorted(d.iterdir())})
        identical &= outs[0] == outs[1]
    bad = tmp_path / "bad.yaml"
    bad.write_text(yaml.safe_dump({"system": "pendulum", "simulate": {"q0": [0], "v0": [1], "t_end": 1, "bogus": 1}}))
    hill = tmp_path / "hill.yaml"
    hill.write_text(yaml.safe_dump({"system": "harmonic2d",
                                    "jacobi_compare": {"q0": [1, 1], "v0": [1, 0], "t_end": 1, "energy": 0.5}}))
    codes = {
        "config error": (cli.main(["simulate", "--config", str(bad), "--out", str(tmp_path / "x1")]), 2),
        "Hill boundary": (cli.main(["jacobi-compare", "--config", str(hill), "--out", str(tmp_path / "x2")]), 3),
        "unmatched": (cli.main(["match", "--config", str(CONFIGS / "cart_pendulum_bump.yaml"),
                                "--out", str(tmp_path / "x3")]), 1),
        "degenerate family": (cli.main(["optimize", "--config", str(CONFIGS / "energy_family_degenerate.yaml"),
                                        "--out", str(tmp_path / "x4")]), 3),
    }
    no_files = not (tmp_path / "x1").exists() and not (tmp_path / "x2").exists() and not (tmp_path / "x4").exists()
    codes_ok = all(got == want for got, want in codes.values())
    report(10, "CLI determinism and exit codes", identical and codes_ok and no_files,
           f"byte-identical reruns of {len(runs)} commands: {identical}; exit codes "
           + ", ".join(f"{k} {got} (want {want})" for k, (got, want) in codes.items())
           + f"; failed runs wrote no files: {no_files}")
