import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import symbolic_christoffel, symbolic_metric_field
from geoshape.errors import DegenerateMetric, DomainError, RankDeficientFrame
from geoshape.geometry import (
    ActuationFrame,
    Chart,
    MetricField,
    TangentState,
    christoffel,
    christoffel_array,
    coframe,
    flat,
    metric_eval,
    riemann,
    sharp,
)
from geoshape.shaping import jacobi_metric
from geoshape.systems import get_system
from geoshape.geometry import ScalarField

finite = st.floats(-3, 3, allow_nan=False)


# -- Chart -----------------------------------------------------------------------


def test_chart_invariants():
    with pytest.raises(ValueError):
        Chart(0)
    with pytest.raises(ValueError):
        Chart(1, lower=(1.0,), upper=(0.0,))
    with pytest.raises(ValueError):
        Chart(1, periodic=(True,))
    c = Chart(2, ("a", "b"), (-1, -math.pi), (1, math.pi), (False, True))
    assert c.contains([0.5, 10.0])
    assert not c.contains([2.0, 0.0])
    assert not c.contains([np.nan, 0.0])
    np.testing.assert_allclose(c.wrap([0.0, math.pi + 0.5]), [0.0, -math.pi + 0.5])
    np.testing.assert_allclose(c.difference([0, 3.0], [0, -3.0]), [0, 6.0 - 2 * math.pi])


def test_check_raises_outside_and_on_wrong_shape():
    c = Chart(1, lower=(0.0,), upper=(1.0,))
    with pytest.raises(DomainError):
        c.check([2.0])
    with pytest.raises(DomainError):
        c.check([0.1, 0.2])


# -- metric_eval -------------------------------------------------------------------


@given(st.lists(finite, min_size=3, max_size=3))
def test_identity_metric_is_identity(q):
    np.testing.assert_array_equal(metric_eval(MetricField.identity(3), q), np.eye(3))


def test_sphere_metric_on_equator():
    np.testing.assert_allclose(metric_eval(get_system("sphere").M, [math.pi / 2, 0.0]), np.eye(2), atol=1e-15)


def test_free_particle_jacobi_metric_is_identity():
    G = jacobi_metric(MetricField.identity(2), ScalarField.constant(0.0, 2), 0.5)
    np.testing.assert_array_equal(metric_eval(G, [0.3, -2.0]), np.eye(2))


def test_metric_eval_errors():
    c = Chart(2, lower=(-1, -1), upper=(1, 1))
    with pytest.raises(DomainError):
        metric_eval(MetricField.identity(c), [3.0, 0.0])
    singular = MetricField(Chart.euclidean(2), lambda q: np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(DegenerateMetric):
        metric_eval(singular, [0.0, 0.0])
    asym = MetricField(Chart.euclidean(2), lambda q: np.array([[1.0, 0.1], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        metric_eval(asym, [0.0, 0.0])
    # indefinite metrics are admitted
    lor = MetricField.constant(Chart.euclidean(2), np.diag([1.0, -1.0]))
    np.testing.assert_array_equal(metric_eval(lor, [0, 0]), np.diag([1.0, -1.0]))


def test_degeneracy_threshold_is_scale_relative():
    # det = 1e-13 * scale^2 -> degenerate; det = 1e-11 * scale^2 -> fine
    for eps, bad in [(1e-13, True), (1e-11, False)]:
        G = MetricField.constant(Chart.euclidean(2), 1e3 * np.diag([1.0, eps]))
        if bad:
            with pytest.raises(DegenerateMetric):
                metric_eval(G, [0, 0])
        else:
            metric_eval(G, [0, 0])


# -- musical isomorphisms ----------------------------------------------------------


def test_sharp_flat_examples():
    I = MetricField.identity(2)
    D = MetricField.constant(Chart.euclidean(2), np.diag([2.0, 8.0]))
    np.testing.assert_array_equal(sharp(I, [0, 0], [1, 2]), [1, 2])
    np.testing.assert_allclose(sharp(D, [0, 0], [1, 4]), [0.5, 0.5])
    np.testing.assert_array_equal(flat(I, [0, 0], [3, 1]), [3, 1])
    np.testing.assert_array_equal(flat(D, [0, 0], [1, 1]), [2, 8])


@settings(max_examples=50)
@given(st.floats(-1, 1), st.floats(0.2, 2.9), st.lists(finite, min_size=2, max_size=2))
def test_sharp_flat_round_trip(x, th, w):
    M = get_system("cart_pendulum").M
    q = [x, th]
    np.testing.assert_allclose(flat(M, q, sharp(M, q, w)), w, atol=1e-10)
    np.testing.assert_allclose(sharp(M, q, flat(M, q, w)), w, atol=1e-10)


def test_coframe_examples():
    I = MetricField.identity(2)
    np.testing.assert_array_equal(coframe(I, ActuationFrame.coordinate(2), [0, 0]), np.eye(2))
    cp = get_system("cart_pendulum")
    q = [0.2, 0.7]
    g = metric_eval(cp.M, q)
    theta = coframe(cp.M, cp.frame, q)
    np.testing.assert_allclose(theta, g[:1, :])  # cart direction e_x -> first row of M
    # pairing theta_i(e_j) = G(e_i, e_j)
    full = ActuationFrame([lambda q: np.array([1.0, 1.0]), lambda q: np.array([0.0, 2.0])])
    E = full.matrix(q)
    np.testing.assert_allclose(coframe(cp.M, full, q) @ E, E.T @ g @ E, atol=1e-14)
    np.testing.assert_allclose(coframe(cp.M, full, q), (g @ E).T)


def test_rank_deficient_frame():
    fr = ActuationFrame([lambda q: np.array([1.0, 2.0]), lambda q: np.array([2.0, 4.0])])
    with pytest.raises(RankDeficientFrame):
        fr.matrix([0.0, 0.0])
    with pytest.raises(RankDeficientFrame):
        coframe(MetricField.identity(2), fr, [0.0, 0.0])


# -- Christoffel symbols -----------------------------------------------------------


def test_flat_christoffel_zero():
    np.testing.assert_array_equal(christoffel_array(MetricField.identity(3), [1.0, 2.0, 3.0]), 0.0)


@pytest.mark.parametrize("th", [0.4, 1.0, 2.2])
def test_sphere_christoffel_closed_form(th):
    for M in (get_system("sphere").M, MetricField(get_system("sphere").chart, get_system("sphere").M.func)):
        gam = christoffel(M, [th, 0.3]).gamma
        tol = 1e-14 if M.deriv is not None else 1e-9
        assert abs(gam[0, 1, 1] + math.sin(th) * math.cos(th)) < tol
        assert abs(gam[1, 0, 1] - 1 / math.tan(th)) < tol
        assert abs(gam[1, 1, 0] - 1 / math.tan(th)) < tol
        assert np.all(gam == np.transpose(gam, (0, 2, 1)))


def test_conformal_1d_christoffel():
    # G = 2(E - q^2/2) in 1D: Gamma = -V'/(2(E - V))
    M = MetricField.identity(1)
    V = ScalarField(lambda q: 0.5 * q[0] ** 2, lambda q: np.array([q[0]]))
    G = jacobi_metric(M, V, 1.0)
    for q in (0.0, 0.3, -0.9):
        expect = -q / (2 * (1 - q * q / 2))
        assert abs(christoffel_array(G, [q])[0, 0, 0] - expect) < 1e-14
        assert abs(christoffel_array(MetricField(G.chart, G.func), [q])[0, 0, 0] - expect) < 1e-9


def test_christoffel_matches_symbolic_oracle(rng):
    x, y = sp.symbols("x y", real=True)
    G = sp.Matrix([[1 + x ** 2, x * y / 2], [x * y / 2, 2 + sp.sin(y) ** 2]])
    gam_sym = symbolic_christoffel(G, (x, y))
    Mf = symbolic_metric_field(G, (x, y), analytic=False)
    for _ in range(5):
        q = rng.uniform(-1, 1, 2)
        expect = np.array([[[float(gam_sym[k][i][j].subs({x: q[0], y: q[1]})) for j in range(2)]
                            for i in range(2)] for k in range(2)])
        np.testing.assert_allclose(christoffel_array(Mf, q), expect, atol=1e-9)


def test_fd_christoffel_converges_at_second_order():
    sph = get_system("sphere")
    numeric = MetricField(sph.chart, sph.M.func)
    q = [0.9, 0.1]
    exact = christoffel_array(sph.M, q)
    errs = [np.max(np.abs(christoffel_array(numeric, q, h) - exact)) for h in (4e-3, 2e-3, 1e-3)]
    ratios = [errs[0] / errs[1], errs[1] / errs[2]]
    assert all(3.5 < r < 4.5 for r in ratios), ratios


def test_stencil_leaving_chart_raises():
    c = Chart(1, lower=(0.0,), upper=(1.0,))
    M = MetricField(c, lambda q: np.array([[1.0 + q[0]]]))
    with pytest.raises(DomainError):
        christoffel(M, [1e-9], 1e-5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(0.3, 2.8))
def test_metric_compatibility(x, th):
    # nabla_k g_ij = d_k g_ij - Gamma^l_ki g_lj - Gamma^l_kj g_il = 0
    for M, tol in [(get_system("cart_pendulum").M, 1e-12),
                   (MetricField(get_system("cart_pendulum").chart, get_system("cart_pendulum").M.func), 1e-9)]:
        q = np.array([x, th])
        g = metric_eval(M, q)
        dg = get_system("cart_pendulum").M.derivatives(q)
        gam = christoffel_array(M, q)
        nab = dg - np.einsum("lki,lj->kij", gam, g) - np.einsum("lkj,il->kij", gam, g)
        assert np.max(np.abs(nab)) < tol


# -- Riemann tensor ----------------------------------------------------------------


def test_flat_riemann_zero():
    assert np.max(np.abs(riemann(MetricField.identity(2), [0.3, 0.4]).riem)) < 1e-9


@pytest.mark.parametrize("r", [1.0, 2.0, 0.5])
def test_sphere_sectional_curvature(r):
    sph = get_system("sphere", {"radius": r})
    numeric = MetricField(sph.chart, sph.M.func)
    for th in (0.5, 1.2, 2.0):
        K = riemann(sph.M, [th, 1.0]).sectional([1, 0], [0, 1])
        assert abs(K - 1 / r ** 2) < 1e-6
        Kfd = riemann(numeric, [th, 1.0]).sectional([1, 0], [0, 1])
        assert abs(Kfd - 1 / r ** 2) < 1e-4


def test_lowered_riemann_constant_curvature():
    for name, K in (("sphere", 1.0), ("neg_curv_patch", -1.0)):
        s = get_system(name)
        q = [1.1, 0.4]
        curv = riemann(s.M, q)
        g = curv.g
        expect = K * (np.einsum("ik,jl->ijkl", g, g) - np.einsum("il,jk->ijkl", g, g))
        np.testing.assert_allclose(curv.lowered(), expect, atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(st.floats(-1, 1), st.floats(0.3, 2.8))
def test_riemann_symmetries(x, th):
    R = riemann(get_system("cart_pendulum").M, [x, th]).riem
    assert np.max(np.abs(R + np.transpose(R, (0, 1, 3, 2)))) < 1e-8
    bianchi = R + np.transpose(R, (0, 2, 3, 1)) + np.transpose(R, (0, 3, 1, 2))
    assert np.max(np.abs(bianchi)) < 1e-6  # finite-difference tolerance at h = 1e-4


def test_riemann_symmetries_3d_symbolic(rng):
    x, y, z = sp.symbols("x y z", real=True)
    G = sp.Matrix([[1 + y ** 2, 0, x / 3], [0, 2 + sp.cos(z), 0], [x / 3, 0, 1 + x ** 2]])
    M = symbolic_metric_field(G, (x, y, z))
    R = riemann(M, rng.uniform(-0.5, 0.5, 3)).riem
    assert np.max(np.abs(R + np.transpose(R, (0, 1, 3, 2)))) < 1e-8
    assert np.max(np.abs(R + np.transpose(R, (0, 2, 3, 1)) + np.transpose(R, (0, 3, 1, 2)))) < 1e-7
    # pair symmetry of the lowered tensor
    curv = riemann(M, [0.1, 0.2, 0.3])
    L = curv.lowered()
    assert np.max(np.abs(L - np.transpose(L, (2, 3, 0, 1)))) < 1e-7


def test_tangent_state_immutable():
    s = TangentState([1.0, 2.0], [0.0, 1.0])
    with pytest.raises(ValueError):
        s.q[0] = 5.0
