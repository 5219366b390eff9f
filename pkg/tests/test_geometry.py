import math

import numpy as np
import pytest

from tractorlab import exprcore as ec
from tractorlab.curves import polyline, rectangle_loop, straight_line
from tractorlab.exprcore import Chart, parse_expr
from tractorlab.geometry import (ChartMetric, ClosednessError, Distribution, OneForm, VectorField,
                                 check_distribution_parallel, check_integrable, check_ricci_image,
                                 check_schouten_image, conformal_rescale, covariant_derivative,
                                 covariant_derivative_at, curvature, levi_civita_transform, lie_bracket_at,
                                 parallel_transport_vector, poincare_potential, scalar_curvature_report,
                                 transformed_christoffel, transport_matrix)
from tractorlab.corpus import load_example

from oracles import (fd_christoffel, fd_riemann, metric_fn, random_polynomial_metric, rel_err, ricci_from,
                     sphere_closed_form, sphere_spherical)

RNG = np.random.default_rng(7)


def flat(p, q):
    n = p + q
    chart = Chart(tuple(f"x{i + 1}" for i in range(n)))
    entries = {(i, i): ec.as_expr(-1 if i < p else 1) for i in range(n)}
    return ChartMetric.from_entries(chart, entries, (p, q), name=f"flat{p}{q}")


def vf(chart, *srcs):
    return VectorField(chart, [parse_expr(s, chart) for s in srcs])


# --- curvature -------------------------------------------------------------

def test_flat_tensors_vanish():
    g = flat(2, 3)
    for x in g.sample(RNG, 5):
        pc = g.curvature_at(x)
        for t in (pc.christoffel, pc.riemann, pc.ricci, pc.schouten):
            assert np.all(t == 0)
        assert pc.scal == 0


@pytest.mark.parametrize("seed,n,sig", [(1, 3, (1, 2)), (2, 4, (2, 2)), (3, 4, (0, 4))])
def test_curvature_matches_finite_differences(seed, n, sig):
    g = random_polynomial_metric(n, sig, seed)
    gf = metric_fn(g)
    for x in g.sample(np.random.default_rng(seed), 3):
        pc = g.curvature_at(x)
        assert rel_err(pc.christoffel, fd_christoffel(gf, x)) < 1e-8
        R = fd_riemann(lambda y: g.curvature_at(y).christoffel, x)
        assert rel_err(pc.riemann, R) < 1e-6
        assert rel_err(pc.ricci, ricci_from(R)) < 1e-6


def test_sphere_stereographic_is_einstein():
    g = load_example("sphere3").metric
    for x in g.sample(RNG, 8):
        pc = g.curvature_at(x)
        np.testing.assert_allclose(pc.ricci, 2 * pc.g, atol=1e-10)
        assert pc.scal == pytest.approx(6.0, abs=1e-10)
        np.testing.assert_allclose(pc.schouten, -0.5 * pc.g, atol=1e-10)


def test_sphere_opaque_callbacks_closed_form():
    g = sphere_spherical()
    for x in g.sample(RNG, 8):
        pc = g.curvature_at(x)
        Ric, scal, K = sphere_closed_form(x)
        np.testing.assert_allclose(pc.ricci, Ric, atol=1e-9)
        assert pc.scal == pytest.approx(scal, abs=1e-9)
        np.testing.assert_allclose(pc.schouten, K, atol=1e-9)


def test_symbolic_bundle_agrees_with_pointwise():
    g = load_example("walker_r2").metric
    cb = curvature(g)
    assert cb.symbolic
    x = g.sample(RNG, 1)[0]
    pt = g.chart.point(x)
    pc = g.curvature_at(x)
    ric = np.array([[ec.evaluate(e, pt) for e in row] for row in cb.ricci])
    np.testing.assert_allclose(ric, pc.ricci, atol=1e-10)
    assert ec.evaluate(cb.scal, pt) == pytest.approx(pc.scal, abs=1e-10)


def test_symbolic_needs_monomial_determinant():
    from tractorlab.geometry import SymbolicUnavailableError
    cb = curvature(load_example("walker_r1_generic").metric)
    assert not cb.symbolic
    with pytest.raises(SymbolicUnavailableError):
        cb.ricci


def test_symbolic_ricci_symmetric():
    g = load_example("walker_r2").metric
    ric = curvature(g).ricci
    for i in range(g.n):
        for j in range(i + 1, g.n):
            assert ec.is_zero(ric[i][j] - ric[j][i])


@pytest.mark.parametrize("seed", [4, 5])
def test_schouten_trace_identity(seed):
    g = random_polynomial_metric(4, (1, 3), seed)
    n = g.n
    for x in g.sample(RNG, 4):
        pc = g.curvature_at(x)
        # trace of K = (scal g / (2(n-1)) - Ric) / (n - 2) is -scal / (2 (n - 1))
        assert np.trace(pc.ginv @ pc.schouten) == pytest.approx(-pc.scal / (2 * (n - 1)), abs=1e-8)
        np.testing.assert_allclose(pc.ricci, pc.ricci.T, atol=1e-12)


def test_pure_walker_m1_scalar_flat():
    g = load_example("pure_m1").metric
    assert scalar_curvature_report(g, samples=16).passed
    assert curvature(g).scal is not None and ec.is_zero(curvature(g).scal)


# --- Levi-Civita connection --------------------------------------------------

def test_constant_fields_flat_space():
    g = flat(1, 3)
    X, Y = vf(g.chart, "1", "2", "0", "-1"), vf(g.chart, "0", "3", "1", "1")
    for x in g.sample(RNG, 3):
        assert np.all(covariant_derivative_at(g, X, Y, x) == 0)


def test_torsion_free_and_metric():
    g = random_polynomial_metric(3, (1, 2), 11)
    c = g.chart
    X, Y, Z = vf(c, "x2", "1", "x1*x3"), vf(c, "x3^2", "x1", "1"), vf(c, "1", "x1*x2", "x3")
    h = 1e-6
    for x in g.sample(RNG, 5):
        tors = covariant_derivative_at(g, X, Y, x) - covariant_derivative_at(g, Y, X, x) - lie_bracket_at(X, Y, x)
        assert np.max(np.abs(tors)) < 1e-9

        def gyz(p):
            return Y.at(p) @ g.matrix(p) @ Z.at(p)

        v = X.at(x)
        deriv = (gyz(x + h * v) - gyz(x - h * v)) / (2 * h)
        rhs = g.inner(x, covariant_derivative_at(g, X, Y, x), Z.at(x)) + g.inner(x, Y.at(x),
                                                                                covariant_derivative_at(g, X, Z, x))
        assert deriv == pytest.approx(rhs, abs=1e-8)


def test_symbolic_covariant_derivative():
    g = load_example("walker_r2").metric
    c = g.chart
    X, Y = vf(c, "1", "x1", "u1", "0", "y2"), vf(c, "y1", "0", "1", "x2", "1")
    W = covariant_derivative(g, X, Y)
    for x in g.sample(RNG, 3):
        np.testing.assert_allclose(W.at(x), covariant_derivative_at(g, X, Y, x), atol=1e-12)


# --- conformal change --------------------------------------------------------

def test_zero_rescale_is_identity():
    g = flat(2, 2)
    assert conformal_rescale(g, ec.ZERO) is g


def test_constant_rescale_scales_components_keeps_christoffels():
    g = random_polynomial_metric(3, (0, 3), 2)
    gt = g.rescaled(ec.as_expr(ec.Fraction(1, 3)))
    for x in g.sample(RNG, 3):
        np.testing.assert_allclose(gt.matrix(x), math.exp(2 / 3) * g.matrix(x), rtol=1e-14)
        np.testing.assert_allclose(gt.curvature_at(x).christoffel, g.curvature_at(x).christoffel, atol=1e-12)


def test_rescalings_compose():
    g = flat(1, 2)
    s, t = parse_expr("x1", g.chart), parse_expr("x2*x3", g.chart)
    assert g.rescaled(s).rescaled(t) is g.rescaled(ec.simplify(ec.Add((s, t))))


@pytest.mark.parametrize("sigma", ["x1", "x1*x2 - x3^2/2", "exp(x2)/4"])
def test_transformation_formula_matches_direct(sigma):
    g = flat(2, 1) if sigma == "x1" else random_polynomial_metric(3, (1, 2), 8)
    s = parse_expr(sigma, g.chart)
    gt = g.rescaled(s)
    A, B = vf(g.chart, "1", "x1", "x2*x3"), vf(g.chart, "x3", "1", "-2")
    for x in g.sample(RNG, 4):
        np.testing.assert_allclose(transformed_christoffel(g, s, x), gt.curvature_at(x).christoffel, atol=1e-9)
        np.testing.assert_allclose(levi_civita_transform(g, s, A, B, x), covariant_derivative_at(gt, B, A, x),
                                   atol=1e-9)


def test_lightlike_is_conformally_invariant():
    g = flat(1, 1 + 1)
    v = np.array([1.0, 1.0, 0.0])
    gt = g.rescaled(parse_expr("x1 + x2^2", g.chart))
    for x in g.sample(RNG, 3):
        assert g.inner(x, v, v) == 0 and gt.inner(x, v, v) == 0


# --- parallel transport -------------------------------------------------------

def test_flat_transport_is_trivial():
    g = flat(1, 2)
    c = polyline([[0, 0, 0], [0.3, 0.1, 0], [0.2, -0.2, 0.4]])
    v0 = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(parallel_transport_vector(g, c, v0), v0, atol=1e-12)
    loop = polyline([[0, 0, 0], [0.3, 0, 0], [0.3, 0.3, 0.2], [0, 0, 0]])
    assert np.max(np.abs(transport_matrix(g, loop) - np.eye(3))) < 1e-9


def test_transport_preserves_inner_products():
    g = random_polynomial_metric(3, (1, 2), 3)
    x0 = np.zeros(3)
    c = straight_line(x0, np.array([0.3, -0.2, 0.25]))
    P = transport_matrix(g, c)
    G0, G1 = g.matrix(c.start), g.matrix(c.end)
    assert np.max(np.abs(P.T @ G1 @ P - G0)) < 1e-7


def test_sphere_holonomy_rotates():
    g = load_example("sphere3").metric
    M = transport_matrix(g, rectangle_loop(np.zeros(3), 0, 1, 0.2))
    G = g.matrix(np.zeros(3))
    assert np.max(np.abs(M.T @ G @ M - G)) < 1e-9
    assert np.max(np.abs(M - np.eye(3))) > 1e-3


# --- distributions ------------------------------------------------------------

def test_walker_L_parallel():
    d = load_example("walker_r2")
    assert check_distribution_parallel(d.metric, d.L, samples=16).passed


def test_flat_constant_lightlike_line_parallel():
    g = flat(1, 2)
    L = Distribution([vf(g.chart, "1", "0", "1")])
    assert check_distribution_parallel(g, L, samples=8).passed


def test_flat_twisted_line_not_parallel():
    g = flat(1, 2)
    L = Distribution([vf(g.chart, "x2", "1", "0")])
    rep = check_distribution_parallel(g, L, samples=8)
    assert not rep.passed and rep.max_residual > 0.1


def test_einstein_fails_ricci_image():
    g = load_example("sphere3").metric
    L = Distribution.coordinate(g.chart, ["x1"])
    assert not check_ricci_image(g, L, samples=8).passed


def test_ricci_flat_passes_ricci_image():
    g = flat(2, 2)
    L = Distribution.coordinate(g.chart, ["x1"])
    assert check_ricci_image(g, L, samples=8).passed


def test_pure_walker_ricci_and_schouten_image():
    d = load_example("pure_m1")
    assert check_ricci_image(d.metric, d.L, samples=16).passed
    assert check_schouten_image(d.metric, d.L, samples=16).passed


def test_integrability():
    c = Chart(("x1", "x2", "x3", "x4"))
    assert check_integrable(None, Distribution.coordinate(c, ["x1", "x2"]), samples=4,
                            points=np.random.default_rng(0).uniform(-1, 1, (4, 4))).passed
    bad = Distribution([vf(c, "1", "0", "0", "0"), vf(c, "0", "x1", "1", "0")])
    rep = check_integrable(None, bad, points=np.random.default_rng(0).uniform(-1, 1, (4, 4)))
    assert not rep.passed
    one = Distribution([vf(c, "x2", "x3^2", "1", "x1")])
    assert check_integrable(None, one, points=np.random.default_rng(0).uniform(-1, 1, (4, 4))).passed


# --- Poincare potentials -------------------------------------------------------

def test_exact_coordinate_form():
    c = Chart(("x1", "x2"))
    base = np.array([0.1, -0.2])
    pot = poincare_potential(OneForm(c, [1, 0]), base)
    for x in np.random.default_rng(1).uniform(-0.5, 0.5, (5, 2)):
        assert pot(x) == pytest.approx(x[0] - base[0], abs=1e-12)


def test_product_potential():
    c = Chart(("x1", "x2"))
    base = np.array([0.2, 0.3])
    pot = poincare_potential(OneForm(c, [parse_expr("x2", c), parse_expr("x1", c)]), base)
    for x in np.random.default_rng(2).uniform(-0.5, 0.5, (5, 2)):
        assert pot(x) == pytest.approx(x[0] * x[1] - base[0] * base[1], abs=1e-12)


def test_non_closed_form_rejected():
    c = Chart(("x1", "x2"))
    with pytest.raises(ClosednessError):
        poincare_potential(OneForm(c, [parse_expr("x2", c), ec.ZERO]), np.zeros(2))
