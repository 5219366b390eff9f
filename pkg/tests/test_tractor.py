import math

import numpy as np
import pytest

from tractorlab import exprcore as ec
from tractorlab.corpus import load_example
from tractorlab.curves import polyline, rectangle_loop, straight_line
from tractorlab.exprcore import Chart, parse_expr
from tractorlab.geometry import ChartMetric, Distribution, VectorField
from tractorlab.linalg import span_distance
from tractorlab.tractor import (GaugeMismatchError, NotLightlikeError, Tractor, TractorDistribution, TractorField,
                                build_H_from_L, check_metricity, gauge_matrix, gauge_transform, gram_matrix,
                                holonomy_sample, orthogonal_complement, project_L_from_H, tractor_connection_apply,
                                tractor_inner, tractor_parallel_transport, tractor_transport_matrix,
                                verify_invariant_lightlike, verify_invariant_lightlike_perp)

from oracles import random_polynomial_metric

RNG = np.random.default_rng(3)


def flat(p, q):
    n = p + q
    chart = Chart(tuple(f"x{i + 1}" for i in range(n)))
    return ChartMetric.from_entries(chart, {(i, i): ec.as_expr(-1 if i < p else 1) for i in range(n)}, (p, q))


def tr(g, a, Y, b, x):
    return Tractor(a, Y, b, g, x)


# --- tractor metric ---------------------------------------------------------

def test_inner_products():
    g = flat(1, 2)
    x = np.zeros(3)
    assert tractor_inner(tr(g, 1, [0, 0, 0], 0, x), tr(g, 0, [0, 0, 0], 1, x)) == 1
    assert tractor_inner(tr(g, 1, [0, 0, 0], 0, x), tr(g, 1, [0, 0, 0], 0, x)) == 0
    Y = np.array([1.0, 2.0, 0.5])
    assert tractor_inner(tr(g, 0, Y, 0, x), tr(g, 0, Y, 0, x)) == pytest.approx(-1 + 4 + 0.25)


def test_cross_gauge_inner_refused():
    g = flat(1, 2)
    gt = g.rescaled(parse_expr("x1", g.chart))
    with pytest.raises(GaugeMismatchError):
        tractor_inner(tr(g, 1, [0, 0, 0], 0, np.zeros(3)), tr(gt, 1, [0, 0, 0], 0, np.zeros(3)))


# --- connection -----------------------------------------------------------------

def test_flat_connection_examples():
    g = flat(2, 1)
    x = g.sample(RNG, 1)[0]
    e1 = np.array([1.0, 0, 0])
    sp = tractor_connection_apply(g, np.array([0.3, -1.0, 2.0]), TractorField.s_plus(g))
    assert np.all(sp.vector_at(x) == 0)
    sm = tractor_connection_apply(g, e1, TractorField.s_minus(g))
    np.testing.assert_array_equal(sm.vector_at(x), [0, 1, 0, 0, 0])


@pytest.mark.parametrize("name", ["sphere3", "walker_r2", "pure_m2"])
def test_metricity(name):
    g = load_example(name).metric
    assert check_metricity(g, samples=16, seed=1).passed


def test_metricity_on_expression_fields():
    g = random_polynomial_metric(3, (1, 2), 6)
    c = g.chart
    t = TractorField(parse_expr("x1*x2", c), [parse_expr(s, c) for s in ("1", "x3", "x1^2")], parse_expr("x2", c), g)
    s = TractorField(parse_expr("1", c), [parse_expr(s, c) for s in ("x2", "0", "x3")], parse_expr("x1 - x3", c), g)
    X = VectorField(c, [parse_expr(e, c) for e in ("1", "x1", "-2")])
    h = 1e-6
    for x in g.sample(RNG, 5):
        v = X.at(x)

        def ip(p):
            return tractor_inner(t.at(p), s.at(p))

        lhs = (ip(x + h * v) - ip(x - h * v)) / (2 * h)
        rhs = (tractor_inner(tractor_connection_apply(g, X, t).at(x), s.at(x))
               + tractor_inner(t.at(x), tractor_connection_apply(g, X, s).at(x)))
        assert lhs == pytest.approx(rhs, abs=1e-8)


# --- gauge change ---------------------------------------------------------------

def test_constant_gauge_change():
    g = flat(1, 2)
    c = 0.4
    x = np.array([0.1, 0.2, -0.3])
    t = tr(g, 2.0, [1, -1, 3], 0.5, x)
    u = gauge_transform(t, ec.as_expr(ec.Fraction(2, 5)))
    np.testing.assert_allclose(u.vector, [2 * math.exp(-c), *(math.exp(-c) * np.array([1, -1, 3])), 0.5 * math.exp(c)])
    assert u.gauge is g.rescaled(ec.as_expr(ec.Fraction(2, 5)))


def test_gauge_change_of_s_plus():
    g = flat(1, 2)
    sigma = parse_expr("x1*x2 + x3^2", g.chart)
    field = gauge_transform(TractorField.s_plus(g), sigma)
    for x in g.sample(RNG, 4):
        s = x[0] * x[1] + x[2] ** 2
        ds = np.array([x[1], x[0], 2 * x[2]])
        grad = np.diag([-1.0, 1, 1]) @ ds
        expect = [-math.exp(-s) * 0.5 * ds @ grad, *(math.exp(-s) * grad), math.exp(s)]
        np.testing.assert_allclose(field.vector_at(x), expect, atol=1e-13)


def test_gauge_fixes_I_minus_ray():
    g = random_polynomial_metric(3, (0, 3), 1)
    sigma = parse_expr("x1 - x2*x3", g.chart)
    for x in g.sample(RNG, 3):
        P = gauge_matrix(g, sigma, x)
        s = ec.evaluate(sigma, g.chart.point(x))
        np.testing.assert_allclose(P[:, 0], [math.exp(-s), 0, 0, 0, 0], atol=1e-15)


def test_gauge_change_is_isometric_and_a_cocycle():
    g = random_polynomial_metric(4, (2, 2), 9)
    s, t = parse_expr("x1*x2/3", g.chart), parse_expr("x3 - x4^2", g.chart)
    gs = g.rescaled(s)
    for x in g.sample(RNG, 4):
        P = gauge_matrix(g, s, x)
        assert np.max(np.abs(P.T @ gram_matrix(gs, x) @ P - gram_matrix(g, x))) < 1e-9
        both = gauge_matrix(gs, t, x) @ P
        np.testing.assert_allclose(both, gauge_matrix(g, ec.simplify(ec.Add((s, t))), x), atol=1e-10)


# --- transport and holonomy -------------------------------------------------------

def test_flat_line_transport_closed_form():
    g = flat(1, 2)
    T = np.array([0.0, 0.6, 0.8])  # unit spacelike
    x0 = np.array([0.1, -0.2, 0.0])
    for t in (0.3, 1.0):
        c = straight_line(x0, t * T)
        out = tractor_parallel_transport(g, c, tr(g, 1, [0, 0, 0], 0, x0))
        np.testing.assert_allclose(out.vector, [1, *(-t * T), -t * t / 2], atol=1e-12)
        sp = tractor_parallel_transport(g, c, tr(g, 0, [0, 0, 0], 1, x0))
        np.testing.assert_allclose(sp.vector, [0, 0, 0, 0, 1], atol=1e-15)


def test_transport_preserves_tractor_norm():
    g = random_polynomial_metric(3, (1, 2), 4)
    c = polyline([[0, 0, 0], [0.2, 0.1, -0.1], [0.1, 0.3, 0.2]])
    M = tractor_transport_matrix(g, c)
    assert np.max(np.abs(M.T @ gram_matrix(g, c.end) @ M - gram_matrix(g, c.start))) < 1e-7


def test_flat_holonomy_is_identity():
    g = flat(2, 2)
    hs = holonomy_sample(g, np.zeros(4), loops=[rectangle_loop(np.zeros(4), 0, 2), rectangle_loop(np.zeros(4), 1, 3)])
    assert hs.max_identity_deviation() < 1e-8


def test_sphere_holonomy_gram_and_gauge_covariance():
    g = load_example("sphere3").metric
    base = np.array([0.1, -0.1, 0.05])
    loops = [rectangle_loop(base, 0, 1, 0.15)]
    hs = holonomy_sample(g, base, loops)
    assert hs.max_gram_residual < 1e-6
    sigma = parse_expr("x1/2 + x2*x3", g.chart)
    ht = holonomy_sample(g.rescaled(sigma), base, loops)
    P = gauge_matrix(g, sigma, base)
    M, Mt = hs.loops[0][1], ht.loops[0][1]
    assert np.max(np.abs(P @ M @ np.linalg.inv(P) - Mt)) < 1e-6


def test_open_loop_rejected():
    g = flat(1, 2)
    with pytest.raises(ValueError):
        holonomy_sample(g, np.zeros(3), [straight_line(np.zeros(3), np.ones(3) * 0.1)])


# --- invariant lightlike distributions --------------------------------------------

def test_flat_lightlike_H_invariant():
    g = flat(1, 2)
    K = VectorField(g.chart, [1, 1, 0])
    H = TractorDistribution([TractorField.from_vector_field(K, g), TractorField.s_plus(g)])
    rep = verify_invariant_lightlike(g, H, samples=8, orthogonal=True)
    assert rep.passed
    assert rep.details["max_perp_residual"] < 1e-7


def test_I_minus_not_invariant():
    g = flat(1, 2)
    rep = verify_invariant_lightlike(g, TractorDistribution([TractorField.s_minus(g)]), samples=8)
    assert not rep.passed


def test_build_H_from_L_walker_m1():
    d = load_example("pure_m1")
    g = d.metric
    H = build_H_from_L(g, d.L)
    x = g.sample(RNG, 1)[0]
    np.testing.assert_array_equal(H.matrix(x), [[0, 0], [1, 0], [0, 0], [0, 0], [0, 1]])
    assert verify_invariant_lightlike(g, H, samples=16).passed


def test_build_H_from_empty_L():
    g = flat(1, 2)
    H = build_H_from_L(g, Distribution([]))
    assert H.rank == 1
    assert verify_invariant_lightlike(g, H, samples=4).passed


def test_build_H_rejects_spacelike_L():
    g = flat(1, 2)
    with pytest.raises(NotLightlikeError):
        build_H_from_L(g, Distribution.coordinate(g.chart, ["x2"]))


def test_projection_of_simple_H():
    g = flat(1, 2)
    K = VectorField(g.chart, [1, 0, 1])
    H = TractorDistribution([TractorField.from_vector_field(K, g), TractorField.s_plus(g)])
    proj, singular = project_L_from_H(g, H, samples=8)
    assert not singular
    for x in g.sample(RNG, 3):
        assert span_distance(proj.basis_at(x), [[1], [0], [1]]) < 1e-12


def test_projection_of_normalizable_shape():
    g = flat(2, 2)
    c = g.chart
    K1, K2 = [1, 0, 1, 0], [0, 1, 0, 1]
    H = TractorDistribution([TractorField(1, K1, 0, g), TractorField(0, K2, 0, g), TractorField.s_plus(g)])
    proj, singular = project_L_from_H(g, H, samples=8)
    assert not singular and proj.rank == 2
    x = np.zeros(4)
    assert span_distance(proj.basis_at(x), np.array([K1, K2]).T) < 1e-12


@pytest.mark.parametrize("name", ["walker_r1", "walker_r2", "walker_r3"])
def test_H_from_ricci_isotropic_L_round_trip(name):
    d = load_example(name)
    g, L = d.metric, d.L
    H = build_H_from_L(g, L)
    pts = g.sample(np.random.default_rng(0), 12)
    assert verify_invariant_lightlike(g, H, points=pts).passed
    proj, singular = project_L_from_H(g, H, points=pts)
    assert not singular
    for x in pts:
        assert span_distance(proj.basis_at(x), L.matrix(x)) < 1e-9


def test_perp_invariant_on_walker():
    d = load_example("walker_r2")
    H = build_H_from_L(d.metric, d.L)
    perp = orthogonal_complement(H)
    assert perp.rank == d.metric.n + 2 - H.rank
    for x in d.metric.sample(RNG, 3):
        assert verify_invariant_lightlike_perp(d.metric, perp, x) < 1e-7
