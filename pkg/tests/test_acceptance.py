"""Acceptance gate: ten end-to-end criteria, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -v`` (the verdict lines are printed
even under output capture).
"""

import time

import numpy as np
import pytest

from tractorlab import exprcore as ec
from tractorlab.clifford import (build_clifford, is_pure, kernel_is_lightlike, random_null_spinor,
                                 random_rational_spinor, spinor_kernel, spinor_pairing)
from tractorlab.corpus import list_examples, load_example
from tractorlab.exprcore import Chart, parse_expr
from tractorlab.geometry import (ClosednessError, OneForm, check_integrable, check_schouten_image,
                                 poincare_potential, scalar_curvature_report)
from tractorlab.linalg import span_distance
from tractorlab.spintractor import (SpinorField, build_frame, check_spin_tractor_parallel, check_twistor,
                                    conformal_rescale_spinor, contains_s_plus, d_invariant, kernel_distribution,
                                    spinor_kernel_coords, twistor_to_tractor)
from tractorlab.tractor import (_project_point, build_H_from_L, check_metricity, default_loops, gauge_matrix,
                                holonomy_sample, project_L_from_H, verify_invariant_lightlike)
from tractorlab.walker import build_pure_walker

from oracles import (fd_christoffel, fd_riemann, metric_fn, random_polynomial_metric, rel_err, ricci_from,
                     sphere_closed_form, sphere_spherical)

SUITE_BUDGET = 60.0
CORPUS = [e.name for e in list_examples()]
PURE = [n for n in CORPUS if load_example(n).pure is not None]


@pytest.fixture
def verdict(capsys):
    """Print one verdict line, then assert the criterion and its time budget."""
    start = time.perf_counter()

    def report(k, title, ok, detail=""):
        elapsed = time.perf_counter() - start
        ok = bool(ok) and elapsed < SUITE_BUDGET
        with capsys.disabled():
            print(f"\n[criterion {k:2d}] {'PASS' if ok else 'FAIL'}  {title}  ({detail}; {elapsed:.1f}s)")
        assert ok, f"criterion {k} failed: {detail}"

    return report


@pytest.fixture(scope="module")
def pure_results():
    return {n: build_pure_walker(load_example(n).pure) for n in PURE}


def affine_twistor(g, frame, seed, quad=0.0):
    """u + x.v on a flat chart (coordinate frame); quad adds a non-twistor x1^2 w term."""
    rep = frame.rep
    rng = np.random.default_rng(seed)
    u, v, w = (random_rational_spinor(rep, rng) for _ in range(3))
    G = rep.gamma_stack()
    comps = []
    for i in range(rep.N):
        terms = [ec.as_expr(u[i])]
        for k, nm in enumerate(g.chart.names):
            c = sum(int(G[k][i, j]) * v[j] for j in range(rep.N))
            if c:
                terms.append(ec.Mul((ec.as_expr(c), ec.Sym(nm))))
        if quad and w[i]:
            terms.append(ec.Mul((ec.as_expr(ec.Fraction(quad) * w[i]), ec.Pow(ec.Sym(g.chart.names[0]), 2))))
        comps.append(ec.simplify(ec.Add(tuple(terms))))
    return SpinorField(comps, frame)


# 1 -------------------------------------------------------------------------------------------

def test_criterion_01_curvature_oracle(verdict):
    worst = {"christoffel": 0.0, "riemann": 0.0, "ricci": 0.0}
    cases = [(3, (1, 2), 11), (3, (0, 3), 12), (4, (2, 2), 13), (4, (1, 3), 14), (4, (0, 4), 15)]
    for n, sig, seed in cases:
        g = random_polynomial_metric(n, sig, seed)
        gf = metric_fn(g)
        for x in g.sample(np.random.default_rng(seed), 4):
            pc = g.curvature_at(x)
            R = fd_riemann(lambda y: g.curvature_at(y).christoffel, x)
            worst["christoffel"] = max(worst["christoffel"], rel_err(pc.christoffel, fd_christoffel(gf, x)))
            worst["riemann"] = max(worst["riemann"], rel_err(pc.riemann, R))
            worst["ricci"] = max(worst["ricci"], rel_err(pc.ricci, ricci_from(R)))
    verdict(1, "curvature vs finite differences, 5 random polynomial metrics",
            max(worst.values()) < 1e-5, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


# 2 -------------------------------------------------------------------------------------------

def test_criterion_02_round_sphere(verdict):
    err = 0.0
    g = sphere_spherical()
    for x in g.sample(np.random.default_rng(2), 16):
        pc = g.curvature_at(x)
        Ric, scal, K = sphere_closed_form(x)
        err = max(err, float(np.max(np.abs(pc.ricci - Ric))), abs(pc.scal - scal),
                  float(np.max(np.abs(pc.schouten - K))))
    # stereographic chart: closed form is the same in terms of g itself
    gs = load_example("sphere3").metric
    for x in gs.sample(np.random.default_rng(3), 16):
        pc = gs.curvature_at(x)
        err = max(err, float(np.max(np.abs(pc.ricci - 2 * pc.g))), abs(pc.scal - 6),
                  float(np.max(np.abs(pc.schouten + 0.5 * pc.g))))
    verdict(2, "S^3: Ric = 2g, scal = 6, K = -g/2 in two charts", err < 1e-5, f"max error {err:.1e}")


# 3 -------------------------------------------------------------------------------------------

def test_criterion_03_tractor_metricity_and_covariance(verdict):
    met = gram = cov = 0.0
    ok = True
    for name in CORPUS:
        g = load_example(name).metric
        m = check_metricity(g, samples=64, seed=0)
        ok &= m.passed
        met = max(met, m.max_residual)
        base = g.chart.box().mean(axis=1)
        loop = default_loops(base, g.n)[-1:]  # one loop per metric keeps the suite in budget
        h1 = holonomy_sample(g, base, loop)
        gram = max(gram, h1.max_gram_residual)
        sigma = parse_expr(f"({g.chart.names[0]})/10 + ({g.chart.names[-1]})^2/5", g.chart)
        h2 = holonomy_sample(g.rescaled(sigma), base, loop)
        P = gauge_matrix(g, sigma, base)
        cov = max(cov, float(np.max(np.abs(P @ h1.loops[0][1] @ np.linalg.inv(P) - h2.loops[0][1]))))
    ok = ok and met < 1e-8 and gram < 1e-6 and cov < 1e-6
    verdict(3, f"tractor metricity / holonomy Gram / gauge covariance on {len(CORPUS)} corpus metrics", ok,
            f"metricity {met:.1e}, gram {gram:.1e}, covariance {cov:.1e}")


# 4 -------------------------------------------------------------------------------------------

def test_criterion_04_invariant_H_from_L(verdict):
    names = [n for n in CORPUS if load_example(n).L is not None and
             next(e for e in list_examples() if e.name == n).ricci_isotropic]
    ranks = set()
    inv = proj = 0.0
    ok = True
    for name in names:
        d = load_example(name)
        g, L = d.metric, d.L
        if d.walker is not None:
            ranks.add(d.walker.r)
        pts = g.sample(np.random.default_rng(4), 16)
        H = build_H_from_L(g, L)
        rep = verify_invariant_lightlike(g, H, points=pts, tol=1e-7)
        ok &= rep.passed
        inv = max(inv, rep.max_residual)
        P, singular = project_L_from_H(g, H, points=pts)
        ok &= not singular
        proj = max(proj, max(span_distance(P.basis_at(x), L.matrix(x)) for x in pts))
    ok = ok and {1, 2, 3} <= ranks and inv < 1e-7 and proj < 1e-8
    verdict(4, f"H = (0,L,0) + span(s+) invariant and projects to L ({len(names)} examples, r in {sorted(ranks)})",
            ok, f"invariance {inv:.1e}, projection {proj:.1e}")


# 5 -------------------------------------------------------------------------------------------

def test_criterion_05_schouten_image_forces_scal_zero(verdict):
    hyp = 0
    worst = 0.0
    ok = True
    for name in CORPUS:
        d = load_example(name)
        if d.L is None or d.L.rank == 0:
            continue
        pts = d.metric.sample(np.random.default_rng(5), 32)
        if not check_schouten_image(d.metric, d.L, points=pts, tol=1e-7).passed:
            continue
        hyp += 1
        s = scalar_curvature_report(d.metric, points=pts, tol=1e-6)
        ok &= s.passed
        worst = max(worst, s.max_residual)
    verdict(5, f"Schouten image in L implies scal = 0 ({hyp} examples satisfy the hypothesis)",
            ok and hyp >= 3 and worst < 1e-6, f"max |scal| {worst:.1e}")


# 6 -------------------------------------------------------------------------------------------

def test_criterion_06_clifford_exactness_and_purity(verdict):
    ok = True
    for sig in [(1, 0), (1, 1), (2, 1), (2, 2), (3, 2), (3, 3), (4, 3), (4, 4)]:
        ok &= build_clifford(*sig).relation_residual() == 0
    rng = np.random.default_rng(6)
    counts = {}
    for sig, chirs in [((2, 2), ("+", "-")), ((3, 2), ("full",)), ((3, 3), ("+", "-"))]:
        rep = build_clifford(*sig)
        m = min(sig)
        for i in range(1000):
            v = random_rational_spinor(rep, rng, chirs[i % len(chirs)])
            ker = spinor_kernel(rep, v)
            ok &= len(ker) == m and kernel_is_lightlike(rep, ker)
        counts[sig] = 1000
    for sig, chirs in [((4, 3), ("full",)), ((4, 4), ("+", "-"))]:
        rep = build_clifford(*sig)
        nulls = 0
        for i in range(1000):
            chir = chirs[i % len(chirs)]
            v = random_null_spinor(rep, rng, chir) if i % 2 else random_rational_spinor(rep, rng, chir)
            null = spinor_pairing(rep, v, v) == 0
            nulls += null
            ok &= is_pure(rep, v) == null
        counts[sig] = 1000
        ok &= nulls >= 400
    verdict(6, "exact Clifford relations up to (4,4); purity statements on 1000 samples per signature", ok,
            ", ".join(f"{s}: {c}" for s, c in counts.items()))


# 7 -------------------------------------------------------------------------------------------

def test_criterion_07_twistor_iff_parallel_spin_tractor(verdict, pure_results):
    fields = []  # (label, g, frame, phi, expected twistor)
    for name, res in pure_results.items():
        fields.append((f"{name}:parallel", res.metric, res.frame, res.spinor, True))
    for k, name in enumerate(["flat22", "flat32", "flat33"]):
        g = load_example(name).metric
        fr = build_frame(g)
        fields.append((f"{name}:affine", g, fr, affine_twistor(g, fr, 70 + k), True))
        fields.append((f"{name}:perturbed", g, fr, affine_twistor(g, fr, 80 + k, quad=ec.Fraction(1, 3)), False))
    res = pure_results["pure_m2"]
    bump = [ec.simplify(ec.Add((c, ec.Mul((ec.as_expr(ec.Fraction(1, 5)), ec.Pow(ec.Sym("y1"), 2))))))
            for c in res.spinor.components]
    fields.append(("pure_m2:perturbed", res.metric, res.frame, SpinorField(bump, res.frame), False))
    disagree = []
    for label, g, fr, phi, _ in fields:
        pts = g.sample(np.random.default_rng(7), 12)
        tw = check_twistor(g, fr, phi, points=pts, tol=1e-6)
        st = check_spin_tractor_parallel(g, fr, twistor_to_tractor(g, fr, phi, check=False), points=pts, tol=1e-6)
        if tw.passed != st.passed:
            disagree.append(label)
    wrong = [lab for lab, g, fr, phi, exp in fields
             if check_twistor(g, fr, phi, samples=6, seed=1).passed != exp]
    verdict(7, f"twistor equation <=> parallel spin tractor on {len(fields)} spinor fields",
            len(fields) >= 10 and not disagree and not wrong,
            f"{len(disagree)} disagreements, {len(wrong)} misclassified")


# 8 -------------------------------------------------------------------------------------------

def test_criterion_08_parallel_pure_spinor_pipeline(verdict, pure_results):
    expected = {"pure_m2_split": 3, "pure_m2": 3, "pure_m3_split": 4}
    worst = {"d": 0.0, "L": 0.0}
    ok = True
    for name, rank in expected.items():
        res = pure_results[name]
        g, fr, phi = res.metric, res.frame, res.spinor
        ok &= g.signature in {(2, 2), (3, 2), (3, 3)}
        pts = g.sample(np.random.default_rng(8), 24)
        psi = twistor_to_tractor(g, fr, phi)
        d = d_invariant(g, fr, phi, points=pts)
        worst["d"] = max(worst["d"], max(abs(v) for v in d.values))
        dist, ranks = kernel_distribution(g, fr, psi, points=pts)
        ok &= set(ranks.values()) == {rank}
        ok &= verify_invariant_lightlike(g, dist, points=pts, tol=1e-7).passed
        ok &= check_integrable(g, res.L, points=pts).passed
        for x in pts:
            ok &= contains_s_plus(fr, psi.at(x))
            kphi = spinor_kernel_coords(fr, phi.at(x), x)
            worst["L"] = max(worst["L"], span_distance(_project_point(dist, x), kphi),
                             span_distance(kphi, res.L.matrix(x)))
    ok = ok and worst["d"] < 1e-7 and worst["L"] < 1e-8
    verdict(8, "parallel pure spinors in (2,2), (3,2), (3,3): d = 0, kernel ranks 3/3/4 with s+, L recovered",
            ok, f"max |d| {worst['d']:.1e}, L residual {worst['L']:.1e}")


# 9 -------------------------------------------------------------------------------------------

def test_criterion_09_conformal_covariance_of_twistors(verdict, pure_results):
    cases = [(res.metric, res.spinor) for res in pure_results.values()]
    for k, name in enumerate(["flat22", "flat32"]):
        g = load_example(name).metric
        cases.append((g, affine_twistor(g, build_frame(g), 90 + k)))
    worst = 0.0
    ok = True
    for g, phi in cases:
        c = g.chart.names
        sigmas = [f"{c[0]}/4", f"{c[1]}*{c[-1]}/5 - {c[0]}^2/6", f"({c[-1]} + {c[1]})^3/10"]
        pts = g.sample(np.random.default_rng(9), 8)
        for s in sigmas:
            scaled = conformal_rescale_spinor(phi, parse_expr(s, g.chart))
            rep = check_twistor(scaled.metric, scaled.frame, scaled, points=pts, tol=1e-6)
            ok &= rep.passed
            worst = max(worst, rep.max_residual)
    verdict(9, f"rescaled twistor spinors stay twistor ({len(cases)} examples x 3 conformal factors)",
            ok and worst < 1e-6, f"max residual {worst:.1e}")


# 10 ------------------------------------------------------------------------------------------

def test_criterion_10_poincare_potentials(verdict):
    c2, c3 = Chart(("x1", "x2")), Chart(("x1", "x2", "x3"))

    def form(chart, *srcs):
        return OneForm(chart, [parse_expr(s, chart) for s in srcs])

    exact = [
        (form(c2, "1", "0"), lambda x: x[0]),
        (form(c2, "x2", "x1"), lambda x: x[0] * x[1]),
        (form(c2, "2*x1", "3*x2^2"), lambda x: x[0] ** 2 + x[1] ** 3),
        (form(c3, "x2*x3", "x1*x3", "x1*x2"), lambda x: x[0] * x[1] * x[2]),
        (form(c3, "2*x1*x2", "x1^2 - x3", "3*x3^2 - x2"), lambda x: x[0] ** 2 * x[1] + x[2] ** 3 - x[1] * x[2]),
    ]
    closed_forms = [
        form(c2, "x2", "0"),
        form(c2, "-x2", "x1"),
        form(c3, "x3", "x1", "x1"),
    ]
    rng = np.random.default_rng(10)
    err = 0.0
    for theta, f in exact:
        n = theta.chart.dim
        base = rng.uniform(-0.3, 0.3, n)
        pot = poincare_potential(theta, base)
        for x in rng.uniform(-0.5, 0.5, (6, n)):
            err = max(err, abs(pot(x) - (f(x) - f(base))))
    rejected = 0
    for theta in closed_forms:
        try:
            poincare_potential(theta, np.zeros(theta.chart.dim))
        except ClosednessError:
            rejected += 1
    verdict(10, "Poincare potentials: 5 exact forms reproduced, 3 non-closed forms rejected",
            err < 1e-8 and rejected == 3, f"max error {err:.1e}, rejected {rejected}/3")
