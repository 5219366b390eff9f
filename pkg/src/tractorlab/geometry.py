"""Curvature engine on a single coordinate chart.

Conventions: ``christoffel[k, i, j]`` is the coefficient of d/dx_k in
nabla_{d/dx_i} d/dx_j; ``riemann[l, i, j, k]`` is the d/dx_l component of
R(d_i, d_j) d_k with R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y]; the Ricci
tensor contracts the first two slots, Ric_jk = R^i_ijk, so round spheres
have positive Ricci curvature.  The Schouten tensor is

    K = (scal / (2 (n - 1)) g - Ric) / (n - 2).
"""

from __future__ import annotations

import itertools
from collections import OrderedDict
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from . import exprcore as ec
from .curves import DEFAULT_STEP, Curve, linear_rk4
from .exprcore import Chart, Expr, JetEvaluator, as_expr
from .jets import Jet, jeinsum
from .linalg import inertia, numeric_rank, span_residual
from .reports import CheckReport

DEFAULT_TOL = 1e-7


class NonInvertibleMetricError(ValueError):
    pass


class SymbolicUnavailableError(RuntimeError):
    """The metric determinant is not a monomial, so only pointwise numerics are offered."""


class SignatureError(ValueError):
    pass


class RankDeficiencyError(ValueError):
    pass


class ClosednessError(ValueError):
    pass


class OutOfBoundsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# metric


class ChartMetric:
    def __init__(self, chart: Chart, components, signature, bindings=None, name: str | None = None):
        n = chart.dim
        comps = [[as_expr(components[i][j]) for j in range(n)] for i in range(n)]
        if len(comps) != n or any(len(r) != n for r in comps):
            raise ValueError("metric components must be an n x n matrix")
        for i in range(n):
            for j in range(i + 1, n):
                a, b = comps[i][j], comps[j][i]
                if a != b and not ec.is_zero(a - b):
                    raise ValueError(f"metric components ({i},{j}) and ({j},{i}) differ")
                comps[j][i] = a
        p, q = (int(s) for s in signature)
        if p < 0 or q < 0 or p + q != n:
            raise SignatureError(f"signature {(p, q)} does not match dimension {n}")
        for row in comps:
            for e in row:
                missing = ec.free_coordinates(e) - set(chart.names)
                if missing:
                    raise ec.UnknownSymbolError(sorted(missing)[0])
        self.chart = chart
        self.components = tuple(tuple(r) for r in comps)
        self.signature = (p, q)
        self.bindings = dict(bindings or {})
        self.name = name
        self.parent: ChartMetric | None = None
        self.sigma: Expr | None = None
        self._rescaled: dict = {}
        self._scalar_jets: dict = {}
        self._cache: OrderedDict = OrderedDict()

    @classmethod
    def from_entries(cls, chart, entries, signature, bindings=None, name=None):
        """Build from a sparse {(i, j): expr} map; unset entries are zero, symmetry auto-filled."""
        n = chart.dim
        comps = [[ec.ZERO] * n for _ in range(n)]
        for (i, j), e in entries.items():
            e = as_expr(e)
            for a, b in ((i, j), (j, i)):
                cur = comps[a][b]
                if cur != ec.ZERO and cur != e and not ec.is_zero(cur - e):
                    raise ValueError(f"conflicting entries for ({i},{j})")
            comps[i][j] = comps[j][i] = e
        return cls(chart, comps, signature, bindings, name)

    def __repr__(self):
        return f"ChartMetric({self.name or '?'}, coords={self.chart.names}, signature={self.signature})"

    @property
    def n(self) -> int:
        return self.chart.dim

    @cached_property
    def _jet_eval(self) -> JetEvaluator:
        return JetEvaluator(self.components, self.chart, self.bindings, order=2)

    def jet(self, x, order: int = 2) -> Jet:
        return self._jet_eval(x, order)

    def matrix(self, x) -> np.ndarray:
        return self._jet_eval(x, 0).v

    def inner(self, x, u, v) -> float:
        return float(np.asarray(u) @ self.matrix(x) @ np.asarray(v))

    def scalar_jet(self, expr: Expr, x, order: int = 2) -> Jet:
        """Jet of a scalar expression on this chart (compiled once per expression)."""
        ev = self._scalar_jets.get(expr)
        if ev is None:
            ev = JetEvaluator([expr], self.chart, self.bindings, order=2)
            self._scalar_jets[expr] = ev
        return ev(x, order)[0]

    def curvature_at(self, x) -> "PointCurvature":
        x = np.asarray(x, dtype=float)
        key = x.tobytes()
        pc = self._cache.get(key)
        if pc is None:
            pc = curvature_at(self, x)
            self._cache[key] = pc
            if len(self._cache) > 512:
                self._cache.popitem(last=False)
        return pc

    def has_signature_at(self, x) -> bool:
        neg, zero, pos = inertia(self.matrix(x), tol=1e-9)
        return zero == 0 and (neg, pos) == self.signature

    def check_signature(self, points) -> CheckReport:
        rep = CheckReport("signature", len(points), tolerance=0.5)
        for x in points:
            neg, zero, pos = inertia(self.matrix(x), tol=1e-9)
            bad = zero != 0 or (neg, pos) != self.signature
            rep.record(x, 1.0 if bad else 0.0)
        return rep

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return self.chart.sample(rng, count)

    def rescaled(self, sigma) -> "ChartMetric":
        """The metric exp(2 sigma) g; the same object is returned for equal sigma."""
        sigma = ec.simplify(as_expr(sigma))
        if sigma == ec.ZERO:
            return self
        if self.parent is not None:
            # rescalings compose: exp(2 tau) exp(2 sigma) g = exp(2 (sigma + tau)) g
            return self.parent.rescaled(ec.simplify(ec.Add((self.sigma, sigma))))
        out = self._rescaled.get(sigma)
        if out is None:
            factor = ec.simplify(ec.Exp(ec.Mul((ec.Const(Fraction(2)), sigma))))
            comps = [[ec.ZERO if c == ec.ZERO else ec.simplify(ec.Mul((factor, c))) for c in row]
                     for row in self.components]
            name = f"exp(2*({ec.to_source(sigma)}))*{self.name or 'g'}"
            out = ChartMetric(self.chart, comps, self.signature, self.bindings, name)
            out.parent = self
            out.sigma = sigma
            self._rescaled[sigma] = out
        return out


def conformal_rescale(g: ChartMetric, sigma) -> ChartMetric:
    return g.rescaled(sigma)


# ---------------------------------------------------------------------------
# pointwise curvature


@dataclass
class PointCurvature:
    x: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    dg: np.ndarray            # dg[i, j, k] = d_k g_ij
    christoffel: np.ndarray   # [k, i, j]
    dchristoffel: np.ndarray  # [k, i, j, m] = d_m Gamma^k_ij
    riemann: np.ndarray       # [l, i, j, k]
    ricci: np.ndarray
    scal: float
    schouten: np.ndarray

    @property
    def n(self):
        return self.g.shape[0]

    def sharp(self, form) -> np.ndarray:
        return self.ginv @ np.asarray(form)

    def gamma_along(self, v) -> np.ndarray:
        """Matrix A with (nabla_v Y)^k = v(Y^k) + A[k, j] Y^j."""
        return np.einsum("kij,i->kj", self.christoffel, v)


def christoffel_jet(gj: Jet) -> Jet:
    order = gj.order - 1
    ginv = gj.inv().truncate(order)
    dg = gj.grad()
    t = dg.transpose(1, 2, 0) + dg.transpose(1, 0, 2) - dg.transpose(2, 0, 1)
    return jeinsum("kl,lij->kij", ginv, t) * 0.5


def curvature_at(g: ChartMetric, x) -> PointCurvature:
    x = np.asarray(x, dtype=float)
    gj = g.jet(x, 2)
    try:
        ginv = np.linalg.inv(gj.v)
    except np.linalg.LinAlgError:
        raise NonInvertibleMetricError(f"metric is singular at {x.tolist()}") from None
    dg, hg = gj.d, gj.h
    # lowered symbols T[l, i, j] = (d_i g_jl + d_j g_il - d_l g_ij) / 2 and their partials
    T = 0.5 * (dg.transpose(1, 2, 0) + dg.transpose(1, 0, 2) - dg.transpose(2, 0, 1))
    dT = 0.5 * (hg.transpose(1, 2, 0, 3) + hg.transpose(1, 0, 2, 3) - hg.transpose(2, 0, 1, 3))
    G = np.tensordot(ginv, T, 1)
    dginv = -np.tensordot(ginv, np.tensordot(dg, ginv, ([1], [0])), 1).transpose(0, 2, 1)
    dG = np.einsum("klm,lij->kijm", dginv, T) + np.tensordot(ginv, dT, 1)
    riem = (np.einsum("ljki->lijk", dG) - np.einsum("likj->lijk", dG)
            + np.einsum("lim,mjk->lijk", G, G) - np.einsum("ljm,mik->lijk", G, G))
    ric = np.einsum("iijk->jk", riem)
    scal = float(np.einsum("jk,jk->", ginv, ric))
    n = g.n
    K = (scal / (2 * (n - 1)) * gj.v - ric) / (n - 2) if n > 2 else np.full((n, n), np.nan)
    return PointCurvature(x, gj.v, ginv, dg, G, dG, riem, ric, scal, K)


# ---------------------------------------------------------------------------
# symbolic curvature


def _det_poly(mat_polys, rows, cols):
    """Determinant of a sub-matrix of polynomial dicts by cached Laplace expansion."""
    rows = tuple(rows)
    memo: dict = {}

    def det(k, colset):
        if k == len(rows):
            return ec._poly_const(Fraction(1))
        key = (k, colset)
        if key in memo:
            return memo[key]
        acc: dict = {}
        sign = 1
        for c in cols:
            if not (colset >> c) & 1:
                continue
            entry = mat_polys[rows[k]][c]
            if entry:
                sub = det(k + 1, colset & ~(1 << c))
                if sub:
                    term = ec._poly_mul(entry, sub)
                    acc = ec._poly_add(acc, term if sign > 0 else ec._poly_scale(term, Fraction(-1)))
            sign = -sign
        memo[key] = acc
        return acc

    mask = 0
    for c in cols:
        mask |= 1 << c
    return det(0, mask)


class CurvatureBundle:
    """Christoffel, Riemann, Ricci, scalar and Schouten curvature of a chart metric.

    Symbolic tensors (``christoffel``, ``riemann``, ``ricci``, ``scal``,
    ``schouten``) are built lazily and only when the determinant expands to a
    monomial; ``at(x)`` works for every metric.
    """

    def __init__(self, g: ChartMetric):
        if g.n < 3:
            raise ValueError("conformal geometry needs n >= 3")
        self.metric = g

    def at(self, x) -> PointCurvature:
        return self.metric.curvature_at(x)

    @cached_property
    def _g_polys(self):
        return [[ec._expand_poly(e) for e in row] for row in self.metric.components]

    @cached_property
    def determinant(self) -> Expr:
        n = self.metric.n
        d = _det_poly(self._g_polys, range(n), range(n))
        return ec._poly_to_expr(d)

    @cached_property
    def symbolic(self) -> bool:
        d = ec._expand_poly(self.determinant)
        if not d:
            raise NonInvertibleMetricError("metric determinant expands to zero")
        return len(d) == 1

    @cached_property
    def inverse(self):
        if not self.symbolic:
            raise SymbolicUnavailableError(
                f"determinant {ec.to_source(self.determinant)} is not a monomial; use at(x)")
        n = self.metric.n
        det_inv = ec._poly_pow(ec._expand_poly(self.determinant), -1)
        inv = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                rows = [r for r in range(n) if r != j]
                cols = [c for c in range(n) if c != i]
                minor = _det_poly(self._g_polys, rows, cols)
                cof = ec._poly_scale(minor, Fraction((-1) ** (i + j)))
                inv[i][j] = inv[j][i] = ec._poly_mul(cof, det_inv)
        return inv

    def _d(self, poly, k):
        names = self.metric.chart.names
        return ec._expand_poly(ec.differentiate(ec._poly_to_expr(poly), names[k]))

    @cached_property
    def _christoffel_polys(self):
        n = self.metric.n
        ginv = self.inverse
        dg = [[[self._d(self._g_polys[i][j], k) for k in range(n)] for j in range(n)] for i in range(n)]
        half = Fraction(1, 2)
        out = [[[None] * n for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                lowered = []
                for l in range(n):
                    t = ec._poly_add(ec._poly_add(dg[j][l][i], dg[i][l][j]),
                                     ec._poly_scale(dg[i][j][l], Fraction(-1)))
                    lowered.append(t)
                for k in range(n):
                    acc: dict = {}
                    for l in range(n):
                        if ginv[k][l] and lowered[l]:
                            acc = ec._poly_add(acc, ec._poly_mul(ginv[k][l], lowered[l]))
                    out[k][i][j] = out[k][j][i] = ec._poly_scale(acc, half)
        return out

    @cached_property
    def christoffel(self):
        G = self._christoffel_polys
        return [[[ec._poly_to_expr(p) for p in row] for row in mat] for mat in G]

    def _riemann_poly(self, l, i, j, k, dG):
        G = self._christoffel_polys
        n = self.metric.n
        acc = ec._poly_add(dG[l][j][k][i], ec._poly_scale(dG[l][i][k][j], Fraction(-1)))
        for m in range(n):
            if G[l][i][m] and G[m][j][k]:
                acc = ec._poly_add(acc, ec._poly_mul(G[l][i][m], G[m][j][k]))
            if G[l][j][m] and G[m][i][k]:
                acc = ec._poly_add(acc, ec._poly_scale(ec._poly_mul(G[l][j][m], G[m][i][k]), Fraction(-1)))
        return acc

    @cached_property
    def _dchristoffel(self):
        n = self.metric.n
        G = self._christoffel_polys
        return [[[[self._d(G[k][i][j], m) if G[k][i][j] else {} for m in range(n)]
                  for j in range(n)] for i in range(n)] for k in range(n)]

    @cached_property
    def riemann(self):
        n = self.metric.n
        dG = self._dchristoffel
        return [[[[ec._poly_to_expr(self._riemann_poly(l, i, j, k, dG)) for k in range(n)]
                  for j in range(n)] for i in range(n)] for l in range(n)]

    @cached_property
    def _ricci_polys(self):
        n = self.metric.n
        dG = self._dchristoffel
        out = [[None] * n for _ in range(n)]
        for j in range(n):
            for k in range(n):
                acc: dict = {}
                for i in range(n):
                    acc = ec._poly_add(acc, self._riemann_poly(i, i, j, k, dG))
                out[j][k] = acc
        return out

    @cached_property
    def ricci(self):
        return [[ec._poly_to_expr(p) for p in row] for row in self._ricci_polys]

    @cached_property
    def _scal_poly(self):
        n = self.metric.n
        acc: dict = {}
        for j in range(n):
            for k in range(n):
                if self.inverse[j][k] and self._ricci_polys[j][k]:
                    acc = ec._poly_add(acc, ec._poly_mul(self.inverse[j][k], self._ricci_polys[j][k]))
        return acc

    @cached_property
    def scal(self) -> Expr:
        return ec._poly_to_expr(self._scal_poly)

    @cached_property
    def schouten(self):
        n = self.metric.n
        c = Fraction(1, 2 * (n - 1))
        out = []
        for i in range(n):
            row = []
            for j in range(n):
                t = ec._poly_add(ec._poly_mul(ec._poly_scale(self._scal_poly, c), self._g_polys[i][j]),
                                 ec._poly_scale(self._ricci_polys[i][j], Fraction(-1)))
                row.append(ec._poly_to_expr(ec._poly_scale(t, Fraction(1, n - 2))))
            out.append(row)
        return out


def curvature(g: ChartMetric) -> CurvatureBundle:
    bundle = CurvatureBundle(g)
    bundle.symbolic  # raises on an identically singular metric
    return bundle


# ---------------------------------------------------------------------------
# fields and distributions


class VectorField:
    def __init__(self, chart: Chart, components, bindings=None):
        comps = tuple(as_expr(c) for c in components)
        if len(comps) != chart.dim:
            raise ValueError(f"vector field has {len(comps)} components, chart has {chart.dim}")
        self.chart = chart
        self.components = comps
        self.bindings = dict(bindings or {})

    @cached_property
    def _jet_eval(self):
        return JetEvaluator(self.components, self.chart, self.bindings, order=2)

    def jet(self, x, order: int = 1) -> Jet:
        return self._jet_eval(x, order)

    def at(self, x) -> np.ndarray:
        return self._jet_eval(x, 0).v

    @classmethod
    def coordinate(cls, chart: Chart, name_or_index) -> "VectorField":
        k = chart.index(name_or_index) if isinstance(name_or_index, str) else int(name_or_index)
        return cls(chart, [ec.ONE if i == k else ec.ZERO for i in range(chart.dim)])

    def __repr__(self):
        return f"VectorField({', '.join(map(ec.to_source, self.components))})"


class OneForm(VectorField):
    def __repr__(self):
        return f"OneForm({', '.join(map(ec.to_source, self.components))})"


class Distribution:
    """Span of vector fields given by generators; rank is the generator count."""

    def __init__(self, generators):
        gens = list(generators)
        charts = {id(g.chart) for g in gens}
        self.generators = gens
        self.chart = gens[0].chart if gens else None
        self.rank = len(gens)

    @cached_property
    def _jet_eval(self):
        comps = [[gen.components[i] for gen in self.generators] for i in range(self.chart.dim)]
        bindings = {}
        for gen in self.generators:
            bindings.update(gen.bindings)
        return JetEvaluator(comps, self.chart, bindings, order=2)

    def jet(self, x, order: int = 1) -> Jet:
        """Jet of the n x k generator matrix."""
        return self._jet_eval(x, order)

    def matrix(self, x) -> np.ndarray:
        if self.rank == 0:
            return np.zeros((0 if self.chart is None else self.chart.dim, 0))
        return self._jet_eval(x, 0).v

    @classmethod
    def coordinate(cls, chart: Chart, names) -> "Distribution":
        return cls([VectorField.coordinate(chart, nm) for nm in names])


def _points(g: ChartMetric, samples: int, seed, points):
    if points is not None:
        return np.atleast_2d(np.asarray(points, dtype=float))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return g.sample(rng, samples)


def _regular(L: Distribution, x, rep: CheckReport):
    V = L.matrix(x)
    if numeric_rank(V) < L.rank:
        rep.singular(x, "generator rank drop")
        return None
    return V


def covariant_derivative_at(g: ChartMetric, X: VectorField, Y: VectorField, x) -> np.ndarray:
    pc = g.curvature_at(x)
    xv = X.at(x)
    yj = Y.jet(x, 1)
    return yj.d @ xv + pc.gamma_along(xv) @ yj.v


def covariant_derivative(g: ChartMetric, X: VectorField, Y: VectorField) -> VectorField:
    """nabla_X Y as a symbolic vector field (needs the symbolic Christoffel symbols)."""
    gam = curvature(g).christoffel
    n = g.n
    names = g.chart.names
    comps = []
    for k in range(n):
        terms = [X.components[i] * ec.differentiate(Y.components[k], names[i]) for i in range(n)]
        terms += [gam[k][i][j] * X.components[i] * Y.components[j]
                  for i in range(n) for j in range(n) if gam[k][i][j] != ec.ZERO]
        comps.append(ec.expand(ec.Add(tuple(terms))) if terms else ec.ZERO)
    return VectorField(g.chart, comps, {**X.bindings, **Y.bindings})


def lie_bracket_at(X: VectorField, Y: VectorField, x) -> np.ndarray:
    xj, yj = X.jet(x, 1), Y.jet(x, 1)
    return yj.d @ xj.v - xj.d @ yj.v


def check_distribution_parallel(g: ChartMetric, L: Distribution, samples: int = 64, seed=0,
                                tol: float = DEFAULT_TOL, points=None) -> CheckReport:
    pts = _points(g, samples, seed, points)
    rep = CheckReport("distribution_parallel", len(pts), tol)
    for x in pts:
        V = _regular(L, x, rep)
        if V is None:
            continue
        pc = g.curvature_at(x)
        Kj = L.jet(x, 1)
        worst = 0.0
        for a in range(g.n):
            nab = Kj.d[:, :, a] + pc.christoffel[:, a, :] @ V
            for c in range(L.rank):
                worst = max(worst, span_residual(V, nab[:, c]))
        rep.record(x, worst)
    return rep


def _image_check(name, g, L, tensor_of, samples, seed, tol, points):
    pts = _points(g, samples, seed, points)
    rep = CheckReport(name, len(pts), tol)
    for x in pts:
        V = _regular(L, x, rep) if L.rank else np.zeros((g.n, 0))
        if V is None:
            continue
        pc = g.curvature_at(x)
        img = pc.ginv @ tensor_of(pc)
        worst = max(span_residual(V, img[:, i]) for i in range(g.n))
        rep.record(x, worst)
    return rep


def check_ricci_image(g, L, samples=64, seed=0, tol=DEFAULT_TOL, points=None) -> CheckReport:
    """Ric(TM) inside L: every raised column of Ric lies in span(L)."""
    return _image_check("ricci_image", g, L, lambda pc: pc.ricci, samples, seed, tol, points)


def check_schouten_image(g, L, samples=64, seed=0, tol=DEFAULT_TOL, points=None) -> CheckReport:
    return _image_check("schouten_image", g, L, lambda pc: pc.schouten, samples, seed, tol, points)


def check_integrable(g, L, samples=64, seed=0, tol=DEFAULT_TOL, points=None) -> CheckReport:
    pts = _points(g, samples, seed, points)
    rep = CheckReport("integrable", len(pts), tol)
    for x in pts:
        V = _regular(L, x, rep)
        if V is None:
            continue
        Kj = L.jet(x, 1)
        worst = 0.0
        for i, j in itertools.combinations(range(L.rank), 2):
            br = Kj.d[:, j, :] @ V[:, i] - Kj.d[:, i, :] @ V[:, j]
            worst = max(worst, span_residual(V, br))
        rep.record(x, worst)
    return rep


def scalar_curvature_report(g, samples=64, seed=0, tol=1e-6, points=None) -> CheckReport:
    pts = _points(g, samples, seed, points)
    rep = CheckReport("scal_zero", len(pts), tol)
    for x in pts:
        rep.record(x, abs(g.curvature_at(x).scal))
    return rep


def is_totally_lightlike(g: ChartMetric, L: Distribution, points, tol=1e-9) -> bool:
    for x in points:
        V = L.matrix(x)
        G = V.T @ g.matrix(x) @ V
        if np.max(np.abs(G), initial=0.0) > tol:
            return False
    return True


# ---------------------------------------------------------------------------
# conformal change


def transformed_christoffel(g: ChartMetric, sigma, x) -> np.ndarray:
    """Christoffel symbols of exp(2 sigma) g from the Levi-Civita transformation formula."""
    pc = g.curvature_at(x)
    ds = g.scalar_jet(as_expr(sigma), x, 1).d
    grad = pc.ginv @ ds
    n = g.n
    eye = np.eye(n)
    return (pc.christoffel + np.einsum("ki,j->kij", eye, ds) + np.einsum("kj,i->kij", eye, ds)
            - np.einsum("ij,k->kij", pc.g, grad))


def levi_civita_transform(g: ChartMetric, sigma, A: VectorField, B: VectorField, x) -> np.ndarray:
    """nabla~_B A = nabla_B A + dsigma(B) A + dsigma(A) B - g(A, B) grad sigma."""
    pc = g.curvature_at(x)
    ds = g.scalar_jet(as_expr(sigma), x, 1).d
    a, b = A.at(x), B.at(x)
    return (covariant_derivative_at(g, B, A, x) + (ds @ b) * a + (ds @ a) * b
            - (a @ pc.g @ b) * (pc.ginv @ ds))


# ---------------------------------------------------------------------------
# vector parallel transport


class TransportError(RuntimeError):
    pass


def _signature_guard(g: ChartMetric):
    def check(x):
        if not g.has_signature_at(x):
            raise TransportError(f"metric leaves signature {g.signature} at {np.round(x, 12).tolist()}")
        if not g.chart.contains(x, tol=1e-9):
            raise TransportError(f"curve leaves the chart box at {np.round(x, 12).tolist()}")
    return check


def parallel_transport_vector(g: ChartMetric, curve: Curve, v0, step: float = DEFAULT_STEP) -> np.ndarray:
    """Solve v' + Gamma(gamma', v) = 0 by fixed-step RK4 and return v(1)."""
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (g.n,):
        raise ValueError("initial vector has wrong length")

    def gen(x, vel):
        return g.curvature_at(x).gamma_along(vel)

    return linear_rk4(curve, gen, v0, step, check=_signature_guard(g))


def transport_matrix(g: ChartMetric, curve: Curve, step: float = DEFAULT_STEP) -> np.ndarray:
    def gen(x, vel):
        return g.curvature_at(x).gamma_along(vel)

    return linear_rk4(curve, gen, np.eye(g.n), step, check=_signature_guard(g))


# ---------------------------------------------------------------------------
# Poincare-lemma potential


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


class Potential:
    """sigma with sigma(base) = 0 and d sigma = theta along the slice coordinates.

    Values come from line integrals along axis-parallel polylines from the
    base point; coordinates outside the slice are the leaf parameters and are
    taken from the evaluation point.
    """

    def __init__(self, chart: Chart, theta_fn, base, slice_idx):
        self.chart = chart
        self._theta = theta_fn
        self.base = np.asarray(base, dtype=float)
        self.slice_idx = list(slice_idx)

    def path_integral(self, x, order) -> float:
        x = np.asarray(x, dtype=float)
        cur = x.copy()
        cur[self.slice_idx] = self.base[self.slice_idx]
        total = 0.0
        for k in order:
            a, b = cur[k], x[k]
            if a != b:
                ts = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
                vals = []
                for t in ts:
                    y = cur.copy()
                    y[k] = t
                    vals.append(self._theta(y)[k])
                total += 0.5 * (b - a) * float(np.dot(_GL_WEIGHTS, vals))
            cur[k] = b
            if not self.chart.contains(cur, tol=1e-12):
                raise OutOfBoundsError(f"integration path leaves the chart box at {cur.tolist()}")
        return total

    def __call__(self, x) -> float:
        if not self.chart.contains(x, tol=1e-12):
            raise OutOfBoundsError(f"point {list(map(float, x))} is outside the chart box")
        return self.path_integral(x, self.slice_idx)


def poincare_potential(theta: OneForm, base, slice_coords=None, samples: int = 16, seed=0,
                       closed_tol: float = 1e-8, path_tol: float = 1e-6) -> Potential:
    chart = theta.chart
    names = chart.names
    slice_coords = list(names) if slice_coords is None else list(slice_coords)
    idx = [chart.index(c) for c in slice_coords]
    base = np.asarray(base, dtype=float)
    if not chart.contains(base):
        raise OutOfBoundsError("base point outside the chart box")
    curl = []
    for a, b in itertools.combinations(idx, 2):
        curl.append(ec.differentiate(theta.components[b], names[a]) - ec.differentiate(theta.components[a], names[b]))
    rng = np.random.default_rng(seed)
    pts = chart.sample(rng, samples)
    if curl:
        fcurl = ec.compile_exprs(curl, chart, theta.bindings)
        for x in pts:
            r = np.max(np.abs(fcurl(x)))
            if r > closed_tol:
                raise ClosednessError(f"d theta = {r:.3e} != 0 at {x.tolist()}")
    ftheta = ec.compile_exprs(theta.components, chart, theta.bindings)
    pot = Potential(chart, ftheta, base, idx)
    for x in pts[: max(2, samples // 4)]:
        fwd = pot.path_integral(x, idx)
        bwd = pot.path_integral(x, idx[::-1])
        if abs(fwd - bwd) > path_tol * max(1.0, abs(fwd)):
            raise ClosednessError(f"path dependence {abs(fwd - bwd):.3e} at {x.tolist()}")
    return pot
