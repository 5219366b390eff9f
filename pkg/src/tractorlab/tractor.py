"""Standard tractors in a metric gauge.

A tractor in the gauge g is a triple (alpha, Y, beta); as a vector it is laid
out as (alpha, Y^1..Y^n, beta).  The bundle metric is

    <t1, t2> = alpha1 beta2 + alpha2 beta1 + g(Y1, Y2),

with Gram matrix G = [[0, 0, 1], [0, g, 0], [1, 0, 0]], and the normal
connection is

    nabla_X (alpha, Y, beta) = (X(alpha) + K(X, Y),
                                nabla_X Y + alpha X - beta K(X)^#,
                                X(beta) - g(X, Y)).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import exprcore as ec
from .curves import DEFAULT_STEP, Curve, linear_rk4, rectangle_loop
from .exprcore import JetEvaluator, as_expr
from .geometry import (ChartMetric, Distribution, RankDeficiencyError, _points,
                       _signature_guard, is_totally_lightlike)
from .jets import Jet, jeinsum, stack
from .linalg import SVD_CUTOFF, column_basis, nullspace, numeric_rank, span_residual
from .parallel import parallel_map
from .reports import CheckReport

LIGHTLIKE_TOL = 1e-9


class GaugeMismatchError(ValueError):
    pass


class NotLightlikeError(ValueError):
    pass


class InconsistentInputError(ValueError):
    pass


def _same_gauge(a: ChartMetric, b: ChartMetric) -> bool:
    return a is b


def gram_matrix(g: ChartMetric, x) -> np.ndarray:
    n = g.n
    G = np.zeros((n + 2, n + 2))
    G[0, -1] = G[-1, 0] = 1.0
    G[1:-1, 1:-1] = g.matrix(x)
    return G


@dataclass
class Tractor:
    """A tractor value at a point, in the splitting of its gauge."""

    alpha: float
    Y: np.ndarray
    beta: float
    gauge: ChartMetric
    point: np.ndarray | None = None

    def __post_init__(self):
        self.alpha = float(self.alpha)
        self.beta = float(self.beta)
        self.Y = np.asarray(self.Y, dtype=float).reshape(-1)
        if self.Y.size != self.gauge.n:
            raise ValueError(f"Y has {self.Y.size} components, gauge dimension is {self.gauge.n}")
        if self.point is not None:
            self.point = np.asarray(self.point, dtype=float)

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate(([self.alpha], self.Y, [self.beta]))

    @classmethod
    def from_vector(cls, v, gauge, point=None) -> "Tractor":
        v = np.asarray(v, dtype=float)
        return cls(v[0], v[1:-1], v[-1], gauge, point)

    def _check(self, other: "Tractor"):
        if not _same_gauge(self.gauge, other.gauge):
            raise GaugeMismatchError("tractors are expressed in different gauges")

    def __add__(self, other: "Tractor") -> "Tractor":
        self._check(other)
        return Tractor.from_vector(self.vector + other.vector, self.gauge, self.point)

    def __sub__(self, other: "Tractor") -> "Tractor":
        self._check(other)
        return Tractor.from_vector(self.vector - other.vector, self.gauge, self.point)

    def __mul__(self, c: float) -> "Tractor":
        return Tractor.from_vector(self.vector * float(c), self.gauge, self.point)

    __rmul__ = __mul__


def tractor_inner(u: Tractor, v: Tractor, point=None) -> float:
    """alpha1 beta2 + alpha2 beta1 + g(Y1, Y2)."""
    u._check(v)
    x = point if point is not None else (u.point if u.point is not None else v.point)
    if x is None:
        raise ValueError("a base point is needed to evaluate g(Y1, Y2)")
    return u.alpha * v.beta + v.alpha * u.beta + float(u.Y @ u.gauge.matrix(x) @ v.Y)


# ---------------------------------------------------------------------------
# tractor fields


class TractorFieldBase:
    gauge: ChartMetric

    def jet(self, x, order: int = 1) -> Jet:
        raise NotImplementedError

    def vector_at(self, x) -> np.ndarray:
        return self.jet(x, 0).v

    def at(self, x) -> Tractor:
        return Tractor.from_vector(self.vector_at(x), self.gauge, x)


class TractorField(TractorFieldBase):
    """(alpha, Y, beta) with expression components in the gauge ``gauge``."""

    def __init__(self, alpha, Y, beta, gauge: ChartMetric):
        Y = Y.components if hasattr(Y, "components") else Y
        comps = [as_expr(alpha)] + [as_expr(c) for c in Y] + [as_expr(beta)]
        if len(comps) != gauge.n + 2:
            raise ValueError("Y must have one component per coordinate")
        self.components = tuple(comps)
        self.gauge = gauge
        self._eval = None

    @classmethod
    def from_vector_field(cls, X, gauge):
        return cls(0, X, 0, gauge)

    @classmethod
    def s_plus(cls, gauge):
        return cls(0, [0] * gauge.n, 1, gauge)

    @classmethod
    def s_minus(cls, gauge):
        return cls(1, [0] * gauge.n, 0, gauge)

    def jet(self, x, order: int = 1) -> Jet:
        if self._eval is None:
            self._eval = JetEvaluator(self.components, self.gauge.chart, self.gauge.bindings, order=2)
        return self._eval(x, order)

    def __repr__(self):
        return "TractorField(" + ", ".join(map(ec.to_source, self.components)) + ")"


class NumericTractorField(TractorFieldBase):
    """Tractor field given by a function of the point; derivatives by central differences."""

    def __init__(self, fn, gauge: ChartMetric, step: float = 1e-5):
        self.fn = fn
        self.gauge = gauge
        self.step = step

    def jet(self, x, order: int = 1) -> Jet:
        x = np.asarray(x, dtype=float)
        v = np.asarray(self.fn(x), dtype=float)
        if order == 0:
            return Jet(v)
        n = x.size
        d = np.empty(v.shape + (n,))
        for a in range(n):
            e = np.zeros(n)
            e[a] = self.step
            d[..., a] = (np.asarray(self.fn(x + e)) - np.asarray(self.fn(x - e))) / (2 * self.step)
        return Jet(v, d)


class GaugedTractorField(TractorFieldBase):
    """A tractor field re-expressed in the gauge exp(2 sigma) g."""

    def __init__(self, field_: TractorFieldBase, sigma):
        self.source = field_
        self.sigma = as_expr(sigma)
        self.gauge = field_.gauge.rescaled(self.sigma)

    def jet(self, x, order: int = 1) -> Jet:
        phi = gauge_matrix_jet(self.source.gauge, self.sigma, x, order)
        return jeinsum("ab,b->a", phi, self.source.jet(x, order))


# ---------------------------------------------------------------------------
# connection


def connection_matrix(g: ChartMetric, x, X) -> np.ndarray:
    """A_X with nabla_X t = X(t) + A_X t in the splitting of g."""
    pc = g.curvature_at(x)
    X = np.asarray(X, dtype=float)
    n = g.n
    A = np.zeros((n + 2, n + 2))
    KX = pc.schouten @ X
    A[0, 1:-1] = KX
    A[1:-1, 0] = X
    A[1:-1, 1:-1] = pc.gamma_along(X)
    A[1:-1, -1] = -pc.ginv @ KX
    A[-1, 1:-1] = -(pc.g @ X)
    return A


def _vec_at(X, x):
    return X.at(x) if hasattr(X, "at") else np.asarray(X, dtype=float)


class ConnectedTractorField(TractorFieldBase):
    """nabla_X t as a pointwise-evaluable field."""

    def __init__(self, g: ChartMetric, X, t: TractorFieldBase):
        if not _same_gauge(g, t.gauge):
            raise GaugeMismatchError("tractor field and metric are in different gauges")
        self.gauge = g
        self.X = X
        self.t = t

    def vector_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        X = _vec_at(self.X, x)
        tj = self.t.jet(x, 1)
        return tj.d @ X + connection_matrix(self.gauge, x, X) @ tj.v

    def jet(self, x, order: int = 1) -> Jet:
        if order > 0:
            raise NotImplementedError("derivatives of nabla t are not provided")
        return Jet(self.vector_at(x))


def tractor_connection_apply(g: ChartMetric, X, t: TractorFieldBase) -> ConnectedTractorField:
    return ConnectedTractorField(g, X, t)


def metricity_residual(g: ChartMetric, x, X, a, B, c, D) -> float:
    """X<t,s> - <nabla_X t, s> - <t, nabla_X s> for affine fields t = a + B x, s = c + D x."""
    x = np.asarray(x, dtype=float)
    gj = g.jet(x, 1)
    n = g.n
    G = gram_matrix(g, x)
    dG = np.zeros((n + 2, n + 2))
    dG[1:-1, 1:-1] = gj.d @ X
    t, s = a + B @ x, c + D @ x
    dt, ds = B @ X, D @ X
    A = connection_matrix(g, x, X)
    lhs = t @ dG @ s + dt @ G @ s + t @ G @ ds
    rhs = (dt + A @ t) @ G @ s + t @ G @ (ds + A @ s)
    scale = max(1.0, abs(lhs))
    return abs(lhs - rhs) / scale


def check_metricity(g: ChartMetric, samples: int = 64, seed=0, tol: float = 1e-8, points=None) -> CheckReport:
    pts = _points(g, samples, seed, points)
    rng = np.random.default_rng(seed if not isinstance(seed, np.random.Generator) else None)
    rep = CheckReport("tractor_metricity", len(pts), tol)
    m = g.n + 2
    for x in pts:
        X = rng.standard_normal(g.n)
        a, c = rng.standard_normal(m), rng.standard_normal(m)
        B, D = rng.standard_normal((m, g.n)), rng.standard_normal((m, g.n))
        rep.record(x, metricity_residual(g, x, X, a, B, c, D))
    return rep


# ---------------------------------------------------------------------------
# gauge change


def gauge_matrix_jet(g: ChartMetric, sigma, x, order: int = 0) -> Jet:
    """Jet of the matrix taking gauge-g components to gauge exp(2 sigma) g components."""
    n = g.n
    s = g.scalar_jet(as_expr(sigma), x, order + 1)
    ds = s.grad()
    ginv = g.jet(x, order).inv()
    grad = jeinsum("ij,j->i", ginv, ds)
    norm2 = jeinsum("i,i->", ds, grad)
    s0 = s.truncate(order)
    e_minus = (-s0).exp()
    e_plus = s0.exp()
    zero = Jet.const(0.0, n, order)

    rows = []
    # alpha row: e^-s (1, -ds, -|grad|^2 / 2)
    rows.append([e_minus] + [-(e_minus * ds[k]) for k in range(n)] + [-0.5 * (e_minus * norm2)])
    for i in range(n):
        row = [zero] + [e_minus if k == i else zero for k in range(n)] + [e_minus * grad[i]]
        rows.append(row)
    rows.append([zero] * (n + 1) + [e_plus])
    return stack([stack(row) for row in rows])


def gauge_matrix(g: ChartMetric, sigma, x) -> np.ndarray:
    return gauge_matrix_jet(g, sigma, x, 0).v


def gauge_transform(t, sigma):
    """Re-express a tractor (value or field) of gauge g in the gauge exp(2 sigma) g."""
    if isinstance(t, Tractor):
        if t.point is None:
            raise ValueError("a tractor value needs its base point to change gauge")
        phi = gauge_matrix(t.gauge, sigma, t.point)
        return Tractor.from_vector(phi @ t.vector, t.gauge.rescaled(sigma), t.point)
    return GaugedTractorField(t, sigma)


# ---------------------------------------------------------------------------
# transport and holonomy


def _generator(g):
    return lambda x, v: connection_matrix(g, x, v)


def tractor_transport_matrix(g: ChartMetric, curve: Curve, step: float = DEFAULT_STEP) -> np.ndarray:
    return linear_rk4(curve, _generator(g), np.eye(g.n + 2), step, check=_signature_guard(g))


def tractor_parallel_transport(g: ChartMetric, curve: Curve, t0: Tractor, step: float = DEFAULT_STEP) -> Tractor:
    if not _same_gauge(g, t0.gauge):
        raise GaugeMismatchError("initial tractor is not in the gauge of the metric")
    y = linear_rk4(curve, _generator(g), t0.vector, step, check=_signature_guard(g))
    return Tractor.from_vector(y, g, curve.end)


@dataclass
class HolonomySample:
    base: np.ndarray
    gauge: ChartMetric
    loops: list = field(default_factory=list)  # (loop_id, matrix)

    def gram_residual(self, M) -> float:
        G = gram_matrix(self.gauge, self.base)
        return float(np.max(np.abs(M.T @ G @ M - G)))

    @property
    def max_gram_residual(self) -> float:
        return max((self.gram_residual(M) for _, M in self.loops), default=0.0)

    def max_identity_deviation(self) -> float:
        return max((float(np.max(np.abs(M - np.eye(M.shape[0])))) for _, M in self.loops), default=0.0)

    def to_records(self) -> list:
        return [{"loop_id": lid, "matrix": M.reshape(-1).tolist(), "gram_residual": self.gram_residual(M)}
                for lid, M in self.loops]


def default_loops(base, n: int, eps: float = 0.1) -> list:
    return [rectangle_loop(base, i, j, eps) for i, j in itertools.combinations(range(n), 2)]


def holonomy_sample(g: ChartMetric, base, loops=None, eps: float = 0.1, step: float = DEFAULT_STEP,
                    threads: int | None = None) -> HolonomySample:
    base = np.asarray(base, dtype=float)
    loops = default_loops(base, g.n, eps) if loops is None else list(loops)
    for c in loops:
        if np.linalg.norm(c.start - base) > 1e-12 or not c.is_closed():
            raise ValueError(f"loop {c.label} is not closed at the base point")
    mats = parallel_map(lambda c: tractor_transport_matrix(g, c, step), loops, threads)
    return HolonomySample(base, g, [(c.label, M) for c, M in zip(loops, mats)])


# ---------------------------------------------------------------------------
# distributions


class TractorDistribution:
    def __init__(self, generators, gauge: ChartMetric | None = None):
        gens = list(generators)
        self.gauge = gauge if gauge is not None else gens[0].gauge
        for h in gens:
            if not _same_gauge(h.gauge, self.gauge):
                raise GaugeMismatchError("generators are in different gauges")
        self.generators = gens

    @property
    def rank(self) -> int:
        return len(self.generators)

    def jet(self, x, order: int = 1) -> Jet:
        return stack([h.jet(x, order) for h in self.generators], axis=1)

    def matrix(self, x) -> np.ndarray:
        return np.stack([h.vector_at(x) for h in self.generators], axis=1)

    def lightlike_residual(self, x) -> float:
        V = self.matrix(x)
        return float(np.max(np.abs(V.T @ gram_matrix(self.gauge, x) @ V)))


class PointwiseTractorDistribution(TractorDistribution):
    """Distribution given by a pointwise basis function; smooth frames via projection.

    A smooth local frame near x0 is V(x) = P(x) V(x0) with P(x) the orthogonal
    projector onto the span at x, differentiated by central differences.
    """

    def __init__(self, basis_fn, gauge: ChartMetric, rank: int, step: float = 1e-5):
        self.basis_fn = basis_fn
        self.gauge = gauge
        self._rank = rank
        self.step = step
        self.generators = []

    @property
    def rank(self) -> int:
        return self._rank

    def matrix(self, x) -> np.ndarray:
        return np.asarray(self.basis_fn(np.asarray(x, dtype=float)), dtype=float)

    def jet(self, x, order: int = 1) -> Jet:
        x = np.asarray(x, dtype=float)
        V0 = self.matrix(x)
        if order == 0:
            return Jet(V0)
        Q0 = column_basis(V0)

        def frame(y):
            Q = column_basis(self.matrix(y))
            if Q.shape[1] != Q0.shape[1]:
                raise RankDeficiencyError(f"rank changes near {x.tolist()}")
            return Q @ (Q.T @ Q0)

        n = x.size
        d = np.empty(Q0.shape + (n,))
        for a in range(n):
            e = np.zeros(n)
            e[a] = self.step
            d[..., a] = (frame(x + e) - frame(x - e)) / (2 * self.step)
        return Jet(Q0, d)


def verify_invariant_lightlike(g: ChartMetric, H: TractorDistribution, samples: int = 64, seed=0,
                               tol: float = 1e-7, points=None, lightlike_tol: float = LIGHTLIKE_TOL,
                               orthogonal: bool = False) -> CheckReport:
    """Check that nabla H lies in H (and H is totally lightlike) at sample points.

    With ``orthogonal=True`` the complement H^perp is checked as well.
    """
    if not _same_gauge(g, H.gauge):
        raise GaugeMismatchError("distribution is not in the gauge of the metric")
    pts = _points(g, samples, seed, points)
    rep = CheckReport("invariant_lightlike", len(pts), tol)
    worst_light = 0.0
    worst_perp = 0.0
    for x in pts:
        V = H.matrix(x)
        if numeric_rank(V) < H.rank:
            rep.singular(x, "generator rank drop")
            continue
        light = float(np.max(np.abs(V.T @ gram_matrix(g, x) @ V))) / max(1.0, float(np.max(np.abs(V))) ** 2)
        worst_light = max(worst_light, light)
        Hj = H.jet(x, 1)
        worst = 0.0
        for a in range(g.n):
            X = np.zeros(g.n)
            X[a] = 1.0
            nab = Hj.d[:, :, a] + connection_matrix(g, x, X) @ Hj.v
            for c in range(nab.shape[1]):
                worst = max(worst, span_residual(Hj.v, nab[:, c]))
        if light >= lightlike_tol:
            rep.failures.append((x.tolist(), light))
        rep.record(x, worst)
        if orthogonal:
            perp = orthogonal_complement(H)
            r = verify_invariant_lightlike_perp(g, perp, x)
            worst_perp = max(worst_perp, r)
            rep.record(x, r)
    rep.details["max_lightlike_residual"] = worst_light
    if orthogonal:
        rep.details["max_perp_residual"] = worst_perp
    return rep


def orthogonal_complement(H: TractorDistribution) -> PointwiseTractorDistribution:
    g = H.gauge
    m = g.n + 2

    def basis(x):
        return nullspace(H.matrix(x).T @ gram_matrix(g, x))

    return PointwiseTractorDistribution(basis, g, m - H.rank)


def verify_invariant_lightlike_perp(g, perp: PointwiseTractorDistribution, x) -> float:
    Pj = perp.jet(x, 1)
    worst = 0.0
    for a in range(g.n):
        X = np.zeros(g.n)
        X[a] = 1.0
        nab = Pj.d[:, :, a] + connection_matrix(g, x, X) @ Pj.v
        for c in range(nab.shape[1]):
            worst = max(worst, span_residual(Pj.v, nab[:, c]))
    return worst


def build_H_from_L(g: ChartMetric, L: Distribution, samples: int = 16, seed=0) -> TractorDistribution:
    """H = (0, L, 0) + span(0, 0, 1) in the splitting of g."""
    if L.rank:
        pts = _points(g, samples, seed, None)
        if not is_totally_lightlike(g, L, pts, tol=LIGHTLIKE_TOL):
            raise NotLightlikeError("L is not totally lightlike with respect to g")
    gens = [TractorField.from_vector_field(X, g) for X in L.generators]
    gens.append(TractorField.s_plus(g))
    return TractorDistribution(gens, g)


@dataclass
class ProjectedDistribution:
    """pr_TM(H cap I_-^perp), evaluated pointwise."""

    H: TractorDistribution
    rank: int
    singular_points: list
    ranks: dict

    def basis_at(self, x) -> np.ndarray:
        return _project_point(self.H, x)

    def matrix(self, x) -> np.ndarray:
        return self.basis_at(x)


def _project_point(H: TractorDistribution, x) -> np.ndarray:
    V = H.matrix(x)
    beta = V[-1:, :]
    if np.max(np.abs(beta)) <= SVD_CUTOFF * max(1.0, float(np.max(np.abs(V)))):
        C = np.eye(V.shape[1])
    else:
        C = nullspace(beta)
    Y = (V @ C)[1:-1, :]
    return column_basis(Y)


def project_L_from_H(g: ChartMetric, H: TractorDistribution, samples: int = 64, seed=0, points=None):
    """Returns (ProjectedDistribution, singular point list)."""
    pts = _points(g, samples, seed, points)
    k = H.rank
    singular, ranks = [], {}
    for x in pts:
        r = _project_point(H, x).shape[1]
        ranks[tuple(np.round(x, 12))] = r
        if r != k - 1:
            singular.append({"point": x.tolist(), "rank": r})
    if len(singular) == len(pts):
        raise InconsistentInputError("H cap I_-^perp never has rank k - 1 on the samples")
    proj = ProjectedDistribution(H, k - 1, singular, ranks)
    return proj, singular
