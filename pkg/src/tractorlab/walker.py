"""Walker normal forms and the pure-parallel-spinor normal form.

A Walker metric on coordinates (x_1..x_r, u_1..u_{n-2r}, y_1..y_r) has block
matrix [[0, 0, Id_r], [0, A, H], [Id_r, H^T, B]] with A and H independent of
the x's; L = span(d/dx_1..d/dx_r) is then parallel and totally lightlike.

The pure normal form on (x_1..x_m, y_1..y_m[, z]) is

    h = -dz^2 - 4 sum dx_i dy_i - 4 sum g_ij dy_i dy_j,

with sum_i d g_ik / d x_i = 0 for every k; the z term is dropped in the
split signature (m, m).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import exprcore as ec
from .exprcore import Chart, Expr, as_expr
from .geometry import (ChartMetric, Distribution, VectorField, _points, check_distribution_parallel,
                       check_ricci_image, scalar_curvature_report)
from .linalg import inertia, nullspace
from .reports import CheckReport
from .spintractor import ExprFrame, SpinorField, spin_jets, _omega

PARALLEL_TOL = 1e-7


class WalkerConstraintError(ValueError):
    pass


class NoParallelSpinorError(RuntimeError):
    pass


def _matrix(rows, shape, name):
    rows = [[as_expr(e) for e in row] for row in rows] if rows else []
    if shape[0] == 0 or shape[1] == 0:
        return [[] for _ in range(shape[0])]
    if len(rows) != shape[0] or any(len(r) != shape[1] for r in rows):
        raise WalkerConstraintError(f"{name} must be {shape[0]} x {shape[1]}")
    return rows


def _check_symmetric(M, name):
    for i in range(len(M)):
        for j in range(i + 1, len(M)):
            if M[i][j] != M[j][i] and not ec.is_zero(M[i][j] - M[j][i]):
                raise WalkerConstraintError(f"{name} is not symmetric at ({i + 1},{j + 1})")


@dataclass
class WalkerSpec:
    n: int
    r: int
    A: list
    H: list
    B: list
    names: tuple | None = None
    bounds: dict = field(default_factory=dict)

    def chart(self) -> Chart:
        names = self.names
        if names is None:
            names = (tuple(f"x{i + 1}" for i in range(self.r))
                     + tuple(f"u{i + 1}" for i in range(self.n - 2 * self.r))
                     + tuple(f"y{i + 1}" for i in range(self.r)))
        return Chart(tuple(names)).with_bounds(self.bounds) if self.bounds else Chart(tuple(names))


@dataclass
class WalkerResult:
    metric: ChartMetric
    L: Distribution
    spec: WalkerSpec


def build_walker(spec: WalkerSpec, name: str | None = None) -> WalkerResult:
    n, r = spec.n, spec.r
    s = n - 2 * r
    if r < 1 or s < 0:
        raise WalkerConstraintError(f"need 1 <= r <= n/2, got n={n}, r={r}")
    A = _matrix(spec.A, (s, s), "A")
    H = _matrix(spec.H, (s, r), "H")
    B = _matrix(spec.B, (r, r), "B")
    _check_symmetric(A, "A")
    _check_symmetric(B, "B")
    chart = spec.chart()
    if chart.dim != n:
        raise WalkerConstraintError(f"chart has {chart.dim} coordinates, expected {n}")
    xs = set(chart.names[:r])
    for label, M in (("A", A), ("H", H)):
        for i, row in enumerate(M):
            for j, e in enumerate(row):
                bad = ec.free_coordinates(e) & xs
                if bad:
                    raise WalkerConstraintError(
                        f"{label}({i + 1},{j + 1}) depends on {sorted(bad)[0]}, which is not allowed")
    entries = {}
    for i in range(r):
        entries[(i, r + s + i)] = ec.ONE
        for j in range(r):
            if B[i][j] != ec.ZERO:
                entries[(r + s + i, r + s + j)] = B[i][j]
    for a in range(s):
        for b in range(s):
            if A[a][b] != ec.ZERO:
                entries[(r + a, r + b)] = A[a][b]
        for j in range(r):
            if H[a][j] != ec.ZERO:
                entries[(r + a, r + s + j)] = H[a][j]
    base = chart.box().mean(axis=1)
    if s:
        Anum = np.array([[ec.evaluate(e, chart.point(base)) for e in row] for row in A])
        neg, zero, pos = inertia(Anum)
        if zero:
            raise WalkerConstraintError("A is degenerate at the chart centre")
    else:
        neg = pos = 0
    g = ChartMetric.from_entries(chart, entries, (r + neg, r + pos), name=name)
    L = Distribution.coordinate(chart, chart.names[:r])
    return WalkerResult(g, L, spec)


# ---------------------------------------------------------------------------
# pure normal form


@dataclass
class PureWalkerSpec:
    m: int
    g: list                  # symmetric m x m expressions
    split: bool = False      # signature (m, m) without the z coordinate
    bounds: dict = field(default_factory=dict)

    @property
    def names(self) -> tuple:
        names = tuple(f"x{i + 1}" for i in range(self.m)) + tuple(f"y{i + 1}" for i in range(self.m))
        return names if self.split else names + ("z",)

    def chart(self) -> Chart:
        c = Chart(self.names)
        return c.with_bounds(self.bounds) if self.bounds else c

    @property
    def signature(self):
        return (self.m, self.m) if self.split else (self.m + 1, self.m)


@dataclass
class PureWalkerResult:
    metric: ChartMetric
    frame: ExprFrame
    spinor: SpinorField
    L: Distribution
    spec: PureWalkerSpec
    parallel_residual: float


def validate_pure_spec(spec: PureWalkerSpec) -> list:
    m = spec.m
    G = _matrix(spec.g, (m, m), "g")
    _check_symmetric(G, "g")
    chart = spec.chart()
    allowed = set(chart.names)
    for row in G:
        for e in row:
            extra = ec.free_coordinates(e) - allowed
            if extra:
                raise WalkerConstraintError(f"g depends on unknown coordinate {sorted(extra)[0]}")
    for k in range(m):
        div = ec.Add(tuple(ec.differentiate(G[i][k], f"x{i + 1}") for i in range(m)))
        if not ec.is_zero(div):
            raise WalkerConstraintError(
                f"divergence condition fails for k={k + 1}: sum_i d g_i{k + 1}/d x_i = {ec.to_source(ec.expand(div))}")
    return G


def pure_walker_metric(spec: PureWalkerSpec, name: str | None = None) -> ChartMetric:
    G = validate_pure_spec(spec)
    m = spec.m
    chart = spec.chart()
    entries = {}
    four = ec.Const(ec.Fraction(-4))
    for i in range(m):
        entries[(i, m + i)] = ec.Const(ec.Fraction(-2))
        for j in range(m):
            if G[i][j] != ec.ZERO:
                entries[(m + i, m + j)] = ec.simplify(ec.Mul((four, G[i][j])))
    if not spec.split:
        entries[(2 * m, 2 * m)] = ec.Const(ec.Fraction(-1))
    return ChartMetric.from_entries(chart, entries, spec.signature, name=name)


def adapted_frame(spec: PureWalkerSpec, g: ChartMetric) -> ExprFrame:
    """Timelike (X_i + Y_i)/2 [, d/dz], spacelike (X_i - Y_i)/2 with X_i = d/dx_i,
    Y_i = d/dy_i - sum_k g_ik d/dx_k."""
    m = spec.m
    G = _matrix(spec.g, (m, m), "g")
    n = g.n
    half = ec.Const(ec.Fraction(1, 2))

    def X(i):
        v = [ec.ZERO] * n
        v[i] = ec.ONE
        return v

    def Y(i):
        v = [ec.ZERO] * n
        v[m + i] = ec.ONE
        for k in range(m):
            v[k] = ec.simplify(ec.Neg(G[i][k]))
        return v

    def comb(a, b, sign):
        return [ec.simplify(ec.Mul((half, ec.Add((ai, bi if sign > 0 else ec.Neg(bi)))))) for ai, bi in zip(a, b)]

    timelike = [comb(X(i), Y(i), 1) for i in range(m)]
    if not spec.split:
        z = [ec.ZERO] * n
        z[2 * m] = ec.ONE
        timelike.append(z)
    spacelike = [comb(X(i), Y(i), -1) for i in range(m)]
    cols = timelike + spacelike
    eps = [-1] * len(timelike) + [1] * len(spacelike)
    frame = ExprFrame(g, cols, eps)
    base = g.chart.box().mean(axis=1)
    if np.linalg.det(frame.matrix(base)) < 0:
        cols[-1] = [ec.simplify(ec.Neg(e)) for e in cols[-1]]
        frame = ExprFrame(g, cols, eps)
    return frame


def _snap(c: float):
    """Nearby small rational when within round-off, else the float itself."""
    r = ec.Fraction(float(c)).limit_denominator(64)
    return r if abs(float(r) - c) < 1e-9 else float(c)


def build_pure_walker(spec: PureWalkerSpec, samples: int = 12, seed=0, name: str | None = None,
                      tol: float = PARALLEL_TOL) -> PureWalkerResult:
    """Metric, adapted frame and a certified constant parallel pure spinor."""
    g = pure_walker_metric(spec, name)
    frame = adapted_frame(spec, g)
    rep = frame.rep
    m = spec.m
    pts = _points(g, samples, seed, None)
    blocks = []
    for x in pts:
        Om, _ = _omega(g, frame, x, 0)
        blocks.extend(Om.v)
    par = nullspace(np.vstack(blocks), 1e-10)
    if par.shape[1] == 0:
        raise NoParallelSpinorError("no constant-component parallel spinor in the adapted frame")
    G = rep.gamma_stack()
    nt = len(frame.eps) - m  # index of the first spacelike vector
    ann = np.vstack([(G[i] + G[nt + i]) @ par for i in range(m)])
    coef = nullspace(ann, 1e-10)
    cand = par @ coef[:, 0] if coef.shape[1] else par[:, 0]
    cand = cand / np.max(np.abs(cand))
    phi = SpinorField([_snap(c) for c in cand], frame, label="parallel")
    worst = max(float(np.max(np.abs(spin_jets(g, frame, phi, x, 0).nabla.v))) for x in pts)
    if worst >= tol:
        raise NoParallelSpinorError(f"candidate spinor has parallel residual {worst:.3e}")
    L = Distribution.coordinate(g.chart, g.chart.names[:m])
    return PureWalkerResult(g, frame, phi, L, spec, worst)


def validate_ricci_isotropic(g: ChartMetric, L: Distribution, samples: int = 64, seed=0,
                             tol: float = 1e-7, scal_tol: float = 1e-6, points=None) -> CheckReport:
    pts = _points(g, samples, seed, points)
    par = check_distribution_parallel(g, L, points=pts, tol=tol)
    ric = check_ricci_image(g, L, points=pts, tol=tol)
    scal = scalar_curvature_report(g, points=pts, tol=scal_tol)
    rep = CheckReport("ricci_isotropic", len(pts), tol)
    for sub in (par, ric, scal):
        rep.failures.extend(sub.failures)
        rep.singular_points.extend(p for p in sub.singular_points if p not in rep.singular_points)
    rep.max_residual = max(par.max_residual, ric.max_residual)
    rep.details = {"distribution_parallel": par.to_dict(), "ricci_image": ric.to_dict(),
                   "scal": scal.to_dict()}
    return rep
