"""Spinor fields, Dirac and twistor operators, and spin tractors in a metric gauge.

Spinor fields are component vectors with respect to a pseudo-orthonormal
frame e_1..e_n (timelike first).  The spin connection is

    nabla_k phi = d_k phi + 1/2 sum_{a<b} eps_a eps_b g(nabla_k e_a, e_b) g_a g_b phi,

and D phi = sum_a eps_a e_a . nabla_{e_a} phi.  A spin tractor in the gauge g
is a pair (phi, phi') with connection

    nabla_X (phi, phi') = (nabla_X phi - X . phi',  1/2 K(X) . phi + nabla_X phi').

Inside the spinor module of signature (p+1, q+1) the pair is the vector
(2 phi', phi): the lower block is Ann(e_+) and the upper block Ann(e_-).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import exprcore as ec
from .clifford import CliffordRep, build_clifford, extend
from .exprcore import JetEvaluator, as_expr
from .geometry import ChartMetric, VectorField, _points
from .jets import Jet, jeinsum, stack
from .linalg import column_basis, nullspace, numeric_rank, span_distance
from .reports import CheckReport
from .tractor import PointwiseTractorDistribution, gram_matrix

FRAME_PIVOT_TOL = 1e-9
TWISTOR_TOL = 1e-6


class FrameBreakdownError(RuntimeError):
    def __init__(self, point, detail=""):
        self.point = np.asarray(point, dtype=float).tolist()
        super().__init__(f"frame breaks down at {self.point}{': ' + detail if detail else ''}")


class NotTwistorError(ValueError):
    pass


class ZeroSpinTractorError(ValueError):
    pass


# ---------------------------------------------------------------------------
# frames


class Frame:
    """Pseudo-orthonormal frame; ``jet(x)`` gives the n x n matrix with columns e_a."""

    metric: ChartMetric
    eps: np.ndarray

    def jet(self, x, order: int = 2) -> Jet:
        raise NotImplementedError

    def matrix(self, x) -> np.ndarray:
        return self.jet(x, 0).v

    @property
    def signature(self):
        return (int(np.sum(self.eps < 0)), int(np.sum(self.eps > 0)))

    @property
    def rep(self) -> CliffordRep:
        return build_clifford(*self.signature)

    def orthonormality_residual(self, x) -> float:
        F = self.matrix(x)
        return float(np.max(np.abs(F.T @ self.metric.matrix(x) @ F - np.diag(self.eps))))

    def check(self, points, tol: float = 1e-9) -> CheckReport:
        rep = CheckReport("frame_orthonormal", len(points), tol)
        for x in points:
            try:
                F = self.matrix(x)
            except FrameBreakdownError as exc:
                rep.singular(x, str(exc))
                continue
            r = self.orthonormality_residual(x)
            if np.linalg.det(F) <= 0:
                r = max(r, 1.0)
            rep.record(x, r)
        return rep


class GramSchmidtFrame(Frame):
    """Pseudo-Gram-Schmidt applied to constant eigenvectors of g at a base point."""

    def __init__(self, g: ChartMetric, base):
        self.metric = g
        self.base = np.asarray(base, dtype=float)
        w, U = np.linalg.eigh(g.matrix(self.base))
        order = np.argsort(w)  # negative eigenvalues (timelike) first
        self.seed = U[:, order]
        self.eps = np.where(w[order] < 0, -1, 1)
        if (int(np.sum(self.eps < 0)), int(np.sum(self.eps > 0))) != g.signature:
            raise FrameBreakdownError(self.base, "metric signature differs from the declared one")
        self._flip = False
        if np.linalg.det(self.matrix(self.base)) < 0:
            self._flip = True

    def jet(self, x, order: int = 2) -> Jet:
        x = np.asarray(x, dtype=float)
        gj = self.metric.jet(x, order)
        cols = []
        for a in range(self.metric.n):
            w = Jet.const(self.seed[:, a], x.size, order)
            for b, e in enumerate(cols):
                c = jeinsum("i,ij,j->", self.seed[:, a], gj, e)
                w = w - (c * e) * float(self.eps[b])
            nrm = jeinsum("i,ij,j->", w, gj, w) * float(self.eps[a])
            if nrm.v < FRAME_PIVOT_TOL:
                raise FrameBreakdownError(x, f"pivot {a} has g(v, v) = {float(self.eps[a] * nrm.v):.3e}")
            cols.append(w * nrm.sqrt().reciprocal())
        if self._flip:
            cols[-1] = -cols[-1]
        return stack(cols, axis=1)


class ExprFrame(Frame):
    """Frame with expression entries (columns are the frame vectors)."""

    def __init__(self, g: ChartMetric, columns, eps):
        self.metric = g
        self.eps = np.asarray(eps, dtype=int)
        n = g.n
        cols = [c.components if hasattr(c, "components") else c for c in columns]
        self.entries = [[as_expr(cols[a][i]) for a in range(n)] for i in range(n)]
        self._eval = JetEvaluator(self.entries, g.chart, g.bindings, order=2)

    def jet(self, x, order: int = 2) -> Jet:
        return self._eval(x, order)


class ScaledFrame(Frame):
    """exp(-sigma) e_a: pseudo-orthonormal for exp(2 sigma) g."""

    def __init__(self, frame: Frame, sigma):
        self.source = frame
        self.sigma = as_expr(sigma)
        self.metric = frame.metric.rescaled(self.sigma)
        self.eps = frame.eps

    def jet(self, x, order: int = 2) -> Jet:
        s = self.source.metric.scalar_jet(self.sigma, x, order)
        return (-s).exp() * self.source.jet(x, order)


def build_frame(g: ChartMetric, base=None) -> Frame:
    """Pseudo-orthonormal frame on the chart, timelike vectors first.

    Diagonal metrics get the rescaled coordinate frame (smooth expression
    entries are not needed: the Gram-Schmidt jets are exact); otherwise the
    frame is Gram-Schmidt from eigenvectors of g at ``base``.
    """
    if base is None:
        base = g.chart.box().mean(axis=1)
    return GramSchmidtFrame(g, base)


# ---------------------------------------------------------------------------
# spinor fields


class SpinorFieldBase:
    metric: ChartMetric
    frame: Frame

    @property
    def rep(self) -> CliffordRep:
        return self.frame.rep

    def jet(self, x, order: int = 2) -> Jet:
        raise NotImplementedError

    def at(self, x) -> np.ndarray:
        return self.jet(x, 0).v


class SpinorField(SpinorFieldBase):
    def __init__(self, components, frame: Frame, label: str = ""):
        self.frame = frame
        self.metric = frame.metric
        comps = [as_expr(c) for c in components]
        if len(comps) != frame.rep.N:
            raise ValueError(f"expected {frame.rep.N} spinor components, got {len(comps)}")
        self.components = tuple(comps)
        self.label = label
        self._eval = JetEvaluator(self.components, self.metric.chart, self.metric.bindings, order=2)

    @classmethod
    def constant(cls, v, frame: Frame, label: str = "") -> "SpinorField":
        return cls(list(v), frame, label)

    def jet(self, x, order: int = 2) -> Jet:
        return self._eval(x, order)

    def __repr__(self):
        return f"SpinorField({self.label or ', '.join(map(ec.to_source, self.components))})"


class ScaledSpinorField(SpinorFieldBase):
    """exp(sigma / 2) phi read in the frame exp(-sigma) e_a of exp(2 sigma) g."""

    def __init__(self, phi: SpinorFieldBase, sigma):
        self.source = phi
        self.sigma = as_expr(sigma)
        self.frame = ScaledFrame(phi.frame, self.sigma)
        self.metric = self.frame.metric

    def jet(self, x, order: int = 2) -> Jet:
        s = self.source.metric.scalar_jet(self.sigma, x, order)
        return (s * 0.5).exp() * self.source.jet(x, order)


class CliffordProductField(SpinorFieldBase):
    """Y . phi for a vector field Y (coordinate components)."""

    def __init__(self, Y: VectorField, phi: SpinorFieldBase):
        self.Y = Y
        self.phi = phi
        self.frame = phi.frame
        self.metric = phi.metric

    def jet(self, x, order: int = 2) -> Jet:
        F = self.frame.jet(x, order)
        c = jeinsum("ak,k->a", F.inv(), self.Y.jet(x, order))
        return jeinsum("a,aij,j->i", c, self.rep.gamma_stack(), self.phi.jet(x, order))


def conformal_rescale_spinor(phi: SpinorFieldBase, sigma) -> SpinorFieldBase:
    sigma = ec.simplify(as_expr(sigma))
    if sigma == ec.ZERO:
        return phi
    return ScaledSpinorField(phi, sigma)


def _consistent(g, frame, phi=None):
    if frame.metric is not g:
        raise ValueError("frame belongs to a different gauge")
    if phi is not None and phi.frame is not frame:
        raise ValueError("spinor field is expressed in a different frame")


# ---------------------------------------------------------------------------
# spin connection


@dataclass
class SpinJets:
    """Everything at one point: frame, connection forms, nabla phi and D phi."""

    x: np.ndarray
    F: np.ndarray
    Finv: np.ndarray
    Omega: Jet        # [k, i, j], order 1 (or 0)
    phi: Jet          # [i]
    nabla: Jet        # [k, i]: nabla_{d_k} phi
    dirac: Jet        # [i]


def _omega(g: ChartMetric, frame: Frame, x, order: int) -> tuple:
    """Spin connection matrices Omega_k as a jet of the given order, plus the frame jet."""
    rep = frame.rep
    pc = g.curvature_at(x)
    F = frame.jet(x, order + 1)
    gam = Jet(pc.christoffel, pc.dchristoffel if order >= 1 else None)
    gj = g.jet(x, order)
    Ft = F.truncate(order)
    nab_e = F.grad().transpose(0, 2, 1) + jeinsum("ckd,da->cka", gam, Ft)  # [c, k, a]
    w = jeinsum("cd,cka,db->kab", gj, nab_e, Ft)
    E = _bivector_table(rep)
    Om = jeinsum("kab,abij->kij", w, E) * 0.25
    return Om, F


_BIVECTORS: dict = {}


def _bivector_table(rep: CliffordRep) -> np.ndarray:
    key = id(rep)
    E = _BIVECTORS.get(key)
    if E is None:
        G = rep.gamma_stack()
        eps = rep.eps.astype(float)
        E = np.einsum("a,b,aij,bjk->abik", eps, eps, G, G)
        _BIVECTORS[key] = E
    return E


def spin_jets(g: ChartMetric, frame: Frame, phi: SpinorFieldBase, x, order: int = 1) -> SpinJets:
    """nabla phi and D phi as jets of ``order`` (0 or 1) at x."""
    _consistent(g, frame, phi)
    x = np.asarray(x, dtype=float)
    Om, F = _omega(g, frame, x, order)
    ph = phi.jet(x, order + 1)
    nabla = ph.grad().transpose(1, 0) + jeinsum("kij,j->ki", Om, ph.truncate(order))
    Ft = F.truncate(order)
    eg = frame.rep.gamma_stack() * frame.rep.eps[:, None, None]
    D = jeinsum("aij,ka,kj->i", eg, Ft, nabla)
    Fv = F.v
    return SpinJets(x, Fv, np.linalg.inv(Fv), Om, ph.truncate(order), nabla, D)


def spinor_covariant_derivative(g, frame, phi, X, x) -> np.ndarray:
    """nabla_X phi at x (X a VectorField or coordinate vector)."""
    sj = spin_jets(g, frame, phi, x, 0)
    Xv = X.at(x) if hasattr(X, "at") else np.asarray(X, dtype=float)
    return Xv @ sj.nabla.v


def dirac(g, frame, phi, x) -> np.ndarray:
    return spin_jets(g, frame, phi, x, 0).dirac.v


def clifford_coord(rep: CliffordRep, Finv, X, v) -> np.ndarray:
    """X . v for a coordinate vector X."""
    c = Finv @ X
    return np.tensordot(c, rep.gamma_stack(), 1) @ v


def twistor_residual(g, frame, phi, x) -> float:
    sj = spin_jets(g, frame, phi, x, 0)
    rep = frame.rep
    n = g.n
    worst = 0.0
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        r = sj.nabla.v[k] + clifford_coord(rep, sj.Finv, e, sj.dirac.v) / n
        worst = max(worst, float(np.linalg.norm(r)))
    return worst


def check_twistor(g, frame, phi, samples: int = 64, seed=0, tol: float = TWISTOR_TOL, points=None) -> CheckReport:
    pts = _points(g, samples, seed, points)
    rep = CheckReport("twistor", len(pts), tol)
    for x in pts:
        try:
            rep.record(x, twistor_residual(g, frame, phi, x))
        except FrameBreakdownError as exc:
            rep.singular(x, str(exc))
    return rep


def check_parallel_spinor(g, frame, phi, samples=64, seed=0, tol=1e-7, points=None) -> CheckReport:
    pts = _points(g, samples, seed, points)
    rep = CheckReport("parallel_spinor", len(pts), tol)
    for x in pts:
        rep.record(x, float(np.max(np.abs(spin_jets(g, frame, phi, x, 0).nabla.v))))
    return rep


def ricci_clifford_residual(g, frame, phi, x) -> float:
    """max_k |Ric(d_k)^# . phi|."""
    pc = g.curvature_at(x)
    F = frame.matrix(x)
    Finv = np.linalg.inv(F)
    v = phi.at(x)
    return max(float(np.linalg.norm(clifford_coord(frame.rep, Finv, pc.ginv @ pc.ricci[:, k], v)))
               for k in range(g.n))


def spinor_kernel_coords(frame: Frame, v, x) -> np.ndarray:
    """Basis (coordinate components) of {X : X . v = 0} at x."""
    rep = frame.rep
    M = np.stack([gm @ v for gm in rep.gamma_stack()], axis=1)
    return frame.matrix(x) @ nullspace(M, 1e-10)


# ---------------------------------------------------------------------------
# spin tractors


@dataclass
class SpinTractor:
    phi: np.ndarray
    phi_prime: np.ndarray
    gauge: ChartMetric
    point: np.ndarray

    @property
    def full(self) -> np.ndarray:
        """The vector in the spinor module of signature (p+1, q+1)."""
        return np.concatenate([2 * self.phi_prime, self.phi])


class SpinTractorField:
    """A pair (phi, phi') of spinor quantities; ``pair_jets`` gives both as order-1 jets."""

    def __init__(self, g: ChartMetric, frame: Frame, pair_jets):
        self.gauge = g
        self.frame = frame
        self._pair = pair_jets

    def pair_jets(self, x, order: int = 1):
        return self._pair(np.asarray(x, dtype=float), order)

    def at(self, x) -> SpinTractor:
        a, b = self.pair_jets(x, 0)
        return SpinTractor(a.v, b.v, self.gauge, np.asarray(x, dtype=float))

    @classmethod
    def from_fields(cls, g, frame, phi: SpinorFieldBase, phi_prime: SpinorFieldBase):
        return cls(g, frame, lambda x, order: (phi.jet(x, order), phi_prime.jet(x, order)))


def twistor_to_tractor(g, frame, phi, check: bool = True, samples: int = 16, seed=0,
                       tol: float = TWISTOR_TOL) -> SpinTractorField:
    """phi -> (phi, -(1/n) D phi)."""
    _consistent(g, frame, phi)
    if check:
        rep = check_twistor(g, frame, phi, samples, seed, tol)
        if not rep.passed:
            raise NotTwistorError(f"twistor residual {rep.max_residual:.3e} exceeds {tol}")
    n = g.n

    def pair(x, order):
        sj = spin_jets(g, frame, phi, x, order)
        return sj.phi, sj.dirac * (-1.0 / n)

    return SpinTractorField(g, frame, pair)


def spin_tractor_connection(g, frame, psi: SpinTractorField, x) -> np.ndarray:
    """Array [k, 2, N]: nabla_{d_k} applied to psi = (phi, phi') at x."""
    _consistent(g, frame)
    x = np.asarray(x, dtype=float)
    a, b = psi.pair_jets(x, 1)
    Om, F = _omega(g, frame, x, 0)
    Finv = np.linalg.inv(F.v)
    rep = frame.rep
    pc = g.curvature_at(x)
    G = rep.gamma_stack()
    n = g.n
    out = np.empty((n, 2, rep.N))
    for k in range(n):
        na = a.d[:, k] + Om.v[k] @ a.v
        nb = b.d[:, k] + Om.v[k] @ b.v
        e = np.zeros(n)
        e[k] = 1.0
        Kx = pc.ginv @ pc.schouten[:, k]
        out[k, 0] = na - np.tensordot(Finv @ e, G, 1) @ b.v
        out[k, 1] = 0.5 * np.tensordot(Finv @ Kx, G, 1) @ a.v + nb
    return out


def spin_tractor_connection_apply(g, frame, psi: SpinTractorField, X, x) -> SpinTractor:
    Xv = X.at(x) if hasattr(X, "at") else np.asarray(X, dtype=float)
    arr = np.tensordot(Xv, spin_tractor_connection(g, frame, psi, x), 1)
    return SpinTractor(arr[0], arr[1], g, np.asarray(x, dtype=float))


def spin_tractor_parallel_residual(g, frame, psi, x) -> float:
    arr = spin_tractor_connection(g, frame, psi, x)
    return float(max(np.linalg.norm(arr[k]) for k in range(arr.shape[0])))


def check_spin_tractor_parallel(g, frame, psi, samples=64, seed=0, tol=TWISTOR_TOL, points=None) -> CheckReport:
    pts = _points(g, samples, seed, points)
    rep = CheckReport("spin_tractor_parallel", len(pts), tol)
    for x in pts:
        rep.record(x, spin_tractor_parallel_residual(g, frame, psi, x))
    return rep


# -- tractor Clifford action ------------------------------------------------


def tractor_rep(frame: Frame) -> CliffordRep:
    return extend(frame.rep)


def tractor_clifford_matrix(frame: Frame, x, t) -> np.ndarray:
    """Action of the tractor t = (alpha, Y, beta) (coordinates) on the (p+1, q+1) module."""
    rep = frame.rep
    N = rep.N
    t = np.asarray(t, dtype=float)
    Finv = np.linalg.inv(frame.matrix(x))
    c = Finv @ t[1:-1]
    Y = np.kron(np.diag([1.0, -1.0]), np.tensordot(c, rep.gamma_stack(), 1))
    e_minus = np.kron(np.array([[0.0, 2.0], [0.0, 0.0]]), np.eye(N))
    e_plus = np.kron(np.array([[0.0, 0.0], [-1.0, 0.0]]), np.eye(N))
    return t[0] * e_minus + Y + t[-1] * e_plus


def tractor_times(frame: Frame, x, t, psi: SpinTractor) -> SpinTractor:
    out = tractor_clifford_matrix(frame, x, t) @ psi.full
    N = frame.rep.N
    return SpinTractor(out[N:], out[:N] / 2, psi.gauge, psi.point)


def _kernel_matrix(frame: Frame, x, full: np.ndarray) -> np.ndarray:
    n = frame.metric.n
    cols = []
    for j in range(n + 2):
        t = np.zeros(n + 2)
        t[j] = 1.0
        cols.append(tractor_clifford_matrix(frame, x, t) @ full)
    return np.stack(cols, axis=1)


def tractor_kernel(frame: Frame, psi: SpinTractor) -> np.ndarray:
    full = psi.full
    if not np.any(full):
        raise ZeroSpinTractorError(f"spin tractor vanishes at {psi.point.tolist()}")
    scale = max(1.0, float(np.max(np.abs(full))))
    return nullspace(_kernel_matrix(frame, psi.point, full / scale), 1e-10)


def kernel_distribution(g, frame, psi: SpinTractorField, samples: int = 64, seed=0, points=None):
    """(distribution of ker psi, {point: rank}) over the samples."""
    _consistent(g, frame)
    pts = _points(g, samples, seed, points)
    ranks = {}
    for x in pts:
        ranks[tuple(np.round(x, 12))] = tractor_kernel(frame, psi.at(x)).shape[1]
    values = sorted(set(ranks.values()))
    rank = values[0] if len(values) == 1 else max(ranks.values(), key=list(ranks.values()).count)
    dist = PointwiseTractorDistribution(lambda x: tractor_kernel(frame, psi.at(x)), g, rank)
    return dist, ranks


def contains_s_plus(frame, psi: SpinTractor, tol: float = 1e-8) -> bool:
    from .linalg import span_residual
    K = tractor_kernel(frame, psi)
    s = np.zeros(frame.metric.n + 2)
    s[-1] = 1.0
    return span_residual(K, s) < tol


@dataclass
class DInvariantReport:
    values: list
    max: float
    min: float
    constant: bool
    zero: bool

    def to_dict(self):
        return {"max": self.max, "min": self.min, "constant": self.constant, "zero": self.zero,
                "samples": len(self.values)}


def d_invariant(g, frame, phi, samples: int = 64, seed=0, tol: float = 1e-6, points=None,
                zero_tol: float = 1e-7) -> DInvariantReport:
    """Samples <phi, D phi> over the chart."""
    pts = _points(g, samples, seed, points)
    C = frame.rep.pairing.gram.astype(float)
    vals = []
    for x in pts:
        sj = spin_jets(g, frame, phi, x, 0)
        vals.append(float(sj.phi.v @ C @ sj.dirac.v))
    hi, lo = max(vals), min(vals)
    return DInvariantReport(vals, hi, lo, hi - lo < tol, max(abs(hi), abs(lo)) < zero_tol)
