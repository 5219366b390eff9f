"""Real Clifford modules for split and near-split signatures up to (4, 4).

Signature (p, q) has p timelike directions (metric sign -1) followed by q
spacelike ones (sign +1).  Clifford multiplication obeys x.x = -|x|^2, so a
timelike gamma squares to +Id and a spacelike one to -Id.  All matrices have
entries in {-1, 0, 1}.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .linalg import exact_nullspace, nullspace, numeric_rank, rref

KERNEL_CUTOFF = 1e-10
SUPPORTED_MAX = 4

_S1 = np.array([[0, 1], [1, 0]], dtype=np.int64)
_S3 = np.array([[1, 0], [0, -1]], dtype=np.int64)
_J = np.array([[0, 1], [-1, 0]], dtype=np.int64)


class UnsupportedSignatureError(ValueError):
    pass


class ZeroSpinorError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CliffordRep:
    p: int
    q: int
    gammas: tuple          # n integer N x N matrices, timelike first
    extension: tuple = ()  # indices of the two gammas added by the last extension step

    @property
    def signature(self):
        return (self.p, self.q)

    @property
    def n(self) -> int:
        return self.p + self.q

    @property
    def N(self) -> int:
        return self.gammas[0].shape[0] if self.gammas else 1

    @property
    def eps(self) -> np.ndarray:
        """Metric signs of the frame directions."""
        return np.array([-1] * self.p + [1] * self.q, dtype=np.int64)

    @property
    def metric(self) -> np.ndarray:
        return np.diag(self.eps)

    def gamma_stack(self) -> np.ndarray:
        return np.stack(self.gammas).astype(float)

    def relation_residual(self) -> int:
        """Largest integer deviation from g_a g_b + g_b g_a = -2 eps_a delta_ab Id."""
        N = self.N
        eye = np.eye(N, dtype=np.int64)
        worst = 0
        for a, b in itertools.product(range(self.n), repeat=2):
            lhs = self.gammas[a] @ self.gammas[b] + self.gammas[b] @ self.gammas[a]
            rhs = -2 * self.eps[a] * eye if a == b else 0 * eye
            worst = max(worst, int(np.max(np.abs(lhs - rhs))))
        return worst

    # chirality -----------------------------------------------------------

    @property
    def volume(self) -> np.ndarray:
        out = np.eye(self.N, dtype=np.int64)
        for gm in self.gammas:
            out = out @ gm
        return out

    @property
    def has_chirality(self) -> bool:
        if self.n % 2:
            return False
        w = self.volume
        return bool(np.array_equal(w @ w, np.eye(self.N, dtype=np.int64)))

    def projector(self, sign: int) -> np.ndarray:
        """(Id + sign * omega) / 2, the projector onto the sign-half spinors."""
        if not self.has_chirality:
            raise ValueError(f"signature {self.signature} has no real half-spinors")
        return (np.eye(self.N) + sign * self.volume) / 2

    def half_basis(self, sign: int) -> list:
        """Rational basis (lists of Fractions) of the sign-half spinor space."""
        if not self.has_chirality:
            raise ValueError(f"signature {self.signature} has no real half-spinors")
        P2 = np.eye(self.N, dtype=np.int64) + sign * self.volume  # twice the projector
        _, pivots = rref(P2.tolist())
        return [[Fraction(int(P2[i, c])) for i in range(self.N)] for c in pivots]

    # pairing -------------------------------------------------------------

    @property
    def pairing(self) -> "SpinorPairing":
        return _pairing(self)

    def to_json(self) -> str:
        return json.dumps({"signature": [self.p, self.q], "N": self.N,
                           "eps": self.eps.tolist(),
                           "gammas": [gm.tolist() for gm in self.gammas]})


@dataclass(frozen=True, eq=False)
class SpinorPairing:
    gram: np.ndarray
    kind: str                    # "symmetric" | "symplectic"
    factors: tuple = field(default=())  # gamma indices whose product is the Gram matrix

    def __call__(self, v, w):
        return _bilinear(self.gram, v, w)


@dataclass(frozen=True)
class Spinor:
    components: tuple
    chirality: str = "full"   # "full" | "+" | "-"


def _bilinear(C, v, w):
    v = _components(v)
    w = _components(w)
    if _is_exact(v) and _is_exact(w):
        return sum(Fraction(v[i]) * int(C[i, j]) * Fraction(w[j])
                   for i in range(len(v)) for j in range(len(w)) if C[i, j])
    return float(np.asarray(v, dtype=float) @ C @ np.asarray(w, dtype=float))


# ---------------------------------------------------------------------------
# construction


def _extend(rep: CliffordRep) -> CliffordRep:
    N = rep.N
    eye = np.eye(N, dtype=np.int64)
    lifted = [np.kron(_S3, gm) for gm in rep.gammas]
    A = np.kron(_S1, eye)   # squares to +Id: timelike
    B = np.kron(_J, eye)    # squares to -Id: spacelike
    timelike = lifted[:rep.p] + [A]
    spacelike = lifted[rep.p:] + [B]
    return CliffordRep(rep.p + 1, rep.q + 1, tuple(timelike + spacelike), (rep.p, rep.n + 1))


@lru_cache(maxsize=None)
def build_clifford(p: int, q: int) -> CliffordRep:
    if p < 0 or q < 0 or p > SUPPORTED_MAX or q > SUPPORTED_MAX or p - q not in (0, 1):
        raise UnsupportedSignatureError(
            f"signature ({p},{q}) unsupported; need p - q in {{0, 1}} and p, q <= {SUPPORTED_MAX}")
    if q == p:
        rep = CliffordRep(0, 0, ())
    else:
        rep = CliffordRep(1, 0, (np.array([[1]], dtype=np.int64),))
    while rep.q < q:
        rep = _extend(rep)
    return rep


def extend(rep: CliffordRep) -> CliffordRep:
    """Representation of signature (p+1, q+1) on twice the spinor space."""
    return _extend(rep)


@lru_cache(maxsize=None)
def _pairing(rep: CliffordRep) -> SpinorPairing:
    n, N = rep.n, rep.N
    gens = [rep.gammas[a] @ rep.gammas[b] for a, b in itertools.combinations(range(n), 2)]
    fallback = None
    halves = [rep.projector(1), rep.projector(-1)] if rep.has_chirality else []
    for size in range(n + 1):
        for subset in itertools.combinations(range(n), size):
            C = np.eye(N, dtype=np.int64)
            for a in subset:
                C = C @ rep.gammas[a]
            if np.array_equal(C.T, C):
                kind = "symmetric"
            elif np.array_equal(C.T, -C):
                kind = "symplectic"
            else:
                continue
            if any(np.any(C @ X + X.T @ C) for X in gens):
                continue
            if round(abs(np.linalg.det(C.astype(float)))) == 0:
                continue
            cand = SpinorPairing(C, kind, subset)
            if not halves:
                return cand
            if all(numeric_rank(P.T @ C @ P) == round(np.trace(P)) for P in halves):
                return cand
            fallback = fallback or cand
    if fallback is None:
        raise RuntimeError(f"no invariant pairing found for {rep.signature}")
    return fallback


# ---------------------------------------------------------------------------
# multiplication, kernels, purity


def _components(v):
    if isinstance(v, Spinor):
        return v.components
    return v


def _is_exact(v) -> bool:
    return all(isinstance(c, (int, Fraction, np.integer)) for c in np.asarray(v, dtype=object).ravel())


def clifford_matrix(rep: CliffordRep, x) -> np.ndarray:
    """The matrix sum_a x_a gamma_a."""
    x = np.asarray(x)
    if x.shape != (rep.n,):
        raise ValueError(f"vector must have {rep.n} components")
    if x.dtype == object:
        out = np.zeros((rep.N, rep.N), dtype=object)
        for a in range(rep.n):
            out = out + rep.gammas[a].astype(object) * x[a]
        return out
    return np.tensordot(x, rep.gamma_stack(), 1)


def clifford_mul(rep: CliffordRep, x, v):
    """x . v = sum_a x_a gamma_a v (exact for integer or Fraction inputs)."""
    comps = _components(v)
    x_arr = np.asarray(x, dtype=object if _is_exact(x) else float)
    v_arr = np.asarray(comps, dtype=object if _is_exact(comps) else float)
    if x_arr.dtype == object or v_arr.dtype == object:
        x_arr = np.asarray(x_arr, dtype=object)
        v_arr = np.asarray(v_arr, dtype=object)
    out = clifford_matrix(rep, x_arr) @ v_arr
    if isinstance(v, Spinor):
        flip = {"+": "-", "-": "+", "full": "full"}[v.chirality]
        return Spinor(tuple(out.tolist()), flip if rep.n % 2 == 0 else "full")
    return out


def kernel_map(rep: CliffordRep, v) -> np.ndarray:
    """N x n matrix whose columns are gamma_a v."""
    v = np.asarray(_components(v))
    return np.stack([gm @ v for gm in rep.gammas], axis=1)


def spinor_kernel(rep: CliffordRep, v):
    """Basis (columns) of {x : x . v = 0} in frame components.

    Rational inputs give an exact basis (lists of Fractions); float inputs an
    orthonormal numeric basis (SVD cutoff 1e-10).
    """
    comps = _components(v)
    if _is_exact(comps):
        vv = [Fraction(c) for c in comps]
        if all(c == 0 for c in vv):
            raise ZeroSpinorError("the zero spinor has no well-defined kernel")
        M = [[sum(int(rep.gammas[a][i, j]) * vv[j] for j in range(rep.N) if rep.gammas[a][i, j])
              for a in range(rep.n)] for i in range(rep.N)]
        return exact_nullspace(M, rep.n)
    arr = np.asarray(comps, dtype=float)
    if not np.any(arr):
        raise ZeroSpinorError("the zero spinor has no well-defined kernel")
    return nullspace(kernel_map(rep, arr), KERNEL_CUTOFF)


def kernel_dimension(rep: CliffordRep, v) -> int:
    ker = spinor_kernel(rep, v)
    return len(ker) if isinstance(ker, list) else ker.shape[1]


def is_pure(rep: CliffordRep, v) -> bool:
    return kernel_dimension(rep, v) == min(rep.p, rep.q)


def spinor_pairing(rep: CliffordRep, v, w):
    return rep.pairing(v, w)


def kernel_is_lightlike(rep: CliffordRep, basis) -> bool:
    eps = rep.eps
    if isinstance(basis, list):
        return all(sum(int(eps[a]) * x[a] * y[a] for a in range(rep.n)) == 0
                   for x in basis for y in basis)
    G = basis.T @ np.diag(eps.astype(float)) @ basis
    return bool(np.max(np.abs(G), initial=0.0) < 1e-9)


# ---------------------------------------------------------------------------
# rational sampling helpers


def random_rational_spinor(rep: CliffordRep, rng: np.random.Generator, chirality: str = "full",
                           bound: int = 5) -> list:
    """Nonzero spinor with small integer coordinates in a rational basis of the chosen space."""
    if chirality == "full":
        basis = [[Fraction(int(i == j)) for j in range(rep.N)] for i in range(rep.N)]
    else:
        basis = rep.half_basis(1 if chirality == "+" else -1)
    while True:
        coef = rng.integers(-bound, bound + 1, size=len(basis))
        if np.any(coef):
            return [sum(int(c) * b[i] for c, b in zip(coef, basis)) for i in range(rep.N)]


def random_null_spinor(rep: CliffordRep, rng: np.random.Generator, chirality: str = "full",
                       bound: int = 5) -> list:
    """Nonzero rational spinor with <v, v> = 0 in the chosen space."""
    if rep.pairing.kind == "symplectic":
        return random_rational_spinor(rep, rng, chirality, bound)
    C = rep.pairing.gram
    basis = ([[Fraction(int(i == j)) for j in range(rep.N)] for i in range(rep.N)]
             if chirality == "full" else rep.half_basis(1 if chirality == "+" else -1))
    Q = lambda a: _bilinear(C, a, a)
    B = lambda a, b: _bilinear(C, a, b)
    w = next((b for b in basis if Q(b) == 0), None)
    if w is None:
        for b1, b2 in itertools.combinations(basis, 2):
            qa, qb, bab = Q(b1), Q(b2), B(b1, b2)
            disc = bab * bab - qa * qb
            root = _rational_sqrt(disc)
            if root is not None and qb != 0:
                t = (-bab + root) / qb
                w = [x + t * y for x, y in zip(b1, b2)]
                break
    if w is None:
        raise RuntimeError("no rational null vector found in the spinor space")
    for _ in range(1000):
        u = random_rational_spinor(rep, rng, chirality, bound)
        buw = B(u, w)
        if Q(u) == 0:
            return u
        if buw == 0:
            continue
        t = -Q(u) / (2 * buw)
        v = [a + t * b for a, b in zip(u, w)]
        if any(v):
            return v
    return list(w)


def _rational_sqrt(x: Fraction):
    x = Fraction(x)
    if x < 0:
        return None
    from math import isqrt
    n, d = x.numerator, x.denominator
    rn, rd = isqrt(n), isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None
