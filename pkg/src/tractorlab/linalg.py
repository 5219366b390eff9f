"""Rank, nullspace and span-membership helpers, exact and floating."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

SVD_CUTOFF = 1e-9


def rref(rows):
    """Reduced row echelon form over the rationals; returns (matrix, pivot columns)."""
    m = [[Fraction(x) for x in row] for row in rows]
    if not m:
        return m, []
    n_rows, n_cols = len(m), len(m[0])
    pivots = []
    r = 0
    for c in range(n_cols):
        piv = next((i for i in range(r, n_rows) if m[i][c] != 0), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        p = m[r][c]
        m[r] = [x / p for x in m[r]]
        for i in range(n_rows):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == n_rows:
            break
    return m, pivots


def exact_rank(rows) -> int:
    return len(rref(rows)[1])


def exact_nullspace(rows, n_cols: int | None = None) -> list:
    """Basis of {x : A x = 0} over the rationals, as lists of Fractions."""
    if not rows:
        return [[Fraction(int(i == j)) for j in range(n_cols)] for i in range(n_cols)]
    m, pivots = rref(rows)
    n_cols = len(m[0])
    free = [c for c in range(n_cols) if c not in pivots]
    basis = []
    for f in free:
        x = [Fraction(0)] * n_cols
        x[f] = Fraction(1)
        for r, c in enumerate(pivots):
            x[c] = -m[r][f]
        basis.append(x)
    return basis


def numeric_rank(a, cutoff: float = SVD_CUTOFF) -> int:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s > cutoff * s[0]))


def nullspace(a, cutoff: float = SVD_CUTOFF) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical nullspace of ``a``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    n = a.shape[1]
    if a.size == 0:
        return np.eye(n)
    u, s, vt = np.linalg.svd(a)
    if s.size == 0 or s[0] == 0:
        return np.eye(n)
    rank = int(np.sum(s > cutoff * s[0]))
    return vt[rank:].T.copy()


def column_basis(a, cutoff: float = SVD_CUTOFF) -> np.ndarray:
    """Orthonormal basis of the column span of ``a``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.size == 0 or a.shape[1] == 0:
        return np.zeros((a.shape[0], 0))
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    if s[0] == 0:
        return np.zeros((a.shape[0], 0))
    rank = int(np.sum(s > cutoff * s[0]))
    return u[:, :rank]


def span_residual(basis, v) -> float:
    """Relative least-squares residual of ``v`` against the column span of ``basis``.

    The residual is divided by max(1, |v|) so that it is scale-aware for large
    vectors and absolute for small ones.
    """
    v = np.asarray(v, dtype=float)
    q = column_basis(basis)
    r = v - q @ (q.T @ v) if q.shape[1] else v
    return float(np.linalg.norm(r) / max(1.0, np.linalg.norm(v)))


def span_distance(a, b) -> float:
    """Symmetric subspace distance between two column spans (0 iff equal)."""
    qa, qb = column_basis(a), column_basis(b)
    if qa.shape[1] != qb.shape[1]:
        return float("inf")
    if qa.shape[1] == 0:
        return 0.0
    pa = qa @ qa.T
    pb = qb @ qb.T
    return float(np.linalg.norm(pa - pb, 2))


def inertia(sym, tol: float = 1e-9) -> tuple:
    """(negatives, zeros, positives) of a symmetric matrix, zero band relative to its scale."""
    w = np.linalg.eigvalsh(np.asarray(sym, dtype=float))
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    neg = int(np.sum(w < -tol * scale))
    pos = int(np.sum(w > tol * scale))
    return neg, len(w) - neg - pos, pos
