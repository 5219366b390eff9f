import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tractorlab.clifford import (UnsupportedSignatureError, ZeroSpinorError, build_clifford, clifford_matrix,
                                 clifford_mul, is_pure, kernel_dimension, kernel_is_lightlike, random_null_spinor,
                                 random_rational_spinor, spinor_kernel, spinor_pairing)

SUPPORTED = [(1, 0), (1, 1), (2, 1), (2, 2), (3, 2), (3, 3), (4, 3), (4, 4)]


@pytest.mark.parametrize("sig", SUPPORTED)
def test_relations_exact(sig):
    rep = build_clifford(*sig)
    assert rep.relation_residual() == 0
    eye = np.eye(rep.N, dtype=np.int64)
    for a, ga in enumerate(rep.gammas):
        assert ga.dtype.kind == "i"
        assert np.array_equal(ga @ ga, -rep.eps[a] * eye)  # x.x = -|x|^2
        for b in range(a + 1, rep.n):
            gb = rep.gammas[b]
            assert not np.any(ga @ gb + gb @ ga)


def test_one_one_squares():
    rep = build_clifford(1, 1)
    assert rep.N == 2
    # timelike direction first: its square is +Id, the spacelike square is -Id
    assert list(rep.eps) == [-1, 1]
    assert np.array_equal(rep.gammas[0] @ rep.gammas[0], np.eye(2))
    assert np.array_equal(rep.gammas[1] @ rep.gammas[1], -np.eye(2))


def test_three_three_half_spinors():
    rep = build_clifford(3, 3)
    assert rep.N == 8 and rep.has_chirality
    assert len(rep.half_basis(1)) == 4 and len(rep.half_basis(-1)) == 4


@pytest.mark.parametrize("sig", [(5, 4), (3, 1), (2, 3), (5, 5)])
def test_unsupported(sig):
    with pytest.raises(UnsupportedSignatureError):
        build_clifford(*sig)


def test_json_export_round_trip():
    rep = build_clifford(3, 2)
    data = json.loads(rep.to_json())
    assert data["signature"] == [3, 2]
    assert np.array_equal(np.array(data["gammas"]), rep.gamma_stack())


# --- Clifford multiplication ---------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.sampled_from(SUPPORTED[2:]), st.data())
def test_square_of_vector_exact(sig, data):
    rep = build_clifford(*sig)
    x = data.draw(st.lists(st.integers(-5, 5), min_size=rep.n, max_size=rep.n))
    v = data.draw(st.lists(st.integers(-5, 5), min_size=rep.N, max_size=rep.N))
    norm = sum(int(e) * c * c for e, c in zip(rep.eps, x))
    assert list(clifford_mul(rep, x, clifford_mul(rep, x, v))) == [-norm * c for c in v]


def test_zero_vector_gives_zero():
    rep = build_clifford(3, 2)
    assert not np.any(clifford_mul(rep, [0] * 5, list(range(rep.N))))


def test_chirality_flip():
    rep = build_clifford(2, 2)
    P_plus, P_minus = rep.projector(1), rep.projector(-1)
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = P_plus @ rng.standard_normal(rep.N)
        w = clifford_mul(rep, rng.standard_normal(4), v)
        np.testing.assert_allclose(P_minus @ w, w, atol=1e-12)


# --- kernels and purity -----------------------------------------------------------

@pytest.mark.parametrize("sig,chir", [((2, 2), "+"), ((2, 2), "-"), ((3, 2), "full"), ((3, 3), "+")])
def test_every_spinor_pure(sig, chir):
    rep = build_clifford(*sig)
    rng = np.random.default_rng(1)
    m = min(sig)
    for _ in range(50):
        v = random_rational_spinor(rep, rng, chir)
        ker = spinor_kernel(rep, v)
        assert len(ker) == m
        assert kernel_is_lightlike(rep, ker)


@pytest.mark.parametrize("sig,chir", [((4, 4), "+"), ((4, 4), "-"), ((4, 3), "full")])
def test_purity_iff_null(sig, chir):
    rep = build_clifford(*sig)
    rng = np.random.default_rng(2)
    assert rep.pairing.kind == "symmetric"
    null = random_null_spinor(rep, rng, chir)
    assert spinor_pairing(rep, null, null) == 0
    assert is_pure(rep, null)
    assert kernel_is_lightlike(rep, spinor_kernel(rep, null))
    for _ in range(20):
        v = random_rational_spinor(rep, rng, chir)
        assert is_pure(rep, v) == (spinor_pairing(rep, v, v) == 0)


def test_zero_spinor_rejected():
    rep = build_clifford(2, 2)
    with pytest.raises(ZeroSpinorError):
        spinor_kernel(rep, [0] * rep.N)
    with pytest.raises(ZeroSpinorError):
        is_pure(rep, np.zeros(rep.N))


def test_float_and_exact_kernels_agree():
    rep = build_clifford(3, 2)
    v = random_rational_spinor(rep, np.random.default_rng(3))
    exact = np.array([[float(c) for c in col] for col in spinor_kernel(rep, v)]).T
    num = spinor_kernel(rep, np.array([float(c) for c in v]))
    assert num.shape == exact.shape
    assert np.linalg.matrix_rank(np.hstack([num, exact]), 1e-9) == exact.shape[1]


@pytest.mark.parametrize("sig", [(3, 2), (4, 3)])
def test_kernel_dimension_spin_invariant(sig):
    rep = build_clifford(*sig)
    rng = np.random.default_rng(4)
    for _ in range(10):
        v = random_rational_spinor(rep, rng)
        x, y = rng.integers(-3, 4, rep.n), rng.integers(-3, 4, rep.n)
        if (x * x * rep.eps).sum() == 0 or (y * y * rep.eps).sum() == 0:
            continue
        g = clifford_matrix(rep, x) @ clifford_matrix(rep, y)  # even, invertible
        w = [Fraction(int(c)) for c in g @ np.array([int(c) for c in v], dtype=object)] if all(
            Fraction(c).denominator == 1 for c in v) else None
        if w is None:
            continue
        assert kernel_dimension(rep, w) == kernel_dimension(rep, v)


# --- pairing -------------------------------------------------------------------------

@pytest.mark.parametrize("sig", [(2, 2), (3, 2), (3, 3), (4, 3), (4, 4)])
def test_pairing_invariant_and_nondegenerate(sig):
    rep = build_clifford(*sig)
    C = rep.pairing.gram.astype(np.int64)
    assert round(abs(np.linalg.det(C.astype(float)))) != 0
    for i in range(rep.n):
        for j in range(i + 1, rep.n):
            gij = rep.gammas[i] @ rep.gammas[j]
            assert not np.any(gij.T @ C + C @ gij)
    sym = np.array_equal(C, C.T)
    assert sym == (rep.pairing.kind == "symmetric")
    if not sym:
        assert np.array_equal(C, -C.T)


def test_symplectic_pairing_isotropic():
    rep = build_clifford(3, 3)
    assert rep.pairing.kind == "symplectic"
    rng = np.random.default_rng(5)
    for _ in range(10):
        v = random_rational_spinor(rep, rng)
        assert spinor_pairing(rep, v, v) == 0
