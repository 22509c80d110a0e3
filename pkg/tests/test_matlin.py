import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from migdetect.exceptions import DomainError, ValidationError
from migdetect.matlin import (
    apply_spectral,
    chol_hpd,
    dlog_kernel,
    eig_hermitian,
    expm,
    invm,
    invsqrtm,
    log_divided_differences,
    logdet_hpd,
    logm,
    sqrtm,
)
from oracles import dlog_fd, dlog_quadrature, random_hermitian, random_hpd, rel


def test_eig_hermitian_sorted_and_reconstructs(rng):
    P = random_hpd(rng, 6)
    dec = eig_hermitian(P)
    assert np.all(np.diff(dec.eigenvalues) <= 0)
    assert rel(dec.reconstruct(), P) < 1e-13
    U = dec.basis
    assert np.allclose(U.conj().T @ U, np.eye(6), atol=1e-13)


def test_eig_rejects_non_hermitian():
    with pytest.raises(ValidationError):
        eig_hermitian(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_logm_matches_scipy(rng):
    P = random_hpd(rng, 7, cond=1e4)
    assert rel(logm(P), sla.logm(P)) < 1e-10


def test_expm_matches_scipy(rng):
    H = random_hermitian(rng, 5)
    assert rel(expm(H), sla.expm(H)) < 1e-12


def test_log_exp_inverse(rng):
    P = random_hpd(rng, 5, cond=100)
    assert rel(expm(logm(P)), P) < 1e-12


def test_sqrt_and_inverse_sqrt(rng):
    P = random_hpd(rng, 6, cond=1e3)
    S = sqrtm(P)
    assert rel(S @ S, P) < 1e-12
    assert rel(invsqrtm(P) @ P @ invsqrtm(P), np.eye(6)) < 1e-11
    assert rel(invm(P) @ P, np.eye(6)) < 1e-11


def test_scalar_examples():
    assert logm(np.array([[np.e]]))[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert sqrtm(np.array([[4.0]]))[0, 0] == pytest.approx(2.0, abs=1e-15)
    D = np.diag([1.0, 4.0])
    assert np.allclose(logm(D), np.diag([0.0, np.log(4.0)]), atol=1e-15)


def test_apply_spectral_by_name(rng):
    P = random_hpd(rng, 4)
    assert rel(apply_spectral(P, "inv") @ P, np.eye(4)) < 1e-12
    with pytest.raises(ValidationError, match="unknown spectral function"):
        apply_spectral(P, "cube")


def test_log_of_indefinite_raises():
    with pytest.raises(DomainError, match="eigenvalue"):
        logm(np.diag([1.0, -1.0]))


def test_singular_matrix_is_domain_error():
    with pytest.raises(DomainError):
        invm(np.diag([1.0, 1e-20]))


def test_batched_functions_match_loop(rng):
    P = random_hpd(rng, 4, size=7)
    L = logm(P)
    for i in range(7):
        assert np.array_equal(L[i], logm(P[i]))


def test_cholesky_and_logdet(rng):
    P = random_hpd(rng, 6, cond=1e5)
    Lc = chol_hpd(P)
    assert rel(Lc @ Lc.conj().T, P) < 1e-13
    assert logdet_hpd(P) == pytest.approx(np.linalg.slogdet(P)[1], rel=1e-12)


def test_divided_differences_diagonal_and_pairs():
    w = np.array([4.0, 2.0, 2.0 * (1 + 1e-14)])
    dd = log_divided_differences(w)
    assert dd[0, 0] == pytest.approx(0.25)
    assert dd[0, 1] == pytest.approx(np.log(2.0) / 2.0, rel=1e-14)
    assert dd[1, 2] == pytest.approx(0.5, rel=1e-12)
    assert np.allclose(dd, dd.T, rtol=1e-12)


def test_divided_differences_near_coincident_accuracy():
    # distinct but close: log1p form keeps relative accuracy
    a, delta = 3.0, 2.0 ** -30
    b = a + delta  # exactly representable gap
    dd = log_divided_differences(np.array([b, a]))[0, 1]
    exact = np.log1p(delta / a) / delta
    assert dd == pytest.approx(exact, rel=1e-12)


def test_dlog_at_identity_is_identity_map(rng):
    L = random_hermitian(rng, 4)
    assert rel(dlog_kernel(np.eye(4), L), L) < 1e-14


def test_dlog_commuting_direction():
    V = np.diag([1.0, 2.0, 5.0])
    L = np.diag([1.0, 1.0, 1.0])
    assert np.allclose(dlog_kernel(V, L), np.diag(1.0 / np.diag(V)))


def test_dlog_matches_finite_differences(rng):
    V = random_hpd(rng, 5, cond=50)
    L = random_hermitian(rng, 5)
    assert rel(dlog_kernel(V, L), dlog_fd(V, L)) < 1e-6


def test_dlog_scaling_identity(rng):
    V = random_hpd(rng, 4, cond=30)
    L = random_hermitian(rng, 4)
    assert rel(dlog_kernel(7.0 * V, L), dlog_kernel(V, L) / 7.0) < 1e-13


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6),
       logcond=st.floats(0.0, 3.0))
def test_dlog_matches_quadrature_property(seed, n, logcond):
    rng = np.random.default_rng(seed)
    V = random_hpd(rng, n, cond=10.0 ** logcond) if n > 1 else np.array(
        [[10.0 ** logcond]])
    L = random_hermitian(rng, n)
    assert rel(dlog_kernel(V, L), dlog_quadrature(V, L)) < 1e-8


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 7))
def test_log_is_hermitian_and_exp_inverts(seed, n):
    rng = np.random.default_rng(seed)
    P = random_hpd(rng, n)
    Lg = logm(P)
    assert np.allclose(Lg, Lg.conj().T, atol=1e-13 * np.linalg.norm(Lg) + 1e-15)
    assert rel(expm(Lg), P) < 1e-11


def test_spectral_examples():
    dec = eig_hermitian(np.eye(3))
    assert np.allclose(dec.eigenvalues, 1.0)
    dec = eig_hermitian(np.diag([1.0, 4.0]))
    assert np.allclose(dec.eigenvalues, [4.0, 1.0])
    assert np.allclose(np.abs(dec.basis), [[0, 1], [1, 0]])
    assert np.array_equal(logm(np.eye(3)), np.zeros((3, 3)))
    assert np.allclose(logm(np.diag([np.e, np.e ** 2])), np.diag([1.0, 2.0]),
                       atol=1e-15)


def test_cholesky_examples():
    assert np.array_equal(chol_hpd(np.eye(3)), np.eye(3))
    assert np.allclose(chol_hpd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


@pytest.mark.parametrize("cond", [10.0, 1e3, 1e6])
def test_factorizations_at_high_condition(rng, cond):
    P = random_hpd(rng, 7, cond=cond)
    Lc = chol_hpd(P)
    assert np.allclose(np.triu(Lc, 1), 0)
    d = np.diagonal(Lc)
    assert np.all(d.real > 0) and np.all(d.imag == 0)
    assert rel(Lc @ Lc.conj().T, P) <= 1e-10
    assert rel(eig_hermitian(P).reconstruct(), P) <= 1e-10


def test_dlog_is_hermitian_and_linear(rng):
    V = random_hpd(rng, 5, cond=1e3)
    L1, L2 = random_hermitian(rng, 5), random_hermitian(rng, 5)
    K1 = dlog_kernel(V, L1)
    assert np.array_equal(K1, K1.conj().T)
    lhs = dlog_kernel(V, 2.5 * L1 - 0.7 * L2)
    rhs = 2.5 * K1 - 0.7 * dlog_kernel(V, L2)
    assert rel(lhs, rhs) <= 1e-10
    with pytest.raises(ValidationError):
        dlog_kernel(V, np.eye(4))
