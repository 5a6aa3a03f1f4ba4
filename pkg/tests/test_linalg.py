import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blochmps.errors import NumericalError, ValidationError
from blochmps.linalg import asymmetry, gev_regularized, hermitian_eig, hermitize, svd

from conftest import random_hermitian


def test_eig_identity():
    res = hermitian_eig(np.eye(2))
    np.testing.assert_allclose(res.values, [1, 1])


def test_eig_pauli_x():
    res = hermitian_eig(np.array([[0, 1], [1, 0]], dtype=complex))
    np.testing.assert_allclose(res.values, [-1, 1], atol=1e-15)


def test_eig_reconstruction(rng):
    h = random_hermitian(rng, 8)
    res = hermitian_eig(h)
    rebuilt = (res.vectors * res.values) @ res.vectors.conj().T
    assert np.max(np.abs(rebuilt - h)) < 1e-10
    assert np.all(np.diff(res.values) >= 0)


def test_eig_rejects_non_hermitian():
    m = np.array([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValidationError, match="asymmetry|Hermitian"):
        hermitian_eig(m)


def test_asymmetry_and_hermitize(rng):
    m = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    assert asymmetry(m) > 0.1
    assert asymmetry(hermitize(m)) == 0.0
    assert asymmetry(np.zeros((3, 3))) == 0.0


def test_gev_identity():
    res = gev_regularized(np.eye(3), np.eye(3))
    np.testing.assert_allclose(res.values, [1, 1, 1])
    assert res.discarded == 0


def test_gev_decoupled_ratios():
    res = gev_regularized(np.diag([1.0, 2.0]), np.diag([1.0, 0.5]))
    np.testing.assert_allclose(res.values, [1, 4])


def test_gev_forced_null_direction():
    res = gev_regularized(np.diag([1.0, 2.0, 3.0]), np.diag([1.0, 1.0, 0.0]), eps=1e-11)
    np.testing.assert_allclose(res.values, [1, 2])
    assert res.discarded == 1


def test_gev_fully_singular():
    with pytest.raises(NumericalError, match="fully singular"):
        gev_regularized(np.eye(2), np.zeros((2, 2)))


def test_gev_non_psd_reports_eigenvalue():
    with pytest.raises(NumericalError, match="-5.0"):
        gev_regularized(np.eye(2), np.diag([1.0, -5.0]))


def test_gev_metric_normalization(rng):
    h = random_hermitian(rng, 6)
    x = rng.standard_normal((6, 4)) + 1j * rng.standard_normal((6, 4))
    n = x @ x.conj().T  # rank 4
    res = gev_regularized(h, n)
    assert res.discarded == 2
    v = res.vectors
    np.testing.assert_allclose(v.conj().T @ n @ v, np.eye(4), atol=1e-9)
    resid = h @ v - (n @ v) * res.values
    # residual only vanishes on the kept subspace: project onto range(n)
    q, _ = np.linalg.qr(x)
    assert np.max(np.abs(q.conj().T @ resid)) < 1e-8


def test_svd_examples(rng):
    _, s, _ = svd(np.eye(4))
    np.testing.assert_allclose(s, [1, 1, 1, 1])
    _, s, _ = svd(np.diag([3.0, 0.0]))
    np.testing.assert_allclose(s, [3, 0])
    m = rng.standard_normal((6, 4))
    u, s, v = svd(m)
    assert np.max(np.abs((u * s) @ v.conj().T - m)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**31 - 1))
def test_gev_matches_scipy_for_definite_metric(n, seed):
    from scipy.linalg import eigh

    rng = np.random.default_rng(seed)
    h = random_hermitian(rng, n)
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    metric = x @ x.conj().T + n * np.eye(n)
    ref = eigh(h, metric, eigvals_only=True)
    res = gev_regularized(h, metric)
    np.testing.assert_allclose(res.values, ref, atol=1e-9 * max(1, np.max(np.abs(ref))))
