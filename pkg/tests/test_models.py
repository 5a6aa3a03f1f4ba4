import numpy as np
import pytest

from blochmps.ed import hamiltonian, odd_site_rotation, parity_operator, translation_operator
from blochmps.errors import ValidationError
from blochmps.models import (
    ID2,
    SX,
    SZ,
    build_model,
    default_splitting,
    heisenberg_model,
    heisenberg_transformed,
    ising_model,
    ising_model_xbasis,
    operator_schmidt,
)

ALL_MODELS = [
    ising_model(0.7),
    ising_model(1.3, symmetric_field=True),
    ising_model_xbasis(0.4),
    heisenberg_model(),
    heisenberg_transformed(),
    heisenberg_transformed(0.6, -1),
]


def dense(model, n):
    return hamiltonian(model, n).toarray()


def test_ising_classical_h01():
    np.testing.assert_allclose(np.diag(ising_model(0).h01).real, [-1, 1, 1, -1])


def test_ising_two_site_expansion():
    h = dense(ising_model(1.0), 2)
    ref = -2 * np.kron(SZ, SZ) - np.kron(SX, ID2) - np.kron(ID2, SX)
    np.testing.assert_allclose(h, ref, atol=1e-14)


def test_symmetric_field_same_hamiltonian():
    np.testing.assert_allclose(dense(ising_model(0.8), 6), dense(ising_model(0.8, True), 6), atol=1e-13)


def test_xbasis_classical_spectrum():
    a = np.linalg.eigvalsh(dense(ising_model(0), 6))
    b = np.linalg.eigvalsh(dense(ising_model_xbasis(0), 6))
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_xbasis_two_sites_g2():
    h = dense(ising_model_xbasis(2.0), 2)
    ref = -2 * np.kron(SX, SX) - 2 * (np.kron(SZ, ID2) + np.kron(ID2, SZ))
    np.testing.assert_allclose(np.linalg.eigvalsh(h), np.linalg.eigvalsh(ref), atol=1e-12)


def test_heisenberg_examples():
    np.testing.assert_allclose(np.linalg.eigvalsh(dense(heisenberg_model(), 2)), [-1.5, 0.5, 0.5, 0.5], atol=1e-14)
    np.testing.assert_allclose(np.linalg.eigvalsh(heisenberg_model().h01), [-0.75, 0.25, 0.25, 0.25], atol=1e-14)
    assert np.linalg.eigvalsh(dense(heisenberg_model(), 4))[0] == pytest.approx(-2.0, abs=1e-12)


@pytest.mark.parametrize("model", ALL_MODELS, ids=lambda m: f"{m.name}-{m.key()[:6]}")
def test_translation_commutes(model):
    n = 8
    h = dense(model, n)
    t = translation_operator(n).toarray()
    assert np.linalg.norm(h @ t - t @ h) <= 1e-12 * np.linalg.norm(h)


def test_transformed_commutes_with_parity():
    n = 8
    h = dense(heisenberg_transformed(), n)
    p = parity_operator(n).toarray()
    assert np.linalg.norm(h @ p - p @ h) < 1e-12
    np.testing.assert_allclose(p @ p, np.eye(2**n), atol=1e-14)


def test_odd_site_rotation_maps_heisenberg():
    n = 8
    u = odd_site_rotation(n).toarray()
    lhs = u.conj().T @ dense(heisenberg_model(), n) @ u
    np.testing.assert_allclose(lhs, dense(heisenberg_transformed(), n), atol=1e-12)


def test_transformed_spectrum_unchanged():
    a = np.linalg.eigvalsh(dense(heisenberg_model(), 8))
    b = np.linalg.eigvalsh(dense(heisenberg_transformed(), 8))
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_split_model_low_states_have_positive_parity():
    n = 8
    model = heisenberg_transformed(default_splitting(n), -1)
    w, v = np.linalg.eigh(dense(model, n))
    p = parity_operator(n).toarray()
    for j in range(5):
        assert np.vdot(v[:, j], p @ v[:, j]).real == pytest.approx(1.0, abs=1e-8)


def test_lambda_shift_is_exact_on_parity_eigenstates():
    n = 8
    lam = 0.8
    h0 = dense(heisenberg_transformed(), n)
    p = parity_operator(n).toarray()
    for sign in (1, -1):
        hs = dense(heisenberg_transformed(lam, sign), n)
        np.testing.assert_allclose(hs - h0, sign * lam * p, atol=1e-13)


def test_default_splitting():
    assert default_splitting(20) == pytest.approx(2.0)


def test_build_model_and_keys():
    assert build_model("ising", g=0.5).key() == ising_model(0.5).key()
    assert ising_model(0.5).key() != ising_model(0.6).key()
    with pytest.raises(ValidationError):
        build_model("potts")
    with pytest.raises(ValidationError):
        heisenberg_transformed(1.0, 2)


@pytest.mark.parametrize("model", ALL_MODELS[:4], ids=lambda m: m.name)
def test_operator_schmidt_reconstructs(model):
    total = sum(np.kron(l, r) for l, r in operator_schmidt(model.h01))
    np.testing.assert_allclose(total, model.h01, atol=1e-14)
