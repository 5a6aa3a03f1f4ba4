from collections import Counter

import numpy as np
import pytest

from blochmps.analysis import multiplet_grouping
from blochmps.ed import (
    ed_spectrum,
    hamiltonian,
    momentum_of_state,
    parity_of_state,
    parity_operator,
    spin_multiplets,
)
from blochmps.models import SX, heisenberg_model, heisenberg_transformed, ising_model
from blochmps.mps import bloch_state_vector, random_tensor


def test_heisenberg_two_sites():
    spec = ed_spectrum(heisenberg_model(), 2)
    np.testing.assert_allclose(spec.energies, [-1.5, 0.5, 0.5, 0.5], atol=1e-14)
    # the singlet is odd under the swap, so its momentum is 1
    assert spec.levels[0].k == 1
    assert [lv.k for lv in spec.levels[1:]] == [0, 0, 0]
    groups = multiplet_grouping(spec)
    assert [(g.k, g.name) for g in groups] == [(1, "singlet"), (0, "triplet")]


def test_ising_classical_ground_degeneracy():
    spec = ed_spectrum(ising_model(0.0), 4, keep_vectors=True)
    assert spec.energies[0] == pytest.approx(-4.0)
    assert spec.energies[1] == pytest.approx(-4.0)
    assert spec.energies[2] > -4.0 + 1
    assert spec.levels[0].k == spec.levels[1].k == 0


def test_momentum_examples():
    v = np.zeros(16)
    v[0] = 1
    assert momentum_of_state(v, 4) == (0, 0.0)
    singlet = np.array([0, 1, -1, 0]) / np.sqrt(2)
    assert momentum_of_state(singlet, 2)[0] == 1


def test_momentum_of_bloch_state(rng):
    a, b = random_tensor(2, 2, rng), random_tensor(2, 2, rng)
    k, resid = momentum_of_state(bloch_state_vector(a, b, 3, 8), 8)
    assert k == 3
    assert resid < 1e-12


def test_parity_examples(rng):
    v = rng.standard_normal(2**5) + 1j * rng.standard_normal(2**5)
    p = parity_operator(5)
    np.testing.assert_allclose(p @ (p @ v), v, atol=1e-13)
    plus = np.array([1, 0, 0, 1]) / np.sqrt(2)
    minus = np.array([1, 0, 0, -1]) / np.sqrt(2)
    assert parity_of_state(plus, 2)[0] == -parity_of_state(minus, 2)[0]


def test_parity_of_transformed_eigenstates():
    spec = ed_spectrum(heisenberg_transformed(), 8, keep_vectors=True)
    for i, lv in enumerate(spec.levels):
        if lv.degeneracy == 1:
            p, resid = parity_of_state(spec.vectors[:, i], 8)
            assert resid < 1e-10
            assert p == lv.parity


def test_levels_are_translation_eigenstates():
    spec = ed_spectrum(heisenberg_model(), 6, keep_vectors=True)
    for i, lv in enumerate(spec.levels):
        k, resid = momentum_of_state(spec.vectors[:, i], 6)
        assert (k, lv.k) == (lv.k, k)
        assert resid < 1e-10


def test_spectrum_matches_dense():
    model = ising_model(0.9)
    spec = ed_spectrum(model, 6)
    ref = np.linalg.eigvalsh(hamiltonian(model, 6).toarray())
    np.testing.assert_allclose(spec.energies, ref, atol=1e-12)


def test_ising_parity_labels_with_sx():
    spec = ed_spectrum(ising_model(0.7), 6, parity_op=SX)
    assert set(spec.parities) == {1, -1}
    assert Counter(spec.parities.tolist()) == {1: 32, -1: 32}


def test_heisenberg_triplet_at_half_momentum():
    spec = ed_spectrum(heisenberg_model(), 8)
    groups = multiplet_grouping(spec)
    assert groups[0].size == 1
    first_excited = groups[1]
    assert first_excited.k == 4
    assert first_excited.name == "triplet"


def test_spin_multiplets_triplet_basis():
    spec = ed_spectrum(heisenberg_model(), 6, keep_vectors=True)
    triplets = spin_multiplets(spec, 3, 1)
    assert triplets
    energy, basis = triplets[0]
    assert basis.shape[1] == 3
    np.testing.assert_allclose(basis.conj().T @ basis, np.eye(3), atol=1e-10)
