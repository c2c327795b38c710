import numpy as np
import pytest

from metts_trotter import edref
from metts_trotter.model import (
    BondTerm,
    ModelSpec,
    dense_from_bonds,
    hamiltonian_bonds,
    hopping,
    number,
    trotter_hamiltonians,
)


def sector_indices(basis, d):
    return [int(np.ravel_multi_index(c, (d,) * basis.L)) for c in basis.configs]


def test_model_validation():
    with pytest.raises(ValueError):
        ModelSpec(L=5)
    assert ModelSpec(L=4, hardcore=True).d == 2
    assert ModelSpec(L=4, hardcore=True, U=7.0).interaction == 0.0


def test_bond_terms_are_hermitian():
    for t in hamiltonian_bonds(ModelSpec(L=4, n_max=3, mu=0.3)):
        assert np.allclose(t.matrix, t.matrix.conj().T)
    with pytest.raises(ValueError):
        BondTerm(0, np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_bond_sum_matches_direct_construction():
    spec = ModelSpec(L=4, n_max=3, U=2.5, mu=-0.7)
    d = spec.d
    H = dense_from_bonds(hamiltonian_bonds(spec), spec.L, d)
    for N in range(0, 5):
        basis = edref.enumerate_basis(spec.L, N, spec.n_max)
        idx = sector_indices(basis, d)
        assert np.allclose(H[np.ix_(idx, idx)], edref.dense_hamiltonian(spec, basis))


def test_trotter_halves_sum_to_hamiltonian():
    spec = ModelSpec(L=6, n_max=2, U=1.3)
    even, odd = trotter_hamiltonians(spec)
    d = spec.d
    total = dense_from_bonds(even + odd, spec.L, d)
    H = dense_from_bonds(hamiltonian_bonds(spec, include_mu=False), spec.L, d)
    assert np.max(np.abs(total - H)) < 1e-13
    assert sorted(t.site for t in even) == [1, 3]
    assert sorted(t.site for t in odd) == [0, 2, 4]


def test_trotter_halves_commute_internally():
    even, odd = trotter_hamiltonians(ModelSpec(L=6, n_max=2))
    d = 3
    for group in (even, odd):
        mats = [dense_from_bonds([t], 6, d) for t in group]
        for a in mats:
            for b in mats:
                assert np.allclose(a @ b, b @ a)


def test_zero_u_prime_leaves_pure_hopping():
    spec = ModelSpec(L=4, n_max=2, U=5.0, u_prime=0.0)
    even, odd = trotter_hamiltonians(spec)
    for t in even + odd:
        assert np.allclose(t.matrix, hopping(3, 1.0))


def test_hopping_conserves_number():
    d = 4
    n = number(d)
    ntot = np.kron(n, np.eye(d)) + np.kron(np.eye(d), n)
    h = hopping(d, 1.0)
    assert np.allclose(h @ ntot, ntot @ h)
