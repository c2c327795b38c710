import numpy as np
import pytest

from metts_trotter import edref
from metts_trotter.model import ModelSpec


def symmetrized_slme(tm):
    """Reversible chains are similar to a symmetric matrix; use eigvalsh on it."""
    pi = tm.stationary
    s = np.sqrt(pi)[:, None] * tm.p / np.sqrt(pi)[None, :]
    assert np.allclose(s, s.T, atol=1e-12)
    w = np.sort(np.abs(np.linalg.eigvalsh(0.5 * (s + s.T))))[::-1]
    return w[1]


@pytest.mark.parametrize("L,N,n_max", [(6, 6, 6), (4, 4, 4), (5, 3, 1), (4, 7, 2)])
def test_basis_count_matches_brute_force(L, N, n_max):
    basis = edref.enumerate_basis(L, N, n_max)
    assert len(basis) == edref.brute_force_count(L, N, n_max)
    assert all(sum(c) == N for c in basis.configs)
    assert list(basis.configs) == sorted(basis.configs)


def test_thermal_energy_limits():
    spec = ModelSpec(L=4, n_max=4, U=2.0)
    basis = edref.enumerate_basis(4, 4, 4)
    H = edref.dense_hamiltonian(spec, basis)
    w = np.linalg.eigvalsh(H)
    assert edref.thermal_expectation(H, H, 1e-9) == pytest.approx(w.mean(), rel=1e-6)
    assert edref.thermal_expectation(H, H, 200.0) == pytest.approx(w[0], abs=1e-8)


@pytest.mark.parametrize("tau,n,u_prime", [(0.0, 1, None), (1.0, 2, None), (1.0, 2, 0.0), (2.5, 3, 0.0)])
def test_transition_matrix_is_stochastic_and_stationary(tau, n, u_prime):
    spec = ModelSpec(L=4, n_max=4, U=1.0)
    basis = edref.enumerate_basis(4, 4, 4)
    tm = edref.transition_matrix(spec, basis, 0.5, tau, n, u_prime)
    assert np.all(tm.p >= 0)
    assert np.allclose(tm.p.sum(axis=1), 1.0)
    H = edref.dense_hamiltonian(spec, basis)
    assert edref.stationarity_check(tm, H, 0.5) < 1e-12
    assert np.allclose(edref.stationary_by_iteration(tm.p), tm.stationary, atol=1e-10)


def test_power_iteration_matches_symmetric_eigensolver():
    spec = ModelSpec(L=4, n_max=4, U=1.0)
    basis = edref.enumerate_basis(4, 4, 4)
    for tau, n, up in [(0.0, 1, None), (1.0, 2, None), (1.5, 2, 0.0)]:
        tm = edref.transition_matrix(spec, basis, 0.25, tau, n, up)
        lam, bound = edref.slme(tm)
        assert lam == pytest.approx(symmetrized_slme(tm), abs=1e-9)
        assert bound == pytest.approx(-1.0 / np.log(lam))


def test_slme_of_trivial_and_identity_chains():
    assert edref.slme(np.array([[1.0]])) == (0.0, 0.0)
    lam, bound = edref.slme(np.full((3, 3), 1.0 / 3.0))
    assert lam == pytest.approx(0.0, abs=1e-12) and bound == 0.0
    lam, bound = edref.slme(np.eye(3))
    assert bound == float("inf")


def test_infinite_temperature_plain_chain_stays_put():
    spec = ModelSpec(L=4, n_max=4)
    basis = edref.enumerate_basis(4, 4, 4)
    tm = edref.transition_matrix(spec, basis, 1e-300, 0.0)
    assert np.allclose(tm.p, np.eye(len(basis)))


def test_sweep_rows():
    spec = ModelSpec(L=4, n_max=4)
    basis = edref.enumerate_basis(4, 4, 4)
    rows = edref.slme_sweep(spec, basis, 0.25, [0.0, 1.0], 2, 1.0)
    assert [r["tau"] for r in rows] == [0.0, 1.0]
    assert set(rows[0]) == {"tau", "n", "u_prime", "lambda2_mag", "bound"}


def test_large_basis_is_refused():
    spec = ModelSpec(L=10, n_max=6)
    basis = edref.enumerate_basis(10, 10, 6)
    with pytest.raises(ValueError):
        edref.transition_matrix(spec, basis, 1.0)
