import numpy as np
import pytest

from metts_trotter import oracle
from metts_trotter.model import ModelSpec, dense_from_bonds, hamiltonian_bonds


def hardcore_ed(L, beta, mu):
    """Grand-canonical hardcore bosons by brute force over all particle numbers."""
    spec = ModelSpec(L=L, hardcore=True, mu=mu)
    H = dense_from_bonds(hamiltonian_bonds(spec), L, 2).real
    H0 = dense_from_bonds(hamiltonian_bonds(spec, include_mu=False), L, 2).real
    occ = np.array(np.unravel_index(np.arange(2**L), (2,) * L)).sum(axis=0)
    w, v = np.linalg.eigh(H)
    rho = (v * np.exp(-beta * (w - w[0]))) @ v.T
    rho /= np.trace(rho)
    n1 = np.sum(np.diag(rho) * occ)
    n2 = np.sum(np.diag(rho) * occ**2)
    return n1, np.trace(rho @ H0), beta * (n2 - n1**2)


@pytest.mark.parametrize("beta,mu", [(1.0, -0.5), (5.0, -2.0), (2.0, 0.7)])
def test_free_fermions_match_hardcore_bosons(beta, mu):
    n, e, k = oracle.grand_canonical(oracle.FreeFermionSpec(8, 1.0, beta, mu))
    n_ref, e_ref, k_ref = hardcore_ed(8, beta, mu)
    assert n == pytest.approx(n_ref, abs=1e-10)
    assert e == pytest.approx(e_ref, abs=1e-10)
    assert k == pytest.approx(k_ref, abs=1e-9)


def test_spectrum():
    eps = oracle.spectrum(5)
    assert np.allclose(eps, np.linalg.eigvalsh(np.diag(-np.ones(4), 1) + np.diag(-np.ones(4), -1)))
    with pytest.raises(ValueError):
        oracle.spectrum(0)


def test_kappa_is_the_number_derivative():
    h = 1e-4
    spec = oracle.FreeFermionSpec(50, 1.0, 5.0, -2.0)
    _, _, k = oracle.grand_canonical(spec)
    up = oracle.grand_canonical(oracle.FreeFermionSpec(50, 1.0, 5.0, -2.0 + h))[0]
    dn = oracle.grand_canonical(oracle.FreeFermionSpec(50, 1.0, 5.0, -2.0 - h))[0]
    assert (up - dn) / (2 * h) == pytest.approx(k, rel=1e-6)


def test_occupations_do_not_overflow():
    f = oracle.occupations(oracle.FreeFermionSpec(10, 1.0, 1e4, 0.0))
    assert np.all(np.isfinite(f)) and np.all((f >= 0) & (f <= 1))


def test_mu_sweep_rows():
    rows = oracle.mu_sweep(20, 5.0, oracle.DEFAULT_MUS)
    assert len(rows) == 9
    assert all(a["nu"] < b["nu"] for a, b in zip(rows, rows[1:]))
    with pytest.raises(ValueError):
        oracle.FreeFermionSpec(4, beta=0.0)
