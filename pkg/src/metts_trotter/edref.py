"""Dense exact diagonalization in a fixed particle-number sector.

Everything here works on explicit matrices over a Fock basis, so it is only
meant for a few hundred to a couple of thousand states.  It provides the
thermal references and the exact transition matrices of the sampler.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .model import BondTerm, ModelSpec, hamiltonian_bonds, trotter_hamiltonians

MAX_DENSE_DIM = 2000


@dataclass(frozen=True)
class FockBasis:
    L: int
    N: int
    n_max: int
    configs: tuple[tuple[int, ...], ...]
    index: dict = field(repr=False, compare=False)

    def __len__(self):
        return len(self.configs)

    def as_array(self) -> np.ndarray:
        return np.array(self.configs, dtype=int)


def enumerate_basis(L: int, N: int, n_max: int) -> FockBasis:
    """All occupation tuples of length L summing to N, in lexicographic order."""
    configs = []

    def rec(prefix, left, sites):
        if sites == 0:
            if left == 0:
                configs.append(tuple(prefix))
            return
        for n in range(min(n_max, left) + 1):
            # the remaining sites must be able to hold what is left
            if left - n <= n_max * (sites - 1):
                prefix.append(n)
                rec(prefix, left - n, sites - 1)
                prefix.pop()

    rec([], N, L)
    if not configs:
        raise ValueError(f"no configurations with L={L}, N={N}, n_max={n_max}")
    return FockBasis(L, N, n_max, tuple(configs), {c: i for i, c in enumerate(configs)})


def dense_hamiltonian(spec: ModelSpec, basis: FockBasis, include_mu: bool = True) -> np.ndarray:
    """Bose-Hubbard Hamiltonian from bosonic matrix elements.

    Built directly from ``b_m^dag b_{m+1}`` acting on occupation tuples, not
    from the bond terms of the model module, so the two can check each other.
    """
    U = spec.interaction
    mu = spec.mu if include_mu else 0.0
    dim = len(basis)
    H = np.zeros((dim, dim))
    for col, cfg in enumerate(basis.configs):
        n = np.array(cfg, dtype=float)
        H[col, col] = 0.5 * U * np.sum(n * (n - 1.0)) - mu * n.sum()
        for m in range(basis.L - 1):
            for src, dst in ((m + 1, m), (m, m + 1)):
                if cfg[src] == 0 or cfg[dst] == basis.n_max:
                    continue
                new = list(cfg)
                amp = np.sqrt(new[src]) * np.sqrt(new[dst] + 1)
                new[src] -= 1
                new[dst] += 1
                H[basis.index[tuple(new)], col] += -spec.J * amp
    return H


def bonds_in_basis(terms: list[BondTerm], basis: FockBasis) -> np.ndarray:
    """Matrix of a sum of charge-conserving bond terms restricted to ``basis``."""
    d = basis.n_max + 1
    dim = len(basis)
    out = np.zeros((dim, dim), dtype=complex)
    for col, cfg in enumerate(basis.configs):
        for t in terms:
            m = t.site
            column = t.matrix[:, cfg[m] * d + cfg[m + 1]]
            for k in np.flatnonzero(column):
                a, b = divmod(int(k), d)
                new = cfg[:m] + (a, b) + cfg[m + 2:]
                row = basis.index.get(new)
                if row is None:
                    raise ValueError(f"bond term on site {m} does not conserve particle number")
                out[row, col] += column[k]
    return out


def _herm_fn(H: np.ndarray, fn) -> np.ndarray:
    w, v = np.linalg.eigh(H)
    return (v * fn(w)) @ v.conj().T


def thermal_expectation(H: np.ndarray, O: np.ndarray, beta: float) -> float:
    w, v = np.linalg.eigh(H)
    weights = np.exp(-beta * (w - w.min()))
    o_diag = np.einsum("ji,jk,ki->i", v.conj(), O, v)
    return float(np.real(np.sum(weights * o_diag)) / np.sum(weights))


def boltzmann_half(H: np.ndarray, beta: float) -> np.ndarray:
    """``exp(-beta H / 2)`` with the spectrum shifted so the largest factor is 1."""
    w0 = np.linalg.eigvalsh(H).min()
    return _herm_fn(H, lambda w: np.exp(-0.5 * beta * (w - w0)))


def rotation_unitary(spec: ModelSpec, basis: FockBasis, tau: float, n: int) -> np.ndarray:
    """Dense ``[exp(-i s H_even) exp(-i s H_odd)]**n`` with ``s = tau / n``."""
    even, odd = trotter_hamiltonians(spec)
    s = tau / n
    Ue = _herm_fn(bonds_in_basis(even, basis), lambda w: np.exp(-1j * s * w))
    Uo = _herm_fn(bonds_in_basis(odd, basis), lambda w: np.exp(-1j * s * w))
    return np.linalg.matrix_power(Ue @ Uo, n)


@dataclass
class TransitionMatrix:
    p: np.ndarray
    beta: float
    tau: float
    n: int
    u_prime: float
    stationary: np.ndarray | None = None


def transition_matrix(
    spec: ModelSpec,
    basis: FockBasis,
    beta: float,
    tau: float = 0.0,
    n: int = 1,
    u_prime: float | None = None,
) -> TransitionMatrix:
    """Exact two-step transition matrix between computational configurations.

    With ``tau == 0`` this is the single-step matrix
    ``p_ij = |<j|M|i>|^2 / <i|M^2|i>`` with ``M = exp(-beta H / 2)``.
    Otherwise a step into the rotated basis ``U|k>`` is followed by a step
    back, ``p = q @ r``.
    """
    if len(basis) > MAX_DENSE_DIM:
        raise ValueError(f"basis of size {len(basis)} is too large for dense work")
    if u_prime is not None:
        spec = spec.with_(u_prime=u_prime)
    H = dense_hamiltonian(spec, basis)
    M = boltzmann_half(H, beta)
    diag = np.real(np.diag(M @ M))
    stationary = diag / diag.sum()
    if tau == 0.0:
        p = np.abs(M) ** 2 / diag[:, None]
    else:
        U = rotation_unitary(spec, basis, tau, n)
        MU = M @ U
        weight = np.abs(MU) ** 2  # weight[j, k] = |<j|M U|k>|^2
        q = weight / diag[:, None]
        r = weight / weight.sum(axis=0)[None, :]
        r = r.T
        p = q @ r
    return TransitionMatrix(p, beta, tau, n, spec.rotation_interaction, stationary)


class ConvergenceError(RuntimeError):
    def __init__(self, msg, estimates):
        super().__init__(f"{msg}; last growth estimates {estimates}")
        self.estimates = estimates


def stationary_by_iteration(p: np.ndarray, tol: float = 1e-14, max_iter: int = 1_000_000) -> np.ndarray:
    pi = np.full(p.shape[0], 1.0 / p.shape[0])
    for _ in range(max_iter):
        new = pi @ p
        new /= new.sum()
        if np.max(np.abs(new - pi)) < tol:
            return new
        pi = new
    raise ConvergenceError("stationary distribution did not converge", (float(np.max(np.abs(new - pi))),))


def slme(
    tm: TransitionMatrix | np.ndarray,
    tol: float = 1e-13,
    max_iter: int = 200_000,
    seed: int = 0,
) -> tuple[float, float]:
    """Second largest eigenvalue magnitude and the bound ``-1/log|lambda_2|``.

    The leading pair (all-ones right vector, stationary left vector) is
    projected out and the spectral radius of what remains is obtained by
    power iteration.  The growth rate is measured over two consecutive
    multiplications so that a ``+-lambda`` pair or a complex pair does not
    make it oscillate.
    """
    if isinstance(tm, TransitionMatrix):
        p, pi = tm.p, tm.stationary
    else:
        p, pi = np.asarray(tm), None
    if pi is None:
        pi = stationary_by_iteration(p)
    pi = pi / pi.sum()
    dim = p.shape[0]
    if dim == 1:
        return 0.0, 0.0

    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)

    def project(x):
        # remove the component along the all-ones right eigenvector
        return x - np.dot(pi, x)

    v = project(v)
    v /= np.linalg.norm(v)
    history = []
    estimate = None
    for it in range(max_iter):
        w = project(p @ v)
        w2 = project(p @ w)
        norm2 = np.linalg.norm(w2)
        if norm2 < 1e-300:
            return 0.0, 0.0
        rate = np.sqrt(norm2 / np.linalg.norm(v))
        v = w2 / norm2
        history.append(rate)
        if estimate is not None and abs(rate - estimate) < tol and it > 20:
            estimate = rate
            break
        estimate = rate
    else:
        raise ConvergenceError("power iteration did not converge", tuple(history[-2:]))
    lam = float(min(estimate, 1.0))
    if lam < 1e-15:
        return lam, 0.0
    if lam >= 1.0 - 1e-12:
        return lam, float("inf")
    return lam, float(-1.0 / np.log(lam))


def stationarity_check(tm: TransitionMatrix, H: np.ndarray, beta: float) -> float:
    """Largest deviation of ``Pi @ p`` from ``Pi`` with ``Pi_i ~ <i|exp(-beta H)|i>``."""
    w, v = np.linalg.eigh(H)
    diag = np.real(np.einsum("ik,k,ik->i", v, np.exp(-beta * (w - w.min())), v.conj()))
    pi = diag / diag.sum()
    return float(np.max(np.abs(pi @ tm.p - pi)))


def slme_sweep(spec: ModelSpec, basis: FockBasis, beta: float, taus, n: int, u_prime: float) -> list[dict]:
    rows = []
    for tau in taus:
        tm = transition_matrix(spec, basis, beta, float(tau), n, u_prime)
        lam, bound = slme(tm)
        rows.append({"tau": float(tau), "n": n, "u_prime": u_prime, "lambda2_mag": lam, "bound": bound})
    return rows


def brute_force_count(L: int, N: int, n_max: int) -> int:
    return sum(1 for c in itertools.product(range(n_max + 1), repeat=L) if sum(c) == N)
