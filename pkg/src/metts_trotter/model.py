"""Bose-Hubbard chain as a list of two-site bond terms.

Site indices are 0-based throughout.  A bond term on ``(m, m+1)`` is a
``(d*d, d*d)`` matrix in the product basis ``sigma_m * d + sigma_{m+1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class ModelSpec:
    """Bose-Hubbard parameters, energies in units of the hopping ``J``.

    ``u_prime`` is the interaction used only inside the basis-rotation
    Hamiltonians (either ``U`` or 0).  ``None`` means "same as ``U``".
    """

    L: int
    J: float = 1.0
    U: float = 1.0
    mu: float = 0.0
    n_max: int = 6
    hardcore: bool = False
    u_prime: float | None = None

    def __post_init__(self):
        if self.L < 2 or self.L % 2:
            raise ValueError(f"L must be an even integer >= 2, got {self.L}")
        if self.hardcore and self.n_max != 1:
            # hardcore forces a two-level site
            object.__setattr__(self, "n_max", 1)
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")

    @property
    def d(self) -> int:
        return self.n_max + 1

    @property
    def interaction(self) -> float:
        """On-site ``U`` actually entering the Hamiltonian (0 when hardcore)."""
        return 0.0 if self.hardcore else self.U

    @property
    def rotation_interaction(self) -> float:
        if self.hardcore:
            return 0.0
        return self.U if self.u_prime is None else self.u_prime

    def with_(self, **kw) -> "ModelSpec":
        return replace(self, **kw)


@dataclass(frozen=True)
class BondTerm:
    site: int
    matrix: np.ndarray

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("bond term must be a square matrix")
        if not np.allclose(m, m.conj().T, rtol=0.0, atol=1e-14):
            raise ValueError(f"bond term on site {self.site} is not Hermitian")


def annihilation(d: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1)


def number(d: int) -> np.ndarray:
    return np.diag(np.arange(d, dtype=float))


def onsite_interaction(d: int) -> np.ndarray:
    n = np.arange(d, dtype=float)
    return np.diag(n * (n - 1.0))


def hopping(d: int, J: float) -> np.ndarray:
    b = annihilation(d)
    return -J * (np.kron(b.T, b) + np.kron(b, b.T))


def _onsite(spec: ModelSpec, mu: float) -> np.ndarray:
    d = spec.d
    return 0.5 * spec.interaction * onsite_interaction(d) - mu * number(d)


def _pair(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    d = left.shape[0]
    eye = np.eye(d)
    return np.kron(left, eye) + np.kron(eye, right)


def hamiltonian_bonds(spec: ModelSpec, include_mu: bool = True) -> list[BondTerm]:
    """Bond decomposition of the full Hamiltonian.

    Interior on-site terms are split in half between the two adjacent bonds;
    the two boundary sites put their whole on-site term on their only bond.
    """
    L, d = spec.L, spec.d
    onsite = _onsite(spec, spec.mu if include_mu else 0.0)
    hop = hopping(d, spec.J)
    terms = []
    for m in range(L - 1):
        wl = 1.0 if m == 0 else 0.5
        wr = 1.0 if m + 1 == L - 1 else 0.5
        terms.append(BondTerm(m, hop + _pair(wl * onsite, wr * onsite)))
    return terms


def trotter_hamiltonians(spec: ModelSpec) -> tuple[list[BondTerm], list[BondTerm]]:
    """Bond terms of the two commuting halves used to build the rotation.

    Returns ``(even_terms, odd_terms)`` with "even"/"odd" referring to the
    1-based left site of each bond, so ``even_terms`` live on 0-based bonds
    1, 3, ... and ``odd_terms`` on 0-based bonds 0, 2, ....  Every site is
    covered by exactly one odd bond and every interior site by exactly one
    even bond; the interaction weights make ``H_even + H_odd`` equal the
    full Hamiltonian when ``u_prime == U`` and ``mu == 0``.
    """
    L, d = spec.L, spec.d
    up = spec.rotation_interaction
    quarter = 0.25 * up * onsite_interaction(d)
    hop = hopping(d, spec.J)
    even, odd = [], []
    for m in range(0, L - 1, 2):
        wl = 2.0 if m == 0 else 1.0
        wr = 2.0 if m + 1 == L - 1 else 1.0
        odd.append(BondTerm(m, hop + _pair(wl * quarter, wr * quarter)))
    for m in range(1, L - 2, 2):
        even.append(BondTerm(m, hop + _pair(quarter, quarter)))
    return even, odd


def dense_from_bonds(terms: list[BondTerm], L: int, d: int) -> np.ndarray:
    """Full ``d**L`` matrix of a sum of bond terms (small systems only)."""
    dim = d**L
    out = np.zeros((dim, dim), dtype=complex)
    for t in terms:
        left = np.eye(d**t.site)
        right = np.eye(d ** (L - t.site - 2))
        out += np.kron(np.kron(left, t.matrix), right)
    return out
