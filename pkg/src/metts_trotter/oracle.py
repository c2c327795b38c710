"""Grand-canonical hardcore bosons on an open chain via free fermions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit


@dataclass(frozen=True)
class FreeFermionSpec:
    L: int
    J: float = 1.0
    beta: float = 1.0
    mu: float = 0.0

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")


def spectrum(L: int, J: float = 1.0) -> np.ndarray:
    """Single-particle energies of the open tight-binding chain, ascending."""
    if L < 1:
        raise ValueError("L must be >= 1")
    k = np.arange(1, L + 1)
    return np.sort(-2.0 * J * np.cos(k * np.pi / (L + 1)))


def occupations(spec: FreeFermionSpec) -> np.ndarray:
    eps = spectrum(spec.L, spec.J)
    # expit(-x) == 1 / (exp(x) + 1) without overflow
    return expit(-spec.beta * (eps - spec.mu))


def grand_canonical(spec: FreeFermionSpec) -> tuple[float, float, float]:
    """Return ``(n_mean, energy, kappa)``.

    ``energy`` excludes the ``-mu N`` term; ``kappa = d<N>/dmu`` in its
    fluctuation form ``beta * sum f (1 - f)``.
    """
    eps = spectrum(spec.L, spec.J)
    f = occupations(spec)
    return float(f.sum()), float(np.dot(eps, f)), float(spec.beta * np.sum(f * (1.0 - f)))


def mu_sweep(L: int, beta: float, mus, J: float = 1.0) -> list[dict]:
    rows = []
    for mu in mus:
        n, e, k = grand_canonical(FreeFermionSpec(L, J, beta, float(mu)))
        rows.append({"mu": float(mu), "nu": n / L, "energy_per_site": e / L, "kappa": k})
    return rows


DEFAULT_MUS = tuple(np.round(np.arange(-2.6, -1.0 + 1e-9, 0.2), 10))
