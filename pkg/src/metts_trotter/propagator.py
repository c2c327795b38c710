"""Two-site gates and TEBD sweeps.

Bond "parity" follows the 1-based convention of the rotation Hamiltonians:
a bond whose 0-based left site ``m`` is even is an ``"odd"`` bond and vice
versa.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import symtensor as st
from . import twosite
from .model import BondTerm, trotter_hamiltonians
from .mps import MPS
from .symtensor import TruncationSpec

EVEN = "even"
ODD = "odd"


class TruncationWarning(RuntimeWarning):
    pass


def bond_parity(m: int) -> str:
    return ODD if m % 2 == 0 else EVEN


@dataclass(frozen=True)
class SweepSchedule:
    stages: tuple[tuple[str, float], ...]
    name: str = ""

    def __post_init__(self):
        for parity in (EVEN, ODD):
            total = sum(c for p, c in self.stages if p == parity)
            if abs(total - 1.0) > 1e-12:
                raise ValueError(f"{parity} coefficients sum to {total}, not 1")


SECOND_ORDER = SweepSchedule(((EVEN, 0.5), (ODD, 1.0), (EVEN, 0.5)), "second_order")

# position-extended Forest-Ruth-like fourth-order splitting
_XI = 0.1786178958448091
_LAMBDA = -0.2123418310626054
_CHI = -0.06626458266981849
FOREST_RUTH = SweepSchedule(
    (
        (EVEN, _XI),
        (ODD, (1.0 - 2.0 * _LAMBDA) / 2.0),
        (EVEN, _CHI),
        (ODD, _LAMBDA),
        (EVEN, 1.0 - 2.0 * (_CHI + _XI)),
        (ODD, _LAMBDA),
        (EVEN, _CHI),
        (ODD, (1.0 - 2.0 * _LAMBDA) / 2.0),
        (EVEN, _XI),
    ),
    "forest_ruth",
)

SCHEDULES = {"second_order": SECOND_ORDER, "forest_ruth": FOREST_RUTH}


def gate_from_term(term, step: complex) -> np.ndarray:
    """``exp(-step * term)`` for a Hermitian two-site term."""
    h = term.matrix if isinstance(term, BondTerm) else np.asarray(term)
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-step * w)) @ v.conj().T


@dataclass
class GateSet:
    """Gates of one layer, keyed by bond, with their charge-block form cached."""

    gates: list[tuple[int, np.ndarray]]
    step: complex
    _tensors: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_terms(cls, terms, step: complex) -> "GateSet":
        return cls([(t.site, gate_from_term(t, step)) for t in terms], step)

    def adjoint(self) -> "GateSet":
        return GateSet([(m, g.conj().T) for m, g in self.gates], np.conj(self.step))

    def operator(self, psi: MPS, m: int, g: np.ndarray) -> twosite.BlockOperator:
        t = self._tensors.get(m)
        if t is None:
            t = twosite.BlockOperator(g, twosite.layout_for(psi.phys_charges, m))
            self._tensors[m] = t
        return t


def apply_gate_(
    psi: MPS,
    gate,
    m: int,
    spec: TruncationSpec,
    to_right: bool = True,
    normalize: bool = False,
) -> float:
    """Apply a two-site gate on bond ``(m, m+1)`` in place.

    ``gate`` is a dense ``(d*d, d*d)`` matrix or a ``BlockOperator``.  The
    center is moved next to the bond if needed and ends on ``m+1``
    (``to_right``) or on ``m``.  Returns the discarded weight relative to the
    two-site norm.
    """
    if psi.center is None or psi.center not in (m, m + 1):
        psi.canonicalize_(m)
    lay = twosite.layout_for(psi.phys_charges, m)
    if not isinstance(gate, twosite.BlockOperator):
        gate = twosite.BlockOperator(gate, lay)
    a, b = psi.tensors[m], psi.tensors[m + 1]
    stacks = twosite.apply(gate, twosite.theta(a, b, lay))
    u, s_by, v, discarded, norm2 = twosite.split(stacks, lay, a.indices[0], a.indices[1], b.indices[1], b.indices[2], spec)
    if normalize:
        kept = np.sqrt(sum(float(np.sum(x**2)) for x in s_by.values()))
        s_by = {q: x / kept for q, x in s_by.items()}
    if to_right:
        psi.tensors[m] = u
        psi.tensors[m + 1] = v.scale_axis(0, s_by)
        psi.center = m + 1
    else:
        psi.tensors[m] = u.scale_axis(2, s_by)
        psi.tensors[m + 1] = v
        psi.center = m
    return discarded / norm2 if norm2 > 0 else 0.0


def apply_gate(psi: MPS, gate, m: int, spec: TruncationSpec, normalize: bool = False):
    out = psi.copy()
    w = apply_gate_(out, gate, m, spec, normalize=normalize)
    return out, w


def apply_layer_(psi: MPS, layer: GateSet, spec: TruncationSpec, normalize: bool = False) -> float:
    """Apply all gates of one layer, sweeping away from the nearer chain end."""
    if not layer.gates:
        return 0.0
    gates = sorted(layer.gates, key=lambda x: x[0])
    center = psi.center if psi.center is not None else 0
    first, last = gates[0][0], gates[-1][0] + 1
    ascending = abs(center - first) <= abs(center - last)
    if not ascending:
        gates = gates[::-1]
    total = 0.0
    for m, g in gates:
        target = m if ascending else m + 1
        psi.canonicalize_(target)
        total += apply_gate_(psi, layer.operator(psi, m, g), m, spec, to_right=ascending, normalize=normalize)
    return total


def _split_by_parity(terms):
    even = [t for t in terms if bond_parity(t.site) == EVEN]
    odd = [t for t in terms if bond_parity(t.site) == ODD]
    return {EVEN: even, ODD: odd}


class ImaginaryEvolver:
    """Trotterized ``exp(-beta_half * H)`` with cached gate layers."""

    def __init__(self, terms, beta_half: float, dtau: float, schedule: SweepSchedule, spec: TruncationSpec):
        if beta_half < 0:
            raise ValueError("beta_half must be non-negative")
        self.spec = spec
        self.beta_half = beta_half
        self.n_steps = int(round(beta_half / dtau)) if beta_half > 0 else 0
        if self.n_steps and abs(self.n_steps * dtau - beta_half) > 1e-12:
            # keep the requested number of steps but make them tile beta_half
            self.n_steps = max(1, self.n_steps)
        self.dtau = beta_half / self.n_steps if self.n_steps else dtau
        by_parity = _split_by_parity(terms)
        stages = []
        for _ in range(self.n_steps):
            for parity, coef in schedule.stages:
                if stages and stages[-1][0] == parity:
                    stages[-1] = (parity, stages[-1][1] + coef)
                else:
                    stages.append((parity, coef))
        cache = {}
        self.layers = []
        for parity, coef in stages:
            key = (parity, round(coef, 14))
            if key not in cache:
                cache[key] = GateSet.from_terms(by_parity[parity], coef * self.dtau)
            self.layers.append(cache[key])

    def evolve_(self, psi: MPS) -> float:
        total = 0.0
        warn_at = 1e3 * self.spec.cutoff
        for layer in self.layers:
            w = apply_layer_(psi, layer, self.spec, normalize=True)
            if warn_at > 0 and w > warn_at:
                warnings.warn(f"layer discarded weight {w:.3g} exceeds {warn_at:.3g}", TruncationWarning)
            total += w
        psi.normalize_()
        return total


def evolve_imaginary(psi: MPS, beta_half: float, dtau: float, schedule: SweepSchedule, spec: TruncationSpec, terms):
    """Return ``(exp(-beta_half H) psi / norm, total_discarded)``."""
    out = psi.copy()
    if out.center is None:
        out.canonicalize_(0)
    total = ImaginaryEvolver(terms, beta_half, dtau, schedule, spec).evolve_(out)
    return out, total


class SymmetricRotation:
    """``[exp(-i s H_even) exp(-i s H_odd)]**n`` with ``s = tau / n`` and its adjoint."""

    def __init__(self, even_terms, odd_terms, tau: float, n: int, spec: TruncationSpec):
        if tau < 0:
            raise ValueError("tau must be non-negative")
        if n < 1:
            raise ValueError("n must be >= 1")
        self.tau, self.n, self.spec = tau, n, spec
        s = 1j * tau / n
        self.even = GateSet.from_terms(even_terms, s)
        self.odd = GateSet.from_terms(odd_terms, s)
        self.even_adj = self.even.adjoint()
        self.odd_adj = self.odd.adjoint()

    @property
    def trivial(self) -> bool:
        return self.tau == 0.0

    def forward_(self, psi: MPS) -> float:
        if self.trivial:
            return 0.0
        total = 0.0
        for _ in range(self.n):
            # the rightmost factor acts first
            total += apply_layer_(psi, self.odd, self.spec)
            total += apply_layer_(psi, self.even, self.spec)
        return total

    def adjoint_(self, psi: MPS) -> float:
        if self.trivial:
            return 0.0
        total = 0.0
        for _ in range(self.n):
            total += apply_layer_(psi, self.even_adj, self.spec)
            total += apply_layer_(psi, self.odd_adj, self.spec)
        return total


def shift_terms(terms, offset: int) -> list[BondTerm]:
    return [BondTerm(t.site + offset, t.matrix) for t in terms]


def apply_symmetric_unitary(
    psi: MPS,
    tau: float,
    n: int,
    model,
    spec: TruncationSpec,
    direction: str = "forward",
    site_offset: int = 0,
):
    """Return ``([U_T(tau/n)]**n psi, total_discarded)`` or the adjoint image."""
    even_terms, odd_terms = trotter_hamiltonians(model)
    even_terms = shift_terms(even_terms, site_offset)
    odd_terms = shift_terms(odd_terms, site_offset)
    out = psi.copy()
    if out.center is None:
        out.canonicalize_(0)
    rot = SymmetricRotation(even_terms, odd_terms, tau, n, spec)
    if direction == "forward":
        w = rot.forward_(out)
    elif direction == "adjoint":
        w = rot.adjoint_(out)
    else:
        raise ValueError(f"direction must be 'forward' or 'adjoint', got {direction!r}")
    return out, w
