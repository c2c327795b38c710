"""METTS Markov chain with optional Trotter-gate basis rotations.

Step ``s`` collapses the evolved state onto plain occupation states when
``s`` is even and onto the rotated basis ``U|k>`` when ``s`` is odd.  Between
steps only the occupation tuple and a "rotated" flag are kept; the MPS is
rebuilt from them each step.

Grand-canonical chains use the hybrid layout ``anc, phys_1 .. phys_L, anc``:
the two edge physical sites are purified with an ancilla each and only the
inner physical sites ``2..L-1`` are sampled.  Ancilla states carry the
opposite charge, so the MPS charge ``Q`` is the inner occupation sum and the
physical particle number is ``Q + n_anc_left + n_anc_right``.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from . import symtensor as st
from . import twosite
from .model import ModelSpec, hamiltonian_bonds, trotter_hamiltonians
from .mps import MPS, CpsConfig, collapse_to_cps, correlation_matrix, expect_bonds, from_cps, physical_index
from .propagator import SCHEDULES, ImaginaryEvolver, SymmetricRotation, shift_terms
from .symtensor import IN, OUT, ChargeIndex, SymTensor, TruncationSpec

CANONICAL = "canonical"
GRAND_CANONICAL = "grand_canonical"
DEFAULT_BURN_IN = 32


class NumericalError(ArithmeticError):
    """A chain step failed numerically; ``step`` is the failing step index."""

    def __init__(self, step: int, cause: Exception):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


@dataclass(frozen=True)
class ChainConfig:
    model: ModelSpec
    beta: float
    dtau: float = 0.0625
    tau: float = 0.0
    n: int = 1
    ensemble: str = CANONICAL
    n_samples: int = 1
    burn_in: int = DEFAULT_BURN_IN
    seed: int = 0
    trunc: TruncationSpec = field(default_factory=TruncationSpec)
    initial: CpsConfig | None = None
    schedule: str = "second_order"

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.dtau <= 0:
            raise ValueError("dtau must be positive")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.ensemble not in (CANONICAL, GRAND_CANONICAL):
            raise ValueError(f"unknown ensemble {self.ensemble!r}")
        if self.n_samples < 1 or self.burn_in < 0:
            raise ValueError("n_samples must be positive and burn_in non-negative")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.initial is not None:
            want = self.model.L if self.ensemble == CANONICAL else self.model.L - 2
            if len(self.initial) != want:
                raise ValueError(f"initial configuration needs {want} sites, got {len(self.initial)}")
            if max(self.initial.occupations) > self.model.n_max:
                raise ValueError("initial occupation exceeds n_max")

    @property
    def start(self) -> CpsConfig:
        """Initial configuration: the unit-filled Mott state unless given."""
        if self.initial is not None:
            return self.initial
        L = self.model.L if self.ensemble == CANONICAL else self.model.L - 2
        return CpsConfig((1,) * L)


@dataclass
class SampleRecord:
    step: int
    parity: str
    burn_in: bool
    energy: float
    n_total: float
    n_total_sq: float
    max_bond: int
    discarded: float
    wall_seconds: float

    def to_dict(self) -> dict:
        return asdict(self)


RECORD_FIELDS = tuple(SampleRecord.__dataclass_fields__)


@dataclass(frozen=True)
class ChainState:
    config: CpsConfig
    rotated: bool = False


def parity_of(step: int) -> str:
    return "even" if step % 2 == 0 else "odd"


def collapses_rotated(step: int) -> bool:
    return step % 2 == 1


def hybrid_phys_charges(L: int, d: int) -> list[np.ndarray]:
    anc = -np.arange(d)
    return [anc] + [np.arange(d) for _ in range(L)] + [anc]


def hybrid_reset_and_build(inner_config, model: ModelSpec) -> MPS:
    """Hybrid-layout MPS with purified edge pairs and the inner sites set.

    ``inner_config`` holds the occupations of physical sites ``2..L-1``.  The
    result has ``L + 2`` sites and its center on site 0.
    """
    occ = inner_config.occupations if isinstance(inner_config, CpsConfig) else tuple(inner_config)
    L, d = model.L, model.d
    if len(occ) != L - 2:
        raise ValueError(f"inner configuration needs {L - 2} sites, got {len(occ)}")
    if any(not 0 <= n < d for n in occ):
        raise ValueError("inner occupation outside the local space")
    charges = hybrid_phys_charges(L, d)
    amp = 1.0 / np.sqrt(d)
    one = np.ones((1, 1, 1), dtype=complex)
    sig = np.arange(d)
    tensors = []
    # left ancilla and first physical site
    pair_bond = ChargeIndex.from_sectors([(-s, 1) for s in sig], OUT)
    tensors.append(
        SymTensor(
            [ChargeIndex((0,), (1,), IN), physical_index(charges[0]), pair_bond],
            {(0, -s, -s): amp * one for s in sig},
            0,
            check=False,
        )
    )
    acc = 0
    tensors.append(
        SymTensor(
            [pair_bond.dual(), physical_index(charges[1]), ChargeIndex((0,), (1,), OUT)],
            {(-s, s, 0): one for s in sig},
            0,
            check=False,
        )
    )
    for k, n in enumerate(occ):
        m = k + 2
        tensors.append(
            SymTensor(
                [ChargeIndex((acc,), (1,), IN), physical_index(charges[m]), ChargeIndex((acc + n,), (1,), OUT)],
                {(acc, n, acc + n): one},
                0,
                check=False,
            )
        )
        acc += n
    # last physical site and right ancilla
    pair_bond = ChargeIndex.from_sectors([(acc + s, 1) for s in sig], OUT)
    tensors.append(
        SymTensor(
            [ChargeIndex((acc,), (1,), IN), physical_index(charges[L]), pair_bond],
            {(acc, s, acc + s): amp * one for s in sig},
            0,
            check=False,
        )
    )
    tensors.append(
        SymTensor(
            [pair_bond.dual(), physical_index(charges[L + 1]), ChargeIndex((acc,), (1,), OUT)],
            {(acc + s, -s, acc): one for s in sig},
            0,
            check=False,
        )
    )
    return MPS(tensors, charges, center=0)


class MettsChain:
    """Cached propagators and observables for one chain configuration."""

    def __init__(self, config: ChainConfig):
        self.config = config
        model = config.model
        self.grand = config.ensemble == GRAND_CANONICAL
        offset = 1 if self.grand else 0
        evolve_model = model if self.grand else model.with_(mu=0.0)
        terms = shift_terms(hamiltonian_bonds(evolve_model), offset)
        self.evolver = ImaginaryEvolver(terms, config.beta / 2.0, config.dtau, SCHEDULES[config.schedule], config.trunc)
        even, odd = trotter_hamiltonians(model)
        self.rotation = SymmetricRotation(
            shift_terms(even, offset), shift_terms(odd, offset), config.tau, config.n, config.trunc
        )
        self.energy_terms = [(t.site, t.matrix) for t in shift_terms(hamiltonian_bonds(model, include_mu=False), offset)]
        self._energy_ops = None
        if self.grand:
            self.charges = hybrid_phys_charges(model.L, model.d)
            self.collapse_sites = range(2, model.L)
        else:
            self.charges = [np.arange(model.d)] * model.L
            self.collapse_sites = range(model.L)

    def build(self, state: ChainState) -> tuple[MPS, float]:
        if self.grand:
            psi = hybrid_reset_and_build(state.config, self.config.model)
        else:
            psi = from_cps(state.config, phys_charges=self.charges)
        discarded = 0.0
        if state.rotated:
            discarded += self.rotation.forward_(psi)
        return psi, discarded

    def energy(self, psi: MPS) -> float:
        if self._energy_ops is None:
            self._energy_ops = [
                (m, twosite.BlockOperator(h, twosite.layout_for(self.charges, m))) for m, h in self.energy_terms
            ]
        return float(sum(expect_bonds(psi, self._energy_ops)))

    def particle_number(self, psi: MPS) -> tuple[float, float]:
        """``(<N>, <N^2>)`` of the physical sites."""
        Q = psi.global_charge
        if not self.grand:
            return float(Q), float(Q * Q)
        nvals = np.arange(self.config.model.d, dtype=float)
        ends = [0, psi.L - 1]
        c = correlation_matrix(psi, nvals, ends)
        first = sum(self._site_mean(psi, m, nvals) for m in ends)
        second = c[0, 0] + c[1, 1] + 2.0 * c[0, 1]
        return Q + first, Q * Q + 2.0 * Q * first + second

    @staticmethod
    def _site_mean(psi, m, nvals):
        work = psi.copy().canonicalize_(m)
        t = work.tensors[m]
        cm = work.phys_charges[m]
        val = {int(c): nvals[s] for s, c in enumerate(cm)}
        num = sum(val[k[1]] * float(np.vdot(b, b).real) for k, b in t.blocks.items())
        return num / t.norm() ** 2

    def step(self, state: ChainState, step: int, rng) -> tuple[ChainState, SampleRecord]:
        """One METTS step from ``state``; returns the next state and the record."""
        t0 = time.perf_counter()
        try:
            psi, discarded = self.build(state)
            discarded += self.evolver.evolve_(psi)
            energy = self.energy(psi)
            n1, n2 = self.particle_number(psi)
            max_bond = psi.max_bond()
            rotated = collapses_rotated(step) and not self.rotation.trivial
            if rotated:
                discarded += self.rotation.adjoint_(psi)
            config, _, _ = collapse_to_cps(psi, rng, self.collapse_sites)
        except (ArithmeticError, st.DegenerateStateError, np.linalg.LinAlgError) as exc:
            raise NumericalError(step, exc) from exc
        record = SampleRecord(
            step=step,
            parity=parity_of(step),
            burn_in=step < self.config.burn_in,
            energy=energy,
            n_total=float(n1),
            n_total_sq=float(n2),
            max_bond=int(max_bond),
            discarded=float(discarded),
            wall_seconds=time.perf_counter() - t0,
        )
        return ChainState(config, rotated), record


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def metts_step_canonical(state: ChainState, step: int, config: ChainConfig, rng, chain: MettsChain | None = None):
    chain = chain or MettsChain(config)
    if chain.grand:
        raise ValueError("metts_step_canonical needs a canonical chain")
    return chain.step(state, step, rng)


def metts_step_grand(state: ChainState, step: int, config: ChainConfig, rng, chain: MettsChain | None = None):
    chain = chain or MettsChain(config)
    if not chain.grand:
        raise ValueError("metts_step_grand needs a grand-canonical chain")
    return chain.step(state, step, rng)


def iterate_chain(config: ChainConfig) -> Iterator[tuple[ChainState, SampleRecord]]:
    """Yield ``(state_before_step, record)`` for burn-in and sampling steps."""
    chain = MettsChain(config)
    rng = make_rng(config.seed)
    state = ChainState(config.start, False)
    for s in range(config.burn_in + config.n_samples):
        before = state
        state, record = chain.step(state, s, rng)
        yield before, record


def run_chain(config: ChainConfig) -> Iterator[SampleRecord]:
    for _, record in iterate_chain(config):
        yield record
