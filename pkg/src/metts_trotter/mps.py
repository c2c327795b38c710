"""Matrix product states built on :mod:`symtensor`.

Site tensors have legs ``(left bond IN, physical IN, right bond OUT)`` and
zero total charge, so the right bond of site ``m`` carries the accumulated
charge of sites ``0..m``.  The leftmost bond is the single sector 0 and the
rightmost bond holds the global charge.

A local state ``sigma`` of a site carries charge ``phys_charges[m][sigma]``.
Ordinary boson sites use ``charge == sigma``; ancilla sites of the hybrid
layout use ``charge == -sigma``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import symtensor as st
from . import twosite
from .symtensor import IN, OUT, ChargeIndex, SymTensor

PROB_TOL = 1e-8


@dataclass(frozen=True)
class CpsConfig:
    occupations: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "occupations", tuple(int(n) for n in self.occupations))
        if any(n < 0 for n in self.occupations):
            raise ValueError("occupations must be non-negative")

    @property
    def total(self) -> int:
        return sum(self.occupations)

    def __len__(self):
        return len(self.occupations)


def physical_index(charges) -> ChargeIndex:
    return ChargeIndex.from_sectors([(int(c), 1) for c in charges], IN)


def _boundary(charge: int, direction: int) -> ChargeIndex:
    return ChargeIndex((int(charge),), (1,), direction)


class MPS:
    """Finite MPS with an optional orthogonality center.

    Methods ending in ``_`` mutate in place; module-level functions return
    new states.  Site tensors themselves are never modified, only replaced.
    """

    def __init__(self, tensors, phys_charges, center=None):
        self.tensors: list[SymTensor] = list(tensors)
        self.phys_charges = [np.asarray(c, dtype=int) for c in phys_charges]
        self.center = center
        if len(self.tensors) != len(self.phys_charges):
            raise st.ChargeError("one charge map per site is required")
        for a, b in zip(self.tensors, self.tensors[1:]):
            if not a.indices[2].same_sectors(b.indices[0]) or a.indices[2].direction != -b.indices[0].direction:
                raise st.ChargeError("neighbouring bond legs do not match")

    @property
    def L(self) -> int:
        return len(self.tensors)

    @property
    def local_dims(self) -> list[int]:
        return [len(c) for c in self.phys_charges]

    @property
    def global_charge(self) -> int:
        return self.tensors[-1].indices[2].charges[0]

    def bond_dims(self) -> list[int]:
        return [t.indices[2].dim for t in self.tensors[:-1]]

    def max_bond(self) -> int:
        dims = self.bond_dims()
        return max(dims) if dims else 1

    def copy(self) -> "MPS":
        return MPS(self.tensors, self.phys_charges, self.center)

    def norm(self) -> float:
        if self.center is not None:
            return self.tensors[self.center].norm()
        return float(np.sqrt(abs(inner(self, self))))

    def normalize_(self) -> "MPS":
        if self.center is None:
            self.canonicalize_(0)
        c = self.center
        self.tensors[c] = self.tensors[c] / self.tensors[c].norm()
        return self

    def _shift_right(self, m: int):
        self.tensors[m], self.tensors[m + 1] = twosite.shift_right(self.tensors[m], self.tensors[m + 1])

    def _shift_left(self, m: int):
        self.tensors[m - 1], self.tensors[m] = twosite.shift_left(self.tensors[m - 1], self.tensors[m])

    def canonicalize_(self, new_center: int) -> "MPS":
        if not 0 <= new_center < self.L:
            raise IndexError(f"center {new_center} outside chain of length {self.L}")
        if self.center is None:
            for m in range(new_center):
                self._shift_right(m)
            for m in range(self.L - 1, new_center, -1):
                self._shift_left(m)
        else:
            for m in range(self.center, new_center):
                self._shift_right(m)
            for m in range(self.center, new_center, -1):
                self._shift_left(m)
        self.center = new_center
        return self

    def site_index_order(self, m: int) -> np.ndarray:
        """Dense position of each local state ``sigma`` on the physical leg."""
        return np.argsort(np.argsort(self.phys_charges[m], kind="stable"), kind="stable")

    def to_vector(self) -> np.ndarray:
        """Dense state in the product basis ordered by ``sigma`` (small chains only)."""
        vec = np.ones((1, 1), dtype=complex)
        for m, t in enumerate(self.tensors):
            a = st.to_dense(t)[:, self.site_index_order(m), :]
            vec = np.einsum("xl,lpr->xpr", vec, a).reshape(-1, a.shape[2])
        return vec[:, 0]


def from_cps(config, local_dims=None, phys_charges=None) -> MPS:
    """Bond-dimension-one product state for an occupation tuple."""
    occ = config.occupations if isinstance(config, CpsConfig) else tuple(int(n) for n in config)
    L = len(occ)
    if phys_charges is None:
        if local_dims is None:
            raise ValueError("local_dims or phys_charges is required")
        if np.isscalar(local_dims):
            local_dims = [int(local_dims)] * L
        phys_charges = [np.arange(d) for d in local_dims]
    tensors = []
    acc = 0
    for m, sigma in enumerate(occ):
        cm = phys_charges[m]
        if not 0 <= sigma < len(cm):
            raise ValueError(f"occupation {sigma} at site {m} exceeds local dimension {len(cm)}")
        q = int(cm[sigma])
        blocks = {(acc, q, acc + q): np.ones((1, 1, 1), dtype=complex)}
        legs = [_boundary(acc, IN), physical_index(cm), _boundary(acc + q, OUT)]
        tensors.append(SymTensor(legs, blocks, 0, check=False))
        acc += q
    return MPS(tensors, phys_charges, center=0)


def random_mps(local_dims, charge: int, chi: int, rng) -> MPS:
    """Random normalized MPS in a fixed charge sector (for tests and oracles)."""
    L = len(local_dims)
    d_max = list(local_dims)
    bonds = [[(0, 1)]]
    for m in range(L - 1):
        lo = max(0, charge - sum(d - 1 for d in d_max[m + 1 :]))
        hi = min(charge, sum(d - 1 for d in d_max[: m + 1]))
        bonds.append([(c, chi) for c in range(lo, hi + 1)])
    bonds.append([(charge, 1)])
    tensors = []
    for m in range(L):
        legs = [
            ChargeIndex.from_sectors(bonds[m], IN),
            physical_index(range(local_dims[m])),
            ChargeIndex.from_sectors(bonds[m + 1], OUT),
        ]
        tensors.append(st.random(legs, 0, rng))
    psi = MPS(tensors, [np.arange(d) for d in local_dims])
    return psi.normalize_()


def canonicalize(psi: MPS, new_center: int) -> MPS:
    return psi.copy().canonicalize_(new_center)


def inner(a: MPS, b: MPS) -> complex:
    """``<a|b>`` by a left-to-right transfer sweep."""
    if a.L != b.L or a.local_dims != b.local_dims:
        raise st.ChargeError("states differ in length or local dimensions")
    env = None
    for ta, tb in zip(a.tensors, b.tensors):
        if env is None:
            env = st.contract(ta.conj(), tb, [(0, 0), (1, 1)])
        else:
            tmp = st.contract(env, tb, [(1, 0)])
            env = st.contract(ta.conj(), tmp, [(0, 0), (1, 1)])
    return complex(sum(np.trace(blk) for key, blk in env.blocks.items() if key[0] == key[1]))


def _dense_operator_tensor(matrix, charge_maps) -> SymTensor:
    """Charge-conserving operator on consecutive sites as a tensor.

    Legs are ``(out_1, ..., out_k, in_1, ..., in_k)`` with the outputs incoming
    (they become new ket legs) and the inputs outgoing (they contract with
    ket legs).
    """
    k = len(charge_maps)
    dims = [len(c) for c in charge_maps]
    arr = np.asarray(matrix, dtype=complex).reshape(dims + dims)
    orders = [np.argsort(c, kind="stable") for c in charge_maps]
    arr = arr[np.ix_(*(orders + orders))]
    legs = [physical_index(c) for c in charge_maps]
    t = st.from_dense(arr, legs + [ix.dual() for ix in legs], 0)
    if not np.allclose(st.to_dense(t), arr, atol=1e-13, rtol=0.0):
        raise st.ChargeError("operator does not conserve the charge")
    return t


def two_site_operator(psi: MPS, matrix, m: int) -> SymTensor:
    return _dense_operator_tensor(matrix, [psi.phys_charges[m], psi.phys_charges[m + 1]])


def _check_hermitian(matrix):
    matrix = np.asarray(matrix)
    if not np.allclose(matrix, matrix.conj().T, atol=1e-12, rtol=0.0):
        raise ValueError("operator is not Hermitian")


def _real(val: complex) -> float:
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ArithmeticError(f"expectation value has imaginary part {val.imag:g}")
    return float(val.real)


def expect_bond(psi: MPS, term, m: int) -> float:
    """``<psi| term_{m,m+1} |psi> / <psi|psi>`` for a Hermitian two-site term."""
    _check_hermitian(term)
    work = psi.copy()
    if work.center is None or work.center not in (m, m + 1):
        work.canonicalize_(m)
    lay = twosite.layout_for(work.phys_charges, m)
    th = twosite.theta(work.tensors[m], work.tensors[m + 1], lay)
    applied = twosite.apply(twosite.BlockOperator(term, lay), th)
    return _real(twosite.overlap(th, applied) / twosite.norm_sq(th))


def expect_bonds(psi: MPS, terms) -> list[float]:
    """Expectation values of several bond terms in one left-to-right sweep.

    ``terms`` holds ``(m, operator)`` pairs with ``operator`` a dense matrix
    or a :class:`twosite.BlockOperator`.
    """
    terms = sorted(terms, key=lambda x: x[0])
    work = psi.copy()
    out = []
    for m, op in terms:
        if work.center is None or work.center not in (m, m + 1):
            work.canonicalize_(m)
        lay = twosite.layout_for(work.phys_charges, m)
        if not isinstance(op, twosite.BlockOperator):
            _check_hermitian(op)
            op = twosite.BlockOperator(op, lay)
        th = twosite.theta(work.tensors[m], work.tensors[m + 1], lay)
        out.append(_real(twosite.overlap(th, twosite.apply(op, th)) / twosite.norm_sq(th)))
    return out


def _diag_factors(psi: MPS, m: int, values) -> dict[int, np.ndarray]:
    cm = psi.phys_charges[m]
    return {int(c): np.array([values[s]], dtype=complex) for s, c in enumerate(cm)}


def _as_diagonal(o) -> np.ndarray:
    o = np.asarray(o)
    if o.ndim == 1:
        return o.astype(float)
    if not np.allclose(o, np.diag(np.diag(o)), atol=1e-14):
        raise ValueError("correlation_matrix needs an operator diagonal in the occupation basis")
    return np.real(np.diag(o))


def correlation_matrix(psi: MPS, o, sites=None) -> np.ndarray:
    """``<o_i o_j>`` for a diagonal on-site operator over the chosen sites.

    ``o`` is a length-``d`` vector of diagonal entries (or a diagonal matrix);
    ``sites`` defaults to the whole chain.  The result is ``len(sites)``
    square, symmetric, with ``<o_i^2>`` on the diagonal.
    """
    vals = _as_diagonal(o)
    sites = list(range(psi.L)) if sites is None else list(sites)
    n = len(sites)
    out = np.zeros((n, n))
    pos = {s: k for k, s in enumerate(sites)}
    work = psi.copy().canonicalize_(sites[0])
    norm2 = work.norm() ** 2
    for a, i in enumerate(sites):
        work.canonicalize_(i)
        center = work.tensors[i]
        ci = center.scale_axis(1, _diag_factors(work, i, vals))
        out[a, a] = np.real(sum(np.vdot(ci.blocks[k], ci.blocks[k]) for k in ci.blocks)) / norm2
        # environment over the right bond with o_i inserted
        env = st.contract(center.conj(), ci, [(0, 0), (1, 1)])
        for j in range(i + 1, sites[-1] + 1):
            b = work.tensors[j]
            tmp = st.contract(env, b, [(1, 0)])
            if j in pos:
                bj = tmp.scale_axis(1, _diag_factors(work, j, vals))
                closed = st.contract(b.conj(), bj, [(0, 0), (1, 1)])
                val = sum(np.trace(blk) for k, blk in closed.blocks.items() if k[0] == k[1])
                out[a, pos[j]] = out[pos[j], a] = np.real(val) / norm2
            env = st.contract(b.conj(), tmp, [(0, 0), (1, 1)])
    return out


def collapse_to_cps(psi: MPS, rng: np.random.Generator, site_range=None):
    """Sample an occupation configuration on ``site_range`` with Born weights.

    Sites are visited left to right.  At each site the weights of the local
    states are read off the orthogonality center, one is drawn, the center is
    projected and renormalized and then shifted right.  Returns
    ``(config, projected_state, log_probability)`` where ``config`` lists the
    sampled occupations of ``site_range`` only.
    """
    if site_range is None:
        site_range = range(psi.L)
    site_range = list(site_range)
    if any(b != a + 1 for a, b in zip(site_range, site_range[1:])):
        raise ValueError("site_range must be contiguous")
    work = psi.copy().canonicalize_(site_range[0])
    work.normalize_()
    config = []
    logp = 0.0
    for m in site_range:
        t = work.tensors[m]
        cm = work.phys_charges[m]
        weight = {}
        for key, blk in t.blocks.items():
            weight[key[1]] = weight.get(key[1], 0.0) + float(np.vdot(blk, blk).real)
        probs = np.array([weight.get(int(c), 0.0) for c in cm])
        total = probs.sum()
        if abs(total - 1.0) > PROB_TOL:
            raise ArithmeticError(f"site {m}: local probabilities sum to {total!r}")
        probs = probs / total
        sigma = _draw(probs, rng)
        q = int(cm[sigma])
        p = probs[sigma]
        logp += float(np.log(p))
        kept = {k: v / np.sqrt(p * total) for k, v in t.blocks.items() if k[1] == q}
        work.tensors[m] = SymTensor(t.indices, kept, 0, check=False)
        if m + 1 < work.L:
            work._shift_right(m)
            work.center = m + 1
        config.append(sigma)
    return CpsConfig(config), work, logp


def _draw(probs: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(probs)
    k = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    k = min(k, len(probs) - 1)
    if probs[k] <= 0.0:
        # landed on an empty branch through rounding: redraw among the rest
        nz = np.flatnonzero(probs > 0)
        sub = probs[nz] / probs[nz].sum()
        k = int(nz[min(int(np.searchsorted(np.cumsum(sub), rng.random(), side="right")), len(nz) - 1)])
    return k
