"""Block-sparse tensors with a single additive U(1) charge.

Every leg carries a :class:`ChargeIndex` (sorted charge sectors with their
degeneracies and a direction).  A block keyed by one charge per leg may be
stored only if ``sum(direction * charge) == total_charge``, with outgoing
legs counted ``+1`` and incoming legs ``-1``.  Absent blocks are zero.

Contractions and factorizations group blocks by the fused charge of the legs
involved and work on one dense matrix per charge sector.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import product
from math import prod

import numpy as np

OUT = 1
IN = -1

DEGENERACY_RTOL = 1e-12


class ChargeError(ValueError):
    """Structural mismatch between legs or blocks."""


class DegenerateStateError(ArithmeticError):
    """A factorization would discard every singular value."""


@dataclass(frozen=True)
class ChargeIndex:
    charges: tuple[int, ...]
    degeneracies: tuple[int, ...]
    direction: int = OUT

    def __post_init__(self):
        if len(self.charges) != len(self.degeneracies):
            raise ChargeError("charges and degeneracies differ in length")
        if any(b <= a for a, b in zip(self.charges, self.charges[1:])):
            raise ChargeError(f"sector charges must be strictly increasing: {self.charges}")
        if any(g < 1 for g in self.degeneracies):
            raise ChargeError(f"degeneracies must be >= 1: {self.degeneracies}")
        if self.direction not in (IN, OUT):
            raise ChargeError(f"direction must be +1 or -1, got {self.direction}")

    @classmethod
    def from_sectors(cls, sectors, direction=OUT) -> "ChargeIndex":
        sectors = sorted((int(c), int(g)) for c, g in sectors)
        return cls(tuple(c for c, _ in sectors), tuple(g for _, g in sectors), direction)

    @cached_property
    def deg(self) -> dict[int, int]:
        return dict(zip(self.charges, self.degeneracies))

    @cached_property
    def offset(self) -> dict[int, int]:
        offs = np.concatenate([[0], np.cumsum(self.degeneracies)[:-1]]).astype(int)
        return dict(zip(self.charges, (int(o) for o in offs)))

    @property
    def dim(self) -> int:
        return int(sum(self.degeneracies))

    def dual(self) -> "ChargeIndex":
        return ChargeIndex(self.charges, self.degeneracies, -self.direction)

    def same_sectors(self, other: "ChargeIndex") -> bool:
        return self.charges == other.charges and self.degeneracies == other.degeneracies


@dataclass(frozen=True)
class TruncationSpec:
    max_bond: int = 10**9
    cutoff: float = 1e-10

    def __post_init__(self):
        if self.max_bond < 1:
            raise ValueError("max_bond must be positive")
        if not 0.0 <= self.cutoff < 1.0:
            raise ValueError("cutoff must lie in [0, 1)")


NO_TRUNCATION = TruncationSpec(max_bond=10**9, cutoff=0.0)


class SymTensor:
    """Charge-conserving block-sparse tensor with complex blocks."""

    __slots__ = ("indices", "blocks", "total_charge")

    def __init__(self, indices, blocks=None, total_charge: int = 0, check: bool = True):
        self.indices = tuple(indices)
        self.blocks = {} if blocks is None else blocks
        self.total_charge = int(total_charge)
        if check:
            self.check()

    def check(self):
        dirs = [ix.direction for ix in self.indices]
        for key, blk in self.blocks.items():
            if len(key) != len(self.indices):
                raise ChargeError(f"block key {key} has wrong rank")
            if sum(d * c for d, c in zip(dirs, key)) != self.total_charge:
                raise ChargeError(f"block {key} violates total charge {self.total_charge}")
            try:
                shape = tuple(ix.deg[c] for ix, c in zip(self.indices, key))
            except KeyError as exc:
                raise ChargeError(f"block {key} uses an absent sector") from exc
            if blk.shape != shape:
                raise ChargeError(f"block {key} has shape {blk.shape}, expected {shape}")
            if not np.all(np.isfinite(blk)):
                raise ArithmeticError(f"block {key} holds non-finite values")

    @property
    def ndim(self) -> int:
        return len(self.indices)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ix.dim for ix in self.indices)

    def copy(self) -> "SymTensor":
        return SymTensor(self.indices, {k: v.copy() for k, v in self.blocks.items()}, self.total_charge, check=False)

    def norm(self) -> float:
        return float(np.sqrt(sum(np.vdot(b, b).real for b in self.blocks.values())))

    def __mul__(self, x) -> "SymTensor":
        return SymTensor(self.indices, {k: v * x for k, v in self.blocks.items()}, self.total_charge, check=False)

    __rmul__ = __mul__

    def __truediv__(self, x) -> "SymTensor":
        return self * (1.0 / x)

    def __add__(self, other: "SymTensor") -> "SymTensor":
        if self.total_charge != other.total_charge or len(self.indices) != len(other.indices):
            raise ChargeError("cannot add tensors with different structure")
        for a, b in zip(self.indices, other.indices):
            if not a.same_sectors(b) or a.direction != b.direction:
                raise ChargeError("cannot add tensors with different legs")
        out = {k: v.copy() for k, v in self.blocks.items()}
        for k, v in other.blocks.items():
            out[k] = out[k] + v if k in out else v.copy()
        return SymTensor(self.indices, out, self.total_charge, check=False)

    def __sub__(self, other: "SymTensor") -> "SymTensor":
        return self + other * -1.0

    def conj(self) -> "SymTensor":
        """Complex conjugate with every leg reversed (the bra of a ket)."""
        return SymTensor(
            [ix.dual() for ix in self.indices],
            {k: v.conj() for k, v in self.blocks.items()},
            -self.total_charge,
            check=False,
        )

    def transpose(self, perm) -> "SymTensor":
        perm = tuple(perm)
        return SymTensor(
            [self.indices[p] for p in perm],
            {tuple(k[p] for p in perm): v.transpose(perm) for k, v in self.blocks.items()},
            self.total_charge,
            check=False,
        )

    def scale_axis(self, axis: int, factors: dict[int, np.ndarray]) -> "SymTensor":
        """Multiply along ``axis`` by a per-sector vector (e.g. singular values)."""
        shape = [1] * self.ndim
        out = {}
        for k, v in self.blocks.items():
            f = factors[k[axis]]
            shape[axis] = len(f)
            out[k] = v * f.reshape(shape)
        return SymTensor(self.indices, out, self.total_charge, check=False)

    def item(self) -> complex:
        if self.ndim:
            raise ChargeError("item() needs a rank-0 tensor")
        blk = self.blocks.get(())
        return complex(0.0) if blk is None else complex(blk)

    def sector_keys(self):
        """All charge-allowed keys, whether stored or not."""
        dirs = [ix.direction for ix in self.indices]
        for key in product(*(ix.charges for ix in self.indices)):
            if sum(d * c for d, c in zip(dirs, key)) == self.total_charge:
                yield key

    def __repr__(self):
        return f"SymTensor(shape={self.shape}, blocks={len(self.blocks)}, total_charge={self.total_charge})"


def zeros(indices, total_charge: int = 0) -> SymTensor:
    t = SymTensor(indices, {}, total_charge, check=False)
    t.blocks = {k: np.zeros(tuple(ix.deg[c] for ix, c in zip(t.indices, k)), dtype=complex) for k in t.sector_keys()}
    return t


def random(indices, total_charge: int = 0, rng=None) -> SymTensor:
    rng = np.random.default_rng() if rng is None else rng
    t = zeros(indices, total_charge)
    for k, v in t.blocks.items():
        v += rng.standard_normal(v.shape) + 1j * rng.standard_normal(v.shape)
    return t


def identity(index: ChargeIndex) -> SymTensor:
    """Identity with legs ``(index.dual(), index)``; contracting either leg is a no-op."""
    blocks = {(c, c): np.eye(g, dtype=complex) for c, g in zip(index.charges, index.degeneracies)}
    return SymTensor([index.dual(), index], blocks, 0)


def to_dense(t: SymTensor) -> np.ndarray:
    out = np.zeros(t.shape, dtype=complex)
    for key, blk in t.blocks.items():
        sl = tuple(slice(ix.offset[c], ix.offset[c] + ix.deg[c]) for ix, c in zip(t.indices, key))
        out[sl] = blk
    return out


def from_dense(array, indices, total_charge: int = 0, drop_zeros: bool = False) -> SymTensor:
    """Blocks of a dense array on the charge-allowed sectors; the rest is ignored."""
    array = np.asarray(array)
    t = SymTensor(indices, {}, total_charge, check=False)
    if array.shape != t.shape:
        raise ChargeError(f"dense shape {array.shape} does not match legs {t.shape}")
    for key in t.sector_keys():
        sl = tuple(slice(ix.offset[c], ix.offset[c] + ix.deg[c]) for ix, c in zip(t.indices, key))
        blk = np.array(array[sl], dtype=complex)
        if drop_zeros and not np.any(blk):
            continue
        t.blocks[key] = blk
    return t


def _layout(keys, legs):
    """Offsets of distinct sub-keys along one fused matrix dimension."""
    offsets = {}
    pos = 0
    for k in keys:
        if k not in offsets:
            size = 1
            for ix, c in zip(legs, k):
                size *= ix.deg[c]
            offsets[k] = (pos, size)
            pos += size
    return offsets, pos


def contract(a: SymTensor, b: SymTensor, pairs) -> SymTensor:
    """Sum over the paired legs ``[(axis_a, axis_b), ...]``.

    The result carries the free legs of ``a`` followed by those of ``b``.
    """
    ax_a = [p[0] for p in pairs]
    ax_b = [p[1] for p in pairs]
    if len(set(ax_a)) != len(ax_a) or len(set(ax_b)) != len(ax_b):
        raise ChargeError("a leg is paired twice")
    for i, j in pairs:
        ia, ib = a.indices[i], b.indices[j]
        if not ia.same_sectors(ib):
            raise ChargeError(f"legs {i} and {j} have different sectors")
        if ia.direction != -ib.direction:
            raise ChargeError(f"legs {i} and {j} must have opposite directions")
    free_a = [i for i in range(a.ndim) if i not in ax_a]
    free_b = [j for j in range(b.ndim) if j not in ax_b]
    legs_fa = [a.indices[i] for i in free_a]
    legs_fb = [b.indices[j] for j in free_b]
    legs_c = [a.indices[i] for i in ax_a]
    dirs_c = [ix.direction for ix in legs_c]
    perm_a = free_a + ax_a
    perm_b = ax_b + free_b

    # group blocks by fused contracted charge, as seen from a
    ga: dict[int, list] = {}
    for key, blk in a.blocks.items():
        kc = tuple(key[i] for i in ax_a)
        q = sum(d * c for d, c in zip(dirs_c, kc))
        ga.setdefault(q, []).append((tuple(key[i] for i in free_a), kc, blk))
    gb: dict[int, list] = {}
    for key, blk in b.blocks.items():
        kc = tuple(key[j] for j in ax_b)
        q = sum(d * c for d, c in zip(dirs_c, kc))
        gb.setdefault(q, []).append((kc, tuple(key[j] for j in free_b), blk))

    out = {}
    for q, entries_a in ga.items():
        entries_b = gb.get(q)
        if not entries_b:
            continue
        kcs = {e[1] for e in entries_a} & {e[0] for e in entries_b}
        if not kcs:
            continue
        entries_a = [e for e in entries_a if e[1] in kcs]
        entries_b = [e for e in entries_b if e[0] in kcs]
        rows, nr = _layout((e[0] for e in entries_a), legs_fa)
        mids, nm = _layout(sorted(kcs), legs_c)
        cols, nc = _layout((e[1] for e in entries_b), legs_fb)
        if len(entries_a) == 1 and len(entries_b) == 1:
            fa, kc, blk_a = entries_a[0]
            _, fb, blk_b = entries_b[0]
            res = np.tensordot(
                blk_a.transpose(perm_a), blk_b.transpose(perm_b), axes=len(ax_a)
            )
            out[fa + fb] = res
            continue
        ma = np.zeros((nr, nm), dtype=complex)
        for fa, kc, blk in entries_a:
            r0, rs = rows[fa]
            m0, ms = mids[kc]
            ma[r0 : r0 + rs, m0 : m0 + ms] = blk.transpose(perm_a).reshape(rs, ms)
        mb = np.zeros((nm, nc), dtype=complex)
        for kc, fb, blk in entries_b:
            m0, ms = mids[kc]
            c0, cs = cols[fb]
            mb[m0 : m0 + ms, c0 : c0 + cs] = blk.transpose(perm_b).reshape(ms, cs)
        prod_ = ma @ mb
        for fa, (r0, rs) in rows.items():
            shape_a = tuple(ix.deg[c] for ix, c in zip(legs_fa, fa))
            for fb, (c0, cs) in cols.items():
                shape_b = tuple(ix.deg[c] for ix, c in zip(legs_fb, fb))
                out[fa + fb] = prod_[r0 : r0 + rs, c0 : c0 + cs].reshape(shape_a + shape_b)
    return SymTensor(legs_fa + legs_fb, out, a.total_charge + b.total_charge, check=False)


def _matrix_groups(t: SymTensor, left):
    left = list(left)
    right = [i for i in range(t.ndim) if i not in left]
    legs_l = [t.indices[i] for i in left]
    legs_r = [t.indices[i] for i in right]
    dirs_l = [ix.direction for ix in legs_l]
    perm = left + right
    groups: dict[int, list] = {}
    for key, blk in t.blocks.items():
        kl = tuple(key[i] for i in left)
        q = sum(d * c for d, c in zip(dirs_l, kl))
        groups.setdefault(q, []).append((kl, tuple(key[i] for i in right), blk))
    mats = {}
    for q, entries in sorted(groups.items()):
        rows, nr = _layout((e[0] for e in entries), legs_l)
        cols, nc = _layout((e[1] for e in entries), legs_r)
        m = np.zeros((nr, nc), dtype=complex)
        for kl, kr, blk in entries:
            r0, rs = rows[kl]
            c0, cs = cols[kr]
            m[r0 : r0 + rs, c0 : c0 + cs] = blk.transpose(perm).reshape(rs, cs)
        mats[q] = (m, rows, cols)
    return legs_l, legs_r, mats


def _split(t, legs_l, legs_r, pieces, bond_dir_charge):
    """Rebuild left/right factors from per-sector matrices ``(L_q, R_q)``."""
    sectors = []
    ublocks, vblocks = {}, {}
    for q, (lq, rq, rows, cols) in pieces.items():
        k = lq.shape[1]
        c = bond_dir_charge(q)
        sectors.append((c, k))
        for kl, (r0, rs) in rows.items():
            shape = tuple(ix.deg[x] for ix, x in zip(legs_l, kl)) + (k,)
            ublocks[kl + (c,)] = lq[r0 : r0 + rs, :].reshape(shape)
        for kr, (c0, cs) in cols.items():
            shape = (k,) + tuple(ix.deg[x] for ix, x in zip(legs_r, kr))
            vblocks[(c,) + kr] = rq[:, c0 : c0 + cs].reshape(shape)
    bond = ChargeIndex.from_sectors(sectors, OUT)
    u = SymTensor(legs_l + [bond], ublocks, 0, check=False)
    v = SymTensor([bond.dual()] + legs_r, vblocks, t.total_charge, check=False)
    return u, v, bond


def _keep_count(s_sorted: np.ndarray, spec: TruncationSpec) -> tuple[int, float]:
    weights = s_sorted**2
    total = weights.sum()
    # tail[k] = weight discarded when keeping the first k values
    tail = np.concatenate([np.cumsum(weights[::-1])[::-1], [0.0]])
    allowed = spec.cutoff * total
    k = int(np.argmax(tail <= allowed))
    k = min(k, spec.max_bond)
    if k == 0:
        raise DegenerateStateError("every singular value would be truncated")
    last = s_sorted[k - 1]
    while k < len(s_sorted) and s_sorted[k] >= last * (1.0 - DEGENERACY_RTOL):
        k += 1
    return k, float(tail[k])


def svd_truncate(t: SymTensor, left, spec: TruncationSpec = NO_TRUNCATION):
    """Truncated SVD ``t ~ u . diag(s) . v`` across the bipartition ``left | rest``.

    ``u`` carries the ``left`` legs plus a new outgoing bond; ``v`` carries the
    matching incoming bond followed by the remaining legs in their original
    order.  ``s`` lists the kept singular values along the bond's dense order
    (sector by sector, descending inside each sector); the truncation itself
    is decided on the values sorted across all sectors.  Returns
    ``(u, s, v, discarded_weight)`` with the discarded squared weight in
    absolute units.
    """
    if not t.blocks:
        raise DegenerateStateError("cannot factor an empty tensor")
    legs_l, legs_r, mats = _matrix_groups(t, left)
    decomposed = {}
    all_s = []
    for q, (m, rows, cols) in mats.items():
        try:
            uq, sq, vq = np.linalg.svd(m, full_matrices=False)
        except np.linalg.LinAlgError:
            uq, sq, vq = _svd_fallback(m)
        decomposed[q] = (uq, sq, vq, rows, cols)
        all_s.append(sq)
    s_all = np.concatenate(all_s)
    if not np.any(s_all > 0):
        raise DegenerateStateError("tensor has zero norm")
    order = np.sort(s_all)[::-1]
    k, discarded = _keep_count(order, spec)
    threshold = order[k - 1]
    pieces = {}
    s_out = []
    for q, (uq, sq, vq, rows, cols) in decomposed.items():
        kq = int(np.sum(sq >= threshold))
        if kq == 0:
            continue
        pieces[q] = (uq[:, :kq], vq[:kq, :], rows, cols)
        s_out.append((-q, sq[:kq]))
    u, v, bond = _split(t, legs_l, legs_r, pieces, lambda q: -q)
    s = np.concatenate([sv for _, sv in sorted(s_out, key=lambda x: x[0])])
    return u, s, v, discarded


def _svd_fallback(m):
    import scipy.linalg

    return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd")


def singular_values_by_sector(bond: ChargeIndex, s: np.ndarray) -> dict[int, np.ndarray]:
    out = {}
    for c in bond.charges:
        o, g = bond.offset[c], bond.deg[c]
        out[c] = s[o : o + g]
    return out


def qr(t: SymTensor, left):
    """Block QR across ``left | rest``; ``q`` is an isometry from the bond."""
    legs_l, legs_r, mats = _matrix_groups(t, left)
    pieces = {}
    for q, (m, rows, cols) in mats.items():
        qq, rr = np.linalg.qr(m)
        pieces[q] = (qq, rr, rows, cols)
    u, v, _ = _split(t, legs_l, legs_r, pieces, lambda q: -q)
    return u, v


def lq(t: SymTensor, left):
    """Block LQ across ``left | rest``; ``v`` is a co-isometry onto the bond."""
    legs_l, legs_r, mats = _matrix_groups(t, left)
    pieces = {}
    for q, (m, rows, cols) in mats.items():
        qq, rr = np.linalg.qr(m.conj().T)
        pieces[q] = (rr.conj().T, qq.conj().T, rows, cols)
    u, v, _ = _split(t, legs_l, legs_r, pieces, lambda q: -q)
    return u, v
