"""Fast two-site kernels for MPS site pairs with one state per charge.

The two-site wavefunction ``theta`` of sites ``(m, m+1)`` is stored per pair
of bond charges ``(l, r)`` as an array ``(n_pairs, chi_l, chi_r)``: one slice
per pair of local states whose charges sum to ``r - l``.  Charge-conserving
two-site operators are block diagonal in that sum, so applying one is a
single matrix product per ``(l, r)``.  These kernels bypass the general
contraction code, whose per-block overhead dominates for small blocks.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import symtensor as st
from .symtensor import OUT, ChargeIndex, SymTensor, TruncationSpec


class PairLayout:
    """Pairs of local charges grouped by their sum."""

    def __init__(self, c1, c2):
        c1, c2 = tuple(int(c) for c in c1), tuple(int(c) for c in c2)
        if len(set(c1)) != len(c1) or len(set(c2)) != len(c2):
            raise st.ChargeError("two-site kernels need one local state per charge")
        self.c1, self.c2 = c1, c2
        self.pairs: dict[int, list[tuple[int, int]]] = {}
        self.dense: dict[int, list[int]] = {}
        for i, a in enumerate(c1):
            for j, b in enumerate(c2):
                self.pairs.setdefault(a + b, []).append((a, b))
                self.dense.setdefault(a + b, []).append(i * len(c2) + j)
        self.slot = {p: (s, k) for s, ps in self.pairs.items() for k, p in enumerate(ps)}


@lru_cache(maxsize=256)
def layout(c1: tuple, c2: tuple) -> PairLayout:
    return PairLayout(c1, c2)


def layout_for(phys_charges, m: int) -> PairLayout:
    return layout(tuple(int(c) for c in phys_charges[m]), tuple(int(c) for c in phys_charges[m + 1]))


class BlockOperator:
    """Two-site operator stored as one matrix per conserved pair charge."""

    def __init__(self, matrix, lay: PairLayout):
        matrix = np.asarray(matrix, dtype=complex)
        n = len(lay.c1) * len(lay.c2)
        if matrix.shape != (n, n):
            raise ValueError(f"operator has shape {matrix.shape}, expected {(n, n)}")
        self.layout = lay
        self.blocks = {}
        mask = np.zeros((n, n), dtype=bool)
        for s, idx in lay.dense.items():
            self.blocks[s] = np.ascontiguousarray(matrix[np.ix_(idx, idx)])
            mask[np.ix_(idx, idx)] = True
        leak = np.abs(matrix[~mask]).max() if (~mask).any() else 0.0
        if leak > 1e-13:
            raise st.ChargeError(f"operator does not conserve the charge (leak {leak:.2g})")

    def adjoint(self) -> "BlockOperator":
        out = object.__new__(BlockOperator)
        out.layout = self.layout
        out.blocks = {s: b.conj().T.copy() for s, b in self.blocks.items()}
        return out


def theta(a: SymTensor, b: SymTensor, lay: PairLayout) -> dict:
    """Two-site stacks of ``a . b`` contracted over their shared bond."""
    by_left: dict[int, list] = {}
    for (bl, p2, r), blk in b.blocks.items():
        by_left.setdefault(bl, []).append((p2, r, blk[:, 0, :]))
    out = {}
    pairs, slot = lay.pairs, lay.slot
    for (l, p1, bl), blk in a.blocks.items():
        right = by_left.get(bl)
        if not right:
            continue
        am = blk[:, 0, :]
        for p2, r, bm in right:
            s, k = slot[(p1, p2)]
            st_ = out.get((l, r))
            if st_ is None:
                st_ = np.zeros((len(pairs[s]), am.shape[0], bm.shape[1]), dtype=complex)
                out[(l, r)] = st_
            st_[k] += am @ bm
    return out


def apply(op: BlockOperator, stacks: dict) -> dict:
    out = {}
    for (l, r), v in stacks.items():
        out[(l, r)] = (op.blocks[r - l] @ v.reshape(v.shape[0], -1)).reshape(v.shape)
    return out


def overlap(bra: dict, ket: dict) -> complex:
    return complex(sum(np.vdot(bra[k], v) for k, v in ket.items() if k in bra))


def norm_sq(stacks: dict) -> float:
    return float(sum(np.vdot(v, v).real for v in stacks.values()))


def split(stacks: dict, lay: PairLayout, left_leg, phys1, phys2, right_leg, spec: TruncationSpec):
    """Truncated SVD of the stacks back into two site tensors.

    Returns ``(u, s_by_charge, v, discarded, norm_sq)`` where ``u`` is a left
    isometry, ``v`` a right co-isometry and ``s_by_charge`` maps bond charges
    to their kept singular values.  ``discarded`` is absolute.
    """
    pairs = lay.pairs
    # rows (l, o1) and cols (o2, r) of each block, grouped by q = l + o1
    groups: dict[int, tuple[dict, dict, list]] = {}
    for (l, r), v in stacks.items():
        chi_l, chi_r = v.shape[1], v.shape[2]
        for k, (o1, o2) in enumerate(pairs[r - l]):
            q = l + o1
            g = groups.get(q)
            if g is None:
                g = ({}, {}, [])
                groups[q] = g
            rows, cols, items = g
            if (l, o1) not in rows:
                rows[(l, o1)] = chi_l
            if (o2, r) not in cols:
                cols[(o2, r)] = chi_r
            items.append(((l, o1), (o2, r), v[k]))
    decomposed = {}
    all_s = []
    for q in sorted(groups):
        rows, cols, items = groups[q]
        roff, n = {}, 0
        for key, size in rows.items():
            roff[key] = n
            n += size
        coff, nc = {}, 0
        for key, size in cols.items():
            coff[key] = nc
            nc += size
        m = np.zeros((n, nc), dtype=complex)
        for rk, ck, blk in items:
            r0, c0 = roff[rk], coff[ck]
            m[r0 : r0 + blk.shape[0], c0 : c0 + blk.shape[1]] = blk
        try:
            uq, sq, vq = np.linalg.svd(m, full_matrices=False)
        except np.linalg.LinAlgError:
            uq, sq, vq = st._svd_fallback(m)
        decomposed[q] = (uq, sq, vq, roff, rows, coff, cols)
        all_s.append(sq)
    if not all_s:
        raise st.DegenerateStateError("cannot factor an empty two-site state")
    s_all = np.concatenate(all_s)
    total = float(np.sum(s_all**2))
    if total == 0.0:
        raise st.DegenerateStateError("two-site state has zero norm")
    order = np.sort(s_all)[::-1]
    k, discarded = st._keep_count(order, spec)
    threshold = order[k - 1]
    sectors, s_by = [], {}
    ublocks, vblocks = {}, {}
    for q, (uq, sq, vq, roff, rows, coff, cols) in decomposed.items():
        kq = int(np.sum(sq >= threshold))
        if kq == 0:
            continue
        sectors.append((q, kq))
        s_by[q] = sq[:kq]
        for (l, o1), r0 in roff.items():
            ublocks[(l, o1, q)] = uq[r0 : r0 + rows[(l, o1)], :kq].reshape(-1, 1, kq)
        for (o2, r), c0 in coff.items():
            vblocks[(q, o2, r)] = vq[:kq, c0 : c0 + cols[(o2, r)]].reshape(kq, 1, -1)
    bond = ChargeIndex.from_sectors(sectors, OUT)
    u = SymTensor([left_leg, phys1, bond], ublocks, 0, check=False)
    v = SymTensor([bond.dual(), phys2, right_leg], vblocks, 0, check=False)
    return u, s_by, v, discarded, total


def shift_right(a: SymTensor, b: SymTensor) -> tuple[SymTensor, SymTensor]:
    """QR of ``a`` over ``(left, phys) | right``, with ``R`` absorbed into ``b``."""
    groups: dict[int, list] = {}
    for key, blk in a.blocks.items():
        groups.setdefault(key[2], []).append((key, blk[:, 0, :]))
    qblocks, rmats, sectors = {}, {}, []
    for r in sorted(groups):
        entries = groups[r]
        m = entries[0][1] if len(entries) == 1 else np.vstack([e[1] for e in entries])
        q, rr = np.linalg.qr(m)
        k = q.shape[1]
        sectors.append((r, k))
        rmats[r] = rr
        o = 0
        for key, blk in entries:
            n = blk.shape[0]
            qblocks[key] = q[o : o + n].reshape(n, 1, k)
            o += n
    bond = ChargeIndex.from_sectors(sectors, OUT)
    bblocks = {}
    for key, blk in b.blocks.items():
        rr = rmats.get(key[0])
        if rr is not None:
            bblocks[key] = (rr @ blk.reshape(blk.shape[0], -1)).reshape(rr.shape[0], 1, blk.shape[2])
    qa = SymTensor([a.indices[0], a.indices[1], bond], qblocks, 0, check=False)
    nb = SymTensor([bond.dual(), b.indices[1], b.indices[2]], bblocks, 0, check=False)
    return qa, nb


def shift_left(a: SymTensor, b: SymTensor) -> tuple[SymTensor, SymTensor]:
    """LQ of ``b`` over ``left | (phys, right)``, with ``L`` absorbed into ``a``."""
    groups: dict[int, list] = {}
    for key, blk in b.blocks.items():
        groups.setdefault(key[0], []).append((key, blk[:, 0, :]))
    qblocks, lmats, sectors = {}, {}, []
    for l in sorted(groups):
        entries = groups[l]
        m = entries[0][1] if len(entries) == 1 else np.hstack([e[1] for e in entries])
        q, rr = np.linalg.qr(m.conj().T)
        k = q.shape[1]
        sectors.append((l, k))
        lmats[l] = rr.conj().T
        qh = q.conj().T
        o = 0
        for key, blk in entries:
            n = blk.shape[1]
            qblocks[key] = qh[:, o : o + n].reshape(k, 1, n)
            o += n
    bond = ChargeIndex.from_sectors(sectors, OUT)
    ablocks = {}
    for key, blk in a.blocks.items():
        lm = lmats.get(key[2])
        if lm is not None:
            ablocks[key] = (blk.reshape(-1, blk.shape[2]) @ lm).reshape(blk.shape[0], 1, lm.shape[1])
    na = SymTensor([a.indices[0], a.indices[1], bond], ablocks, 0, check=False)
    qb = SymTensor([bond.dual(), b.indices[1], b.indices[2]], qblocks, 0, check=False)
    return na, qb
