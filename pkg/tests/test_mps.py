from functools import reduce

import numpy as np
import pytest
from scipy.stats import chisquare

from metts_trotter import mps, symtensor as st, twosite
from metts_trotter.model import ModelSpec, dense_from_bonds, hamiltonian_bonds, number


def site_operator(o, k, L):
    mats = [np.eye(len(o))] * L
    mats[k] = o
    return reduce(np.kron, mats)


def test_product_state_vector():
    psi = mps.from_cps([1, 0, 2], 3)
    v = psi.to_vector()
    k = np.ravel_multi_index((1, 0, 2), (3, 3, 3))
    assert v[k] == pytest.approx(1.0)
    assert np.linalg.norm(v) == pytest.approx(1.0)
    assert psi.global_charge == 3
    assert psi.bond_dims() == [1, 1]


def test_inner_matches_dense(rng):
    a = mps.random_mps([3, 3, 3, 3], 4, 3, rng)
    b = mps.random_mps([3, 3, 3, 3], 4, 2, rng)
    assert mps.inner(a, b) == pytest.approx(np.vdot(a.to_vector(), b.to_vector()), abs=1e-13)
    assert a.norm() == pytest.approx(1.0)


def test_canonicalize_keeps_state_and_isometries(rng):
    psi = mps.random_mps([3, 4, 3, 3, 2], 5, 3, rng)
    v = psi.to_vector()
    for c in (0, 4, 2):
        psi.canonicalize_(c)
        assert np.allclose(psi.to_vector(), v)
        for m in range(c):
            t = psi.tensors[m]
            e = st.contract(t.conj(), t, [(0, 0), (1, 1)])
            assert np.allclose(st.to_dense(e), np.eye(t.indices[2].dim), atol=1e-12)
        for m in range(c + 1, psi.L):
            t = psi.tensors[m]
            e = st.contract(t, t.conj(), [(1, 1), (2, 2)])
            assert np.allclose(st.to_dense(e), np.eye(t.indices[0].dim), atol=1e-12)


def test_fast_kernels_agree_with_general_contraction(rng):
    psi = mps.random_mps([3, 3, 3, 3], 4, 3, rng).canonicalize_(1)
    a, b = psi.tensors[1], psi.tensors[2]
    lay = twosite.layout_for(psi.phys_charges, 1)
    stacks = twosite.theta(a, b, lay)
    th = st.contract(a, b, [(2, 0)])
    for (l, p1, p2, r), blk in th.blocks.items():
        s, k = lay.slot[(p1, p2)]
        assert np.allclose(stacks[(l, r)][k], blk[:, 0, 0, :], rtol=0, atol=1e-12)
    H = hamiltonian_bonds(ModelSpec(L=4, n_max=2))[1].matrix
    op = mps.two_site_operator(psi, H, 1)
    applied = st.contract(op, th, [(2, 1), (3, 2)]).transpose((2, 0, 1, 3))
    fast = twosite.apply(twosite.BlockOperator(H, lay), stacks)
    for (l, p1, p2, r), blk in applied.blocks.items():
        s, k = lay.slot[(p1, p2)]
        assert np.allclose(fast[(l, r)][k], blk[:, 0, 0, :], rtol=0, atol=1e-12)


def test_block_operator_rejects_charge_violation():
    lay = twosite.layout((0, 1), (0, 1))
    bad = np.zeros((4, 4))
    bad[0, 1] = 1.0
    with pytest.raises(st.ChargeError):
        twosite.BlockOperator(bad, lay)


def test_expect_bond_matches_dense(rng):
    spec = ModelSpec(L=4, n_max=2, U=1.7)
    psi = mps.random_mps([3] * 4, 4, 4, rng)
    v = psi.to_vector()
    terms = hamiltonian_bonds(spec)
    for t in terms:
        dense = dense_from_bonds([t], 4, 3)
        ref = np.vdot(v, dense @ v).real
        assert mps.expect_bond(psi, t.matrix, t.site) == pytest.approx(ref, abs=1e-12)
    many = mps.expect_bonds(psi, [(t.site, t.matrix) for t in terms])
    H = dense_from_bonds(terms, 4, 3)
    assert sum(many) == pytest.approx(np.vdot(v, H @ v).real, abs=1e-12)
    with pytest.raises(ValueError):
        mps.expect_bond(psi, np.triu(np.ones((9, 9))), 0)


def test_correlation_matrix_matches_dense(rng):
    psi = mps.random_mps([3] * 4, 5, 3, rng)
    v = psi.to_vector()
    n = number(3)
    c = mps.correlation_matrix(psi, n)
    ops = [site_operator(n, k, 4) for k in range(4)]
    for i in range(4):
        for j in range(4):
            ref = np.vdot(v, ops[i] @ ops[j] @ v).real
            assert c[i, j] == pytest.approx(ref, abs=1e-12)
    sub = mps.correlation_matrix(psi, np.arange(3), [0, 3])
    assert np.allclose(sub, c[np.ix_([0, 3], [0, 3])])


def test_collapse_distribution_matches_born_rule():
    rng = np.random.default_rng(7)
    psi = mps.random_mps([3] * 4, 4, 3, np.random.default_rng(3))
    probs = np.abs(psi.to_vector()) ** 2
    n_draws = 20000
    counts = np.zeros(len(probs))
    for _ in range(n_draws):
        cfg, _, logp = mps.collapse_to_cps(psi, rng)
        k = np.ravel_multi_index(cfg.occupations, (3,) * 4)
        counts[k] += 1
    assert logp == pytest.approx(np.log(probs[k]), rel=1e-8)
    keep = probs > 1e-12
    assert counts[~keep].sum() == 0
    _, p = chisquare(counts[keep], probs[keep] / probs[keep].sum() * n_draws)
    assert p > 0.01


def test_collapse_conserves_charge(rng):
    psi = mps.random_mps([4] * 5, 6, 4, rng)
    for _ in range(50):
        cfg, state, _ = mps.collapse_to_cps(psi, rng)
        assert cfg.total == 6
        assert state.norm() == pytest.approx(1.0)


def test_collapse_on_a_subrange(rng):
    psi = mps.random_mps([3] * 5, 5, 3, rng)
    cfg, _, _ = mps.collapse_to_cps(psi, rng, range(1, 4))
    assert len(cfg) == 3
    with pytest.raises(ValueError):
        mps.collapse_to_cps(psi, rng, [0, 2])


def test_from_cps_validates():
    with pytest.raises(ValueError):
        mps.from_cps([3, 0], 3)
    with pytest.raises(ValueError):
        mps.CpsConfig((-1, 0))
