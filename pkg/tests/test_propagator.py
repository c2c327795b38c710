import numpy as np
import pytest
import scipy.linalg

from metts_trotter import edref, mps
from metts_trotter import propagator as pr
from metts_trotter import symtensor as st
from metts_trotter.model import ModelSpec, dense_from_bonds, hamiltonian_bonds, trotter_hamiltonians


def sector_vector(psi, basis, d):
    v = psi.to_vector()
    idx = [int(np.ravel_multi_index(c, (d,) * basis.L)) for c in basis.configs]
    out = v[idx]
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(v))
    return out


def test_schedules_are_consistent():
    for sched in pr.SCHEDULES.values():
        assert sched.stages
    with pytest.raises(ValueError):
        pr.SweepSchedule(((pr.EVEN, 0.5), (pr.ODD, 1.0)))


def test_bond_parity_convention():
    assert pr.bond_parity(0) == pr.ODD
    assert pr.bond_parity(1) == pr.EVEN


def test_real_time_gates_are_unitary():
    h = hamiltonian_bonds(ModelSpec(L=4, n_max=3))[1].matrix
    g = pr.gate_from_term(h, 0.7j)
    assert np.allclose(g @ g.conj().T, np.eye(len(g)))
    assert np.allclose(pr.gate_from_term(h, 0.3), scipy.linalg.expm(-0.3 * h))


def test_rotation_matches_dense_product():
    spec = ModelSpec(L=6, n_max=6, U=1.0)
    basis = edref.enumerate_basis(6, 6, 6)
    U = edref.rotation_unitary(spec, basis, 1.0, 2)
    for k in (0, 17, basis.index[(1,) * 6], len(basis) - 1):
        psi = mps.from_cps(basis.configs[k], 7)
        out, w = pr.apply_symmetric_unitary(psi, 1.0, 2, spec, st.NO_TRUNCATION)
        assert np.max(np.abs(sector_vector(out, basis, 7) - U[:, k])) < 1e-10
        assert out.global_charge == 6


def test_adjoint_undoes_forward():
    spec = ModelSpec(L=6, n_max=3, U=2.0, u_prime=0.0)
    psi = mps.from_cps([1, 2, 0, 1, 0, 2], 4)
    fwd, _ = pr.apply_symmetric_unitary(psi, 0.8, 3, spec, st.NO_TRUNCATION)
    back, _ = pr.apply_symmetric_unitary(fwd, 0.8, 3, spec, st.NO_TRUNCATION, direction="adjoint")
    assert np.allclose(back.to_vector(), psi.to_vector(), atol=1e-12)
    with pytest.raises(ValueError):
        pr.apply_symmetric_unitary(psi, 0.8, 3, spec, st.NO_TRUNCATION, direction="sideways")


def test_rotation_preserves_inner_products(rng):
    spec = ModelSpec(L=4, n_max=2)
    a = mps.random_mps([3] * 4, 4, 3, rng)
    b = mps.random_mps([3] * 4, 4, 3, rng)
    ua, _ = pr.apply_symmetric_unitary(a, 1.3, 2, spec, st.NO_TRUNCATION)
    ub, _ = pr.apply_symmetric_unitary(b, 1.3, 2, spec, st.NO_TRUNCATION)
    assert mps.inner(ua, ub) == pytest.approx(mps.inner(a, b), abs=1e-12)


def test_zero_tau_is_identity():
    spec = ModelSpec(L=4, n_max=2)
    psi = mps.from_cps([1, 1, 1, 1], 3)
    out, w = pr.apply_symmetric_unitary(psi, 0.0, 1, spec, st.NO_TRUNCATION)
    assert np.allclose(out.to_vector(), psi.to_vector())
    assert w == 0.0


def exact_imaginary(spec, occ, beta_half):
    d = spec.d
    H = dense_from_bonds(hamiltonian_bonds(spec), spec.L, d)
    v = mps.from_cps(occ, d).to_vector()
    out = scipy.linalg.expm(-beta_half * H) @ v
    return out / np.linalg.norm(out)


def trotter_error(spec, occ, beta_half, dtau, schedule):
    psi = mps.from_cps(occ, spec.d)
    out, _ = pr.evolve_imaginary(psi, beta_half, dtau, schedule, st.NO_TRUNCATION, hamiltonian_bonds(spec))
    return np.linalg.norm(out.to_vector() - exact_imaginary(spec, occ, beta_half))


def test_second_order_error_scaling():
    spec = ModelSpec(L=4, n_max=2, U=1.5)
    occ = [2, 0, 1, 1]
    e1 = trotter_error(spec, occ, 0.8, 0.1, pr.SECOND_ORDER)
    e2 = trotter_error(spec, occ, 0.8, 0.05, pr.SECOND_ORDER)
    assert e1 < 1e-2
    assert 3.5 < e1 / e2 < 4.5


def test_fourth_order_schedule_converges_faster():
    spec = ModelSpec(L=4, n_max=2, U=1.5)
    occ = [2, 0, 1, 1]
    e1 = trotter_error(spec, occ, 0.8, 0.2, pr.FOREST_RUTH)
    e2 = trotter_error(spec, occ, 0.8, 0.1, pr.FOREST_RUTH)
    assert e1 / e2 > 12.0
    assert e2 < trotter_error(spec, occ, 0.8, 0.1, pr.SECOND_ORDER)


def test_layer_result_does_not_depend_on_start_center(rng):
    spec = ModelSpec(L=6, n_max=2)
    even, odd = trotter_hamiltonians(spec)
    layer = pr.GateSet.from_terms(odd, 0.4j)
    psi = mps.random_mps([3] * 6, 6, 3, rng)
    outs = []
    for c in (0, 5):
        p = psi.copy().canonicalize_(c)
        pr.apply_layer_(p, layer, st.NO_TRUNCATION)
        outs.append(p.to_vector())
    assert np.allclose(outs[0], outs[1])


def test_truncation_warning_is_raised():
    spec = ModelSpec(L=6, n_max=3)
    psi = mps.from_cps([1] * 6, 4)
    with pytest.warns(pr.TruncationWarning):
        pr.evolve_imaginary(psi, 1.0, 0.1, pr.SECOND_ORDER, st.TruncationSpec(max_bond=2, cutoff=1e-10), hamiltonian_bonds(spec))


def test_gate_discarded_weight_is_relative(rng):
    psi = mps.random_mps([3] * 4, 4, 3, rng)
    h = hamiltonian_bonds(ModelSpec(L=4, n_max=2))[1].matrix
    out, w = pr.apply_gate(psi, pr.gate_from_term(h, 0.5), 1, st.TruncationSpec(max_bond=1, cutoff=0.0))
    assert 0.0 < w < 1.0
    assert out.tensors[1].indices[2].dim == 1
