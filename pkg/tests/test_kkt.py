import numpy as np
import pytest
import scipy.sparse as sp

from mmshape import checks, flow
from mmshape.fem import Field
from mmshape.kkt import KKTSystem, assemble_jacobian, assemble_residual, lagrangian
from mmshape.solver import newton_solve
from fd import central_difference

STRATEGIES = ("S1", "S2", "S3")


@pytest.fixture(scope="module")
def systems(coarse_disc):
    return {s: KKTSystem(coarse_disc, s) for s in STRATEGIES}


@pytest.fixture(scope="module")
def reference_states(systems):
    return {s: checks.reference_state(sys_) for s, sys_ in systems.items()}


def test_layout_sizes(systems, coarse_disc):
    d = coarse_disc
    s3 = systems["S3"].layout
    expected = 2 * (2 * d.P1v.n_dofs // 2) + 2 * d.P2v.n_dofs + 2 * d.P1.n_dofs + 2 * d.C1v.n_dofs \
        + d.C1.n_dofs + 3
    assert s3.size == expected
    assert s3.n_free + len(s3.fixed) == s3.size
    s1 = systems["S1"].layout
    assert "z" in s1.blocks and "psi_z" in s1.blocks and "z" not in s3.blocks
    assert s1.blocks["b"].size == d.C1.n_dofs


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_zero_state_is_critical_without_inflow(coarse_disc, strategy):
    system = KKTSystem(coarse_disc, strategy, g_in=Field.zeros(coarse_disc.P2v))
    st = system.zero_state()
    assert lagrangian(system, st, 1e-2) == 0.0
    assert np.abs(assemble_residual(system, st, 1e-2)).max() <= 1e-14


def test_lagrangian_reduces_to_dissipation(systems, coarse_disc):
    system = systems["S3"]
    st = system.zero_state()
    v, _ = flow.solve_state(coarse_disc, None, system.g_in)
    st.x[system.layout.slice("v")] = v.coeffs
    assert lagrangian(system, st, 1e-2) == pytest.approx(flow.dissipation(coarse_disc, None, v), rel=1e-13)


def test_lagrangian_parts_sum(systems, reference_states):
    system, st = systems["S2"], reference_states["S2"]
    total = sum(float(np.sum(p)) for p in system.lagrangian_parts(st, 1e-3))
    assert total == pytest.approx(system.lagrangian(st, 1e-3), rel=1e-13)


def test_state_rows_vanish_after_state_solve(systems, coarse_disc):
    system = systems["S3"]
    st = system.zero_state()
    v, p = flow.solve_state(coarse_disc, None, system.g_in)
    st.x[system.layout.slice("v")] = v.coeffs
    st.x[system.layout.slice("p")] = p.coeffs
    R = assemble_residual(system, st, 1e-2)
    blocks = system.block_slices()
    assert np.abs(R[blocks["psi_v"]]).max() <= 1e-10
    assert np.abs(R[blocks["psi_p"]]).max() <= 1e-10


def test_inactive_penalty_leaves_w_rows_unchanged(coarse_disc, reference_states, systems):
    st = reference_states["S3"]
    assert systems["S3"].active_set(st).n_active == 0
    with_penalty = KKTSystem(coarse_disc, "S3", gamma=1e3)
    without = KKTSystem(coarse_disc, "S3", gamma=0.0)
    w_rows = with_penalty.block_slices()["w"]
    a = with_penalty.residual(st, 1e-2)[w_rows]
    b = without.residual(st, 1e-2)[w_rows]
    assert np.array_equal(a, b)


def test_control_block_is_scaled_curve_mass(systems, reference_states, coarse_disc):
    system = systems["S3"]
    K = assemble_jacobian(system, reference_states["S3"], 0.37)
    c = system.block_slices()["c"]
    block = K[c][:, c]
    assert abs(block - 0.37 * coarse_disc.curve_mass).max() <= 1e-15


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_jacobian_symmetry(systems, reference_states, strategy):
    K = assemble_jacobian(systems[strategy], reference_states[strategy], 1e-2)
    assert abs(K - K.T).max() <= 1e-12


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_jacobian_matches_residual_differences(systems, reference_states, strategy):
    res = checks.jacobian_check(systems[strategy], reference_states[strategy], 1e-2, n_dirs=20)
    assert res.uniform_sign
    assert res.max_error <= 1e-5


def test_jacobian_with_active_penalty(coarse_disc):
    system = KKTSystem(coarse_disc, "S3", eta=0.999)
    st = checks.reference_state(system)
    assert system.active_set(st).n_active > 0
    res = checks.jacobian_check(system, st, 1e-2, n_dirs=5)
    if res.uniform_sign:
        assert res.max_error <= 1e-5
    K = system.jacobian(st, 1e-2)
    assert abs(K - K.T).max() <= 1e-12


@pytest.mark.parametrize("strategy", STRATEGIES)
def test_residual_matches_lagrangian_differences(systems, reference_states, strategy):
    system, st = systems[strategy], reference_states[strategy]
    R = system.residual(st, 1e-2)
    for k in range(20):
        e = checks.sin_vector(len(R), 50 + k)
        e /= np.linalg.norm(e)
        fd = central_difference(system, st, 1e-2, e, 1e-5)
        assert fd == pytest.approx(R @ e, rel=1e-6, abs=1e-9)


def test_newton_step_keeps_dirichlet_values(systems):
    system = systems["S3"]
    st = system.zero_state()
    rep = newton_solve(system, st, 1e-2, max_iter=1)
    x = rep.final_state.x
    lay = system.layout
    assert np.array_equal(x[lay.fixed], st.x[lay.fixed])
    blk = lay.blocks["v"]
    assert np.array_equal(x[blk.offset + blk.fixed], system.g_in.coeffs[blk.fixed])
    assert np.any(x[lay.free] != 0)


def test_reduced_jacobian_is_nonsingular(systems, reference_states):
    K = assemble_jacobian(systems["S3"], reference_states["S3"], 1e-2)
    lu = sp.linalg.splu(K.tocsc())
    assert np.all(np.abs(lu.U.diagonal()) > 0)
