import numpy as np
import pytest

from mmshape import checks
from mmshape.fem import Discretization
from mmshape.kkt import KKTSystem
from mmshape.solver import NewtonReport, backtrack_alpha, continuation, newton_solve
from meshes import annulus


@pytest.fixture(scope="module")
def small_system():
    return KKTSystem(Discretization(annulus(16, 3)), "S3")


def scripted_newton(fail_at=()):
    """Newton stand-in that fails at the listed α values and records every call."""
    calls = []

    def newton(system, state, alpha, eps, max_iter, problem_index, iteration_log):
        calls.append(alpha)
        ok = not any(np.isclose(alpha, a, rtol=1e-12) for a in fail_at)
        return NewtonReport(ok, 1, [1.0, 0.0 if ok else 1.0], state, [1.0, 0.0],
                            1.0, "" if ok else "scripted failure")

    newton.calls = calls
    return newton


def test_backtrack_formula():
    assert backtrack_alpha(1e-4, 1 / 64) == pytest.approx(3.15e-3, rel=1e-14)


def test_schedule_length(small_system):
    newton = scripted_newton()
    out = continuation(small_system, 1e-2, 1e-10, 0.5, newton=newton)
    assert len(out.entries) == 27
    alphas = [e.alpha for e in out.entries]
    assert alphas[-1] >= 1e-10 and alphas[-1] * 0.5 < 1e-10
    assert np.all(np.diff(alphas) < 0)


def test_single_problem_when_init_equals_target(small_system):
    out = continuation(small_system, 1e-3, 1e-3, 1 / 64, newton=scripted_newton())
    assert len(out.entries) == 1 and out.entries[0].alpha == 1e-3


def test_backtracking_retries_from_last_state(small_system):
    newton = scripted_newton(fail_at=[1e-2 / 64 / 64])
    out = continuation(small_system, 1e-2, 1e-6, 1 / 64, newton=newton)
    a_fail = 1e-2 / 64 / 64
    retry = 0.5 * (a_fail * 64 - a_fail)
    assert newton.calls[:4] == pytest.approx([1e-2, 1e-2 / 64, a_fail, retry], rel=1e-14)
    assert out.failures == [(pytest.approx(a_fail), "scripted failure")]
    # schedule continues from the backtracked value
    assert newton.calls[4] == pytest.approx(retry / 64, rel=1e-14)
    assert all(e.report.converged for e in out.entries)


def test_abort_after_max_backtracks(small_system):
    def always_fail(system, state, alpha, eps, max_iter, problem_index, iteration_log):
        return NewtonReport(False, 3, [1.0], state, [1.0], 1.0, "diverged")

    out = continuation(small_system, 1e-2, 1e-6, 1 / 64, max_backtracks=20, newton=always_fail)
    assert out.aborted and len(out.failures) == 21 and not out.entries
    assert "diverged" in out.message


@pytest.mark.parametrize("kwargs", [dict(alpha_init=1e-6, alpha_target=1e-2),
                                    dict(alpha_dec=1.5), dict(alpha_dec=0.0)])
def test_invalid_schedule(small_system, kwargs):
    with pytest.raises(ValueError):
        continuation(small_system, **kwargs)


def test_converged_start_takes_zero_iterations(small_system):
    rep = newton_solve(small_system, small_system.zero_state(), 1e-2)
    assert rep.converged and rep.iterations == 0
    assert len(rep.residual_history) == 1


def test_newton_from_zero_converges(coarse_disc):
    system = KKTSystem(coarse_disc, "S3")
    log = []
    rep = newton_solve(system, system.zero_state(), 1e-2, eps=1e-9, max_iter=40, iteration_log=log)
    assert rep.converged and rep.iterations <= 40
    assert rep.residual_history[-1] <= 1e-9
    assert len(rep.residual_history) == rep.iterations + 1 == len(log)
    r = np.array(rep.abs_history[-4:])
    ratios = r[1:] / r[:-1]
    assert np.all(np.diff(ratios) < 0)


def test_large_alpha_keeps_circle(coarse_disc):
    system = KKTSystem(coarse_disc, "S3")
    rep = newton_solve(system, system.zero_state(), 1e6)
    assert rep.converged
    assert np.abs(rep.final_state.c).max() <= 1e-6
    assert np.abs(rep.final_state.w).max() <= 1e-6


def test_nonfinite_residual_reported(small_system):
    st = small_system.zero_state()
    st.x[0] = np.nan
    rep = newton_solve(small_system, st, 1e-2)
    assert not rep.converged and "non-finite" in rep.cause


def test_continuation_is_deterministic(coarse_disc):
    system = KKTSystem(coarse_disc, "S2")
    a = continuation(system, 1e-2, 1e-2 / 64, 1 / 64)
    b = continuation(system, 1e-2, 1e-2 / 64, 1 / 64)
    assert a.newton_log == b.newton_log
    assert np.array_equal(a.final_state.x, b.final_state.x)


def test_reference_state_is_deterministic(small_system):
    a = checks.reference_state(small_system).x
    b = checks.reference_state(small_system).x
    assert np.array_equal(a, b)
