"""Semismooth Newton iteration and α-continuation with backtracking."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from . import flow, geo
from .kkt import KKTState, KKTSystem

log = logging.getLogger(__name__)

ZERO_RESIDUAL = 1e-14
NEWTON_LOG_HEADER = ("problem_index", "alpha", "iteration", "abs_residual", "rel_residual", "min_Jtau")


@dataclass
class NewtonReport:
    converged: bool
    iterations: int
    residual_history: list[float]
    final_state: KKTState
    abs_history: list[float] = field(default_factory=list)
    min_jacobian: float = float("nan")
    cause: str = ""


def newton_solve(system: KKTSystem, state0: KKTState, alpha: float, eps: float = 1e-9,
                 max_iter: int = 40, problem_index: int = 0,
                 iteration_log: list | None = None) -> NewtonReport:
    """Full-step Newton on the free dofs until ‖R‖/‖R₀‖ ≤ eps.

    Each step solves K δ = -R with SuperLU.  ``iteration_log`` receives one
    tuple per residual evaluation, see ``NEWTON_LOG_HEADER``.
    """
    state = state0.copy()
    R, K, J = system.residual_and_jacobian(state, alpha)
    r0 = float(np.linalg.norm(R))
    rel = [0.0 if r0 <= ZERO_RESIDUAL else 1.0]
    absr = [r0]

    def record(it):
        if iteration_log is not None:
            iteration_log.append((problem_index, alpha, it, absr[-1], rel[-1], float(J.min())))

    record(0)
    if not np.isfinite(r0):
        return NewtonReport(False, 0, rel, state, absr, float(J.min()), "non-finite residual")
    if r0 <= ZERO_RESIDUAL:
        return NewtonReport(True, 0, rel, state, absr, float(J.min()))
    for it in range(1, max_iter + 1):
        try:
            delta = spla.splu(K.tocsc()).solve(-R)
        except RuntimeError as err:  # singular factor
            return NewtonReport(False, it - 1, rel, state, absr, float(J.min()),
                                f"factorization failed: {err}")
        if not np.all(np.isfinite(delta)):
            return NewtonReport(False, it - 1, rel, state, absr, float(J.min()), "non-finite step")
        state = state.with_flat(state.flat() + delta)
        R, K, J = system.residual_and_jacobian(state, alpha)
        rn = float(np.linalg.norm(R))
        absr.append(rn)
        rel.append(rn / r0)
        record(it)
        log.debug("alpha=%.3e it=%d |R|=%.3e rel=%.3e", alpha, it, rn, rn / r0)
        if not np.isfinite(rn):
            return NewtonReport(False, it, rel, state, absr, float(J.min()), "non-finite residual")
        if rel[-1] <= eps:
            return NewtonReport(True, it, rel, state, absr, float(J.min()))
    return NewtonReport(False, max_iter, rel, state, absr, float(J.min()),
                        f"no convergence in {max_iter} iterations")


def backtrack_alpha(alpha: float, alpha_dec: float) -> float:
    """Regularization weight retried after a failed solve: ½(α/α_dec - α)."""
    return 0.5 * (alpha / alpha_dec - alpha)


@dataclass
class ContinuationEntry:
    problem_index: int
    alpha: float
    report: NewtonReport
    objective: float
    dissipation: float
    volume_defect: float
    barycenter_defect: np.ndarray
    min_jacobian: float


@dataclass
class ContinuationLog:
    entries: list[ContinuationEntry] = field(default_factory=list)
    failures: list[tuple[float, str]] = field(default_factory=list)
    newton_log: list[tuple] = field(default_factory=list)
    aborted: bool = False
    message: str = ""

    @property
    def final_state(self) -> KKTState | None:
        return self.entries[-1].report.final_state if self.entries else None


def summarize(system: KKTSystem, index: int, alpha: float, report: NewtonReport) -> ContinuationEntry:
    st = report.final_state
    disc = system.disc
    g = geo.geo_residuals(disc, st.w)
    return ContinuationEntry(
        problem_index=index, alpha=alpha, report=report,
        objective=flow.objective(disc, st.w, st.v, st.c, alpha, system.gamma, system.eta),
        dissipation=flow.dissipation(disc, st.w, st.v),
        volume_defect=g.volume_defect, barycenter_defect=g.barycenter_defect,
        min_jacobian=report.min_jacobian)


def continuation(system: KKTSystem, alpha_init: float = 1e-2, alpha_target: float = 1e-10,
                 alpha_dec: float = 1 / 64, eps: float = 1e-9, n_ssn: int = 40,
                 max_backtracks: int = 20, state0: KKTState | None = None,
                 newton: Callable = newton_solve) -> ContinuationLog:
    """Solve the problems α = α_init, α_dec α_init, ... down to α_target.

    Each solve starts from the last accepted state (initially all zero).  A
    failed solve replaces α by ``backtrack_alpha`` and retries; the schedule
    then continues from the backtracked value.
    """
    if not 0 < alpha_target <= alpha_init:
        raise ValueError("need 0 < alpha_target <= alpha_init")
    if not 0 < alpha_dec < 1:
        raise ValueError("alpha_dec must lie in (0,1)")
    out = ContinuationLog()
    state = state0 if state0 is not None else system.zero_state()
    alpha = alpha_init
    backtracks = 0
    index = 0
    while alpha >= alpha_target:
        report = newton(system, state, alpha, eps=eps, max_iter=n_ssn, problem_index=index,
                        iteration_log=out.newton_log)
        if report.converged:
            entry = summarize(system, index, alpha, report)
            out.entries.append(entry)
            log.info("problem %d alpha=%.4e newton=%d J=%.6g min Jtau=%.4f", index, alpha,
                     report.iterations, entry.objective, entry.min_jacobian)
            state = report.final_state
            backtracks = 0
            index += 1
            alpha *= alpha_dec
            continue
        out.failures.append((alpha, report.cause))
        backtracks += 1
        if backtracks > max_backtracks:
            out.aborted = True
            out.message = (f"aborted after {max_backtracks} consecutive backtracks at "
                           f"alpha={alpha:.6e}: {report.cause}")
            log.error(out.message)
            return out
        new_alpha = backtrack_alpha(alpha, alpha_dec)
        log.warning("solve failed at alpha=%.4e (%s); retrying at %.4e", alpha, report.cause, new_alpha)
        alpha = new_alpha
    return out
