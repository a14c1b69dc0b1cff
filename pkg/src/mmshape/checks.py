"""Finite-difference checks of the assembled optimality system."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import deform, flow
from .kkt import KKTState, KKTSystem


def smooth_control(disc, amplitude: float = 0.05) -> np.ndarray:
    """A fixed smooth, non-symmetric control on the design curve."""
    x = disc.C1.dof_coords
    th = np.arctan2(x[:, 1], x[:, 0])
    return amplitude * (np.cos(2 * th) + 0.5 * np.sin(3 * th + 0.4) + 0.3)


def sin_vector(n: int, k: int) -> np.ndarray:
    """Deterministic pseudo-random vector in [-1, 1]^n, indexed by ``k``."""
    i = np.arange(1, n + 1, dtype=float)
    return np.sin(i * (k + 1) * 0.7548776662466927 + 0.61803398875 * (k + 1) ** 2)


def reference_state(system: KKTSystem, amplitude: float = 0.05) -> KKTState:
    """Deterministic state with nonzero entries in every block.

    The control is smooth and small, b, z and w come from the strategy
    solves and (v, p) from the state solve, so J stays close to one.  The
    adjoints and multipliers are small fixed pseudo-random values.
    """
    disc, lay = system.disc, system.layout
    st = system.zero_state()
    x = st.x
    c = smooth_control(disc, amplitude)
    x[lay.slice("c")] = c
    strat = system.strategy
    if strat.tag == "S3":
        b = deform.solve_lb_vector(disc, c).coeffs
    else:
        b = deform.solve_lb_scalar(disc, c).coeffs
    x[lay.slice("b")] = b
    if strat.tag == "S1":
        z = deform.solve_extension_scalar(disc, b)
        x[lay.slice("z")] = z.coeffs
    w = deform.apply_strategy(disc, strat, c).coeffs
    x[lay.slice("w")] = w
    v, p = flow.solve_state(disc, w, g_in=system.g_in)
    x[lay.slice("v")] = v.coeffs
    x[lay.slice("p")] = p.coeffs
    k = 100
    for name in ("psi_v", "psi_p", "psi_w", "psi_z", "psi_b", "lam", "mu"):
        if name not in lay.blocks:
            continue
        blk = lay.blocks[name]
        vals = 1e-2 * sin_vector(blk.size, k)
        vals[blk.fixed] = 0.0
        x[lay.slice(name)] = vals
        k += 1
    return st


@dataclass
class DerivativeCheck:
    errors: np.ndarray          # relative error per direction
    step: float
    min_jacobian: float
    uniform_sign: bool

    @property
    def max_error(self) -> float:
        return float(self.errors.max())


def jacobian_check(system: KKTSystem, state: KKTState, alpha: float, n_dirs: int = 20,
                   h: float = 1e-6) -> DerivativeCheck:
    """Compare K e with (R(x + h e) - R(x)) / h over fixed unit directions e.

    The relative error per direction is ‖FD - K e‖ / ‖K e‖.
    """
    R, K, J = system.residual_and_jacobian(state, alpha)
    y = state.flat()
    errs = np.empty(n_dirs)
    uniform = True
    for k in range(n_dirs):
        e = sin_vector(len(y), k)
        e /= np.linalg.norm(e)
        moved = system.state_from_flat(y + h * e)
        ev = system.evaluate(moved, alpha, order=1)
        Rp = ev.grad[system.layout.free]
        same = (system.eta - ev.jacobian_det > 0) == (system.eta - J > 0)
        uniform &= bool(np.all(same))
        Ke = K @ e
        errs[k] = np.linalg.norm((Rp - R) / h - Ke) / np.linalg.norm(Ke)
    return DerivativeCheck(errs, h, float(J.min()), uniform)


def gradient_check(system: KKTSystem, state: KKTState, alpha: float, direction: np.ndarray,
                   steps=(1e-4, 1e-5, 1e-6)) -> tuple[float, np.ndarray]:
    """Directional derivative R·e and the central differences of the Lagrangian."""
    y = state.flat()
    R = system.residual(state, alpha)
    fd = np.array([(system.lagrangian(system.state_from_flat(y + h * direction), alpha)
                    - system.lagrangian(system.state_from_flat(y - h * direction), alpha)) / (2 * h)
                   for h in steps])
    return float(R @ direction), fd
