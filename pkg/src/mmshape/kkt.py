"""First-order optimality system of the penalized shape problem.

The Lagrangian is split into

* a volume part evaluated per element by :mod:`mmshape.kernels` (dissipation,
  Jacobian penalty and the Stokes pairings), nonlinear in w;
* a Γ_d part from :mod:`mmshape.geo` (λ, μ constraint terms), nonlinear in w;
* a bilinear part ½ xᵀ L x holding the extension, Laplace-Beltrami and
  control pairings plus the (α/2)∮ c² regularization.

The residual is the gradient of the Lagrangian restricted to the free dofs
and the Jacobian its (generalized) Hessian.  Dirichlet dofs keep their stored
values and are eliminated from both.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import geo, kernels
from .deform import Strategy, operators
from .fem import Discretization, Field
from .flow import InflowProfile, inflow_values, velocity_dirichlet_dofs

N_MULTIPLIERS = 3


@dataclass(frozen=True)
class Block:
    name: str
    space: object  # FESpace or None for scalars
    size: int
    offset: int
    fixed: np.ndarray  # local indices of Dirichlet dofs


class Layout:
    """Ordering of the unknowns in the global vector.

    Blocks: w, [z], v, p, ψ_v, ψ_p, ψ_w, [ψ_z], b, ψ_b, c, λ, μ; the
    bracketed blocks exist for S1 only.
    """

    def __init__(self, disc: Discretization, strategy: Strategy):
        self.disc = disc
        self.strategy = strategy
        ops = operators(disc)
        outer_v = ops.outer_dofs(2)
        outer_s = ops.outer_dofs(1)
        vel_fixed = disc.P2v.vector_dofs(velocity_dirichlet_dofs(disc))
        curve = disc.C1v if strategy.vector_lb else disc.C1
        none = np.zeros(0, dtype=np.int64)
        spec = [("w", disc.P1v, outer_v)]
        if strategy.tag == "S1":
            spec.append(("z", disc.P1, outer_s))
        spec += [("v", disc.P2v, vel_fixed), ("p", disc.P1, none),
                 ("psi_v", disc.P2v, vel_fixed), ("psi_p", disc.P1, none),
                 ("psi_w", disc.P1v, outer_v)]
        if strategy.tag == "S1":
            spec.append(("psi_z", disc.P1, outer_s))
        spec += [("b", curve, none), ("psi_b", curve, none), ("c", disc.C1, none)]
        self.blocks: dict[str, Block] = {}
        off = 0
        for name, space, fixed in spec:
            self.blocks[name] = Block(name, space, space.n_dofs, off, np.asarray(fixed, dtype=np.int64))
            off += space.n_dofs
        self.blocks["lam"] = Block("lam", None, 1, off, none)
        self.blocks["mu"] = Block("mu", None, 2, off + 1, none)
        self.size = off + N_MULTIPLIERS
        fixed = np.concatenate([b.offset + b.fixed for b in self.blocks.values()])
        mask = np.ones(self.size, dtype=bool)
        mask[fixed] = False
        self.free = np.flatnonzero(mask)
        self.fixed = np.flatnonzero(~mask)
        self.to_free = np.full(self.size, -1, dtype=np.int64)
        self.to_free[self.free] = np.arange(len(self.free))

    @property
    def n_free(self) -> int:
        return len(self.free)

    def slice(self, name: str) -> slice:
        b = self.blocks[name]
        return slice(b.offset, b.offset + b.size)

    def block_of(self, free_index: int) -> str:
        g = self.free[free_index]
        for b in self.blocks.values():
            if b.offset <= g < b.offset + b.size:
                return b.name
        raise IndexError(free_index)

    def free_blocks(self) -> dict[str, np.ndarray]:
        """Free-vector positions of every block."""
        out = {}
        for name in self.blocks:
            idx = self.to_free[self.slice(name)]
            out[name] = idx[idx >= 0]
        return out


@dataclass
class KKTState:
    """All unknowns stored in one global vector ``x`` (Dirichlet values included)."""
    layout: Layout
    x: np.ndarray

    def block(self, name: str) -> np.ndarray:
        return self.x[self.layout.slice(name)]

    def field(self, name: str) -> Field:
        return Field(self.layout.blocks[name].space, self.block(name).copy())

    @property
    def w(self) -> np.ndarray:
        return self.block("w")

    @property
    def v(self) -> np.ndarray:
        return self.block("v")

    @property
    def c(self) -> np.ndarray:
        return self.block("c")

    @property
    def lam(self) -> float:
        return float(self.block("lam")[0])

    @property
    def mu(self) -> np.ndarray:
        return self.block("mu")

    def flat(self) -> np.ndarray:
        return self.x[self.layout.free].copy()

    def with_flat(self, y) -> "KKTState":
        x = self.x.copy()
        x[self.layout.free] = y
        return KKTState(self.layout, x)

    def copy(self) -> "KKTState":
        return KKTState(self.layout, self.x.copy())


@dataclass(frozen=True)
class ActiveSet:
    """χ = 1 where η - J > 0, per triangle and quadrature point."""
    mask: np.ndarray

    @property
    def n_active(self) -> int:
        return int(self.mask.sum())


@dataclass
class Evaluation:
    value: float
    grad: np.ndarray | None
    hess: sp.csr_matrix | None
    jacobian_det: np.ndarray = field(repr=False, default=None)


class KKTSystem:
    """Optimality system for one mesh, strategy, penalty and inflow.

    ``alpha`` is passed per call so one system serves a whole continuation.
    """

    def __init__(self, disc: Discretization, strategy: Strategy | str = "S3",
                 gamma: float = 1e3, eta: float = 8e-2, profile: InflowProfile | None = None,
                 g_in: Field | None = None):
        if isinstance(strategy, str):
            strategy = Strategy(strategy)
        self.disc = disc
        self.strategy = strategy
        self.gamma = float(gamma)
        self.eta = float(eta)
        self.layout = Layout(disc, strategy)
        self.g_in = g_in if g_in is not None else inflow_values(disc, profile)

    # ---- states ------------------------------------------------------------
    def zero_state(self) -> KKTState:
        """All unknowns zero except the velocity Dirichlet data."""
        x = np.zeros(self.layout.size)
        blk = self.layout.blocks["v"]
        x[blk.offset + blk.fixed] = self.g_in.coeffs[blk.fixed]
        return KKTState(self.layout, x)

    def state_from_flat(self, y) -> KKTState:
        return self.zero_state().with_flat(y)

    # ---- index maps ----------------------------------------------------------
    @cached_property
    def volume_dofs(self) -> np.ndarray:
        """(nt, 36) global indices of the element unknowns (w, v, ψ_v, p, ψ_p)."""
        d, L = self.disc, self.layout
        return np.hstack([L.blocks["w"].offset + d.P1v.element_dofs(),
                          L.blocks["v"].offset + d.P2v.element_dofs(),
                          L.blocks["psi_v"].offset + d.P2v.element_dofs(),
                          L.blocks["p"].offset + d.P1.element_dofs(),
                          L.blocks["psi_p"].offset + d.P1.element_dofs()])

    @cached_property
    def geo_dofs(self) -> np.ndarray:
        """(m, 9) global indices of the Γ_d edge unknowns (w, λ, μ)."""
        L = self.layout
        wd = L.blocks["w"].offset + geo._edge_data(self.disc).dofs
        lam = L.blocks["lam"].offset
        extra = np.tile([lam, lam + 1, lam + 2], (len(wd), 1))
        return np.hstack([wd, extra])

    @cached_property
    def linear_part(self) -> sp.csr_matrix:
        """Symmetric matrix L of the bilinear Lagrangian terms (without α)."""
        ops = operators(self.disc)
        L = self.layout
        rows, cols, vals = [], [], []

        def pair(r, c, A):
            A = sp.coo_matrix(A)
            ro, co = L.blocks[r].offset, L.blocks[c].offset
            rows.extend([A.row + ro, A.col + co])
            cols.extend([A.col + co, A.row + ro])
            vals.extend([A.data, A.data])

        tag = self.strategy.tag
        if tag == "S1":
            pair("psi_z", "z", -ops.laplace)
            pair("psi_z", "b", ops.scalar_datum)
            pair("psi_w", "w", -sp.diags(ops.lumped_mass_vector))
            pair("psi_w", "z", ops.projection(self.strategy))
        else:
            pair("psi_w", "w", -ops.elasticity)
            pair("psi_w", "b", ops.vector_datum if tag == "S3" else ops.normal_datum)
        if tag == "S3":
            pair("psi_b", "b", -ops.lb_vector)
            pair("psi_b", "c", self.disc.curve_normal_mass)
        else:
            pair("psi_b", "b", -ops.lb_scalar)
            pair("psi_b", "c", self.disc.curve_mass)
        n = L.size
        return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n)).tocsr()

    def regularization(self, alpha: float) -> sp.csr_matrix:
        """α × curve mass in the (c, c) block."""
        L = self.layout
        Mc = sp.coo_matrix(self.disc.curve_mass)
        off = L.blocks["c"].offset
        return sp.coo_matrix((alpha * Mc.data, (Mc.row + off, Mc.col + off)),
                             shape=(L.size, L.size)).tocsr()

    # ---- evaluation ----------------------------------------------------------
    def _volume(self, state: KKTState, order: int):
        d = self.disc
        local = state.x[self.volume_dofs]
        return kernels.element_terms(d.p1_grad, d.p2_grad, d.p1_val, d.vq.dx, local,
                                     self.gamma, self.eta, order)

    def evaluate(self, state: KKTState, alpha: float, order: int = 2) -> Evaluation:
        """Lagrangian value, full gradient and full Hessian (all dofs)."""
        n = self.layout.size
        Lmat = self.linear_part + self.regularization(alpha)
        x = state.x
        Lx = Lmat @ x
        e_val, e_grad, e_hess, J = self._volume(state, order)
        g_val, g_grad, g_hess, _ = geo.lagrangian_terms(self.disc, state.w, state.lam, state.mu,
                                                        order)
        value = 0.5 * float(x @ Lx) + float(e_val.sum()) + g_val
        if order < 1:
            return Evaluation(value, None, None, J)
        grad = Lx + np.bincount(self.volume_dofs.ravel(), weights=e_grad.ravel(), minlength=n) \
            + np.bincount(self.geo_dofs.ravel(), weights=g_grad.ravel(), minlength=n)
        if order < 2:
            return Evaluation(value, grad, None, J)
        vd, gd = self.volume_dofs, self.geo_dofs
        Lc = Lmat.tocoo()
        rows = np.concatenate([Lc.row, np.repeat(vd, 36, axis=1).ravel(),
                               np.repeat(gd, 9, axis=1).ravel()])
        cols = np.concatenate([Lc.col, np.tile(vd, (1, 36)).ravel(), np.tile(gd, (1, 9)).ravel()])
        vals = np.concatenate([Lc.data, e_hess.ravel(), g_hess.ravel()])
        hess = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        return Evaluation(value, grad, hess, J)

    def lagrangian(self, state: KKTState, alpha: float) -> float:
        return self.evaluate(state, alpha, order=0).value

    def lagrangian_parts(self, state: KKTState, alpha: float):
        """Per-element, per-design-edge and per-row terms summing to the Lagrangian.

        Returns (elements (nt,), edges (m,), rows (n,)), where ``rows`` holds
        ½ x_i (L x)_i of the bilinear part.  Differencing two states part by part
        before summing avoids cancellation in finite-difference checks.
        """
        x = state.x
        rows = 0.5 * x * ((self.linear_part + self.regularization(alpha)) @ x)
        e_val = self._volume(state, order=0)[0]
        g = geo.constraint_terms(geo._edge_data(self.disc), state.w)[0]
        edges = g @ np.array([state.lam / geo.DIM, state.mu[0], state.mu[1]])
        return e_val, edges, rows

    def residual(self, state: KKTState, alpha: float) -> np.ndarray:
        """Gradient of the Lagrangian at the free dofs, in block order."""
        return self.evaluate(state, alpha, order=1).grad[self.layout.free]

    def jacobian(self, state: KKTState, alpha: float) -> sp.csr_matrix:
        """Generalized Hessian of the Lagrangian restricted to the free dofs."""
        return self._restrict(self.evaluate(state, alpha, order=2).hess)

    def residual_and_jacobian(self, state: KKTState, alpha: float):
        ev = self.evaluate(state, alpha, order=2)
        return ev.grad[self.layout.free], self._restrict(ev.hess), ev.jacobian_det

    def _restrict(self, H: sp.csr_matrix) -> sp.csr_matrix:
        free = self.layout.free
        return H[free][:, free].tocsr()

    def active_set(self, state: KKTState) -> ActiveSet:
        _, _, _, J = self._volume(state, order=0)
        return ActiveSet(self.eta - J > 0)

    def block_slices(self) -> dict[str, np.ndarray]:
        return self.layout.free_blocks()


def lagrangian(system: KKTSystem, state: KKTState, alpha: float) -> float:
    return system.lagrangian(state, alpha)


def assemble_residual(system: KKTSystem, state: KKTState, alpha: float) -> np.ndarray:
    return system.residual(state, alpha)


def assemble_jacobian(system: KKTSystem, state: KKTState, alpha: float) -> sp.csr_matrix:
    return system.jacobian(state, alpha)
