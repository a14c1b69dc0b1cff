"""Stokes flow on the mapped domain, inflow data and the objective.

All integrals live on the reference mesh.  With F = I + Dw, J = det F and
B = adj F, the pulled-back Stokes forms are

    a(v, ψ) = ∫ (Dv B) : (Dψ B) / J dx
    b(p, ψ) = ∫ p tr(Dψ B) dx

and the discrete system is the symmetric saddle point [[A, -Bᵀ], [-B, 0]].
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import Discretization, Field, scatter_matrix, scatter_vector
from .mesh import GAMMA_D, GAMMA_IN, GAMMA_NS

PROFILES = ("compatible", "literal")


@dataclass(frozen=True)
class InflowProfile:
    """Axial inflow velocity as a function of the distance r from the centerline.

    ``compatible`` is cos(π r / δ), which vanishes at the walls r = δ/2.
    ``literal`` is cos(2π r / δ).
    """
    delta: float = 6.0
    variant: str = "compatible"

    def __post_init__(self):
        if self.variant not in PROFILES:
            raise ValueError(f"inflow variant must be one of {PROFILES}, got {self.variant!r}")
        if not self.delta > 0:
            raise ValueError("inflow diameter delta must be positive")

    def __call__(self, r):
        k = math.pi if self.variant == "compatible" else 2 * math.pi
        return np.cos(k * np.asarray(r, dtype=float) / self.delta)


def velocity_dirichlet_dofs(disc: Discretization) -> np.ndarray:
    """Scalar P2 dofs carrying velocity Dirichlet data (Γ_in, Γ_ns, Γ_d)."""
    return disc.P2v.boundary_dofs(GAMMA_IN, GAMMA_NS, GAMMA_D)


def inflow_values(disc: Discretization, profile: InflowProfile | None = None) -> Field:
    """P2 vector field equal to (profile(|x₂|), 0) at the Γ_in dofs and zero elsewhere.

    Dofs shared with a no-slip wall keep the wall value zero.
    """
    profile = profile or InflowProfile()
    space = disc.P2v
    inflow = np.setdiff1d(space.boundary_dofs(GAMMA_IN), space.boundary_dofs(GAMMA_NS, GAMMA_D))
    g = np.zeros(space.n_dofs)
    g[inflow] = profile(np.abs(space.dof_coords[inflow, 1]))
    return Field(space, g)


def _geometry(disc: Discretization, w):
    """B = adj(I + Dw) (nt, 2, 2) and J (nt,) of a P1 displacement."""
    if w is None:
        nt = disc.mesh.n_triangles
        return np.broadcast_to(np.eye(2), (nt, 2, 2)).copy(), np.ones(nt)
    dw = disc.grad_w(np.asarray(getattr(w, "coeffs", w), dtype=float))
    F = dw + np.eye(2)
    J = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    B = np.empty_like(F)
    B[:, 0, 0], B[:, 0, 1] = F[:, 1, 1], -F[:, 0, 1]
    B[:, 1, 0], B[:, 1, 1] = -F[:, 1, 0], F[:, 0, 0]
    return B, J


def stokes_matrices(disc: Discretization, w=None):
    """Pulled-back Stokes matrices ``A`` (P2v x P2v) and ``Bdiv`` (P1 x P2v)."""
    B, J = _geometry(disc, w)
    if np.any(J <= 0):
        raise np.linalg.LinAlgError("transformation is not orientation preserving (J <= 0)")
    gb = np.einsum("eqai,eik->eqak", disc.p2_grad, B)         # (∇φ)ᵀ B
    dx = disc.vq.dx
    a = np.einsum("eqak,eqbk,eq->eab", gb, gb, dx / J[:, None])
    zero = np.zeros_like(a)
    a_loc = np.block([[a, zero], [zero, a]])
    dofs = disc.P2v.element_dofs()
    A = scatter_matrix(a_loc, dofs, dofs, (disc.P2v.n_dofs,) * 2)
    # b(q, ψ) with ψ = φ_a e_c: ∫ q (∇φ_a B)_c
    bl = np.einsum("qj,eqak,eq->ejka", disc.p1_val, gb, dx).reshape(len(dx), 3, 12)
    Bdiv = scatter_matrix(bl, disc.P1.element_dofs(), dofs, (disc.P1.n_dofs, disc.P2v.n_dofs))
    return A, Bdiv


def saddle_matrix(A, Bdiv) -> sp.csr_matrix:
    return sp.bmat([[A, -Bdiv.T], [-Bdiv, None]], format="csr")


def solve_stokes(disc: Discretization, w, fixed, values, forcing=None):
    """Taylor-Hood solve with velocity Dirichlet data ``values`` at dofs ``fixed``.

    ``forcing(x) -> (ne, nq, 2)`` is a physical body force, pulled back with J.
    Returns the velocity and pressure Fields.
    """
    A, Bdiv = stokes_matrices(disc, w)
    K = saddle_matrix(A, Bdiv)
    nv, npr = disc.P2v.n_dofs, disc.P1.n_dofs
    rhs = np.zeros(nv + npr)
    if forcing is not None:
        _, J = _geometry(disc, w)
        x = disc.vq.x
        if w is not None:
            x = x + _p1_at_qp(disc, w)
        f = np.asarray(forcing(x))
        vals = np.einsum("eqc,qa,eq->eca", f, disc.p2_val, disc.vq.dx * J[:, None])
        rhs[:nv] = scatter_vector(vals.reshape(len(f), 12), disc.P2v.element_dofs(), nv)
    x = np.zeros(nv + npr)
    fixed = np.asarray(fixed, dtype=np.int64)
    x[fixed] = values
    free = np.setdiff1d(np.arange(nv + npr), fixed)
    r = rhs[free] - K[free][:, fixed] @ x[fixed]
    x[free] = spla.splu(K[free][:, free].tocsc()).solve(r)
    return Field(disc.P2v, x[:nv]), Field(disc.P1, x[nv:])


def _p1_at_qp(disc: Discretization, w) -> np.ndarray:
    coeffs = np.asarray(getattr(w, "coeffs", w), dtype=float)
    n = disc.mesh.n_vertices
    wl = np.stack([coeffs[:n], coeffs[n:2 * n]], axis=1)[disc.mesh.triangles]
    return np.einsum("qa,eac->eqc", disc.p1_val, wl)


def solve_state(disc: Discretization, w=None, g_in: Field | None = None,
                profile: InflowProfile | None = None):
    """Velocity and pressure on the domain mapped by w.

    Velocity is ``g_in`` on Γ_in and zero on Γ_ns ∪ Γ_d; Γ_out is do-nothing.
    """
    if g_in is None:
        g_in = inflow_values(disc, profile)
    scalar = velocity_dirichlet_dofs(disc)
    fixed = disc.P2v.vector_dofs(scalar)
    return solve_stokes(disc, w, fixed, g_in.coeffs[fixed])


def dissipation(disc: Discretization, w, v) -> float:
    """½ ∫ |Dv B|² / J dx, the energy dissipation on the mapped domain."""
    B, J = _geometry(disc, w)
    vc = np.asarray(getattr(v, "coeffs", v), dtype=float)
    n = disc.P2v.n_scalar
    vl = np.stack([vc[:n], vc[n:]], axis=1)[disc.P2v.dof_map]    # (nt, 6, 2)
    Dv = np.einsum("eac,eqaj->eqcj", vl, disc.p2_grad)
    M = np.einsum("eqcj,ejk->eqck", Dv, B)
    return float(0.5 * np.sum(np.sum(M * M, axis=(2, 3)) * disc.vq.dx / J[:, None]))


def penalty(disc: Discretization, w, eta: float) -> float:
    """½ ∫ ((η - J)₊)² dx; J is constant per triangle for P1 w."""
    _, J = _geometry(disc, w)
    r = np.maximum(eta - J, 0.0)
    return float(0.5 * np.sum(r * r * disc.vq.dx.sum(axis=1)))


def objective(disc: Discretization, w, v, c, alpha: float, gamma: float, eta: float) -> float:
    """Dissipation + (α/2)∮ c² ds + (γ/2)∫ ((η - J)₊)² dx."""
    cc = np.asarray(getattr(c, "coeffs", c), dtype=float)
    reg = 0.5 * alpha * float(cc @ (disc.curve_mass @ cc))
    return dissipation(disc, w, v) + reg + gamma * penalty(disc, w, eta)
