"""Control-to-deformation operators.

A scalar control ``c`` on Γ_d is lifted to a volume displacement ``w`` by a
Laplace-Beltrami solve on the design curve followed by an elliptic extension
into Ω.  Three compositions are provided:

* ``S1``: scalar LB, scalar harmonic extension ``z``, then the lumped L²
  projection of ``z n_ext`` onto the P1 vector space;
* ``S2``: scalar LB, vector extension with Neumann datum ``b n``;
* ``S3``: vector LB with right-hand side ``c n``, vector extension with datum ``b``.

The vector extension operator is ∫ (Dw + Dwᵀ) : Dψ dx.  Every displacement
vanishes on Γ_in ∪ Γ_out ∪ Γ_ns.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import Discretization, Field, assemble, mass_kernel, stiffness_kernel, trace_matrix
from .mesh import GAMMA_IN, GAMMA_NS, GAMMA_OUT

STRATEGIES = ("S1", "S2", "S3")
N_EXT_VARIANTS = ("scaled", "unit")


def n_ext_scaled(x):
    """(1/2 + |x|)² x."""
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    return (0.5 + r) ** 2 * x


def n_ext_unit(x):
    """x / |x|."""
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Strategy:
    """Deformation strategy tag plus, for S1, the extension direction field."""
    tag: str = "S3"
    n_ext: str = "scaled"

    def __post_init__(self):
        if self.tag not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.tag!r}")
        if self.n_ext not in N_EXT_VARIANTS:
            raise ValueError(f"n_ext must be one of {N_EXT_VARIANTS}, got {self.n_ext!r}")

    @property
    def vector_lb(self) -> bool:
        return self.tag == "S3"

    def n_ext_field(self, x):
        return n_ext_scaled(x) if self.n_ext == "scaled" else n_ext_unit(x)


def _sym_grad_kernel(u, v, q):
    gu = u.grad + np.swapaxes(u.grad, -1, -2)
    return np.einsum("eqjab,eqiab,eq->eij", gu, v.grad, q.dx)


def block_diag2(a):
    return sp.block_diag([a, a], format="csr")


class DeformOperators:
    """Matrices shared by the standalone solves and the optimality system."""

    def __init__(self, disc: Discretization):
        self.disc = disc
        mesh = disc.mesh
        self.outer_vertices = mesh.tagged_vertices(GAMMA_IN, GAMMA_OUT, GAMMA_NS)

    @cached_property
    def lb_scalar(self) -> sp.csr_matrix:
        """Curve mass plus curve stiffness."""
        return (self.disc.curve_mass + self.disc.curve_stiffness).tocsr()

    @cached_property
    def lb_vector(self) -> sp.csr_matrix:
        return block_diag2(self.lb_scalar)

    @cached_property
    def curve_mass_vector(self) -> sp.csr_matrix:
        return block_diag2(self.disc.curve_mass)

    @cached_property
    def laplace(self) -> sp.csr_matrix:
        return assemble(stiffness_kernel, self.disc.P1, self.disc.P1, self.disc.degree)

    @cached_property
    def elasticity(self) -> sp.csr_matrix:
        """∫ (Dw + Dwᵀ) : Dψ dx on P1 vector fields."""
        return assemble(_sym_grad_kernel, self.disc.P1v, self.disc.P1v, self.disc.degree)

    @cached_property
    def trace(self) -> sp.csr_matrix:
        return trace_matrix(self.disc.C1, self.disc.P1)

    @cached_property
    def trace_vector(self) -> sp.csr_matrix:
        return trace_matrix(self.disc.C1v, self.disc.P1v)

    @cached_property
    def scalar_datum(self) -> sp.csr_matrix:
        """(P1 x C1) matrix of ∫_Γd b ψ ds."""
        return (self.trace @ self.disc.curve_mass).tocsr()

    @cached_property
    def vector_datum(self) -> sp.csr_matrix:
        """(P1v x C1v) matrix of ∫_Γd b·ψ ds."""
        return (self.trace_vector @ self.curve_mass_vector).tocsr()

    @cached_property
    def normal_datum(self) -> sp.csr_matrix:
        """(P1v x C1) matrix of ∫_Γd b n·ψ ds."""
        return (self.trace_vector @ self.disc.curve_normal_mass).tocsr()

    @cached_property
    def lumped_mass_vector(self) -> np.ndarray:
        m = np.asarray(assemble(mass_kernel, self.disc.P1, self.disc.P1, self.disc.degree).sum(axis=1)).ravel()
        return np.concatenate([m, m])

    def projection(self, strategy: Strategy) -> sp.csr_matrix:
        """(P1v x P1) matrix of ∫ z n_ext·ψ dx."""
        key = strategy.n_ext
        cache = self.__dict__.setdefault("_projection", {})
        if key not in cache:
            def kernel(u, v, q):
                n = strategy.n_ext_field(q.x)
                return np.einsum("eqj,eqic,eqc,eq->eij", u.val, v.val, n, q.dx)
            cache[key] = assemble(kernel, self.disc.P1, self.disc.P1v, self.disc.degree)
        return cache[key]

    def outer_dofs(self, value_dim: int) -> np.ndarray:
        n = self.disc.mesh.n_vertices
        return np.concatenate([c * n + self.outer_vertices for c in range(value_dim)])


_OPERATORS: "weakref.WeakKeyDictionary[Discretization, DeformOperators]" = weakref.WeakKeyDictionary()


def operators(disc: Discretization) -> DeformOperators:
    ops = _OPERATORS.get(disc)
    if ops is None:
        ops = _OPERATORS[disc] = DeformOperators(disc)
    return ops


def solve_dirichlet(A, rhs, fixed, values=None) -> np.ndarray:
    """Solve ``A x = rhs`` with ``x[fixed] = values`` eliminated symmetrically."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    x = np.zeros(n)
    if values is not None:
        x[fixed] = values
    free = np.setdiff1d(np.arange(n), fixed)
    r = rhs[free] - A[free][:, fixed] @ x[fixed]
    x[free] = spla.splu(A[free][:, free].tocsc()).solve(r)
    return x


def _coeffs(f):
    return np.asarray(getattr(f, "coeffs", f), dtype=float)


def solve_lb_scalar(disc: Discretization, c) -> Field:
    """b with ∫ bψ + b'ψ' ds = ∫ cψ ds on the closed design curve."""
    ops = operators(disc)
    rhs = disc.curve_mass @ _coeffs(c)
    return Field(disc.C1, spla.splu(ops.lb_scalar.tocsc()).solve(rhs))


def solve_lb_vector(disc: Discretization, c=None, data=None) -> Field:
    """Vector b with ∫ b·ψ + Db:Dψ ds = ∫ c n·ψ ds.

    ``data`` replaces ``c n`` by a given vector datum: either a constant
    2-vector or blocked curve P1 vector coefficients.
    """
    ops = operators(disc)
    if data is not None:
        g = np.asarray(data, dtype=float)
        if g.shape == (2,):
            g = np.repeat(g, disc.C1.n_dofs)
        rhs = ops.curve_mass_vector @ g
    else:
        rhs = disc.curve_normal_mass @ _coeffs(c)
    return Field(disc.C1v, spla.splu(ops.lb_vector.tocsc()).solve(rhs))


def solve_extension_scalar(disc: Discretization, b) -> Field:
    """Harmonic z with Neumann datum b on Γ_d and z = 0 on the outer boundary."""
    ops = operators(disc)
    rhs = ops.scalar_datum @ _coeffs(b)
    return Field(disc.P1, solve_dirichlet(ops.laplace, rhs, ops.outer_dofs(1)))


def solve_extension_vector(disc: Discretization, g) -> Field:
    """Symmetric-gradient extension of the vector datum ``g`` (curve P1 vector)."""
    ops = operators(disc)
    rhs = ops.vector_datum @ _coeffs(g)
    return Field(disc.P1v, solve_dirichlet(ops.elasticity, rhs, ops.outer_dofs(2)))


def _solve_extension_normal(disc: Discretization, b) -> Field:
    ops = operators(disc)
    rhs = ops.normal_datum @ _coeffs(b)
    return Field(disc.P1v, solve_dirichlet(ops.elasticity, rhs, ops.outer_dofs(2)))


def project_direction(disc: Discretization, z, strategy: Strategy) -> Field:
    """Lumped L² projection of z n_ext, zero on the outer boundary."""
    ops = operators(disc)
    w = (ops.projection(strategy) @ _coeffs(z)) / ops.lumped_mass_vector
    w[ops.outer_dofs(2)] = 0.0
    return Field(disc.P1v, w)


def apply_strategy(disc: Discretization, strategy: Strategy | str, c) -> Field:
    """Displacement w = S(c) for the given strategy."""
    if isinstance(strategy, str):
        strategy = Strategy(strategy)
    if strategy.tag == "S3":
        return solve_extension_vector(disc, solve_lb_vector(disc, c))
    b = solve_lb_scalar(disc, c)
    if strategy.tag == "S2":
        return _solve_extension_normal(disc, b)
    return project_direction(disc, solve_extension_scalar(disc, b), strategy)
