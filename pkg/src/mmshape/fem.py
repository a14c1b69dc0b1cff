"""Lagrange finite element spaces, quadrature contexts and sparse assembly.

Vector-valued spaces store their coefficients component-blocked: all
x-components first, then all y-components.  Local element dofs follow the
same convention (``comp * n_local + a``).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .mesh import SINGULAR_TOL, TriMesh, displacement_gradient, p1_gradients
from .quadrature import DEFAULT_DEGREE, line_rule, triangle_rule

VOLUME = "volume"
CURVE = "curve"


# ---------------------------------------------------------------------------
# reference basis functions
# ---------------------------------------------------------------------------

def _barycentric(pts):
    pts = np.asarray(pts, dtype=float)
    return np.column_stack([1 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])


_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
# local edge (i, j) of the P2 midpoint nodes 3, 4, 5
P2_EDGES = ((0, 1), (1, 2), (2, 0))


def triangle_basis(degree, pts):
    """Values ``(nq, nb)`` and reference gradients ``(nq, nb, 2)``."""
    lam = _barycentric(pts)
    nq = len(lam)
    if degree == 1:
        return lam, np.broadcast_to(_DLAMBDA, (nq, 3, 2)).copy()
    if degree != 2:
        raise ValueError(f"unsupported degree {degree}")
    val = np.empty((nq, 6))
    grad = np.empty((nq, 6, 2))
    for i in range(3):
        val[:, i] = lam[:, i] * (2 * lam[:, i] - 1)
        grad[:, i] = (4 * lam[:, i] - 1)[:, None] * _DLAMBDA[i]
    for k, (i, j) in enumerate(P2_EDGES):
        val[:, 3 + k] = 4 * lam[:, i] * lam[:, j]
        grad[:, 3 + k] = 4 * (lam[:, j, None] * _DLAMBDA[i] + lam[:, i, None] * _DLAMBDA[j])
    return val, grad


def interval_basis(degree, s):
    """Values ``(nq, nb)`` and d/ds ``(nq, nb)`` on [0, 1]."""
    s = np.asarray(s, dtype=float)
    if degree == 1:
        return np.column_stack([1 - s, s]), np.column_stack([-np.ones_like(s), np.ones_like(s)])
    if degree != 2:
        raise ValueError(f"unsupported degree {degree}")
    val = np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])
    der = np.column_stack([4 * s - 3, 4 * s - 1, 4 - 8 * s])
    return val, der


# ---------------------------------------------------------------------------
# spaces and fields
# ---------------------------------------------------------------------------

class FESpace:
    """Continuous Lagrange space of degree 1 or 2 on Ω or on the design curve Γ_d."""

    def __init__(self, mesh: TriMesh, degree: int = 1, value_dim: int = 1, support: str = VOLUME):
        if degree not in (1, 2) or value_dim not in (1, 2) or support not in (VOLUME, CURVE):
            raise ValueError("unsupported space")
        self.mesh = mesh
        self.degree = degree
        self.value_dim = value_dim
        self.support = support
        if support == VOLUME:
            if degree == 1:
                self.dof_map = mesh.triangles
                self.n_scalar = mesh.n_vertices
            else:
                self.dof_map = np.hstack([mesh.triangles, mesh.n_vertices + mesh.triangle_edges])
                self.n_scalar = mesh.n_vertices + len(mesh.edges)
        else:
            m = len(mesh.design_loop)
            k = np.arange(m)
            cols = [k, (k + 1) % m] + ([m + k] if degree == 2 else [])
            self.dof_map = np.column_stack(cols)
            self.n_scalar = degree * m

    def __repr__(self):
        return (f"FESpace(P{self.degree}, value_dim={self.value_dim}, "
                f"support={self.support}, n_dofs={self.n_dofs})")

    @property
    def n_dofs(self) -> int:
        return self.value_dim * self.n_scalar

    @property
    def n_local(self) -> int:
        return self.dof_map.shape[1]

    @cached_property
    def dof_coords(self) -> np.ndarray:
        """(n_scalar, 2) nodal coordinates."""
        mesh = self.mesh
        if self.support == VOLUME:
            if self.degree == 1:
                return mesh.vertices
            e = mesh.edges
            return np.vstack([mesh.vertices, 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])])
        x = mesh.vertices[mesh.design_loop]
        if self.degree == 1:
            return x
        return np.vstack([x, 0.5 * (x + np.roll(x, -1, axis=0))])

    def element_dofs(self) -> np.ndarray:
        """(n_elements, value_dim * n_local) global indices, component-blocked."""
        return np.hstack([c * self.n_scalar + self.dof_map for c in range(self.value_dim)])

    def boundary_dofs(self, *tags) -> np.ndarray:
        """Scalar dof indices lying on boundary edges with any of ``tags``."""
        if self.support != VOLUME:
            raise ValueError("boundary dofs only exist for volume spaces")
        verts = self.mesh.tagged_vertices(*tags)
        if self.degree == 1:
            return verts
        edges = self.mesh.tagged_edges(*tags) + self.mesh.n_vertices
        return np.union1d(verts, edges)

    def vector_dofs(self, scalar_dofs) -> np.ndarray:
        """All component dofs belonging to the given scalar dofs."""
        scalar_dofs = np.asarray(scalar_dofs, dtype=np.int64)
        return np.concatenate([c * self.n_scalar + scalar_dofs for c in range(self.value_dim)])


@dataclass
class Field:
    space: FESpace
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise ValueError(f"expected {self.space.n_dofs} coefficients, got {self.coeffs.shape}")
        if not np.all(np.isfinite(self.coeffs)):
            raise ValueError("field coefficients must be finite")

    @classmethod
    def zeros(cls, space):
        return cls(space, np.zeros(space.n_dofs))

    def component(self, c: int) -> np.ndarray:
        n = self.space.n_scalar
        return self.coeffs[c * n:(c + 1) * n]

    def nodal(self) -> np.ndarray:
        """Coefficients as (n_scalar, value_dim)."""
        return self.coeffs.reshape(self.space.value_dim, -1).T


def interpolate(space: FESpace, f) -> Field:
    """Nodal interpolant of ``f(x) -> (n,)`` or ``(n, value_dim)``."""
    vals = np.asarray(f(space.dof_coords), dtype=float)
    if space.value_dim == 1:
        return Field(space, vals.reshape(-1))
    return Field(space, vals.reshape(-1, space.value_dim).T.ravel())


def eval_transform(mesh: TriMesh, w, element: int):
    """(Dτ, Dτ^{-1}, J_τ) of τ = id + w on ``element``.

    For P1 displacements Dτ is constant per triangle, so no quadrature point
    is needed.  J_τ is signed; the inverse raises ``LinAlgError`` when
    ``|J_τ| < 1e-14``.
    """
    grad_tau = np.eye(2) + displacement_gradient(mesh, w)[element]
    J = grad_tau[0, 0] * grad_tau[1, 1] - grad_tau[0, 1] * grad_tau[1, 0]
    if abs(J) < SINGULAR_TOL:
        raise np.linalg.LinAlgError("singular transformation gradient")
    inv = np.array([[grad_tau[1, 1], -grad_tau[0, 1]], [-grad_tau[1, 0], grad_tau[0, 0]]]) / J
    return grad_tau, inv, float(J)


# ---------------------------------------------------------------------------
# basis evaluation and assembly
# ---------------------------------------------------------------------------

@dataclass
class BasisEval:
    """Basis data at quadrature points of every element.

    ``val`` has shape (ne, nq, nl) for scalar spaces and (ne, nq, nl, vd) for
    vector spaces; ``grad`` appends a derivative axis of length 2 on volume
    elements and 1 (arc-length derivative) on curve elements.
    """
    space: FESpace
    val: np.ndarray
    grad: np.ndarray


@dataclass
class QuadContext:
    """Integration measure ``dx`` (ne, nq) and physical points ``x`` (ne, nq, 2)."""
    dx: np.ndarray
    x: np.ndarray
    normal: np.ndarray | None = None  # (ne, 2) obstacle-outward, curve only
    tangent: np.ndarray | None = None


def quad_context(mesh: TriMesh, support: str = VOLUME, degree: int = DEFAULT_DEGREE) -> QuadContext:
    if support == VOLUME:
        pts, wts = triangle_rule(degree)
        lam = _barycentric(pts)
        p = mesh.vertices[mesh.triangles]
        x = np.einsum("qa,eai->eqi", lam, p)
        a = p[:, 1] - p[:, 0]
        b = p[:, 2] - p[:, 0]
        det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        return QuadContext(dx=det[:, None] * wts[None, :], x=x)
    s, wts = line_rule(degree)
    p = mesh.vertices[mesh.design_edges]
    x = p[:, None, 0] + s[None, :, None] * (p[:, None, 1] - p[:, None, 0])
    h = mesh.design_edge_lengths
    tangent = (p[:, 1] - p[:, 0]) / h[:, None]
    return QuadContext(dx=h[:, None] * wts[None, :], x=x,
                       normal=mesh.design_edge_normals, tangent=tangent)


def evaluate_basis(space: FESpace, degree: int = DEFAULT_DEGREE) -> BasisEval:
    mesh = space.mesh
    if space.support == VOLUME:
        pts, _ = triangle_rule(degree)
        val, rgrad = triangle_basis(space.degree, pts)
        p = mesh.vertices[mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        inv_t = np.linalg.inv(jac).transpose(0, 2, 1)
        grad = np.einsum("eij,qaj->eqai", inv_t, rgrad)
    else:
        s, _ = line_rule(degree)
        val, der = interval_basis(space.degree, s)
        grad = (der[None] / mesh.design_edge_lengths[:, None, None])[..., None]
    ne = space.dof_map.shape[0]
    val = np.broadcast_to(val, (ne,) + val.shape)
    if space.value_dim == 1:
        return BasisEval(space, val, grad)
    vd, nb = space.value_dim, space.n_local
    vval = np.zeros(val.shape[:2] + (vd * nb, vd))
    vgrad = np.zeros(grad.shape[:2] + (vd * nb, vd, grad.shape[-1]))
    for c in range(vd):
        vval[:, :, c * nb:(c + 1) * nb, c] = val
        vgrad[:, :, c * nb:(c + 1) * nb, c, :] = grad
    return BasisEval(space, vval, vgrad)


def _check_supports(*spaces):
    if len({(id(s.mesh), s.support) for s in spaces}) != 1:
        raise ValueError("spaces must share mesh and support")


def assemble(kernel, trial: FESpace, test: FESpace, degree: int = DEFAULT_DEGREE) -> sp.csr_matrix:
    """Global matrix of ``kernel(u, v, q) -> (ne, n_test_local, n_trial_local)``."""
    _check_supports(trial, test)
    q = quad_context(test.mesh, test.support, degree)
    local = kernel(evaluate_basis(trial, degree), evaluate_basis(test, degree), q)
    rows = test.element_dofs()
    cols = trial.element_dofs()
    if local.shape != (rows.shape[0], rows.shape[1], cols.shape[1]):
        raise ValueError(f"kernel returned {local.shape}, spaces need "
                         f"{(rows.shape[0], rows.shape[1], cols.shape[1])}")
    return scatter_matrix(local, rows, cols, (test.n_dofs, trial.n_dofs))


def assemble_vector(kernel, test: FESpace, degree: int = DEFAULT_DEGREE) -> np.ndarray:
    """Global vector of ``kernel(v, q) -> (ne, n_test_local)``."""
    q = quad_context(test.mesh, test.support, degree)
    local = kernel(evaluate_basis(test, degree), q)
    rows = test.element_dofs()
    if local.shape != rows.shape:
        raise ValueError(f"kernel returned {local.shape}, space needs {rows.shape}")
    return scatter_vector(local, rows, test.n_dofs)


def scatter_matrix(local, rows, cols, shape) -> sp.csr_matrix:
    r = np.broadcast_to(rows[:, :, None], local.shape).ravel()
    c = np.broadcast_to(cols[:, None, :], local.shape).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()


def scatter_vector(local, rows, n) -> np.ndarray:
    # bincount accumulates in input order, i.e. element by element
    return np.bincount(rows.ravel(), weights=local.ravel(), minlength=n)


def trace_matrix(curve: FESpace, volume: FESpace) -> sp.csr_matrix:
    """Injection of curve P1 dofs into the matching volume P1 vertex dofs."""
    if curve.support != CURVE or volume.support != VOLUME or curve.degree != 1 or volume.degree != 1:
        raise ValueError("trace map defined for P1 curve -> P1 volume spaces")
    if curve.value_dim != volume.value_dim:
        raise ValueError("value dimensions differ")
    loop = curve.mesh.design_loop
    m = len(loop)
    rows = np.concatenate([c * volume.n_scalar + loop for c in range(curve.value_dim)])
    cols = np.arange(curve.value_dim * m)
    return sp.csr_matrix((np.ones(len(cols)), (rows, cols)), shape=(volume.n_dofs, curve.n_dofs))


# ---------------------------------------------------------------------------
# common kernels
# ---------------------------------------------------------------------------

def _dot(a, b):
    """Contract value (and derivative) axes of trial ``a`` and test ``b``."""
    if a.ndim == 3:
        return np.einsum("eqj,eqi->eqij", a, b)
    axes = "".join("xyz"[: a.ndim - 3])
    return np.einsum(f"eqj{axes},eqi{axes}->eqij", a, b)


def mass_kernel(u, v, q):
    return np.einsum("eqij,eq->eij", _dot(u.val, v.val), q.dx)


def stiffness_kernel(u, v, q):
    return np.einsum("eqij,eq->eij", _dot(u.grad, v.grad), q.dx)


def load_kernel(f):
    """Kernel for ∫ f·v with ``f(x) -> (ne, nq)`` or ``(ne, nq, vd)``."""
    def kernel(v, q):
        fx = f(q.x)
        if v.val.ndim == 3:
            return np.einsum("eq,eqi,eq->ei", fx, v.val, q.dx)
        return np.einsum("eqc,eqic,eq->ei", fx, v.val, q.dx)
    return kernel


def l2_norm(field: Field, exact=None, degree: int = DEFAULT_DEGREE) -> float:
    """L² norm of ``field - exact`` on its support (exact: callable of x)."""
    space = field.space
    q = quad_context(space.mesh, space.support, degree)
    b = evaluate_basis(space, degree)
    loc = field.coeffs[space.element_dofs()]
    if space.value_dim == 1:
        uh = np.einsum("eqi,ei->eq", b.val, loc)
    else:
        uh = np.einsum("eqic,ei->eqc", b.val, loc)
    if exact is not None:
        uh = uh - np.asarray(exact(q.x))
    sq = uh ** 2 if uh.ndim == 2 else np.sum(uh ** 2, axis=2)
    return float(np.sqrt(np.sum(sq * q.dx)))


# ---------------------------------------------------------------------------
# discretization bundle
# ---------------------------------------------------------------------------

class Discretization:
    """The spaces used by the optimization problem plus per-element geometry.

    P1 for w, p, z and their adjoints; P2 for v and ψ_v; P1 on Γ_d for b,
    ψ_b and c.
    """

    def __init__(self, mesh: TriMesh, degree: int = DEFAULT_DEGREE):
        self.mesh = mesh
        self.degree = degree
        self.P1 = FESpace(mesh, 1, 1)
        self.P1v = FESpace(mesh, 1, 2)
        self.P2v = FESpace(mesh, 2, 2)
        self.C1 = FESpace(mesh, 1, 1, CURVE)
        self.C1v = FESpace(mesh, 1, 2, CURVE)

        self.qpoints, self.qweights = triangle_rule(degree)
        self.vq = quad_context(mesh, VOLUME, degree)
        self.cq = quad_context(mesh, CURVE, degree)
        self.p1_grad = p1_gradients(mesh)                       # (nt, 3, 2)
        self.p1_val = triangle_basis(1, self.qpoints)[0]        # (nq, 3)
        self.p2_val, rgrad = triangle_basis(2, self.qpoints)    # (nq, 6)
        p = mesh.vertices[mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
        inv_t = np.linalg.inv(jac).transpose(0, 2, 1)
        self.p2_grad = np.einsum("eij,qaj->eqai", inv_t, rgrad)  # (nt, nq, 6, 2)

    @cached_property
    def curve_mass(self) -> sp.csr_matrix:
        return assemble(mass_kernel, self.C1, self.C1, self.degree)

    @cached_property
    def curve_stiffness(self) -> sp.csr_matrix:
        return assemble(stiffness_kernel, self.C1, self.C1, self.degree)

    @cached_property
    def curve_normal_mass(self) -> sp.csr_matrix:
        """(C1v x C1) matrix of ∫ c n·ψ ds with the piecewise-constant edge normal."""
        def kernel(u, v, q):
            return np.einsum("eqj,eqic,ec,eq->eij", u.val, v.val, q.normal, q.dx)
        return assemble(kernel, self.C1, self.C1v, self.degree)

    def grad_w(self, w_coeffs) -> np.ndarray:
        """(nt, 2, 2) Dw of a blocked P1 vector coefficient array."""
        n = self.mesh.n_vertices
        wl = np.stack([w_coeffs[:n], w_coeffs[n:2 * n]], axis=1)[self.mesh.triangles]
        return np.einsum("eac,eaj->ecj", wl, self.p1_grad)

