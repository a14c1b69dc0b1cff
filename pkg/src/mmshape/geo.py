"""Volume and barycenter of the mapped obstacle as integrals over the reference Γ_d.

With m = J (Dτ)^{-T} n = Bᵀ n, B = adj(I + Dw), the constraint integrands are

    g_vol = (x + w)·m - x·n
    g_i   = (x_i + w_i)² m_i

For P1 displacements m is constant on every design edge and the integrands
are polynomials in arc length, so edge Gauss rules integrate them exactly.
``volume_residual`` equals d·(vol τ(Ω_d) - vol Ω_d); the Lagrangian pairs it
with λ/d.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import Discretization, _barycentric
from .quadrature import line_rule

DIM = 2
N_GEO_LOCAL = 9  # six w dofs of the adjacent triangle, λ, μ₀, μ₁


@dataclass(frozen=True)
class GeoResiduals:
    volume_defect: float
    barycenter_defect: np.ndarray


class EdgeData:
    """Per-Γ_d-edge quadrature data tied to the adjacent triangle's P1 basis."""

    def __init__(self, disc: Discretization):
        mesh = disc.mesh
        s, wts = line_rule(disc.degree)
        self.tri = mesh.design_edge_triangles
        self.normal = mesh.design_edge_normals
        self.dofs = disc.P1v.element_dofs()[self.tri]                      # (m, 6)
        p = mesh.vertices[mesh.design_edges]
        self.x = p[:, None, 0] + s[None, :, None] * (p[:, None, 1] - p[:, None, 0])  # (m, nq, 2)
        self.ds = mesh.design_edge_lengths[:, None] * wts[None, :]
        # P1 basis of the adjacent triangle at the edge points
        tv = mesh.vertices[mesh.triangles[self.tri]]                        # (m, 3, 2)
        jac = np.stack([tv[:, 1] - tv[:, 0], tv[:, 2] - tv[:, 0]], axis=2)
        ref = np.linalg.solve(jac[:, None], (self.x - tv[:, None, 0])[..., None])[..., 0]
        self.phi = _barycentric(ref.reshape(-1, 2)).reshape(len(self.tri), len(s), 3)
        self.grad = disc.p1_grad[self.tri]                                  # (m, 3, 2)
        n0, n1 = self.normal[:, 0], self.normal[:, 1]
        zero = np.zeros_like(n0)
        # m = n + Q W with W = (W00, W01, W10, W11)
        self.Q = np.stack([np.stack([zero, zero, -n1, n0], 1),
                           np.stack([n1, -n0, zero, zero], 1)], 1)          # (m, 2, 4)
        # pointwise map local w dofs (c*3 + a) -> (u0, u1, W00, W01, W10, W11)
        m, nq = self.phi.shape[:2]
        pm = np.zeros((m, nq, 6, 6))
        for c in range(2):
            pm[:, :, c, 3 * c:3 * c + 3] = self.phi
            for j in range(2):
                pm[:, :, 2 + 2 * c + j, 3 * c:3 * c + 3] = self.grad[:, None, :, j]
        self.point_map = pm


def _local_w(data: EdgeData, w) -> np.ndarray:
    coeffs = np.asarray(getattr(w, "coeffs", w), dtype=float)
    return coeffs[data.dofs]


def constraint_terms(data: EdgeData, w, order: int = 0):
    """Edge integrals and their derivatives in the local w dofs.

    Returns ``g`` (m, 3) with columns (g_vol, g_0, g_1); for ``order`` ≥ 1 also
    ``dg`` (m, 3, 6); for ``order`` ≥ 2 also ``d2g`` (m, 3, 6, 6).
    """
    pm = data.point_map
    y = np.einsum("eqka,ea->eqk", pm, _local_w(data, w))
    u, W = y[..., :2], y[..., 2:]
    Q, n, x = data.Q, data.normal, data.x
    mvec = n[:, None, :] + np.einsum("eik,eqk->eqi", Q, W)
    xu = x + u
    ds = data.ds
    g = np.empty((len(ds), 3))
    g[:, 0] = np.sum((np.sum(xu * mvec, -1) - np.sum(x * n[:, None], -1)) * ds, 1)
    g[:, 1:] = np.einsum("eqi,eq->ei", xu * xu * mvec, ds)
    if order < 1:
        return (g,)
    npnt = y.shape[:2]
    dy = np.zeros(npnt + (3, 6))
    dy[..., 0, :2] = mvec
    dy[..., 0, 2:] = np.einsum("eik,eqi->eqk", Q, xu)
    for i in range(2):
        dy[..., 1 + i, i] = 2 * xu[..., i] * mvec[..., i]
        dy[..., 1 + i, 2:] = (xu[..., i] ** 2)[..., None] * Q[:, None, i, :]
    dg = np.einsum("eqrk,eqka,eq->era", dy, pm, ds)
    if order < 2:
        return g, dg
    d2y = np.zeros(npnt + (3, 6, 6))
    Qb = np.broadcast_to(Q[:, None], npnt + (2, 4))
    d2y[..., 0, :2, 2:] = Qb
    d2y[..., 0, 2:, :2] = np.swapaxes(Qb, -1, -2)
    for i in range(2):
        d2y[..., 1 + i, i, i] = 2 * mvec[..., i]
        cross = 2 * xu[..., i, None] * Qb[..., i, :]
        d2y[..., 1 + i, i, 2:] = cross
        d2y[..., 1 + i, 2:, i] = cross
    d2g = np.einsum("eqkb,eqrkl,eqla,eq->erba", pm, d2y, pm, ds)
    return g, dg, d2g


def _edge_data(disc: Discretization) -> EdgeData:
    data = disc.__dict__.get("_edge_data")
    if data is None:
        data = disc.__dict__["_edge_data"] = EdgeData(disc)
    return data


def volume_residual(disc: Discretization, w) -> float:
    """∫_Γd (x + w)ᵀ Bᵀ n - x·n ds = d (vol τ(Ω_d) - vol Ω_d)."""
    return float(constraint_terms(_edge_data(disc), w)[0][:, 0].sum())


def barycenter_residual(disc: Discretization, w) -> np.ndarray:
    """(∫_Γd (x_i + w_i)² (Bᵀ n)_i ds)_i, the unnormalized first moments."""
    return constraint_terms(_edge_data(disc), w)[0][:, 1:].sum(axis=0)


def geo_residuals(disc: Discretization, w) -> GeoResiduals:
    g = constraint_terms(_edge_data(disc), w)[0].sum(axis=0)
    return GeoResiduals(volume_defect=float(g[0]), barycenter_defect=g[1:].copy())


def obstacle_volume(disc: Discretization) -> float:
    """Reference obstacle area (1/d)∮ x·n ds."""
    data = _edge_data(disc)
    return float(np.sum(np.sum(data.x * data.normal[:, None], -1) * data.ds) / DIM)


def lagrangian_terms(disc: Discretization, w, lam: float, mu, order: int = 2):
    """λ/d g_vol + μ·g and its local derivatives.

    Local variables per design edge are the adjacent triangle's six w dofs
    followed by λ, μ₀, μ₁.  Returns (value, grad (m, 9), hess (m, 9, 9),
    dofs (m, 6)).  The w-derivative of (x + w) is taken by the product rule,
    i.e. it contributes h_wᵀ Bᵀ n.
    """
    data = _edge_data(disc)
    out = constraint_terms(data, w, order)
    g = out[0]
    coef = np.array([lam / DIM, mu[0], mu[1]])
    value = float(g.sum(axis=0) @ coef)
    if order < 1:
        return value, None, None, data.dofs
    dg = out[1]
    m = len(g)
    grad = np.zeros((m, N_GEO_LOCAL))
    grad[:, :6] = np.einsum("r,era->ea", coef, dg)
    grad[:, 6] = g[:, 0] / DIM
    grad[:, 7:] = g[:, 1:]
    if order < 2:
        return value, grad, None, data.dofs
    hess = np.zeros((m, N_GEO_LOCAL, N_GEO_LOCAL))
    hess[:, :6, :6] = np.einsum("r,erab->eab", coef, out[2])
    hess[:, :6, 6] = dg[:, 0] / DIM
    hess[:, :6, 7:] = np.swapaxes(dg[:, 1:], 1, 2)
    hess[:, 6:, :6] = np.swapaxes(hess[:, :6, 6:], 1, 2)
    return value, grad, hess, data.dofs
