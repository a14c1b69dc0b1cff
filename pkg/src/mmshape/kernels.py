"""Pointwise derivatives of the transformed Stokes Lagrangian density and
their contraction to element vectors and matrices.

At a quadrature point the volume part of the Lagrangian depends on 14 local
quantities, ordered as

    z = (Dw[0,0], Dw[0,1], Dw[1,0], Dw[1,1],      0..3
         Dv (same order),                          4..7
         Dψ_v (same order),                        8..11
         p, ψ_p)                                   12, 13

With F = I + Dw, J = det F and B = adj F = J F^{-1} (affine in Dw in 2D),
M = Dv B and N = Dψ_v B, the density reads

    ℓ = (½ M:M − M:N) / J + p tr N − ψ_p tr M + (γ/2) ((η − J)_+)²

which equals the integrand of the Lagrangian written with (Dτ)^{-1} and J_τ.
Gradient and Hessian in z are derived by hand from

    dM = H_v B + V adj(H_w),   d²M = H_v adj(H_w') + H_v' adj(H_w)
    dJ = tr(B H_w),            d²J = tr(adj(H_w) H_w')

and the quotient rule; the penalty uses the generalized second derivative
γ χ dJ dJ' − γ (η − J)_+ d²J with χ = 1 iff η − J > 0.

Element local dofs (36) are w (6), v (12), ψ_v (12), p (3), ψ_p (3), each
vector block component-major.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

N_POINT = 14
N_LOCAL = 36

# adj(E_k) for the unit matrices E_k, k = 2 i + j
ADJ = np.array([
    [[0.0, 0.0], [0.0, 1.0]],
    [[0.0, -1.0], [0.0, 0.0]],
    [[0.0, 0.0], [-1.0, 0.0]],
    [[1.0, 0.0], [0.0, 0.0]],
])
# TADJ[k, 2 i + j] = adj(E_k)[j, i] = tr(adj(E_k) E_{ij}) = d²J[k, l]
TADJ = np.array([ADJ[k].T.ravel() for k in range(4)])
UNIT = np.eye(4).reshape(4, 2, 2)


# ---------------------------------------------------------------------------
# numpy implementation, vectorized over points
# ---------------------------------------------------------------------------

def density_numpy(z, gamma, eta, order=2):
    """Value, gradient (np, 14) and Hessian (np, 14, 14) at ``z`` (np, 14).

    Also returns J per point.  ``order`` < 2 skips the Hessian (returned as None).
    """
    z = np.asarray(z, dtype=float)
    npt = len(z)
    W = z[:, 0:4].reshape(-1, 2, 2)
    V = z[:, 4:8].reshape(-1, 2, 2)
    P = z[:, 8:12].reshape(-1, 2, 2)
    pp, qq = z[:, 12], z[:, 13]

    F = W + np.eye(2)
    J = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    B = np.empty_like(F)
    B[:, 0, 0], B[:, 0, 1] = F[:, 1, 1], -F[:, 0, 1]
    B[:, 1, 0], B[:, 1, 1] = -F[:, 1, 0], F[:, 0, 0]
    M = V @ B
    N = P @ B
    MN = M - N
    s = 0.5 * np.einsum("pij,pij->p", M, M) - np.einsum("pij,pij->p", M, N)
    trM = M[:, 0, 0] + M[:, 1, 1]
    trN = N[:, 0, 0] + N[:, 1, 1]
    r = np.maximum(eta - J, 0.0)
    chi = (eta - J > 0).astype(float)

    dM = np.zeros((npt, N_POINT, 2, 2))
    dN = np.zeros((npt, N_POINT, 2, 2))
    dM[:, 0:4] = np.einsum("pij,kjl->pkil", V, ADJ)
    dN[:, 0:4] = np.einsum("pij,kjl->pkil", P, ADJ)
    EB = np.einsum("kij,pjl->pkil", UNIT, B)
    dM[:, 4:8] = EB
    dN[:, 8:12] = EB
    dJ = np.zeros((npt, N_POINT))
    dJ[:, 0:4] = B.transpose(0, 2, 1).reshape(-1, 4)
    trdM = dM[:, :, 0, 0] + dM[:, :, 1, 1]
    trdN = dN[:, :, 0, 0] + dN[:, :, 1, 1]
    ds = np.einsum("pij,pkij->pk", MN, dM) - np.einsum("pij,pkij->pk", M, dN)

    J2 = J * J
    val = s / J + pp * trN - qq * trM + 0.5 * gamma * r * r
    grad = ds / J[:, None] - (s / J2)[:, None] * dJ + pp[:, None] * trdN - qq[:, None] * trdM \
        - (gamma * r)[:, None] * dJ
    grad[:, 12] += trN
    grad[:, 13] -= trM
    if order < 2:
        return val, grad, None, J

    dMf = dM.reshape(npt, N_POINT, 4)
    dNf = dN.reshape(npt, N_POINT, 4)
    d2s = dMf @ dMf.transpose(0, 2, 1) - dNf @ dMf.transpose(0, 2, 1) - dMf @ dNf.transpose(0, 2, 1)
    # (M - N) : (E_ij adj(E_k)) = ((M - N) adj(E_k)^T)[i, j]
    cross_v = np.einsum("pib,kjb->pkij", MN, ADJ).reshape(npt, 4, 4)
    cross_p = np.einsum("pib,kjb->pkij", M, ADJ).reshape(npt, 4, 4)
    d2s[:, 0:4, 4:8] += cross_v
    d2s[:, 4:8, 0:4] += cross_v.transpose(0, 2, 1)
    d2s[:, 0:4, 8:12] -= cross_p
    d2s[:, 8:12, 0:4] -= cross_p.transpose(0, 2, 1)
    d2J = np.zeros((N_POINT, N_POINT))
    d2J[0:4, 0:4] = TADJ

    hess = d2s / J[:, None, None]
    outer_sJ = ds[:, :, None] * dJ[:, None, :]
    hess -= (outer_sJ + outer_sJ.transpose(0, 2, 1)) / J2[:, None, None]
    hess -= (s / J2)[:, None, None] * d2J
    hess += (2 * s / (J2 * J))[:, None, None] * dJ[:, :, None] * dJ[:, None, :]
    hess[:, 12, :] += trdN
    hess[:, :, 12] += trdN
    hess[:, 13, :] -= trdM
    hess[:, :, 13] -= trdM
    hess[:, 0:4, 8:12] += pp[:, None, None] * TADJ
    hess[:, 8:12, 0:4] += pp[:, None, None] * TADJ.T
    hess[:, 0:4, 4:8] -= qq[:, None, None] * TADJ
    hess[:, 4:8, 0:4] -= qq[:, None, None] * TADJ.T
    hess += (gamma * chi)[:, None, None] * dJ[:, :, None] * dJ[:, None, :]
    hess -= (gamma * r)[:, None, None] * d2J
    return val, grad, hess, J


def point_map_numpy(p1_grad, p2_grad, p1_val):
    """Φ (ne, nq, 14, 36): local dofs -> pointwise quantities."""
    ne, nq = p2_grad.shape[:2]
    phi = np.zeros((ne, nq, N_POINT, N_LOCAL))
    for i in range(2):
        for j in range(2):
            phi[:, :, 2 * i + j, 3 * i:3 * i + 3] = p1_grad[:, None, :, j]
            phi[:, :, 4 + 2 * i + j, 6 + 6 * i:12 + 6 * i] = p2_grad[:, :, :, j]
            phi[:, :, 8 + 2 * i + j, 18 + 6 * i:24 + 6 * i] = p2_grad[:, :, :, j]
    phi[:, :, 12, 30:33] = p1_val[None]
    phi[:, :, 13, 33:36] = p1_val[None]
    return phi


def element_terms_numpy(p1_grad, p2_grad, p1_val, dx, local, gamma, eta, order=2):
    """Element values (ne,), gradients (ne, 36), Hessians (ne, 36, 36), J (ne, nq)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        return _element_terms_numpy(p1_grad, p2_grad, p1_val, dx, local, gamma, eta, order)


def _element_terms_numpy(p1_grad, p2_grad, p1_val, dx, local, gamma, eta, order):
    ne, nq = dx.shape
    phi = point_map_numpy(p1_grad, p2_grad, p1_val)
    z = np.einsum("eqka,ea->eqk", phi, local).reshape(-1, N_POINT)
    val, grad, hess, J = density_numpy(z, gamma, eta, order)
    w = dx.reshape(-1)
    e_val = (val * w).reshape(ne, nq).sum(axis=1)
    e_grad = np.einsum("eqka,eqk->ea", phi, (grad * w[:, None]).reshape(ne, nq, N_POINT))
    e_hess = None
    if order >= 2:
        hw = (hess * w[:, None, None]).reshape(ne, nq, N_POINT, N_POINT)
        t = (hw @ phi).reshape(ne, nq * N_POINT, N_LOCAL)
        e_hess = phi.reshape(ne, nq * N_POINT, N_LOCAL).transpose(0, 2, 1) @ t
    return e_val, e_grad, e_hess, J.reshape(ne, nq)


# ---------------------------------------------------------------------------
# numba implementation, one point at a time
# ---------------------------------------------------------------------------

@njit
def _density_point(z, gamma, eta, order, grad, hess, dM, dN, dJ, trdM, trdN, ds, tadj):
    F00 = 1.0 + z[0]
    F01 = z[1]
    F10 = z[2]
    F11 = 1.0 + z[3]
    J = F00 * F11 - F01 * F10
    B0, B1, B2, B3 = F11, -F01, -F10, F00
    V0, V1, V2, V3 = z[4], z[5], z[6], z[7]
    P0, P1, P2, P3 = z[8], z[9], z[10], z[11]
    pp = z[12]
    qq = z[13]
    M0 = V0 * B0 + V1 * B2
    M1 = V0 * B1 + V1 * B3
    M2 = V2 * B0 + V3 * B2
    M3 = V2 * B1 + V3 * B3
    N0 = P0 * B0 + P1 * B2
    N1 = P0 * B1 + P1 * B3
    N2 = P2 * B0 + P3 * B2
    N3 = P2 * B1 + P3 * B3
    s = 0.5 * (M0 * M0 + M1 * M1 + M2 * M2 + M3 * M3) - (M0 * N0 + M1 * N1 + M2 * N2 + M3 * N3)
    trM = M0 + M3
    trN = N0 + N3
    r = eta - J
    chi = 1.0 if r > 0.0 else 0.0
    if r < 0.0:
        r = 0.0

    for k in range(14):
        dJ[k] = 0.0
        for c in range(4):
            dM[k, c] = 0.0
            dN[k, c] = 0.0
    # Dw directions: V adj(E_k), P adj(E_k); adj(E_k) entries are in tadj
    # adj(E_0) = [[0,0],[0,1]], adj(E_1) = [[0,-1],[0,0]],
    # adj(E_2) = [[0,0],[-1,0]], adj(E_3) = [[1,0],[0,0]]
    dM[0, 1] = V1
    dM[0, 3] = V3
    dM[1, 1] = -V0
    dM[1, 3] = -V2
    dM[2, 0] = -V1
    dM[2, 2] = -V3
    dM[3, 0] = V0
    dM[3, 2] = V2
    dN[0, 1] = P1
    dN[0, 3] = P3
    dN[1, 1] = -P0
    dN[1, 3] = -P2
    dN[2, 0] = -P1
    dN[2, 2] = -P3
    dN[3, 0] = P0
    dN[3, 2] = P2
    # E_ij B: row i equals row j of B
    for i in range(2):
        for j in range(2):
            k = 2 * i + j
            bj0 = B0 if j == 0 else B2
            bj1 = B1 if j == 0 else B3
            dM[4 + k, 2 * i] = bj0
            dM[4 + k, 2 * i + 1] = bj1
            dN[8 + k, 2 * i] = bj0
            dN[8 + k, 2 * i + 1] = bj1
    dJ[0] = B0
    dJ[1] = B2
    dJ[2] = B1
    dJ[3] = B3

    for k in range(14):
        trdM[k] = dM[k, 0] + dM[k, 3]
        trdN[k] = dN[k, 0] + dN[k, 3]
        ds[k] = ((M0 - N0) * dM[k, 0] + (M1 - N1) * dM[k, 1] + (M2 - N2) * dM[k, 2]
                 + (M3 - N3) * dM[k, 3]) - (M0 * dN[k, 0] + M1 * dN[k, 1] + M2 * dN[k, 2]
                                            + M3 * dN[k, 3])
    iJ = 1.0 / J
    iJ2 = iJ * iJ
    val = s * iJ + pp * trN - qq * trM + 0.5 * gamma * r * r
    for k in range(14):
        grad[k] = ds[k] * iJ - s * iJ2 * dJ[k] + pp * trdN[k] - qq * trdM[k] - gamma * r * dJ[k]
    grad[12] += trN
    grad[13] -= trM
    if order < 2:
        return val, J

    MN0, MN1, MN2, MN3 = M0 - N0, M1 - N1, M2 - N2, M3 - N3
    for k in range(14):
        for l in range(k, 14):
            d2s = 0.0
            for c in range(4):
                d2s += dM[k, c] * dM[l, c] - dN[k, c] * dM[l, c] - dM[k, c] * dN[l, c]
            d2J = 0.0
            trd2M = 0.0
            trd2N = 0.0
            if k < 4:
                if l < 4:
                    d2J = tadj[k, l]
                elif l < 8:
                    # (M - N) : (E_ij adj(E_k)) = sum_b (M - N)[i, b] adj(E_k)[j, b]
                    i = (l - 4) // 2
                    j = (l - 4) % 2
                    for b in range(2):
                        a_jb = tadj[k, 2 * b + j]
                        if i == 0:
                            d2s += (MN0 if b == 0 else MN1) * a_jb
                        else:
                            d2s += (MN2 if b == 0 else MN3) * a_jb
                    trd2M = tadj[k, l - 4]
                elif l < 12:
                    i = (l - 8) // 2
                    j = (l - 8) % 2
                    for b in range(2):
                        a_jb = tadj[k, 2 * b + j]
                        if i == 0:
                            d2s -= (M0 if b == 0 else M1) * a_jb
                        else:
                            d2s -= (M2 if b == 0 else M3) * a_jb
                    trd2N = tadj[k, l - 8]
            h = d2s * iJ - (ds[k] * dJ[l] + ds[l] * dJ[k]) * iJ2 - s * d2J * iJ2 \
                + 2.0 * s * dJ[k] * dJ[l] * iJ2 * iJ
            h += pp * trd2N - qq * trd2M
            if k == 12:
                h += trdN[l]
            if l == 12:
                h += trdN[k]
            if k == 13:
                h -= trdM[l]
            if l == 13:
                h -= trdM[k]
            h += gamma * chi * dJ[k] * dJ[l] - gamma * r * d2J
            hess[k, l] = h
            hess[l, k] = h
    return val, J


@njit
def _density_many(z, gamma, eta, order, val, grad, hess, J, tadj):
    dM = np.empty((14, 4))
    dN = np.empty((14, 4))
    dJ = np.empty(14)
    trdM = np.empty(14)
    trdN = np.empty(14)
    ds = np.empty(14)
    for p in range(z.shape[0]):
        v, jj = _density_point(z[p], gamma, eta, order, grad[p], hess[p], dM, dN, dJ,
                               trdM, trdN, ds, tadj)
        val[p] = v
        J[p] = jj


def density_numba(z, gamma, eta, order=2):
    z = np.ascontiguousarray(z, dtype=float)
    n = len(z)
    val = np.empty(n)
    grad = np.empty((n, N_POINT))
    hess = np.zeros((n, N_POINT, N_POINT))
    J = np.empty(n)
    _density_many(z, float(gamma), float(eta), int(order), val, grad, hess, J, TADJ)
    return val, grad, (hess if order >= 2 else None), J


@njit
def _element_terms(p1_grad, p2_grad, p1_val, dx, local, gamma, eta, order,
                   e_val, e_grad, e_hess, e_J, tadj):
    ne, nq = dx.shape
    phi = np.zeros((14, 36))
    z = np.empty(14)
    g = np.empty(14)
    h = np.zeros((14, 14))
    t = np.empty((14, 36))
    dM = np.empty((14, 4))
    dN = np.empty((14, 4))
    dJ = np.empty(14)
    trdM = np.empty(14)
    trdN = np.empty(14)
    ds = np.empty(14)
    for e in range(ne):
        for i in range(2):
            for j in range(2):
                for a in range(3):
                    phi[2 * i + j, 3 * i + a] = p1_grad[e, a, j]
        for q in range(nq):
            for i in range(2):
                for j in range(2):
                    for a in range(6):
                        gq = p2_grad[e, q, a, j]
                        phi[4 + 2 * i + j, 6 + 6 * i + a] = gq
                        phi[8 + 2 * i + j, 18 + 6 * i + a] = gq
            for a in range(3):
                phi[12, 30 + a] = p1_val[q, a]
                phi[13, 33 + a] = p1_val[q, a]
            # pointwise quantities; Φ is block sparse, only the filled blocks matter
            for k in range(14):
                acc = 0.0
                for a in range(36):
                    acc += phi[k, a] * local[e, a]
                z[k] = acc
            v, jj = _density_point(z, gamma, eta, order, g, h, dM, dN, dJ, trdM, trdN, ds, tadj)
            wq = dx[e, q]
            e_J[e, q] = jj
            e_val[e] += wq * v
            for a in range(36):
                acc = 0.0
                for k in range(14):
                    acc += phi[k, a] * g[k]
                e_grad[e, a] += wq * acc
            if order >= 2:
                for k in range(14):
                    for b in range(36):
                        acc = 0.0
                        for l in range(14):
                            acc += h[k, l] * phi[l, b]
                        t[k, b] = acc
                for a in range(36):
                    for b in range(36):
                        acc = 0.0
                        for k in range(14):
                            acc += phi[k, a] * t[k, b]
                        e_hess[e, a, b] += wq * acc


def element_terms_numba(p1_grad, p2_grad, p1_val, dx, local, gamma, eta, order=2):
    ne, nq = dx.shape
    e_val = np.zeros(ne)
    e_grad = np.zeros((ne, N_LOCAL))
    e_hess = np.zeros((ne, N_LOCAL, N_LOCAL)) if order >= 2 else np.zeros((1, 1, 1))
    e_J = np.empty((ne, nq))
    _element_terms(np.ascontiguousarray(p1_grad), np.ascontiguousarray(p2_grad),
                   np.ascontiguousarray(p1_val), np.ascontiguousarray(dx),
                   np.ascontiguousarray(local, dtype=float), float(gamma), float(eta),
                   int(order), e_val, e_grad, e_hess, e_J, TADJ)
    return e_val, e_grad, (e_hess if order >= 2 else None), e_J


if USE_NUMBA:
    density = density_numba
    element_terms = element_terms_numba
else:
    density = density_numpy
    element_terms = element_terms_numpy
