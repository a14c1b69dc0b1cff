"""Manufactured Stokes solution on the unit square.

Stream function ψ = (x-1)³ sin(πy) gives v = (∂_y ψ, -∂_x ψ); with
p = (1-x) cos(πy) the traction (∇v - pI)n vanishes on x = 1, so that side can
stay do-nothing while the other three carry Dirichlet data.
"""
import numpy as np

from mmshape import flow
from mmshape.fem import Discretization, interpolate, l2_norm
from mmshape.mesh import GAMMA_IN, GAMMA_NS
from meshes import unit_square

PI = np.pi


def velocity(x):
    X, Y = x[..., 0], x[..., 1]
    return np.stack([PI * (X - 1) ** 3 * np.cos(PI * Y), -3 * (X - 1) ** 2 * np.sin(PI * Y)], -1)


def pressure(x):
    return (1 - x[..., 0]) * np.cos(PI * x[..., 1])


def forcing(x):
    """f = -Δv + ∇p."""
    X, Y = x[..., 0], x[..., 1]
    lap1 = 6 * PI * (X - 1) * np.cos(PI * Y) - PI ** 3 * (X - 1) ** 3 * np.cos(PI * Y)
    lap2 = -6 * np.sin(PI * Y) + 3 * PI ** 2 * (X - 1) ** 2 * np.sin(PI * Y)
    return np.stack([-lap1 - np.cos(PI * Y), -lap2 - PI * (1 - X) * np.sin(PI * Y)], -1)


def errors(sizes=(4, 8, 16, 32)):
    ev, ep = [], []
    for n in sizes:
        disc = Discretization(unit_square(n))
        fixed = disc.P2v.vector_dofs(disc.P2v.boundary_dofs(GAMMA_IN, GAMMA_NS))
        g = interpolate(disc.P2v, velocity).coeffs
        v, p = flow.solve_stokes(disc, None, fixed, g[fixed], forcing=forcing)
        ev.append(l2_norm(v, velocity))
        ep.append(l2_norm(p, pressure))
    return np.array(ev), np.array(ep)


def orders(sizes=(4, 8, 16, 32)):
    ev, ep = errors(sizes)
    return np.log2(ev[:-1] / ev[1:]), np.log2(ep[:-1] / ep[1:])
