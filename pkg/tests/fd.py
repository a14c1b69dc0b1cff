"""Finite-difference oracles for the Lagrangian."""
import math

import numpy as np


def central_difference(system, state, alpha, e, h):
    """(L(x + h e) - L(x - h e)) / 2h, differenced part by part before summing."""
    y = state.flat()
    plus = system.lagrangian_parts(system.state_from_flat(y + h * e), alpha)
    minus = system.lagrangian_parts(system.state_from_flat(y - h * e), alpha)
    return math.fsum(np.concatenate([p - m for p, m in zip(plus, minus)])) / (2 * h)


def local_direction(system, block, vertex):
    """Free-vector direction with unit entries on the dofs of ``block`` at ``vertex``.

    Scalar blocks (λ, μ) get a unit entry in every component.
    """
    lay = system.layout
    blk = lay.blocks[block]
    full = np.zeros(lay.size)
    if blk.space is None:
        full[lay.slice(block)] = 1.0
    else:
        space = blk.space
        point = system.disc.mesh.vertices[vertex]
        k = np.flatnonzero(np.all(np.abs(space.dof_coords - point) < 1e-12, axis=1))
        assert len(k) == 1, (block, vertex)
        for c in range(space.value_dim):
            full[blk.offset + c * space.n_scalar + k[0]] = 1.0 + 0.5 * c
    return full[lay.free]


def observed_orders(system, state, alpha, e, steps=(1e-4, 1e-5, 1e-6)):
    exact = float(system.residual(state, alpha) @ e)
    err = np.array([abs(central_difference(system, state, alpha, e, h) - exact) for h in steps])
    return exact, err, np.log10(err[:-1] / err[1:]) / np.log10(np.array(steps[:-1]) / np.array(steps[1:]))
