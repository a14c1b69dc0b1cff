import numpy as np
import pytest

from mmshape import geo
from mmshape.fem import Discretization
from mmshape.mesh import TriMesh, polygon_area, transform_jacobian
from meshes import annulus
from shapes import moved_loop, polygon_moments, smooth_random_field


def test_zero_displacement_has_zero_defects(coarse_disc):
    w = np.zeros(coarse_disc.P1v.n_dofs)
    assert abs(geo.volume_residual(coarse_disc, w)) <= 1e-14
    r = geo.geo_residuals(coarse_disc, w)
    assert np.allclose(r.barycenter_defect, 2 * polygon_moments(moved_loop(coarse_disc.mesh, w)), atol=1e-14)


def test_obstacle_volume_is_polygon_area(coarse_disc):
    mesh = coarse_disc.mesh
    assert geo.obstacle_volume(coarse_disc) == pytest.approx(polygon_area(mesh.vertices[mesh.design_loop]), rel=1e-13)


def test_uniform_scaling():
    disc = Discretization(annulus(48, 4))
    x = disc.mesh.vertices
    s = 0.2
    w = s * np.concatenate([x[:, 0], x[:, 1]])
    vol = geo.obstacle_volume(disc)
    assert geo.volume_residual(disc, w) == pytest.approx(2 * ((1 + s) ** 2 - 1) * vol, rel=1e-12)


def test_translation_moves_barycenter():
    disc = Discretization(annulus(48, 4))
    nv = disc.mesh.n_vertices
    t = np.array([0.1, -0.05])
    w = np.concatenate([np.full(nv, t[0]), np.full(nv, t[1])])
    vol = geo.obstacle_volume(disc)
    assert abs(geo.volume_residual(disc, w)) <= 1e-13
    assert np.allclose(geo.barycenter_residual(disc, w), 2 * vol * t, atol=1e-13)


def test_random_deformations_match_shoelace(coarse_disc):
    mesh = coarse_disc.mesh
    rng = np.random.default_rng(20261019)
    a0 = polygon_area(mesh.vertices[mesh.design_loop])
    checked = 0
    while checked < 50:
        w = smooth_random_field(mesh, rng, 0.15)
        if transform_jacobian(mesh, w).min() <= 0.5:
            continue
        P = moved_loop(mesh, w)
        assert geo.volume_residual(coarse_disc, w) == pytest.approx(2 * (polygon_area(P) - a0), abs=1e-10)
        assert np.allclose(geo.barycenter_residual(coarse_disc, w), 2 * polygon_moments(P), atol=1e-10)
        checked += 1


def test_vertex_reindexing_invariance(coarse_disc):
    mesh = coarse_disc.mesh
    rng = np.random.default_rng(3)
    w = smooth_random_field(mesh, rng, 0.1)
    perm = rng.permutation(mesh.n_vertices)       # new index -> old index
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    shuffled = TriMesh.from_arrays(mesh.vertices[perm], inv[mesh.triangles], inv[mesh.boundary_edges],
                                   mesh.boundary_tags)
    nv = mesh.n_vertices
    w2 = np.concatenate([w[:nv][perm], w[nv:][perm]])
    d2 = Discretization(shuffled)
    assert geo.volume_residual(d2, w2) == pytest.approx(geo.volume_residual(coarse_disc, w), abs=1e-13)
    assert np.allclose(geo.barycenter_residual(d2, w2), geo.barycenter_residual(coarse_disc, w), atol=1e-13)


@pytest.mark.parametrize("order", [1, 2])
def test_lagrangian_terms_derivatives(coarse_disc, order):
    rng = np.random.default_rng(11)
    mesh = coarse_disc.mesh
    w = smooth_random_field(mesh, rng, 0.05)
    lam, mu = 0.7, np.array([-0.3, 0.4])
    _, grad, hess, dofs = geo.lagrangian_terms(coarse_disc, w, lam, mu, order=2)
    h = 1e-6
    for trial in range(5):
        dw = smooth_random_field(mesh, rng, 1.0)
        dl, dm = rng.normal(), rng.normal(size=2)
        if order == 1:
            fp = geo.lagrangian_terms(coarse_disc, w + h * dw, lam + h * dl, mu + h * dm, order=0)[0]
            fm = geo.lagrangian_terms(coarse_disc, w - h * dw, lam - h * dl, mu - h * dm, order=0)[0]
            loc = np.concatenate([dw[dofs], np.tile([dl, *dm], (len(dofs), 1))], axis=1)
            exact = float(np.sum(grad * loc))
            assert (fp - fm) / (2 * h) == pytest.approx(exact, rel=1e-7, abs=1e-10)
        else:
            gp = geo.lagrangian_terms(coarse_disc, w + h * dw, lam + h * dl, mu + h * dm, order=1)[1]
            gm = geo.lagrangian_terms(coarse_disc, w - h * dw, lam - h * dl, mu - h * dm, order=1)[1]
            loc = np.concatenate([dw[dofs], np.tile([dl, *dm], (len(dofs), 1))], axis=1)
            exact = np.einsum("eab,eb->ea", hess, loc)
            assert np.allclose((gp - gm) / (2 * h), exact, rtol=1e-6, atol=1e-8)
