import os
import subprocess
import sys

import numpy as np
import pytest

from mmshape import kernels
from mmshape._accel import HAVE_NUMBA


def sample_points(n, seed=0, eta=0.8):
    rng = np.random.default_rng(seed)
    z = rng.normal(scale=0.3, size=(n, kernels.N_POINT))
    z[:, :4] *= 0.5
    return z


def element_inputs(ne=7, nq=6, seed=1):
    rng = np.random.default_rng(seed)
    p1_grad = rng.normal(size=(ne, 3, 2))
    p2_grad = rng.normal(size=(ne, nq, 6, 2))
    p1_val = rng.uniform(size=(nq, 3))
    dx = rng.uniform(0.1, 0.2, size=(ne, nq))
    local = rng.normal(scale=0.1, size=(ne, kernels.N_LOCAL))
    return p1_grad, p2_grad, p1_val, dx, local


def test_density_gradient_and_hessian_by_differences():
    z = sample_points(40)
    gamma, eta = 10.0, 0.9   # penalty active at some points only
    val, grad, hess, J = kernels.density_numpy(z, gamma, eta)
    assert np.any(J < eta) and np.any(J > eta)
    h = 1e-6
    for k in range(kernels.N_POINT):
        e = np.zeros(kernels.N_POINT)
        e[k] = h
        vp, gp, _, Jp = kernels.density_numpy(z + e, gamma, eta, order=1)
        vm, gm, _, Jm = kernels.density_numpy(z - e, gamma, eta, order=1)
        keep = (np.sign(eta - Jp) == np.sign(eta - J)) & (np.sign(eta - Jm) == np.sign(eta - J))
        assert np.allclose(((vp - vm) / (2 * h))[keep], grad[keep, k], rtol=1e-7, atol=1e-8)
        assert np.allclose(((gp - gm) / (2 * h))[keep], hess[keep, :, k], rtol=1e-6, atol=1e-7)


def test_hessian_is_symmetric():
    _, _, hess, _ = kernels.density_numpy(sample_points(20), 1e3, 0.8)
    assert np.abs(hess - hess.transpose(0, 2, 1)).max() <= 1e-12


def test_density_value_at_identity():
    z = np.zeros((1, kernels.N_POINT))
    z[0, 4] = 2.0      # Dv = [[2, 0], [0, 0]], F = I
    z[0, 12] = 3.0     # p
    z[0, 8] = 1.0      # Dψ_v[0,0]
    val, _, _, J = kernels.density_numpy(z, 100.0, 0.5, order=0)
    # ½|M|² - M:N + p tr N = 2 - 2 + 3
    assert J[0] == 1.0 and val[0] == pytest.approx(3.0, abs=1e-15)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
def test_numba_matches_numpy_pointwise():
    z = sample_points(30, seed=5)
    a = kernels.density_numpy(z, 1e3, 0.9)
    b = kernels.density_numba(z, 1e3, 0.9)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-12)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("order", [0, 1, 2])
def test_numba_matches_numpy_elementwise(order):
    args = element_inputs()
    a = kernels.element_terms_numpy(*args, 1e3, 0.9, order=order)
    b = kernels.element_terms_numba(*args, 1e3, 0.9, order=order)
    for k, (x, y) in enumerate(zip(a, b)):
        if order < 1 and k == 1 or order < 2 and k == 2:
            continue
        assert np.allclose(x, y, rtol=1e-12, atol=1e-12)


def test_singular_map_gives_nonfinite_values():
    args = list(element_inputs(ne=1, nq=1))
    z_local = np.zeros((1, kernels.N_LOCAL))
    p1_grad = np.array([[[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]])
    z_local[0, 0:3] = [0.0, -1.0, 0.0]    # Dw[0,0] = -1 -> J = 0
    args[0], args[4] = p1_grad, z_local
    val, grad, _, J = kernels.element_terms(*args, 1e3, 0.5, order=1)
    assert J[0, 0] == 0.0
    assert not np.all(np.isfinite(grad))


def test_disable_flag_selects_numpy():
    code = "import mmshape.kernels as k; print(k.element_terms is k.element_terms_numpy)"
    env = dict(os.environ, MMSHAPE_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "True"
