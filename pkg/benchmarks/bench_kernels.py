"""Time the element kernels with and without numba.

    python3 benchmarks/bench_kernels.py [--repeat N]

Runs the numba and numpy implementations of ``element_terms`` on the state of
a derivative check on the packaged coarse mesh, verifies they agree and prints
the best wall time of each.
"""
import argparse
import time

import numpy as np

from mmshape import checks, kernels
from mmshape._accel import HAVE_NUMBA
from mmshape.config import default_mesh_path
from mmshape.fem import Discretization
from mmshape.kkt import KKTSystem
from mmshape.mesh import load_gmsh


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    disc = Discretization(load_gmsh(default_mesh_path()))
    system = KKTSystem(disc, "S3")
    state = checks.reference_state(system)
    local = state.x[system.volume_dofs]
    inputs = (disc.p1_grad, disc.p2_grad, disc.p1_val, disc.vq.dx, local, system.gamma, system.eta)
    print(f"{disc.mesh.n_triangles} triangles, {disc.vq.dx.shape[1]} quadrature points each")
    impls = {"numpy": kernels.element_terms_numpy}
    if HAVE_NUMBA:
        impls["numba"] = kernels.element_terms_numba
        kernels.element_terms_numba(*inputs, order=2)  # compile
    results = {}
    for order in (1, 2):
        for name, fn in impls.items():
            t, out = best_time(lambda: fn(*inputs, order=order), args.repeat)
            results[name, order] = out
            print(f"order {order}  {name:6s} {1e3 * t:9.2f} ms")
    if HAVE_NUMBA:
        a, b = results["numpy", 2], results["numba", 2]
        dev = max(np.abs(a[k] - b[k]).max() / max(np.abs(a[k]).max(), 1.0) for k in range(3))
        print(f"max relative deviation numba vs numpy: {dev:.2e}")


if __name__ == "__main__":
    main()
