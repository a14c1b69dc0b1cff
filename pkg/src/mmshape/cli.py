"""Command line entry point.

Exit codes: 0 success, 1 invalid input, 2 continuation aborted, 3 derivative
check above tolerance.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import checks, flow
from .config import ConfigError, RunConfig, parse_config, serialize_config
from .deform import Strategy
from .fem import Discretization
from .io import write_history, write_newton_log, write_vtk
from .kkt import KKTState, KKTSystem
from .mesh import MeshError, TriMesh, load_gmsh, mesh_quality, transform_jacobian
from .solver import continuation

EXIT_OK, EXIT_INPUT, EXIT_ABORT, EXIT_CHECK = 0, 1, 2, 3
DERIVATIVE_TOL = 1e-5

log = logging.getLogger("mmshape")


def build_system(cfg: RunConfig) -> KKTSystem:
    mesh = load_gmsh(cfg.mesh_path, cfg.tag_ids())
    disc = Discretization(mesh, cfg.quadrature_degree)
    return KKTSystem(disc, Strategy(cfg.strategy, cfg.n_ext), gamma=cfg.gamma, eta=cfg.eta,
                     profile=flow.InflowProfile(cfg.inflow_delta, cfg.inflow_profile))


def vertex_vector(space_coeffs: np.ndarray, n_scalar: int, nv: int) -> np.ndarray:
    """(nv, 2) vertex values of a blocked vector field (P2 midpoints dropped)."""
    return np.column_stack([space_coeffs[:nv], space_coeffs[n_scalar:n_scalar + nv]])


def state_vtk(system: KKTSystem, state: KKTState, path) -> list[Path]:
    disc = system.disc
    mesh = disc.mesh
    nv = mesh.n_vertices
    w = vertex_vector(state.w, nv, nv)
    v = vertex_vector(state.v, disc.P2v.n_scalar, nv)
    point = {"w": w, "v": v, "speed": np.linalg.norm(v, axis=1), "p": state.block("p")}
    cell = {"Jtau": transform_jacobian(mesh, state.w)}
    return write_vtk(mesh, path, point, cell, displacement=w)


def cmd_optimize(args) -> int:
    cfg = parse_config(args.config)
    out = Path(args.output or cfg.output_dir)
    system = build_system(cfg)
    t0 = time.perf_counter()
    result = continuation(system, cfg.alpha_init, cfg.alpha_target, cfg.alpha_dec, cfg.eps_ssn,
                          cfg.n_ssn, cfg.max_backtracks)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(serialize_config(cfg))
    write_history(result, out / "history.csv")
    write_newton_log(result, out / "newton_log.csv")
    if result.entries:
        state_vtk(system, result.final_state, out / "state.vtk")
    for e in result.entries:
        print(f"alpha={e.alpha:.4e} newton={e.report.iterations:2d} objective={e.objective:.10g} "
              f"dissipation={e.dissipation:.10g} min_Jtau={e.min_jacobian:.4f}")
    print(f"wrote {out} in {time.perf_counter() - t0:.1f} s")
    if result.aborted:
        print(result.message, file=sys.stderr)
        return EXIT_ABORT
    return EXIT_OK


def cmd_check_derivatives(args) -> int:
    cfg = parse_config(args.config)
    system = build_system(cfg)
    state = checks.reference_state(system)
    res = checks.jacobian_check(system, state, cfg.alpha_init, n_dirs=args.directions, h=args.step)
    print(f"directions          {len(res.errors)}")
    print(f"step                {res.step:g}")
    print(f"min J_tau           {res.min_jacobian:.6f}")
    print(f"uniform penalty     {res.uniform_sign}")
    print(f"max relative error  {res.max_error:.3e}")
    return EXIT_OK if res.max_error <= DERIVATIVE_TOL and res.uniform_sign else EXIT_CHECK


def cmd_solve_state(args) -> int:
    cfg = parse_config(args.config)
    system = build_system(cfg)
    disc = system.disc
    v, p = flow.solve_state(disc, None, g_in=system.g_in)
    print(f"dissipation {flow.dissipation(disc, None, v):.15g}")
    if args.output:
        st = system.zero_state()
        st.x[system.layout.slice("v")] = v.coeffs
        st.x[system.layout.slice("p")] = p.coeffs
        state_vtk(system, st, Path(args.output) / "state.vtk")
    return EXIT_OK


def cmd_mesh_info(args) -> int:
    mesh: TriMesh = load_gmsh(args.mesh)
    print(f"vertices         {mesh.n_vertices}")
    print(f"triangles        {mesh.n_triangles}")
    print(f"design edges     {len(mesh.design_loop)}")
    print(mesh_quality(mesh))
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmshape", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log Newton iterations")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("optimize", help="run the α-continuation")
    p.add_argument("config")
    p.add_argument("-o", "--output", help="output directory (overrides the config)")
    p.set_defaults(func=cmd_optimize)
    p = sub.add_parser("check-derivatives", help="finite-difference check of the KKT Jacobian")
    p.add_argument("config")
    p.add_argument("--directions", type=int, default=20)
    p.add_argument("--step", type=float, default=1e-6)
    p.set_defaults(func=cmd_check_derivatives)
    p = sub.add_parser("solve-state", help="Stokes solve on the undeformed mesh")
    p.add_argument("config")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_solve_state)
    p = sub.add_parser("mesh-info", help="mesh statistics and quality")
    p.add_argument("mesh")
    p.set_defaults(func=cmd_mesh_info)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.getLogger("numba").setLevel(logging.WARNING)
    try:
        return args.func(args)
    except (ConfigError, MeshError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
