"""Command line front end: ``mrcfie {mesh,assemble,solve,cond,experiment,rcs}``.

Heavy modules are imported inside the handlers so that ``MRCFIE_THREADS``
can set the BLAS/numba thread counts before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

THREADS_ENV = "MRCFIE_THREADS"
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS")


def apply_thread_env(environ=os.environ) -> str | None:
    """Copy ``MRCFIE_THREADS`` into the thread variables not already set."""
    n = environ.get(THREADS_ENV)
    if not n:
        return None
    if not n.isdigit() or int(n) < 1:
        raise SystemExit(f"{THREADS_ENV} must be a positive integer, got {n!r}")
    for var in _THREAD_VARS:
        environ.setdefault(var, n)
    return n


# ---------------------------------------------------------------------------
# shared arguments
# ---------------------------------------------------------------------------

def _mesh_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("mesh")
    g.add_argument("--input", type=Path, help="mesh file (.msh or .off)")
    g.add_argument("--shape", choices=("cube", "sphere", "torus"), default="sphere")
    g.add_argument("--size", type=float, default=0.5, help="cube edge or sphere radius [m]")
    g.add_argument("--h", type=float, help="target edge length [m]")
    g.add_argument("--subdivisions", type=int, default=3,
                   help="icosphere subdivisions when --h is not given")


def _physics_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--frequency", type=float, default=300e6, help="[Hz]")
    p.add_argument("--alpha", type=float, default=0.5, help="CFIE weight")


def _solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--formulation", choices=("EFIE", "MFIE", "CFIE"), default="CFIE")
    p.add_argument("--basis", choices=("RWG", "MR-point", "MR-hier"), default="RWG")
    p.add_argument("--stop-level", type=int, help="MR stop level (default: wavelength/8 rule)")
    p.add_argument("--config", type=Path, help="TOML/JSON file with a [solver] table")
    p.add_argument("--method", help="GMRES or BiCGStab")
    p.add_argument("--tol", type=float)
    p.add_argument("--restart", type=int)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--precond", help="preconditioner for the chosen basis")


def _load_mesh(args):
    from .mesh import generate_primitive, icosphere, torus_grid
    from .mesh_io import load_mesh

    if args.input is not None:
        return load_mesh(args.input)
    if args.shape == "torus":
        n = args.subdivisions
        return torus_grid(args.size, args.size / 3, 6 * n, 3 * n)
    if args.h is not None:
        return generate_primitive(args.shape, args.size, args.h)
    if args.shape == "sphere":
        return icosphere(args.size, args.subdivisions)
    return generate_primitive("cube", args.size, args.size / 2 ** args.subdivisions)


def _settings(args):
    from dataclasses import asdict

    from .harness import SolverSettings
    from .operators import _read_config

    data = {}
    if getattr(args, "config", None) is not None:
        data = dict(_read_config(args.config).get("solver", {}))
    unknown = set(data) - set(asdict(SolverSettings()))
    if unknown:
        raise SystemExit(f"unknown solver keys: {sorted(unknown)}")
    s = SolverSettings(**data)
    for key in ("method", "tol", "restart", "max_iter"):
        if getattr(args, key, None) is not None:
            setattr(s, key, getattr(args, key))
    if getattr(args, "precond", None):
        if args.basis == "RWG":
            s.rwg_precond = args.precond
        else:
            s.mr_precond = args.precond
    return s


def _system(args, mesh):
    """Space, medium, operator and right-hand side for ``args.formulation``."""
    from .mesh import build_connectivity
    from .operators import (CfieConfig, Excitation, Medium, RwgSpace, assemble_all, cfie_combine,
                            plane_wave_rhs)

    space = RwgSpace(mesh, build_connectivity(mesh))
    medium = Medium.free_space(args.frequency)
    ops = assemble_all(space, medium)
    form = args.formulation
    cfie = CfieConfig(args.alpha)
    if form == "CFIE":
        op = cfie_combine(ops["Z"], ops["B"], medium, cfie)
    else:
        op = ops["Z"] if form == "EFIE" else ops["B"]
    b = plane_wave_rhs(space, medium, Excitation(), form, cfie)
    return space, medium, op, b


def _basis(args, mesh, medium):
    from .hierarchy import LoopKind, build_mr_basis

    if args.basis == "RWG":
        return None
    kind = LoopKind.POINT if args.basis == "MR-point" else LoopKind.HIERARCHICAL
    if args.stop_level is None:
        return build_mr_basis(mesh, wavelength=medium.wavelength, loops=kind)
    return build_mr_basis(mesh, stop_level=args.stop_level, loops=kind)


def _emit(payload: dict, path: Path | None) -> None:
    text = json.dumps(payload, indent=2, default=float)
    if path is not None:
        path.write_text(text + "\n")
    print(text)


# ---------------------------------------------------------------------------
# handlers
# ---------------------------------------------------------------------------

def cmd_mesh(args) -> int:
    from .mesh import build_connectivity, mesh_stats
    from .mesh_io import save_mesh

    mesh = _load_mesh(args)
    conn = build_connectivity(mesh)
    st = mesh_stats(mesh, conn)
    info = {"vertices": mesh.n_vertices, "triangles": mesh.n_triangles, "edges": conn.n_edges,
            "rwg": conn.n_rwg, "boundary_edges": conn.n_boundary, "closed": conn.closed,
            "euler": conn.euler_characteristic, "genus": conn.genus,
            "levels": mesh.nesting.depth if mesh.nesting is not None else 0,
            "area_ratio": st.area_ratio, "h_ratio": st.h_ratio}
    if args.output is not None:
        save_mesh(mesh, args.output)
        info["written"] = str(args.output)
    _emit(info, None)
    return 0


def cmd_assemble(args) -> int:
    from .mesh import build_connectivity
    from .operators import (CfieConfig, Medium, RwgSpace, assemble_all, assemble_gram, cfie_combine,
                            save_operator)

    mesh = _load_mesh(args)
    space = RwgSpace(mesh, build_connectivity(mesh))
    medium = Medium.free_space(args.frequency)
    if args.operator == "Gram":
        op = assemble_gram(space)
    else:
        ops = assemble_all(space, medium)
        op = {"EFIE": ops["Z"], "MFIE": ops["B"]}.get(args.operator)
        if op is None:
            op = cfie_combine(ops["Z"], ops["B"], medium, CfieConfig(args.alpha))
    save_operator(op, args.output)
    _emit({"operator": args.operator, "n": space.n, "frequency": args.frequency,
           "written": str(args.output)}, None)
    return 0


def cmd_solve(args) -> int:
    import numpy as np

    from .harness import solve_system
    from .solvers import write_history_csv

    mesh = _load_mesh(args)
    space, medium, op, b = _system(args, mesh)
    basis = _basis(args, mesh, medium)
    out = solve_system(op, b, _settings(args), basis, space)
    rep = out.report
    if args.history is not None:
        write_history_csv(rep.residual_history, args.history)
    if args.solution is not None:
        np.save(args.solution, out.solution)
    _emit({"n": space.n, "formulation": args.formulation, "basis": args.basis,
           "stop_level": None if basis is None else basis.stop_level, "precond": out.precond,
           "iterations": rep.iterations, "converged": rep.converged,
           "final_residual": rep.final_residual, "precond_memory": rep.precond_memory,
           "wall_time": rep.wall_time, "reason": rep.reason}, args.output)
    return 0 if rep.converged else 3


def cmd_cond(args) -> int:
    from .hierarchy import apply_mr
    from .solvers import condition_number

    mesh = _load_mesh(args)
    space, medium, op, _ = _system(args, mesh)
    basis = _basis(args, mesh, medium)
    a = op.entries if basis is None else apply_mr(op, basis)[0].entries
    _emit({"n": space.n, "formulation": args.formulation, "basis": args.basis,
           "kappa": condition_number(a)}, args.output)
    return 0


def cmd_rcs(args) -> int:
    import csv

    import numpy as np

    from .harness import solve_system
    from .mie import mie_rcs_oracle
    from .operators import Excitation, far_field_rcs, plane_directions

    mesh = _load_mesh(args)
    space, medium, op, b = _system(args, mesh)
    basis = _basis(args, mesh, medium)
    out = solve_system(op, b, _settings(args), basis, space)
    theta = np.linspace(0.0, np.pi, args.angles)
    sigma, _ = far_field_rcs(space, out.solution, medium, plane_directions(theta, 0.0), Excitation())
    mie = None
    if args.mie:
        radius = float(np.linalg.norm(mesh.vertices, axis=1).max())
        mie = mie_rcs_oracle(radius, medium, theta, "E")
    with args.output.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta_deg", "rcs_m2"] + (["mie_m2"] if mie is not None else []))
        for i, t in enumerate(theta):
            w.writerow([repr(float(np.degrees(t))), repr(float(sigma[i]))]
                       + ([repr(float(mie[i]))] if mie is not None else []))
    info = {"n": space.n, "iterations": out.report.iterations, "converged": out.report.converged,
            "written": str(args.output)}
    if mie is not None:
        info["rms_relative_error"] = float(np.sqrt(np.sum((sigma - mie) ** 2) / np.sum(mie ** 2)))
    _emit(info, None)
    return 0 if out.report.converged else 3


def cmd_experiment(args) -> int:
    from .harness import ConfigError, ExperimentConfig, run_experiment

    try:
        if args.config is not None:
            cfg = ExperimentConfig.from_file(args.config)
        elif args.scenario is not None:
            cfg = ExperimentConfig.defaults(args.scenario)
        else:
            raise ConfigError("give --config or --scenario")
        if args.output_dir is not None:
            cfg.output_dir = str(args.output_dir)
        if args.tol is not None:
            cfg.solver.tol = args.tol
        if args.seed is not None:
            cfg.seed = args.seed
        cfg.validate()
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    report = run_experiment(cfg)
    for r in report.rows:
        status = r.error or ("ok" if r.converged else "not converged")
        print(f"{r.case or '-':>10} {r.frequency / 1e6:9.3f} MHz {r.formulation:4} {r.basis:8} "
              f"N={r.n:5d} it={r.iterations} {status}")
    bad = report.failed or [r for r in report.rows if not r.converged]
    if args.strict and bad:
        print(f"{len(bad)} failed rows", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mrcfie", description="MR-preconditioned MoM PEC scattering")
    p.add_argument("--seed", type=int, help="recorded in reports; the algorithms are deterministic")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("mesh", help="generate or inspect a mesh")
    _mesh_args(s)
    s.add_argument("--output", type=Path, help="write the mesh (.msh or .off)")
    s.set_defaults(func=cmd_mesh)

    s = sub.add_parser("assemble", help="assemble a dense operator to .npz")
    _mesh_args(s)
    _physics_args(s)
    s.add_argument("--operator", choices=("EFIE", "MFIE", "CFIE", "Gram"), default="EFIE")
    s.add_argument("--output", type=Path, required=True)
    s.set_defaults(func=cmd_assemble)

    for name, func, what in (("solve", cmd_solve, "solve a plane-wave scattering problem"),
                             ("cond", cmd_cond, "condition number of a system matrix"),
                             ("rcs", cmd_rcs, "bistatic RCS in the E-plane")):
        s = sub.add_parser(name, help=what)
        _mesh_args(s)
        _physics_args(s)
        _solver_args(s)
        s.set_defaults(func=func)
        if name == "rcs":
            s.add_argument("--output", type=Path, required=True, help="CSV file")
            s.add_argument("--angles", type=int, default=181)
            s.add_argument("--mie", action="store_true", help="add the Mie reference (spheres only)")
        else:
            s.add_argument("--output", type=Path, help="JSON summary file")
        if name == "solve":
            s.add_argument("--history", type=Path, help="residual history CSV")
            s.add_argument("--solution", type=Path, help="RWG coefficients (.npy)")

    s = sub.add_parser("experiment", help="run a scripted experiment")
    s.add_argument("--config", type=Path, help="TOML/JSON experiment file")
    s.add_argument("--scenario", choices=("resonant_sphere", "cube_refinement", "hetero_sphere",
                                          "mie_validation"))
    s.add_argument("--output-dir", type=Path)
    s.add_argument("--tol", type=float)
    s.add_argument("--strict", action="store_true", help="exit 1 if any row fails")
    s.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None) -> int:
    apply_thread_env()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("solve", "cond", "rcs") and args.basis == "RWG" and args.stop_level is not None:
        print("--stop-level only applies to MR bases", file=sys.stderr)
        return 2
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
