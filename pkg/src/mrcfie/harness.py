"""Scripted scattering experiments: resonant sphere, cube refinement,
graded sphere and Mie validation.

Each experiment is a cross product of cases (frequencies, cube refinements
or grading levels), formulations and bases.  Rows are written to
``results.csv`` (deterministic fields only), the full report, including
wall times and the environment stamp, to ``report.json``, and residual
histories to ``histories/``.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import platform
import time
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np

from .hierarchy import LoopKind, apply_mr, build_hierarchy, build_mr_basis, from_mr, to_mr_rhs
from .mesh import (TriMesh, bisect_region, build_connectivity, cap_region, generate_primitive,
                   icosphere, mesh_stats, refine_region)
from .mie import mie_rcs_oracle
from .operators import (CfieConfig, Excitation, Medium, QuadratureConfig, RwgSpace, assemble_all,
                        assemble_efie, cfie_combine, far_field, far_field_rcs, plane_directions,
                        plane_wave_rhs)
from .solvers import (PrecondKind, Preconditioner, SolveReport, coarse_block_preconditioner,
                      condition_number, full_lu_preconditioner, identity_preconditioner,
                      iterative_solve, jacobi_preconditioner, near_field_lu_preconditioner,
                      smallest_singular_value,
                      write_history_csv)

logger = logging.getLogger(__name__)

THREADS_ENV = "MRCFIE_THREADS"
RESONANCE_HZ = 474.56e6
FORMULATIONS = ("EFIE", "CFIE")
BASES = ("RWG", "MR-point", "MR-hier")


class Scenario(str, Enum):
    RESONANT_SPHERE = "resonant_sphere"
    CUBE_REFINEMENT = "cube_refinement"
    HETERO_SPHERE = "hetero_sphere"
    MIE_VALIDATION = "mie_validation"


class ConfigError(ValueError):
    pass


@dataclass
class SolverSettings:
    method: str = "GMRES"
    tol: float = 1e-4
    restart: int = 200
    max_iter: int = 1000
    rwg_precond: str = "Identity"
    mr_precond: str = "CoarseBlockLU"


@dataclass
class ExperimentConfig:
    """One experiment; lists must be non-empty.

    ``stop_level=None`` selects the cells-below-a-wavelength-over-eight rule;
    an integer is used as a level index.  ``refinements`` (cube divisions
    per edge) and ``hetero_levels`` (four-way refinement steps after one
    bisection of the cap) are the case axes of the cube and graded-sphere
    scenarios.
    """

    scenario: Scenario
    frequencies: list = field(default_factory=list)
    formulations: list = field(default_factory=lambda: list(FORMULATIONS))
    bases: list = field(default_factory=lambda: ["RWG", "MR-hier"])
    solver: SolverSettings = field(default_factory=SolverSettings)
    output_dir: str | None = None
    alpha: float = 0.5
    stop_level: int | None = None
    compute_condition: bool = False
    refinements: list = field(default_factory=list)
    radius: float = 0.5
    subdivisions: int = 3
    hetero_levels: list = field(default_factory=list)
    cap_angle: float = 0.15
    cap_shrink: float = 0.6
    resonance_sweep: bool = False
    sweep_points: int = 9
    rcs_angles: int = 181
    seed: int = 0

    def __post_init__(self):
        self.scenario = Scenario(self.scenario)
        if isinstance(self.solver, dict):
            self.solver = SolverSettings(**self.solver)

    @classmethod
    def defaults(cls, scenario: Scenario | str, **overrides) -> "ExperimentConfig":
        """Default case grid of each scenario."""
        scenario = Scenario(scenario)
        base = {
            Scenario.CUBE_REFINEMENT: dict(frequencies=[1e6], refinements=[1, 2, 4, 8],
                                           bases=list(BASES), stop_level=0, compute_condition=True),
            Scenario.RESONANT_SPHERE: dict(frequencies=[300e6, 400e6, RESONANCE_HZ, 500e6, 600e6],
                                           stop_level=2),
            Scenario.HETERO_SPHERE: dict(frequencies=[300e6], hetero_levels=[1, 3, 4], stop_level=2),
            Scenario.MIE_VALIDATION: dict(frequencies=[300e6], bases=["RWG"]),
        }[scenario]
        base.update(overrides)
        return cls(scenario=scenario, **base)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "scenario" not in data:
            raise ConfigError("config needs a scenario")
        solver = data.pop("solver", {})
        unknown = set(solver) - {f.name for f in fields(SolverSettings)}
        if unknown:
            raise ConfigError(f"unknown solver keys: {sorted(unknown)}")
        scenario = data.pop("scenario")
        try:
            defaults = cls.defaults(scenario)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        merged = {f.name: getattr(defaults, f.name) for f in fields(cls)}
        merged.update(data)
        merged["solver"] = SolverSettings(**{**asdict(defaults.solver), **solver})
        return cls(**merged)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        if path.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:         # Python < 3.11
                import tomli as tomllib
            data = tomllib.loads(path.read_text())
        else:
            data = json.loads(path.read_text())
        return cls.from_dict(data)

    def cases(self) -> list:
        if self.scenario is Scenario.CUBE_REFINEMENT:
            return list(self.refinements)
        if self.scenario is Scenario.HETERO_SPHERE:
            return list(self.hetero_levels)
        return [None]

    def validate(self) -> None:
        for name in ("frequencies", "formulations", "bases"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be a non-empty list")
        bad = set(self.formulations) - set(FORMULATIONS)
        if bad:
            raise ConfigError(f"unknown formulations {sorted(bad)}")
        bad = set(self.bases) - set(BASES)
        if bad:
            raise ConfigError(f"unknown bases {sorted(bad)}")
        if any(f <= 0 for f in self.frequencies):
            raise ConfigError("frequencies must be positive")
        if self.scenario is Scenario.CUBE_REFINEMENT and not self.refinements:
            raise ConfigError("cube_refinement needs refinements (1/h values)")
        if self.scenario is Scenario.HETERO_SPHERE and not self.hetero_levels:
            raise ConfigError("hetero_sphere needs hetero_levels")
        if any(int(r) < 1 for r in self.refinements) or any(int(l) < 0 for l in self.hetero_levels):
            raise ConfigError("refinements must be >= 1 and hetero_levels >= 0")
        s = self.solver
        if s.tol <= 0 or s.max_iter < 1 or s.restart < 1:
            raise ConfigError("solver needs tol > 0, max_iter >= 1, restart >= 1")
        for kind in (s.rwg_precond, s.mr_precond):
            try:
                PrecondKind(kind)
            except ValueError as exc:
                raise ConfigError(f"unknown preconditioner {kind!r}") from exc
        if s.method.upper() not in ("GMRES", "BICGSTAB"):
            raise ConfigError(f"unknown method {s.method!r}")
        if self.resonance_sweep and self.sweep_points < 2:
            raise ConfigError("resonance sweep needs at least two points")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenario"] = self.scenario.value
        return d


@dataclass
class CaseRow:
    scenario: str
    case: str
    frequency: float
    formulation: str
    basis: str
    n: int = 0
    stop_level: int | None = None
    area_ratio: float | None = None
    h_ratio: float | None = None
    kappa: float | None = None
    iterations: int | None = None
    converged: bool = False
    final_residual: float | None = None
    precond: str = ""
    memory: int = 0
    rcs_rms_error: float | None = None
    error: str = ""
    history_file: str = ""
    nominal_frequency: float | None = None
    wall_time: float = 0.0

    CSV_FIELDS = ("scenario", "case", "frequency", "nominal_frequency", "formulation", "basis", "n",
                  "stop_level", "area_ratio", "h_ratio", "kappa", "iterations", "converged",
                  "final_residual", "precond", "memory", "rcs_rms_error", "error", "history_file")


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def select(self, **match) -> list:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in match.items())]

    def get(self, **match) -> CaseRow:
        rows = self.select(**match)
        if len(rows) != 1:
            raise KeyError(f"{len(rows)} rows match {match}")
        return rows[0]

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CaseRow.CSV_FIELDS)
            for r in self.rows:
                w.writerow([_fmt(getattr(r, k)) for k in CaseRow.CSV_FIELDS])

    def write_json(self, path: str | Path) -> None:
        payload = {"config": self.config.to_dict(), "environment": self.environment,
                   "summary": self.summary,
                   "rows": [{k: v for k, v in asdict(r).items()} for r in self.rows]}
        Path(path).write_text(json.dumps(payload, indent=2, default=_json_default))

    @property
    def failed(self) -> list:
        return [r for r in self.rows if r.error]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _json_default(v):
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, Enum):
        return v.value
    raise TypeError(type(v))


def environment_stamp(cfg: ExperimentConfig) -> dict:
    import numba
    import scipy

    return {"package": __package__, "python": platform.python_version(), "platform": platform.platform(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__,
            "threads": os.environ.get(THREADS_ENV, ""), "tolerance": cfg.solver.tol,
            "method": cfg.solver.method, "restart": cfg.solver.restart,
            "max_iter": cfg.solver.max_iter, "seed": cfg.seed}


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

def hetero_sphere(radius: float = 0.5, subdivisions: int = 3, levels: int = 1,
                  cap_angle: float = 0.15, shrink: float = 0.6,
                  direction=(0.0, 0.0, -1.0)) -> TriMesh:
    """Sphere graded towards a cap: one bisection, then ``levels`` four-way steps.

    Step ``i`` refines a cap of half-angle ``cap_angle * shrink**i``.  With
    the defaults, one level gives area and edge ratios near 10 and 4.6, four
    levels near 650 and 36.
    """
    mesh = icosphere(radius, subdivisions)
    mesh = bisect_region(mesh, cap_region(direction, cap_angle))
    for i in range(levels):
        mesh = refine_region(mesh, cap_region(direction, cap_angle * shrink ** i), 1)
    return mesh


def scenario_mesh(cfg: ExperimentConfig, case) -> TriMesh:
    if cfg.scenario is Scenario.CUBE_REFINEMENT:
        return generate_primitive("cube", 1.0, 1.0 / int(case))
    if cfg.scenario is Scenario.HETERO_SPHERE:
        return hetero_sphere(cfg.radius, cfg.subdivisions, int(case), cfg.cap_angle, cfg.cap_shrink)
    return icosphere(cfg.radius, cfg.subdivisions)


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

def make_preconditioner(kind: str, a: np.ndarray, coarse: np.ndarray | None = None,
                        space: RwgSpace | None = None) -> Preconditioner:
    """Build a preconditioner by name.

    ``coarse`` marks the coarse unknowns of an MR system (coarse-block kinds
    fall back to Jacobi without it); ``space`` supplies RWG edge midpoints
    for the near-field LU, whose radius is two largest cell diameters.
    """
    kind = PrecondKind(kind)
    if kind is PrecondKind.IDENTITY:
        return identity_preconditioner(len(a))
    if kind is PrecondKind.JACOBI:
        return jacobi_preconditioner(a)
    if kind is PrecondKind.FULL_LU:
        return full_lu_preconditioner(a)
    if kind in (PrecondKind.COARSE_BLOCK_LU, PrecondKind.COARSE_BLOCK_ILU0):
        if coarse is None:
            return jacobi_preconditioner(a)
        mode = "LU" if kind is PrecondKind.COARSE_BLOCK_LU else "ILU0"
        return coarse_block_preconditioner(a, coarse, mode)
    if space is None:
        raise ValueError("NearFieldLU needs the RWG space")
    conn = space.conn
    centers = space.mesh.vertices[conn.edges[: conn.n_interior]].mean(axis=1)
    return near_field_lu_preconditioner(a, centers, 2.0 * space.mesh.diameters.max())


def locate_resonance(space: RwgSpace, f0: float, span: float = 0.01, points: int = 9,
                     quad: QuadratureConfig | None = None) -> tuple[float, np.ndarray]:
    """Frequency in ``f0 (1 +- span)`` minimizing the EFIE smallest singular value."""
    freqs = f0 * (1 + np.linspace(-span, span, points))
    smin = np.array([smallest_singular_value(assemble_efie(space, Medium.free_space(f), quad).entries)
                     for f in freqs])
    return float(freqs[int(np.argmin(smin))]), smin


def _case_label(cfg: ExperimentConfig, case) -> str:
    if cfg.scenario is Scenario.CUBE_REFINEMENT:
        return f"1/h={case}"
    if cfg.scenario is Scenario.HETERO_SPHERE:
        return f"levels={case}"
    return ""


def _rms_relative(x: np.ndarray, ref: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(x - ref) ** 2) / np.sum(np.abs(ref) ** 2)))


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run every (case, frequency, formulation, basis) row of ``cfg``.

    Row failures are recorded and the run continues.
    """
    cfg.validate()
    report = ExperimentReport(cfg, environment=environment_stamp(cfg))
    out = Path(cfg.output_dir) if cfg.output_dir else None
    if out is not None:
        (out / "histories").mkdir(parents=True, exist_ok=True)
    exc = Excitation()
    theta = np.linspace(0.0, np.pi, cfg.rcs_angles)
    dirs = plane_directions(theta, 0.0)
    far = {}
    for case in cfg.cases():
        mesh = scenario_mesh(cfg, case)
        conn = build_connectivity(mesh)
        space = RwgSpace(mesh, conn)
        stats = mesh_stats(mesh, conn)
        hier = build_hierarchy(mesh) if any(b != "RWG" for b in cfg.bases) else None
        for f_nominal in cfg.frequencies:
            freq = f_nominal
            if cfg.resonance_sweep and abs(f_nominal - RESONANCE_HZ) < 1e-6 * RESONANCE_HZ:
                freq, _ = locate_resonance(space, f_nominal, points=cfg.sweep_points)
                logger.info("discrete resonance located at %.4f MHz", freq / 1e6)
            medium = Medium.free_space(freq)
            ops = assemble_all(space, medium)
            mats = {"EFIE": ops["Z"], "CFIE": cfie_combine(ops["Z"], ops["B"], medium, CfieConfig(cfg.alpha))}
            rhs = {name: plane_wave_rhs(space, medium, exc, name, CfieConfig(cfg.alpha))
                   for name in cfg.formulations}
            mie = None
            if cfg.scenario is Scenario.MIE_VALIDATION:
                mie = mie_rcs_oracle(cfg.radius, medium, theta, "E")
            bases = {}
            for basis in cfg.bases:
                if basis == "RWG":
                    continue
                kind = LoopKind.POINT if basis == "MR-point" else LoopKind.HIERARCHICAL
                if cfg.stop_level is None:
                    bases[basis] = build_mr_basis(mesh, wavelength=medium.wavelength, loops=kind,
                                                  hierarchy=hier)
                else:
                    bases[basis] = build_mr_basis(mesh, stop_level=min(cfg.stop_level, hier.depth),
                                                  loops=kind, hierarchy=hier)
            for form in cfg.formulations:
                for basis in cfg.bases:
                    row = CaseRow(cfg.scenario.value, _case_label(cfg, case), freq, form, basis,
                                  n=space.n, area_ratio=stats.area_ratio, h_ratio=stats.h_ratio,
                                  nominal_frequency=f_nominal)
                    t0 = time.perf_counter()
                    history = None
                    try:
                        x, history = _solve_row(cfg, row, mats[form], rhs[form], bases.get(basis), space)
                        if x is not None:
                            if mie is not None:
                                sigma, _ = far_field_rcs(space, x, medium, dirs, exc)
                                row.rcs_rms_error = _rms_relative(sigma, mie)
                            if row.converged:
                                far[(row.case, f_nominal, form, basis)] = far_field(space, x, medium, dirs)
                    except Exception as err:          # recorded, run continues
                        logger.exception("row failed")
                        row.error = f"{type(err).__name__}: {err}"
                    row.wall_time = time.perf_counter() - t0
                    report.rows.append(row)
                    if out is not None and history is not None:
                        write_history_csv(history, out / "histories" / row.history_file)
            del ops, mats
    report.summary = _far_field_agreement(far)
    if out is not None:
        report.write_csv(out / "results.csv")
        report.write_json(out / "report.json")
    return report


@dataclass
class SolveOutcome:
    solution: np.ndarray
    report: SolveReport
    precond: str
    kappa: float | None = None


def solve_system(op, b: np.ndarray, settings: SolverSettings, basis=None,
                 space: RwgSpace | None = None, condition: bool = False) -> SolveOutcome:
    """Solve one RWG system directly or through the MR change of basis.

    The returned solution is always in RWG coefficients.
    """
    s = settings
    if basis is None:
        a, rhs = op.entries, b
        kind = PrecondKind(s.rwg_precond)
        m = make_preconditioner(kind, a, space=space)
    else:
        mr, d = apply_mr(op, basis)
        a, rhs = mr.entries, to_mr_rhs(b, basis, d)
        kind = PrecondKind(s.mr_precond)
        if kind is PrecondKind.NEAR_FIELD_LU:
            raise ValueError("NearFieldLU applies to the RWG basis only")
        m = make_preconditioner(kind, a, basis.level == basis.stop_level)
    kappa = condition_number(a) if condition else None
    rep = iterative_solve(s.method, a, rhs, s.tol, s.max_iter, s.restart, m)
    x = rep.solution if basis is None else from_mr(rep.solution, basis, d)
    return SolveOutcome(x, rep, kind.value, kappa)


def _solve_row(cfg: ExperimentConfig, row: CaseRow, op, b: np.ndarray, basis, space: RwgSpace):
    """Fill ``row`` from one solve; returns the RWG solution and residual history."""
    if basis is not None:
        row.stop_level = basis.stop_level
    out = solve_system(op, b, cfg.solver, basis, space, cfg.compute_condition)
    rep = out.report
    row.precond = out.precond
    row.kappa = out.kappa
    row.iterations = rep.iterations
    row.converged = rep.converged
    row.final_residual = float(rep.final_residual)
    row.memory = int(rep.precond_memory)
    label = row.case.replace("1/h=", "invh").replace("levels=", "levels") + "_" if row.case else ""
    row.history_file = f"{label}{row.frequency / 1e6:.4f}MHz_{row.formulation}_{row.basis}.csv"
    return out.solution, rep.residual_history


def _far_field_agreement(far: dict) -> dict:
    """Pairwise RMS far-field differences against the RWG EFIE solution of each case."""
    out = {}
    for (case, f, form, basis), e in far.items():
        ref = far.get((case, f, "EFIE", "RWG"))
        if ref is None or (form, basis) == ("EFIE", "RWG"):
            continue
        key = f"{case + '|' if case else ''}{f:.6g}|{form}-{basis}_vs_EFIE-RWG"
        out[key] = _rms_relative(e, ref)
    return out
