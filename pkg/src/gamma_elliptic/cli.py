"""Batch front end: configure a surface, coefficients and a task; emit reports.

Config files are YAML (key/value with nesting; the grammar is documented in
the README). Exit codes: 0 success, 1 solver failure, 2 well-posedness check
violated without override, 64 config parse error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import verification as vf
from .assembly import (
    CoefficientError,
    CoefficientSet,
    assemble_convection_b,
    assemble_convection_c,
    assemble_load,
    assemble_mass,
    assemble_operator,
    assemble_stiffness,
    export_matrix_market,
)
from .expressions import ExpressionError, parse_expression
from .fields import (
    AmbientMatrixField,
    AmbientScalarField,
    AmbientVectorField,
    constant_scalar,
    constant_vector,
    identity_matrix,
    identity_plus,
    matrix_from_scalars,
    rotation_field,
    vector_from_scalars,
)
from .geometry import Atlas, atlas_for_preset
from .solvers import (
    ConditionViolationError,
    SolverError,
    check_reaction_condition,
    solve_biharmonic,
    solve_divfree_cd,
    solve_general_elliptic,
    solve_laplace_beltrami,
)
from .surface_mesh import build_mesh, write_csv, write_vtk

EXIT_OK = 0
EXIT_SOLVER_FAILURE = 1
EXIT_CONDITION_VIOLATED = 2
EXIT_PARSE_ERROR = 64

TASKS = ("solve", "study", "check", "mesh", "export")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    task: str
    surface: dict = dataclass_field(default_factory=lambda: {"preset": "sphere"})
    mesh: dict = dataclass_field(default_factory=dict)
    coefficients: dict = dataclass_field(default_factory=dict)
    solve: dict = dataclass_field(default_factory=dict)
    study: dict = dataclass_field(default_factory=dict)
    output_dir: str = "out"
    seed: int = 1234
    deterministic: bool = False

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        preset = self.surface.get("preset")
        if preset not in ("sphere", "torus"):
            raise ConfigError(f"unknown surface preset {preset!r}")
        if preset == "torus":
            major = float(self.surface.get("major", 2.0))
            minor = float(self.surface.get("minor", 1.0))
            if not major > minor > 0:
                raise ConfigError("torus requires major > minor > 0")
        _check_finite(self.to_dict())

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root must be a mapping")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "task" not in data:
            raise ConfigError("config must declare a task")
        return cls(**data)

    def emit(self) -> str:
        """YAML text that parses back to an identical config."""
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    @classmethod
    def parse(cls, text: str) -> "RunConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"invalid YAML: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.parse(Path(path).read_text())


def _check_finite(obj, path="config"):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")
    elif isinstance(obj, float) and not math.isfinite(obj):
        raise ConfigError(f"non-finite number at {path}")


# ---------------------------------------------------------------------------
# Field construction from config specs


def scalar_from_spec(spec, default: Optional[float] = None) -> Optional[AmbientScalarField]:
    if spec is None:
        return None if default is None else constant_scalar(default)
    if isinstance(spec, (int, float)):
        return constant_scalar(float(spec))
    if isinstance(spec, str):
        try:
            return parse_expression(spec)
        except ExpressionError as exc:
            raise ConfigError(f"bad scalar expression {spec!r}: {exc}") from exc
    raise ConfigError(f"cannot build a scalar field from {spec!r}")


def vector_from_spec(spec) -> Optional[AmbientVectorField]:
    if spec is None:
        return None
    if isinstance(spec, dict):
        kind = spec.get("kind", "constant")
        if kind == "zero":
            return None
        if kind == "constant":
            return constant_vector(spec.get("values", (0.0, 0.0, 0.0)))
        if kind == "rotation":
            return rotation_field(spec.get("axis", (0.0, 0.0, 1.0)))
        if kind == "expressions":
            comps = spec.get("components")
            if not comps or len(comps) != 3:
                raise ConfigError("vector 'expressions' needs 3 components")
            return vector_from_scalars([scalar_from_spec(c, 0.0) for c in comps])
        raise ConfigError(f"unknown vector kind {kind!r}")
    if isinstance(spec, (list, tuple)) and len(spec) == 3:
        return constant_vector(spec)
    raise ConfigError(f"cannot build a vector field from {spec!r}")


def matrix_from_spec(spec) -> AmbientMatrixField:
    if spec is None:
        return identity_matrix(3)
    if isinstance(spec, (int, float)):
        return identity_matrix(3, float(spec))
    if isinstance(spec, dict):
        kind = spec.get("kind", "identity")
        if kind == "identity":
            return identity_matrix(3, float(spec.get("scale", 1.0)))
        if kind == "identity-plus":
            return identity_plus(scalar_from_spec(spec.get("expression", "0"), 0.0))
        if kind == "entries":
            rows = spec.get("entries")
            if not rows or len(rows) != 3 or any(len(r) != 3 for r in rows):
                raise ConfigError("matrix 'entries' must be a 3x3 array of expressions")
            for i in range(3):
                for j in range(i + 1, 3):
                    if str(rows[i][j]) != str(rows[j][i]):
                        raise ConfigError(
                            f"matrix entries must be symmetric; ({i},{j}) != ({j},{i})"
                        )
            fields = [[scalar_from_spec(e, 0.0) for e in row] for row in rows]
            return matrix_from_scalars(fields)
        raise ConfigError(f"unknown matrix kind {kind!r}")
    raise ConfigError(f"cannot build a matrix field from {spec!r}")


def coefficients_from_config(cfg: RunConfig) -> CoefficientSet:
    spec = cfg.coefficients
    return CoefficientSet(
        A=matrix_from_spec(spec.get("A")),
        b=vector_from_spec(spec.get("b")),
        c=vector_from_spec(spec.get("c")),
        d=scalar_from_spec(spec.get("d")),
        ellipticity=float(spec.get("ellipticity", 1.0)),
        project_tangential=bool(spec.get("project_tangential", True)),
    )


def atlas_from_config(cfg: RunConfig) -> Atlas:
    s = cfg.surface
    if s["preset"] == "sphere":
        return atlas_for_preset("sphere", radius=float(s.get("radius", 1.0)))
    return atlas_for_preset(
        "torus", major=float(s.get("major", 2.0)), minor=float(s.get("minor", 1.0))
    )


def mesh_from_config(cfg: RunConfig, atlas: Atlas):
    default_preset = "sphere-icosahedral" if cfg.surface["preset"] == "sphere" else "torus-grid"
    preset = cfg.mesh.get("preset", default_preset)
    resolution = int(cfg.mesh.get("resolution", 1))
    return build_mesh(atlas, preset, resolution)


# ---------------------------------------------------------------------------
# Tasks


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _task_mesh(cfg: RunConfig, out: Path) -> int:
    atlas = atlas_from_config(cfg)
    mesh = mesh_from_config(cfg, atlas)
    write_vtk(mesh, out / "mesh.vtk")
    write_csv(mesh, out / "mesh_vertices.csv", out / "mesh_triangles.csv")
    _write_json(
        out / "mesh_report.json",
        {
            "label": mesh.label,
            "vertices": mesh.n_vertices,
            "triangles": mesh.n_triangles,
            "euler_characteristic": mesh.euler_characteristic,
            "area": mesh.total_area(),
        },
    )
    return EXIT_OK


def _task_check(cfg: RunConfig, out: Path, override: bool) -> int:
    atlas = atlas_from_config(cfg)
    mesh = mesh_from_config(cfg, atlas)
    coeffs = coefficients_from_config(cfg)
    report = check_reaction_condition(coeffs, mesh)
    _write_json(out / "condition_report.json", report.to_dict())
    violated = report.both_routes_violated or report.ellipticity <= 0.0
    if violated and not override:
        return EXIT_CONDITION_VIOLATED
    return EXIT_OK


def _task_solve(cfg: RunConfig, out: Path, override: bool) -> int:
    atlas = atlas_from_config(cfg)
    mesh = mesh_from_config(cfg, atlas)
    coeffs = coefficients_from_config(cfg)
    problem = cfg.solve.get("problem", "laplace")
    f = scalar_from_spec(cfg.solve.get("f", "0"), 0.0)
    tol = float(cfg.solve.get("tolerance", 1e-10))
    max_iter = cfg.solve.get("max_iter")
    max_iter = int(max_iter) if max_iter is not None else None
    try:
        if problem == "laplace":
            report = solve_laplace_beltrami(
                mesh, coeffs.A, f, tol=tol, ellipticity=coeffs.ellipticity, max_iter=max_iter
            )
        elif problem == "general":
            report = solve_general_elliptic(
                mesh, coeffs, f, tol=tol, max_iter=max_iter, override_conditions=override
            )
        elif problem == "divfree":
            if coeffs.c is None:
                raise ConfigError("divfree problem needs a convection field c")
            report = solve_divfree_cd(mesh, coeffs.A, coeffs.c, f, tol=tol, max_iter=max_iter)
        elif problem == "biharmonic":
            report = solve_biharmonic(mesh, f, tol=tol, max_iter=max_iter)
        else:
            raise ConfigError(f"unknown problem kind {problem!r}")
    except ConditionViolationError as exc:
        _write_json(out / "condition_report.json", exc.report.to_dict())
        return EXIT_CONDITION_VIOLATED
    except CoefficientError:
        # ellipticity failed at assembly time: report like any other condition
        _write_json(
            out / "condition_report.json",
            check_reaction_condition(coeffs, mesh).to_dict(),
        )
        return EXIT_CONDITION_VIOLATED
    except SolverError as exc:
        _write_json(out / "solver_failure.json", {"error": str(exc)})
        return EXIT_SOLVER_FAILURE
    _write_json(out / "solve_report.json", report.to_dict())
    write_vtk(mesh, out / "solution.vtk", point_data={"u": report.solution.values})
    return EXIT_OK


def _task_study(cfg: RunConfig, out: Path) -> int:
    study = cfg.study
    case_name = study.get("case", "sphere-eigen")
    levels = int(study.get("levels", 4))
    base = int(study.get("base_resolution", 1))
    if case_name == "sphere-eigen":
        case = vf.sphere_eigen_case(base)
    elif case_name == "sphere-divfree":
        case = vf.sphere_divfree_case(base)
    elif case_name == "torus-general":
        case = vf.torus_general_case(base)
    elif case_name == "custom":
        atlas = atlas_from_config(cfg)
        u_exact = scalar_from_spec(study.get("u_exact"), None)
        if u_exact is None:
            raise ConfigError("custom study needs a u_exact expression")
        preset = cfg.mesh.get(
            "preset",
            "sphere-icosahedral" if cfg.surface["preset"] == "sphere" else "torus-grid",
        )
        case = vf.manufacture(
            atlas,
            preset,
            u_exact,
            coefficients_from_config(cfg),
            name="custom",
            solver_kind=study.get("problem", "laplace"),
            base_resolution=base,
            seed=cfg.seed,
        )
    else:
        raise ConfigError(f"unknown study case {case_name!r}")
    window_l2 = study.get("rate_window_l2")
    window_h1 = study.get("rate_window_h1")
    report = vf.convergence_study(
        case,
        levels=levels,
        tol=float(study.get("tolerance", 1e-10)),
        rate_window_l2=tuple(window_l2) if window_l2 else None,
        rate_window_h1=tuple(window_h1) if window_h1 else None,
    )
    if cfg.deterministic:
        # wall times are the only nondeterministic output; zero them so the
        # emitted CSV is bitwise reproducible for a given config and seed
        for rec in report.levels:
            rec.seconds = 0.0
    report.write_csv(out / "study.csv")
    _write_json(out / "study_report.json", report.to_dict())
    if "aborted" in report.thresholds:
        return EXIT_SOLVER_FAILURE
    return EXIT_OK


def _task_export(cfg: RunConfig, out: Path) -> int:
    atlas = atlas_from_config(cfg)
    mesh = mesh_from_config(cfg, atlas)
    coeffs = coefficients_from_config(cfg)
    export_matrix_market(
        assemble_stiffness(mesh, coeffs.A, ellipticity=coeffs.ellipticity), out / "stiffness.mtx"
    )
    export_matrix_market(assemble_mass(mesh, coeffs.d), out / "mass.mtx")
    if coeffs.b is not None:
        export_matrix_market(assemble_convection_b(mesh, coeffs.b), out / "convection_b.mtx")
    if coeffs.c is not None:
        export_matrix_market(assemble_convection_c(mesh, coeffs.c), out / "convection_c.mtx")
    export_matrix_market(assemble_operator(mesh, coeffs), out / "operator.mtx")
    f = scalar_from_spec(cfg.solve.get("f"), None)
    if f is not None:
        np.savetxt(out / "load.txt", assemble_load(mesh, f))
    return EXIT_OK


def run(cfg: RunConfig, out_dir=None, override_conditions: bool = False) -> int:
    """Execute a configured task; returns the process exit status."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config_used.yaml").write_text(cfg.emit())
    if cfg.task == "mesh":
        return _task_mesh(cfg, out)
    if cfg.task == "check":
        return _task_check(cfg, out, override_conditions)
    if cfg.task == "solve":
        return _task_solve(cfg, out, override_conditions)
    if cfg.task == "study":
        return _task_study(cfg, out)
    if cfg.task == "export":
        return _task_export(cfg, out)
    raise ConfigError(f"unknown task {cfg.task!r}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gamma-elliptic",
        description="Surface finite elements for scalar elliptic problems "
        "on closed hypersurfaces.",
    )
    parser.add_argument("task", choices=TASKS, help="what to run")
    parser.add_argument("--config", required=True, help="YAML config file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="pin the configured seed for bitwise-reproducible outputs",
    )
    parser.add_argument(
        "--override-conditions",
        action="store_true",
        help="proceed even when the well-posedness checks report 'violated'",
    )
    args = parser.parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        if cfg.task != args.task:
            cfg = dataclasses.replace(cfg, task=args.task)
        if args.deterministic:
            cfg = dataclasses.replace(cfg, deterministic=True)
    except (ConfigError, FileNotFoundError, TypeError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    try:
        return run(cfg, out_dir=args.out, override_conditions=args.override_conditions)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE_ERROR
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE


if __name__ == "__main__":
    sys.exit(main())
