"""Configuration-driven experiment runner.

Subcommands: ``study`` (level sweep of one discretization variant, CSV
output), ``solve`` (single solve with field dumps), ``oracle`` (dense
cross-check on a coarse level), ``mesh-dump`` (triangulation as text).
Configs are flat "key = value" text files; every value can be overridden
on the command line.  Exit codes: 0 success, 2 solver failure, 3 config
error.
"""

import argparse
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import control, error, fem, oracle
from .greens import ExactSolution
from .mesh import build_disc_mesh, build_square_mesh, format_mesh

__all__ = [
    "ConfigError",
    "StudyConfig",
    "parse_config",
    "format_config",
    "run_study",
    "run_solve",
    "run_oracle_check",
    "run_mesh_dump",
    "main",
]

VARIANTS = ("variational", "cellwise", "postproc", "greens")
MAX_STUDY_LEVEL = 8
ORACLE_MATCH_TOL = 1e-8
KKT_MATCH_TOL = 1e-10


class ConfigError(Exception):
    """Invalid configuration file or command line."""


@dataclass(frozen=True)
class StudyConfig:
    """Everything one run needs; parse/format round-trip exactly."""

    domain: str = "disc"
    center: tuple = (0.5, 0.5)
    radius: float = 0.5
    variant: str = "cellwise"
    level_min: int = 2
    level_max: int = 4
    alpha: float = 1.0
    lower: float = -1.0
    upper: float = 1.0
    tol: float = 1e-12
    subdivision: int = 2
    solver: str = "direct"
    out: Optional[str] = None

    def validate(self):
        if self.domain not in ("disc", "square"):
            raise ConfigError(f"unknown domain {self.domain!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}")
        if not (0 <= self.level_min <= self.level_max <= MAX_STUDY_LEVEL):
            raise ConfigError(
                f"levels must satisfy 0 <= min <= max <= {MAX_STUDY_LEVEL}"
            )
        if not self.radius > 0:
            raise ConfigError("radius must be positive")
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive")
        if not self.lower < self.upper:
            raise ConfigError("bounds must satisfy lower < upper")
        if not self.tol >= 1e-13:
            raise ConfigError("tol must be at least 1e-13")
        if self.subdivision < 0:
            raise ConfigError("subdivision must be non-negative")
        if self.solver not in ("direct", "cg"):
            raise ConfigError(f"unknown solver {self.solver!r}")
        return self

    @property
    def levels(self):
        return range(self.level_min, self.level_max + 1)


def _fmt(x):
    return f"{x:.17g}"


def _parse_float(text, key):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {text!r}")


def _parse_levels(text):
    parts = text.split("..")
    try:
        if len(parts) == 1:
            lo = hi = int(parts[0])
        elif len(parts) == 2:
            lo, hi = int(parts[0]), int(parts[1])
        else:
            raise ValueError
    except ValueError:
        raise ConfigError(f"levels: expected A..B, got {text!r}")
    return lo, hi


def _parse_pair(text, key):
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected two comma-separated values")
    return _parse_float(parts[0], key), _parse_float(parts[1], key)


def parse_config(text):
    """Parse flat "key = value" config text into a validated StudyConfig.

    Blank lines, comment lines starting with '#', and section headers in
    brackets are ignored; unknown keys are an error.
    """
    values = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or (
            line.startswith("[") and line.endswith("]")
        ):
            continue
        if "=" not in line:
            raise ConfigError(f"line {number}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key in values:
            raise ConfigError(f"line {number}: duplicate key {key!r}")
        values[key] = value

    config = StudyConfig()
    fields = {}
    for key, value in values.items():
        if key == "domain":
            fields["domain"] = value
        elif key == "center":
            fields["center"] = _parse_pair(value, "center")
        elif key == "radius":
            fields["radius"] = _parse_float(value, "radius")
        elif key == "variant":
            fields["variant"] = value
        elif key == "levels":
            fields["level_min"], fields["level_max"] = _parse_levels(value)
        elif key == "alpha":
            fields["alpha"] = _parse_float(value, "alpha")
        elif key == "bounds":
            fields["lower"], fields["upper"] = _parse_pair(value, "bounds")
        elif key == "tol":
            fields["tol"] = _parse_float(value, "tol")
        elif key == "subdivision":
            try:
                fields["subdivision"] = int(value)
            except ValueError:
                raise ConfigError(f"subdivision: not an integer: {value!r}")
        elif key == "solver":
            fields["solver"] = value
        elif key == "out":
            fields["out"] = value
        else:
            raise ConfigError(f"unknown key {key!r}")
    return replace(config, **fields).validate()


def format_config(config):
    """Serialize a StudyConfig to config text; parses back identically."""
    lines = [
        f"domain = {config.domain}",
        f"center = {_fmt(config.center[0])}, {_fmt(config.center[1])}",
        f"radius = {_fmt(config.radius)}",
        f"variant = {config.variant}",
        f"levels = {config.level_min}..{config.level_max}",
        f"alpha = {_fmt(config.alpha)}",
        f"bounds = {_fmt(config.lower)}, {_fmt(config.upper)}",
        f"tol = {_fmt(config.tol)}",
        f"subdivision = {config.subdivision}",
        f"solver = {config.solver}",
    ]
    if config.out is not None:
        lines.append(f"out = {config.out}")
    return "\n".join(lines) + "\n"


def _exact_solution(config):
    if config.domain != "disc":
        raise ConfigError(
            "the convergence benchmark is defined on the disc domain only"
        )
    return ExactSolution(
        center=config.center,
        radius=config.radius,
        alpha=config.alpha,
        lower=config.lower,
        upper=config.upper,
    )


def _build_mesh(config, level):
    if config.domain == "disc":
        return build_disc_mesh(config.center, config.radius, level)
    return build_square_mesh(level)


def _level_error(config, exact, level):
    """Solve one level and measure its error against the exact solution."""
    mesh = _build_mesh(config, level)
    if config.variant == "greens":
        g = fem.assemble_stiffness(mesh)
        factorization = fem.factorize(g, method=config.solver)
        field = g.field(factorization.solve(fem.load_point(mesh, config.center)))
        value = error.l1_error_fe(
            mesh,
            exact.greens,
            field,
            singular_point=config.center,
            depth=config.subdivision,
        )
    else:
        problem = control.benchmark_problem(exact)
        if config.variant == "variational":
            solution = control.solve_discrete(
                problem, mesh, control.VARIATIONAL, tol=config.tol,
                solver=config.solver,
            )
            discrete = solution.control
        else:
            solution = control.solve_discrete(
                problem, mesh, control.CELLWISE, tol=config.tol,
                solver=config.solver,
            )
            discrete = solution.control
            if config.variant == "postproc":
                discrete = control.post_process(
                    solution, config.alpha, config.lower, config.upper
                )
        value = error.l2_error_control(
            mesh, exact.control, discrete, depth=config.subdivision
        )
    return error.ConvergenceRecord(
        level=level,
        h=mesh.h,
        n_vertices=mesh.n_vertices,
        n_cells=mesh.n_cells,
        error=value,
    )


def run_study(config, parallel=False):
    """Run the level sweep of ``config.variant`` and write the CSV.

    Levels run sequentially unless ``parallel`` is set (levels are
    independent; results are ordered by level either way, so the CSV is
    identical).  On solver divergence nothing is written.

    Returns
    -------
    list of ConvergenceRecord
    """
    config.validate()
    exact = _exact_solution(config)
    levels = list(config.levels)

    def solve_level(level):
        try:
            return _level_error(config, exact, level)
        except control.DivergenceError as exc:
            raise control.DivergenceError(
                f"level {level}: {exc}", exc.residual_history
            )

    if parallel:
        with ThreadPoolExecutor(max_workers=len(levels)) as pool:
            records = list(pool.map(solve_level, levels))
    else:
        records = [solve_level(level) for level in levels]
    records.sort(key=lambda r: r.level)
    pairs = [(r.h, r.error) for r in records]
    if len(records) >= 2:
        for record, order in zip(records[1:], error.estimate_eoc(pairs)):
            record.eoc = order
    if config.out is not None:
        _write_csv(records, config.out)
    return records


def _write_csv(records, path):
    """Write the convergence table atomically (no partial files)."""
    lines = ["level,h,n_vertices,n_cells,error,eoc"]
    for r in records:
        eoc = "" if r.eoc is None else _fmt(r.eoc)
        lines.append(
            f"{r.level},{_fmt(r.h)},{r.n_vertices},{r.n_cells},"
            f"{_fmt(r.error)},{eoc}"
        )
    data = "\n".join(lines) + "\n"
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_solve(config):
    """Solve a single level (the low end of the range) and dump the fields.

    The dump is a text file holding the adjoint at every vertex and the
    control at every cell centroid, full precision.

    Returns
    -------
    DiscreteSolution
    """
    config.validate()
    if config.out is None:
        raise ConfigError("solve requires an output path")
    if config.variant == "greens":
        raise ConfigError("solve applies to the control variants only")
    exact = _exact_solution(config)
    level = config.level_min
    mesh = _build_mesh(config, level)
    problem = control.benchmark_problem(exact)
    variant = (
        control.VARIATIONAL if config.variant == "variational" else control.CELLWISE
    )
    solution = control.solve_discrete(
        problem, mesh, variant, tol=config.tol, solver=config.solver
    )
    discrete = solution.control
    if config.variant == "postproc":
        discrete = control.post_process(
            solution, config.alpha, config.lower, config.upper
        )
    lines = [
        f"# level {level} variant {config.variant}",
        f"# iterations {solution.iterations} residual {_fmt(solution.residual)}",
        f"# adjoint ({mesh.n_vertices} vertices: x y value)",
    ]
    for (x, y), z in zip(mesh.vertices, solution.adjoint.values):
        lines.append(f"{_fmt(x)} {_fmt(y)} {_fmt(z)}")
    lines.append(f"# control ({mesh.n_cells} cell centroids: x y value)")
    centroids = mesh.vertices[mesh.cells].mean(axis=1)
    third = np.full(3, 1.0 / 3.0)
    values = discrete.sample_cells(third[None, :]).ravel()
    for (x, y), q in zip(centroids, values):
        lines.append(f"{_fmt(x)} {_fmt(y)} {_fmt(q)}")
    with open(config.out, "w", newline="\n") as handle:
        handle.write("\n".join(lines) + "\n")
    return solution


def run_oracle_check(config):
    """Compare the cellwise solver against the dense oracles, per level.

    Bounded problems go against the projected-gradient quadratic program
    (match to 1e-8); unbounded ones against the dense saddle-point solve
    (match to 1e-10).

    Returns
    -------
    list of dict with keys level, max_diff, tol, passed.
    """
    config.validate()
    if config.variant != "cellwise":
        raise ConfigError("oracle check applies to the cellwise variant")
    if config.level_max > 2:
        raise ConfigError("oracle check is dense; restrict levels to <= 2")
    exact = _exact_solution(config)
    problem = control.benchmark_problem(exact)
    unbounded = np.isinf(config.lower) and np.isinf(config.upper)
    reports = []
    for level in config.levels:
        mesh = _build_mesh(config, level)
        solution = control.solve_discrete(
            problem, mesh, control.CELLWISE, tol=config.tol, solver=config.solver
        )
        values = solution.control.values.values
        if unbounded:
            reference = oracle.unconstrained_kkt(problem, mesh)[0]
            tol = KKT_MATCH_TOL
        else:
            reference = oracle.cellwise_qp_oracle(problem, mesh)
            tol = ORACLE_MATCH_TOL
        diff = float(np.max(np.abs(values - reference)))
        reports.append(
            {"level": level, "max_diff": diff, "tol": tol, "passed": diff <= tol}
        )
    return reports


def run_mesh_dump(config):
    """Write the level-range-low mesh as text to the output path."""
    config.validate()
    if config.out is None:
        raise ConfigError("mesh-dump requires an output path")
    mesh = _build_mesh(config, config.level_min)
    with open(config.out, "w", newline="\n") as handle:
        handle.write(format_mesh(mesh))
    return mesh


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser():
    parser = _Parser(prog="ptcontrol", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("study", "solve", "oracle", "mesh-dump"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="path to a key = value config file")
        p.add_argument("--variant", help="|".join(VARIANTS))
        p.add_argument("--levels", help="inclusive level range A..B")
        p.add_argument("--alpha", help="regularization weight")
        p.add_argument("--bounds", help="control bounds A,B (inf allowed)")
        p.add_argument("--out", help="output path")
        p.add_argument("--tol", help="solver tolerance")
        if name == "study":
            p.add_argument(
                "--parallel-levels", action="store_true",
                help="run study levels concurrently",
            )
    return parser


def _config_from_args(args):
    if args.config is not None:
        try:
            with open(args.config) as handle:
                text = handle.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}")
        config = parse_config(text)
    else:
        config = StudyConfig()
    fields = {}
    if args.variant is not None:
        fields["variant"] = args.variant
    if args.levels is not None:
        fields["level_min"], fields["level_max"] = _parse_levels(args.levels)
    if args.alpha is not None:
        fields["alpha"] = _parse_float(args.alpha, "alpha")
    if args.bounds is not None:
        fields["lower"], fields["upper"] = _parse_pair(args.bounds, "bounds")
    if args.out is not None:
        fields["out"] = args.out
    if args.tol is not None:
        fields["tol"] = _parse_float(args.tol, "tol")
    return replace(config, **fields).validate()


def main(argv=None):
    """Entry point; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        config = _config_from_args(args)
        if args.command == "study":
            records = run_study(config, parallel=args.parallel_levels)
            for r in records:
                eoc = "" if r.eoc is None else f" eoc={r.eoc:.3f}"
                print(
                    f"level {r.level}: h={r.h:.6g} error={r.error:.6g}{eoc}"
                )
            if config.out is not None:
                print(f"wrote {config.out}")
        elif args.command == "solve":
            solution = run_solve(config)
            print(
                f"converged in {solution.iterations} iterations, "
                f"residual {solution.residual:.3e}, wrote {config.out}"
            )
        elif args.command == "oracle":
            reports = run_oracle_check(config)
            failed = False
            for r in reports:
                status = "PASS" if r["passed"] else "FAIL"
                print(
                    f"level {r['level']}: max diff {r['max_diff']:.3e} "
                    f"(tol {r['tol']:g}) {status}"
                )
                failed = failed or not r["passed"]
            if failed:
                return 1
        else:
            mesh = run_mesh_dump(config)
            print(
                f"wrote {config.out} ({mesh.n_vertices} vertices, "
                f"{mesh.n_cells} cells)"
            )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 3
    except (control.DivergenceError, oracle.OracleError, fem.FactorizationError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
