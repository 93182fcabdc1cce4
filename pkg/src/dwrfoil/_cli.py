"""Command line entry point: ``dwrfoil solve|adapt|optimize|replay|validate``."""

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, NoReturn, Optional, Sequence, Tuple

from dwrfoil._checks import run_checks
from dwrfoil._config import RunConfig, load_config, with_overrides
from dwrfoil._dwr import dwr_adapt_loop, save_dwr_history
from dwrfoil._env import SOLVER_ERRORS, evaluate_objective
from dwrfoil._euler import (
    PathLike,
    compute_forces,
    newton_solve,
    save_forces,
    save_history,
    save_solution,
)
from dwrfoil._geometry import fit_shape, load_shape, naca4_init, sample_curves, save_shape
from dwrfoil._mesh import UnstructuredMesh, generate_omesh, save_mesh
from dwrfoil._td3 import TrainingResult, save_trace, save_training, train
from dwrfoil.exceptions import DwrfoilError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SOLVER = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (section.key = value lines)")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory, overrides the configured one")
    common.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a single configuration key, may be repeated",
    )
    common.add_argument("-v", "--verbose", action="count", default=0, help="INFO logging, DEBUG when repeated")

    parser = _Parser(prog="dwrfoil", description="Airfoil drag optimization with DWR-adapted Euler solves.")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    commands.add_parser("solve", parents=[common], help="one flow solve and its forces")
    commands.add_parser("adapt", parents=[common], help="goal-oriented adaptation loop")
    commands.add_parser("optimize", parents=[common], help="TD3 shape optimization")
    replay = commands.add_parser("replay", parents=[common], help="re-evaluate a saved shape")
    replay.add_argument("shape", help="shape file written by optimize")
    commands.add_parser("validate", parents=[common], help="run the built-in property checks")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides: List[str] = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed = {args.seed}")
    if args.out is not None:
        overrides.append(f"out = {args.out}")
    return with_overrides(config, overrides) if overrides else config


def _output_dir(config: RunConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(config.dump(), encoding="utf-8")
    return out


def _baseline_mesh(config: RunConfig) -> UnstructuredMesh:
    geometry = config.geometry
    curves = fit_shape(naca4_init(geometry.thickness, geometry.n_points), geometry.degree, geometry.lambda_s)
    return generate_omesh(sample_curves(curves), config.mesh.radius, config.mesh.layers, curves=curves)


def run_solve(config: RunConfig, out: Path) -> None:
    mesh = _baseline_mesh(config)
    solver = config.solver
    solution = newton_solve(
        mesh, None, config.freestream, tol=solver.tol, max_iter=solver.max_iter, flux=solver.flux, cfl=solver.cfl
    )
    forces = compute_forces(mesh, solution, config.freestream)
    save_forces(forces, out / "forces.csv")
    save_solution(solution, out / "solution.txt")
    save_history(solution.history, out / "convergence.csv")
    save_mesh(mesh, out / "mesh.txt")
    print(f"Cd = {forces.cd:.7g}  Cl = {forces.cl:.7g}  ({solution.iterations} Newton steps)")


def run_adapt(config: RunConfig, out: Path) -> None:
    functional = "ratio" if config.objective == "lift_drag_ratio" else "drag"
    result = dwr_adapt_loop(
        _baseline_mesh(config),
        config.freestream,
        functional,
        refine_steps=config.dwr.refine_steps,
        tol=config.solver.tol,
        max_iter=config.solver.max_iter,
        fine_max_iter=config.dwr.fine_max_iter,
        k=config.dwr.k,
        flux=config.solver.flux,
        adjoint_tol=config.dwr.adjoint_tol,
    )
    save_dwr_history(result.history, out / "dwr_history.csv")
    save_mesh(result.mesh, out / "mesh.txt")
    save_solution(result.field, out / "solution.txt")
    print(f"{functional} = {result.value:.7g} after {len(result.history)} adaptation steps")


def _write_xy(path: Path, rows: Iterable[Tuple[float, float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "y"])
        for x, y in rows:
            writer.writerow([x, repr(float(y))])


def emit_traces(result: TrainingResult, config: RunConfig, out: PathLike) -> None:
    """Plot-ready traces plus the best shape and its mesh.

    ``drag_trace.csv`` starts at ``(0, D_0)`` and follows every executed step,
    ``noise_trace.csv`` holds the noise coefficient per training epoch and, for the
    lift/drag objective, ``ratio_trace.csv`` holds the ratio ``-D``.
    """
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    executed: List[Dict[str, Any]] = [row for row in result.trace if not row["retry_flag"]]
    drag = [(0, result.initial_objective)] + [(i, row["D"]) for i, row in enumerate(executed, start=1)]
    _write_xy(root / "drag_trace.csv", drag)
    noise: Dict[int, float] = {}
    for row in executed:
        if row["epoch"] >= 1:
            noise.setdefault(row["epoch"], row["noise_coeff"])
    _write_xy(root / "noise_trace.csv", sorted(noise.items()))
    if config.objective == "lift_drag_ratio":
        _write_xy(root / "ratio_trace.csv", [(x, -d) for x, d in drag])
    save_shape(result.best_shape, root / "shape.dat")
    save_mesh(result.best_state.mesh, root / "mesh.txt")


def run_optimize(config: RunConfig, out: Path) -> None:
    result = train(config)
    save_trace(result.trace, out / "trace.csv")
    save_training(result, config, out / "checkpoint")
    emit_traces(result, config, out)
    print(f"best objective {result.best_objective:.7g} (initial {result.initial_objective:.7g})")


def run_replay(config: RunConfig, out: Path, shape_path: str) -> None:
    shape = load_shape(shape_path)
    value = evaluate_objective(shape, config)
    with open(out / "replay.csv", "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["shape", "objective", "D"])
        writer.writerow([shape_path, config.objective, repr(value)])
    print(f"{config.objective}: D = {value:.7g}")


def run_validate(config: RunConfig) -> bool:
    results = run_checks(config.freestream, config.seed)
    for result in results:
        print(f"{'ok' if result.passed else 'FAIL':4} {result.name}: {result.detail}")
    return all(result.passed for result in results)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        config = _resolve_config(args)
        if args.command == "validate":
            return EXIT_OK if run_validate(config) else EXIT_CONFIG
        out = _output_dir(config)
        if args.command == "solve":
            run_solve(config, out)
        elif args.command == "adapt":
            run_adapt(config, out)
        elif args.command == "optimize":
            run_optimize(config, out)
        else:
            run_replay(config, out, args.shape)
    except SOLVER_ERRORS as exc:
        logger.error("%s", exc)
        print(f"dwrfoil: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    # any other library error comes from bad input
    except (DwrfoilError, OSError) as exc:
        logger.error("%s", exc)
        print(f"dwrfoil: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK

