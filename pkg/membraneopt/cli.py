"""
Command-line front end.

Usage::

    membrane-opt <subcommand> --config run.json [--out DIR] [--seed N] [--log-level LEVEL]

Exit status: 0 on success, 2 on configuration or precondition errors, 3 on
solver or optimizer failure, 4 when a theorem check fails. Diagnostics go to
standard error; artifacts go to the output directory.
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from . import __version__
from .analysis import (
    CheckOutcome,
    SweepReport,
    boundary_layer_check,
    first_order_check,
    radial_monotonicity_check,
    radial_profile,
    sweep_alpha,
    sweep_gamma,
)
from .artifacts import (
    RunManifest,
    read_field_csv,
    write_field_csv,
    write_field_pgm,
    write_mask_pgm,
    write_table_csv,
)
from .assumptions import check_a1, check_a2, check_domination, flat_sections
from .domain import CellSet, Domain, build_domain
from .exceptions import (
    ConfigError,
    DomainConstructionError,
    DomainMismatchError,
    MembraneOptError,
    OptimizerError,
    PreconditionError,
    SolverError,
    TheoremCheckFailed,
)
from .fields import Generator, ScalarField, align_increasing
from .metrics import init_metrics
from .models import (
    ConstantDensity,
    ConstantForce,
    CsvForce,
    CsvGenerator,
    DiskSpec,
    EigenfunctionForce,
    MultiGenerator,
    RadialForce,
    RunConfig,
    TwoMaterialGenerator,
)
from .optimize import (
    OptimizationResult,
    ShapeResult,
    brute_force_min,
    cell_count,
    maximize,
    minimize,
    minimize_shape,
    multistart,
)
from .pde import solve_state
from .settings import get_settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4

ORACLE_RTOL = 1e-9
MULTISTART_SPREAD = 1e-8


# --------------------------------------------------------------------------- builders


def build_force(config: RunConfig, d: Domain) -> ScalarField:
    spec = config.force
    if isinstance(spec, ConstantForce):
        return ScalarField.constant(d, spec.value)
    if isinstance(spec, RadialForce):
        coefficients = spec.coefficients
        return ScalarField.from_function(
            d, lambda x, y: np.polynomial.polynomial.polyval(np.hypot(x, y), coefficients)
        )
    if isinstance(spec, EigenfunctionForce):
        ny, nx = d.grid_shape
        x0, y0 = d.origin
        width, height = nx * d.spacing, ny * d.spacing
        m, n = spec.mode

        def mode(x: np.ndarray, y: np.ndarray) -> np.ndarray:
            value = np.sin(m * np.pi * (x - x0) / width) * np.sin(n * np.pi * (y - y0) / height)
            return spec.amplitude * np.maximum(value, 0.0)

        return ScalarField.from_function(d, mode)
    if isinstance(spec, CsvForce):
        return read_field_csv(d, spec.path)
    raise ConfigError(f"Unsupported force kind: {type(spec).__name__}")


def build_generator(config: RunConfig, d: Domain) -> Generator:
    spec = config.generator
    if spec is None:
        raise ConfigError("This subcommand needs a 'generator' section")
    if isinstance(spec, TwoMaterialGenerator):
        gamma = spec.gamma * d.measure if spec.relative else spec.gamma
        k = cell_count(d, gamma)
        if not 0 <= k <= d.n_cells:
            raise PreconditionError(f"gamma={gamma} maps to {k} of {d.n_cells} cells")
        return Generator.two_valued(d, spec.alpha, spec.beta, k)
    if isinstance(spec, MultiGenerator):
        return Generator.from_fractions(d, spec.values, spec.fractions)
    if isinstance(spec, CsvGenerator):
        return Generator.from_field(read_field_csv(d, spec.path))
    raise ConfigError(f"Unsupported generator kind: {type(spec).__name__}")


def two_material(config: RunConfig) -> TwoMaterialGenerator:
    spec = config.generator
    if not isinstance(spec, TwoMaterialGenerator):
        raise ConfigError("This subcommand needs a 'two_material' generator")
    return spec


def build_density(config: RunConfig, d: Domain, f: ScalarField) -> ScalarField:
    """Explicit density, else the generator aligned with f, else zero."""
    spec = config.density
    if isinstance(spec, ConstantDensity):
        return ScalarField.constant(d, spec.value)
    if spec is not None:
        return read_field_csv(d, spec.path)
    if config.generator is not None:
        return align_increasing(build_generator(config, d), f)
    return ScalarField.constant(d, 0.0)


# --------------------------------------------------------------------------- run context


@dataclass
class RunContext:
    """Everything a subcommand handler needs, plus the manifest it fills in."""

    config: RunConfig
    domain: Domain
    force: ScalarField
    out: Path
    manifest: RunManifest
    checks: list[CheckOutcome] = field(default_factory=list)

    def wants(self, fmt: str) -> bool:
        return fmt in self.config.output.formats

    def emit_field(self, name: str, values: ScalarField) -> None:
        if self.wants("csv"):
            self._record(write_field_csv(values, self.out / f"{name}.csv"))
        if self.wants("pgm"):
            path = self.out / f"{name}.pgm"
            self.manifest.field_scales[name] = write_field_pgm(values, path)
            self._record(path)

    def emit_mask(self, name: str, cells: CellSet) -> None:
        if self.wants("pgm"):
            self._record(write_mask_pgm(cells, self.out / f"{name}.pgm"))

    def emit_table(self, name: str, rows: Sequence[dict[str, Any]]) -> None:
        if self.wants("csv"):
            self._record(write_table_csv(rows, self.out / f"{name}.csv"))

    def add_check(self, outcome: CheckOutcome) -> None:
        self.checks.append(outcome)
        self.manifest.checks.append(outcome.to_dict())

    def _record(self, path: Path) -> None:
        self.manifest.artifacts.append(path.name)

    @property
    def solver_tol(self) -> float:
        return self.config.solver.tol


def _optimization_summary(result: OptimizationResult) -> dict[str, Any]:
    return {
        "phi": result.phi,
        "phi_history": result.phi_history,
        "iterations": result.iterations,
        "converged": result.converged,
        "stop_reason": result.stop_reason,
        "snapped": result.snapped,
        "comonotone_violations": result.comonotone_violations,
        "a1_holds": result.a1_holds,
    }


def _shape_summary(shape: ShapeResult) -> dict[str, Any]:
    return {
        "psi": shape.psi,
        "c": shape.c,
        "c_low": shape.threshold_low,
        "c_high": shape.threshold_high,
        "k": shape.k,
        "gamma_effective": shape.gamma_effective,
        "set_cells": [int(i) for i in shape.set_cells.indices],
        "optimization": _optimization_summary(shape.optimization),
    }


def _require_converged(result: OptimizationResult) -> None:
    if not result.converged:
        raise OptimizerError(iterations=result.iterations, stop_reason=result.stop_reason)


# --------------------------------------------------------------------------- subcommands


def cmd_solve(ctx: RunContext) -> None:
    g = build_density(ctx.config, ctx.domain, ctx.force)
    result = solve_state(
        ctx.domain,
        g,
        ctx.force,
        tol=ctx.solver_tol,
        max_iter=ctx.config.solver.max_iter,
        method=ctx.config.solver.method,
    )
    ctx.emit_field("g", g)
    ctx.emit_field("u", result.u)
    ctx.manifest.results.update(
        energy=result.energy,
        iterations=result.iterations,
        residual_norm=result.residual_norm,
        method=result.method,
        cells=ctx.domain.n_cells,
    )


def cmd_check(ctx: RunContext) -> None:
    d, f = ctx.domain, ctx.force
    method = ctx.config.solver.method
    a1 = check_a1(d, f, solver_tol=ctx.solver_tol, method=method)
    a2 = check_a2(d, f)
    ctx.manifest.results.update(a1=a1.to_dict(), a2=a2.to_dict())
    if a2.holds and not a1.holds:
        logger.error("A2 holds but A1 fails; the grid violates the discrete maximum principle")
    if ctx.config.generator is not None or ctx.config.density is not None:
        g = build_density(ctx.config, d, f)
        domination = check_domination(d, g, f, solver_tol=ctx.solver_tol, method=method)
        u = solve_state(d, g, f, tol=ctx.solver_tol, method=method).u
        ctx.manifest.results.update(
            domination=domination.to_dict(), flat_sections=flat_sections(u, g).to_dict()
        )
    print(f"A1 holds: {a1.holds} (worst {a1.worst_violation:.3e})")
    print(f"A2 holds: {a2.holds} (worst {a2.worst_violation:.3e})")


def _run_optimizer(ctx: RunContext, optimizer: Callable[..., OptimizationResult]) -> None:
    gen = build_generator(ctx.config, ctx.domain)
    result = optimizer(ctx.domain, ctx.force, gen, ctx.config.optimizer, ctx.config.solver)
    ctx.emit_field("g_opt", result.g_opt)
    ctx.emit_field("u_opt", result.u_opt)
    ctx.manifest.results.update(_optimization_summary(result))
    if result.mode == "minimize" and result.converged:
        ctx.add_check(first_order_check(ctx.domain, ctx.force, gen, result))
    if isinstance(ctx.domain.spec, DiskSpec):
        profile = radial_profile(ctx.domain, result.g_opt, ctx.config.sweep.bins)
        levels = np.unique(gen.sorted_values)
        quantum = float(np.diff(levels).min()) if levels.size > 1 else 0.0
        ctx.add_check(
            radial_monotonicity_check(
                profile,
                quantum,
                increasing=result.mode == "maximize",
                max_transition_bins=2 * max(levels.size - 1, 1),
            )
        )
    print(f"{result.mode}: phi={result.phi:.15g} ({result.stop_reason})")
    _require_converged(result)


def cmd_minimize(ctx: RunContext) -> None:
    _run_optimizer(ctx, minimize)


def cmd_maximize(ctx: RunContext) -> None:
    _run_optimizer(ctx, maximize)


def cmd_shape(ctx: RunContext) -> None:
    spec = two_material(ctx.config)
    d = ctx.domain
    gamma = spec.gamma * d.measure if spec.relative else spec.gamma
    shape = minimize_shape(
        d, ctx.force, spec.alpha, spec.beta, gamma, ctx.config.optimizer, ctx.config.solver
    )
    ctx.emit_mask("set", shape.set_cells)
    ctx.emit_field("u", shape.u)
    ctx.manifest.results.update(_shape_summary(shape))
    ctx.add_check(
        CheckOutcome("superlevel_set", shape.is_superlevel_set(), "min u on E >= max u off E")
    )
    ctx.add_check(boundary_layer_check(shape))
    print(
        f"shape: psi={shape.psi:.15g}, "
        f"c in [{shape.threshold_low:.6g}, {shape.threshold_high:.6g}]"
    )
    _require_converged(shape.optimization)


def _emit_sweep(ctx: RunContext, report: SweepReport, prefix: str) -> None:
    for i, record in enumerate(report.records):
        ctx.emit_mask(f"mask_{prefix}_{i:03d}", record.set_cells)
    ctx.emit_table(f"sweep_{prefix}", [r.to_row() for r in report.records])
    for outcome in report.checks:
        ctx.add_check(outcome)
    ctx.manifest.results.update(
        records=[r.to_row() for r in report.records],
        derivative_errors=report.derivative_errors,
    )
    for outcome in report.checks:
        print(f"{outcome.name}: {'pass' if outcome.passed else 'FAIL'} {outcome.detail}")


def cmd_sweep_gamma(ctx: RunContext) -> None:
    spec = two_material(ctx.config)
    sweep = ctx.config.sweep
    if not sweep.gammas:
        raise ConfigError("sweep.gammas must not be empty")
    d = ctx.domain
    gammas = [g * d.measure for g in sweep.gammas] if sweep.relative else list(sweep.gammas)
    report = sweep_gamma(
        d,
        ctx.force,
        spec.alpha,
        spec.beta,
        gammas,
        ctx.config.optimizer,
        ctx.config.solver,
        derivative_tolerance=sweep.derivative_tolerance,
    )
    _emit_sweep(ctx, report, "gamma")


def cmd_sweep_alpha(ctx: RunContext) -> None:
    spec = two_material(ctx.config)
    sweep = ctx.config.sweep
    if not sweep.alphas:
        raise ConfigError("sweep.alphas must not be empty")
    d = ctx.domain
    gamma = spec.gamma * d.measure if spec.relative else spec.gamma
    report = sweep_alpha(
        d,
        ctx.force,
        sweep.alphas,
        spec.beta,
        gamma,
        ctx.config.optimizer,
        ctx.config.solver,
        target_alpha=sweep.target_alpha,
        final_cells_cap=sweep.final_cells_cap,
    )
    _emit_sweep(ctx, report, "alpha")


def cmd_oracle(ctx: RunContext) -> None:
    spec = two_material(ctx.config)
    d, f = ctx.domain, ctx.force
    gamma = spec.gamma * d.measure if spec.relative else spec.gamma
    k = cell_count(d, gamma)
    exhaustive = brute_force_min(d, f, spec.alpha, spec.beta, k)
    shape = minimize_shape(
        d, f, spec.alpha, spec.beta, gamma, ctx.config.optimizer, ctx.config.solver
    )
    gap = abs(shape.psi - exhaustive.psi) / abs(exhaustive.psi)
    ctx.add_check(
        CheckOutcome("oracle_energy", gap <= ORACLE_RTOL, f"relative gap {gap:.3e}", gap)
    )
    differing = np.setxor1d(shape.set_cells.indices, exhaustive.set_cells.indices)
    # Sets may differ only on cells whose states tie at the cut.
    tie = ctx.config.optimizer.tie_tol * shape.u.max
    same = differing.size == 0 or float(np.ptp(shape.u.values[differing])) <= tie
    ctx.add_check(
        CheckOutcome("oracle_set", same, f"{differing.size} cells differ", float(differing.size))
    )
    ctx.emit_mask("set", shape.set_cells)
    ctx.emit_mask("set_oracle", exhaustive.set_cells)
    ctx.manifest.results.update(
        psi=shape.psi, psi_oracle=exhaustive.psi, candidates=exhaustive.candidates, k=k
    )
    print(f"oracle: psi={exhaustive.psi:.15g}, optimizer psi={shape.psi:.15g}")


def cmd_multistart(ctx: RunContext) -> None:
    gen = build_generator(ctx.config, ctx.domain)
    report = multistart(
        ctx.domain,
        ctx.force,
        gen,
        ctx.config.multistart.runs,
        ctx.config.optimizer,
        ctx.config.solver,
    )
    ctx.add_check(
        CheckOutcome(
            "multistart_agreement",
            report.phi_spread < MULTISTART_SPREAD,
            f"phi spread {report.phi_spread:.3e}, max L1 distance {report.max_l1_distance:.3e}",
            report.phi_spread,
        )
    )
    ctx.emit_field("g_opt", report.results[0].g_opt)
    ctx.manifest.results.update(
        seeds=report.seeds,
        phis=[r.phi for r in report.results],
        phi_spread=report.phi_spread,
        max_l1_distance=report.max_l1_distance,
        disagreeing_cells=report.disagreeing_cells,
    )
    print(f"multistart: phi spread {report.phi_spread:.3e} over {len(report.seeds)} runs")


COMMANDS: dict[str, tuple[Callable[[RunContext], None], str]] = {
    "solve": (cmd_solve, "Solve the state equation and report the energy"),
    "check": (cmd_check, "Check assumptions A1 and A2 on the force"),
    "minimize": (cmd_minimize, "Minimize the energy over a rearrangement class"),
    "maximize": (cmd_maximize, "Maximize the energy over a rearrangement class"),
    "shape": (cmd_shape, "Optimal two-material layout"),
    "sweep-gamma": (cmd_sweep_gamma, "Sweep the measure of the alpha region"),
    "sweep-alpha": (cmd_sweep_alpha, "Sweep the density of the stronger material"),
    "oracle": (cmd_oracle, "Compare the optimizer with exhaustive search"),
    "multistart": (cmd_multistart, "Minimize from several random starts"),
}


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="membrane-opt", description="Rearrangement optimization for membrane problems"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", type=Path, required=True, help="JSON run configuration")
        sub.add_argument("--out", type=Path, help="Output directory (overrides output.dir)")
        sub.add_argument("--seed", type=int, help="Seed for random starts (overrides config)")
        sub.add_argument(
            "--log-level",
            choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
            help="Log level (default from MEMBRANE_OPT_LOG_LEVEL)",
        )
    return parser


def _apply_overrides(config: RunConfig, out: Optional[Path], seed: Optional[int]) -> RunConfig:
    if seed is not None:
        if seed < 0:
            raise ConfigError("--seed must be non-negative")
        optimizer = config.optimizer.model_copy(update={"seed": seed})
        config = config.model_copy(update={"optimizer": optimizer})
    if out is not None:
        output = config.output.model_copy(update={"dir": out})
        config = config.model_copy(update={"output": output})
    return config


def run(command: str, config: RunConfig) -> RunContext:
    """Execute one subcommand; artifacts are written even when the handler raises."""
    handler, _ = COMMANDS[command]
    settings = get_settings()
    metrics = init_metrics() if settings.enable_metrics else None

    d = build_domain(config.domain)
    out = config.output.dir
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest.start(command, config, config.optimizer.seed, __version__)
    ctx = RunContext(
        config=config, domain=d, force=build_force(config, d), out=out, manifest=manifest
    )
    logger.info(f"Run {manifest.run_id}: {command} on {d.n_cells} cells, output in {out}")

    try:
        handler(ctx)
    finally:
        if metrics is not None and metrics.enabled:
            path = out / "metrics.prom"
            path.write_bytes(metrics.render())
            manifest.artifacts.append(path.name)
        if ctx.wants("json"):
            manifest.write(out / "manifest.json")

    failed = [c.name for c in ctx.checks if not c.passed]
    if failed:
        raise TheoremCheckFailed(failed)
    return ctx


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = get_settings()
    logging.basicConfig(
        stream=sys.stderr,
        level=args.log_level or settings.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = _apply_overrides(RunConfig.from_file(args.config), args.out, args.seed)
        run(args.command, config)
    except ValidationError as e:
        print(f"error: invalid configuration:\n{e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, DomainConstructionError, DomainMismatchError, PreconditionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, OptimizerError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except TheoremCheckFailed as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CHECK
    except MembraneOptError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
