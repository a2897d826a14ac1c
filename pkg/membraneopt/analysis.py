"""
Parameter sweeps and diagnostics for the two-material problem.

Sweeps solve one shape problem per parameter value and run checks on the
whole family:

- gamma sweeps: the threshold c does not increase, optimal sets are nested,
  states decrease cellwise, the optimal energy Psi strictly decreases and a
  central difference of Psi matches ``-(alpha - beta) c^2``;
- alpha sweeps: c strictly decreases, states decrease cellwise and, when a
  target alpha is approached, the optimal sets and energies converge.

Comparisons of c use the bracket [threshold_low, threshold_high] so that
grid resolution alone cannot fail a check.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .domain import CellSet, Domain
from .exceptions import PreconditionError, TheoremCheckFailed
from .fields import Generator, ScalarField, align_increasing
from .models import DiskSpec, OptimizeOptions, SolverOptions
from .optimize import (
    OptimizationResult,
    ShapeResult,
    _a1_status,
    cell_count,
    minimize_shape,
)
from .pde import gateaux_derivative
from .settings import get_settings
from .utils import FloatArray

logger = logging.getLogger(__name__)

STATE_RTOL = 1e-9


@dataclass(frozen=True)
class SweepRecord:
    """One row of a sweep table."""

    parameter: float
    psi: float
    c: float
    c_low: float
    c_high: float
    set_cells: CellSet
    gamma_effective: float
    k: int
    u: ScalarField = field(repr=False)

    @classmethod
    def from_shape(cls, parameter: float, shape: ShapeResult) -> "SweepRecord":
        return cls(
            parameter=parameter,
            psi=shape.psi,
            c=shape.c,
            c_low=shape.threshold_low,
            c_high=shape.threshold_high,
            set_cells=shape.set_cells,
            gamma_effective=shape.gamma_effective,
            k=shape.k,
            u=shape.u,
        )

    def to_row(self) -> dict[str, Any]:
        return {
            "parameter": self.parameter,
            "psi": self.psi,
            "c": self.c,
            "c_low": self.c_low,
            "c_high": self.c_high,
            "gamma_effective": self.gamma_effective,
            "k": self.k,
            "set_measure": self.set_cells.measure,
        }


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    passed: bool
    detail: str = ""
    value: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "detail": self.detail,
            "value": self.value,
        }


@dataclass(frozen=True)
class SweepReport:
    """
    Records and check outcomes of a sweep.

    Attributes:
        kind: "gamma" or "alpha"
        records: One record per parameter value, sorted by parameter
        checks: Outcome of every check run on the family
        derivative_errors: (gamma_effective, relative error) at interior points
            of a gamma sweep
    """

    kind: str
    records: list[SweepRecord]
    checks: list[CheckOutcome]
    derivative_errors: list[tuple[float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed(self) -> list[str]:
        return [check.name for check in self.checks if not check.passed]

    def check(self, name: str) -> CheckOutcome:
        for outcome in self.checks:
            if outcome.name == name:
                return outcome
        raise KeyError(name)

    def raise_if_failed(self) -> None:
        """
        Raises:
            TheoremCheckFailed: If any check failed
        """
        if not self.passed:
            raise TheoremCheckFailed(self.failed)


@dataclass(frozen=True)
class RadialProfile:
    """Per-bin statistics of a field over distance to the disk centre; NaN for empty bins."""

    radii: FloatArray
    means: FloatArray
    spreads: FloatArray
    counts: np.ndarray


def symmetric_difference(e1: CellSet, e2: CellSet) -> float:
    """Measure of the symmetric difference of two cell sets."""
    e1.domain.require_same(e2.domain)
    return int(np.setxor1d(e1.indices, e2.indices).size) * e1.domain.cell_area


def _run_shapes(
    d: Domain,
    f: ScalarField,
    jobs: Sequence[tuple[float, float]],
    beta: float,
    opts: OptimizeOptions,
    solver: Optional[SolverOptions],
    threads: Optional[int],
) -> list[ShapeResult]:
    """Solve ``(alpha, gamma)`` shape problems concurrently, keeping job order."""
    if opts.check_assumptions:
        _a1_status(d, f, opts, solver or SolverOptions())
    point_opts = opts.model_copy(update={"check_assumptions": False, "mode": "minimize"})

    def run(job: tuple[float, float]) -> ShapeResult:
        alpha, gamma = job
        return minimize_shape(d, f, alpha, beta, gamma, point_opts, solver)

    workers = threads or get_settings().threads
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))


def _pairwise(
    name: str, records: Sequence[SweepRecord], ok: Callable[[SweepRecord, SweepRecord], bool]
) -> CheckOutcome:
    bad = [
        f"{a.parameter:g}->{b.parameter:g}" for a, b in zip(records, records[1:]) if not ok(a, b)
    ]
    return CheckOutcome(name, not bad, "failing pairs: " + ", ".join(bad) if bad else "")


def _state_monotone(records: Sequence[SweepRecord]) -> CheckOutcome:
    def ok(a: SweepRecord, b: SweepRecord) -> bool:
        slack = STATE_RTOL * max(a.u.max, b.u.max)
        return bool((a.u.values >= b.u.values - slack).all())

    return _pairwise("state_monotone", records, ok)


def _nesting(records: Sequence[SweepRecord], tie_tol: float) -> CheckOutcome:
    """
    Sets grow with the parameter. A cell may leave only when its state ties the
    cut within ``tie_tol * max u``; every such tie is logged.
    """
    failures = []
    tied = 0
    for a, b in zip(records, records[1:]):
        missing = a.set_cells.difference(b.set_cells)
        if not len(missing):
            continue
        tie = tie_tol * b.u.max
        cut_ties = b.u.values[missing.indices] >= b.c_high - tie
        if cut_ties.all():
            tied += len(missing)
            logger.warning(
                f"{len(missing)} cells of the set at {a.parameter:g} left the set at "
                f"{b.parameter:g} through ties at the cut"
            )
        else:
            failures.append(f"{a.parameter:g}->{b.parameter:g} ({len(missing)} cells)")
    detail = "; ".join(failures) if failures else (f"{tied} cells tied at the cut" if tied else "")
    return CheckOutcome("nesting", not failures, detail, float(tied))


def sweep_gamma(
    d: Domain,
    f: ScalarField,
    alpha: float,
    beta: float,
    gammas: Sequence[float],
    opts: Optional[OptimizeOptions] = None,
    solver: Optional[SolverOptions] = None,
    derivative_tolerance: float = 0.10,
    threads: Optional[int] = None,
) -> SweepReport:
    """
    Solve the shape problem for each gamma and check the family.

    Checks: ``threshold_monotone`` (c_high at gamma_i >= c_low at gamma_{i+1}),
    ``nesting``, ``state_monotone``, ``energy_decreasing`` and ``derivative``
    (central difference of Psi against ``-(alpha - beta) c^2`` within
    ``derivative_tolerance`` relative error at interior points).

    Raises:
        PreconditionError: If gammas are not strictly increasing or two of them
            map to the same cell count
    """
    if not gammas:
        raise PreconditionError("gammas must not be empty")
    if any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise PreconditionError("gammas must be strictly increasing")
    counts = [cell_count(d, g) for g in gammas]
    if len(set(counts)) != len(counts):
        raise PreconditionError(f"gammas map to duplicate cell counts: {counts}")

    opts = opts or OptimizeOptions()
    logger.info(f"Gamma sweep over {len(gammas)} values on {d.n_cells} cells")
    shapes = _run_shapes(d, f, [(alpha, g) for g in gammas], beta, opts, solver, threads)
    records = [SweepRecord.from_shape(g, s) for g, s in zip(gammas, shapes)]

    checks = [
        _pairwise("threshold_monotone", records, lambda a, b: a.c_high >= b.c_low),
        _nesting(records, opts.tie_tol),
        _state_monotone(records),
        _pairwise("energy_decreasing", records, lambda a, b: b.psi < a.psi),
    ]

    errors: list[tuple[float, float]] = []
    for prev, mid, nxt in zip(records, records[1:], records[2:]):
        slope = (nxt.psi - prev.psi) / (nxt.gamma_effective - prev.gamma_effective)
        expected = -(alpha - beta) * mid.c**2
        errors.append((mid.gamma_effective, abs(slope - expected) / abs(expected)))
    if errors:
        worst = max(err for _, err in errors)
        checks.append(
            CheckOutcome(
                "derivative",
                worst <= derivative_tolerance,
                f"max relative error {worst:.4f} (tolerance {derivative_tolerance})",
                worst,
            )
        )
    else:
        checks.append(CheckOutcome("derivative", True, "fewer than three sweep points"))

    report = SweepReport("gamma", records, checks, errors)
    logger.info(f"Gamma sweep checks: {'passed' if report.passed else report.failed}")
    return report


def sweep_alpha(
    d: Domain,
    f: ScalarField,
    alphas: Sequence[float],
    beta: float,
    gamma: float,
    opts: Optional[OptimizeOptions] = None,
    solver: Optional[SolverOptions] = None,
    target_alpha: Optional[float] = None,
    final_cells_cap: int = 2,
    threads: Optional[int] = None,
) -> SweepReport:
    """
    Solve the shape problem for each alpha and check the family.

    Checks: ``threshold_decreasing`` (c_high at the smaller alpha exceeds c_low
    at the larger), ``state_monotone`` and ``energy_monotone``. With
    ``target_alpha`` the values are also ordered by distance to the target and
    ``set_stability`` (symmetric difference to the target set non-increasing,
    last one at most ``final_cells_cap`` cells) and ``energy_stability``
    (|Psi - Psi_target| non-increasing) are checked.

    Raises:
        PreconditionError: If an alpha is outside (beta, 1], alphas repeat, or a
            stability check is requested with beta = 0
    """
    if not alphas:
        raise PreconditionError("alphas must not be empty")
    values = list(alphas) + ([target_alpha] if target_alpha is not None else [])
    if len(set(values)) != len(values):
        raise PreconditionError("alphas must be distinct (and differ from the target)")
    if not (beta < min(values) and max(values) <= 1.0):
        raise PreconditionError(f"Need beta < alpha <= 1 for every alpha (beta={beta})")
    if target_alpha is not None and not beta > 0:
        raise PreconditionError("Set stability in alpha requires beta > 0")

    opts = opts or OptimizeOptions()
    params = sorted(values)
    logger.info(f"Alpha sweep over {len(params)} values on {d.n_cells} cells")
    shapes = _run_shapes(d, f, [(a, gamma) for a in params], beta, opts, solver, threads)
    records = [SweepRecord.from_shape(a, s) for a, s in zip(params, shapes)]

    checks = [
        _pairwise("threshold_decreasing", records, lambda a, b: a.c_high > b.c_low),
        _state_monotone(records),
        _pairwise("energy_monotone", records, lambda a, b: b.psi <= a.psi),
    ]

    if target_alpha is not None:
        target = next(r for r in records if r.parameter == target_alpha)
        approach = sorted(
            (r for r in records if r is not target),
            key=lambda r: -abs(r.parameter - target_alpha),
        )
        distances = [symmetric_difference(r.set_cells, target.set_cells) for r in approach]
        cap = final_cells_cap * d.cell_area
        monotone = all(b <= a for a, b in zip(distances, distances[1:]))
        checks.append(
            CheckOutcome(
                "set_stability",
                monotone and distances[-1] <= cap,
                "symmetric differences " + ", ".join(f"{x:.6g}" for x in distances),
                distances[-1],
            )
        )
        gaps = [abs(r.psi - target.psi) for r in approach]
        checks.append(
            CheckOutcome(
                "energy_stability",
                all(b <= a for a, b in zip(gaps, gaps[1:])),
                "energy gaps " + ", ".join(f"{x:.3e}" for x in gaps),
                gaps[-1],
            )
        )

    report = SweepReport("alpha", records, checks)
    logger.info(f"Alpha sweep checks: {'passed' if report.passed else report.failed}")
    return report


def radial_profile(d: Domain, field: ScalarField, bins: int = 24) -> RadialProfile:
    """
    Bin a field on a disk by centroid distance to the centre.

    Bins have equal width over [0, R]. Empty bins report NaN mean and spread.

    Raises:
        PreconditionError: If the domain is not a disk
    """
    if not isinstance(d.spec, DiskSpec):
        raise PreconditionError("radial_profile needs a disk domain")
    if bins < 1:
        raise PreconditionError("bins must be positive")
    d.require_same(field.domain)

    radius = d.spec.radius
    r = np.hypot(d.centroids[:, 0], d.centroids[:, 1])
    which = np.minimum((r / radius * bins).astype(np.int64), bins - 1)
    values = np.asarray(field.values)

    counts = np.bincount(which, minlength=bins)
    means = np.full(bins, np.nan)
    spreads = np.full(bins, np.nan)
    for b in np.flatnonzero(counts):
        chunk = values[which == b]
        means[b] = chunk.mean()
        spreads[b] = chunk.max() - chunk.min()
    radii = (np.arange(bins) + 0.5) * radius / bins
    return RadialProfile(radii=radii, means=means, spreads=spreads, counts=counts)


def radial_monotonicity_check(
    profile: RadialProfile,
    quantum: float,
    increasing: bool = False,
    max_transition_bins: int = 2,
    name: str = "radial_symmetry",
) -> CheckOutcome:
    """
    Bin means monotone in r and at most ``max_transition_bins`` transition bins.

    A transition bin has a spread of at least ``quantum``; for a piecewise
    constant field with level gap ``quantum`` these are the bins mixing two
    levels.
    """
    filled = profile.counts > 0
    means = profile.means[filled]
    scale = float(np.abs(means).max()) if means.size else 0.0
    slack = 1e-12 * scale
    steps = np.diff(means)
    monotone = bool((steps >= -slack).all() if increasing else (steps <= slack).all())
    spreads = profile.spreads[filled]
    transition = int(np.count_nonzero((spreads > 0) & (spreads >= quantum * (1 - 1e-9))))
    passed = monotone and transition <= max_transition_bins
    direction = "non-decreasing" if increasing else "non-increasing"
    detail = f"means {direction}: {monotone}; transition bins: {transition}"
    return CheckOutcome(name, passed, detail, float(transition))


def boundary_layer_check(shape: ShapeResult) -> CheckOutcome:
    """
    No alpha cell touches the exterior when the set fits inside the boundary ring.

    Not applicable (passes) when k exceeds the number of non-ring cells.
    """
    d = shape.set_cells.domain
    ring = d.boundary_cells()
    if shape.k > d.n_cells - ring.size:
        return CheckOutcome("boundary_layer", True, "not applicable: set larger than the core")
    touching = int(np.isin(shape.set_cells.indices, ring).sum())
    return CheckOutcome(
        "boundary_layer",
        touching == 0,
        f"{touching} alpha cells adjacent to the exterior",
        float(touching),
    )


def first_order_check(
    d: Domain,
    f: ScalarField,
    gen: Generator,
    result: OptimizationResult,
    rel_tol: float = 1e-8,
    solver_tol: float = 1e-10,
    tie_tol: float = 1e-12,
) -> CheckOutcome:
    """
    Directional derivative at a minimizer towards the u^2 alignment is >= -rel_tol * |Phi|.
    """
    u = result.u_opt.values
    w = ScalarField(d, u * u)
    direction = align_increasing(gen, w, tie_tol * float(w.values.max()))
    value = gateaux_derivative(d, result.g_opt, direction, f, tol=solver_tol)
    bound = -rel_tol * abs(result.phi)
    return CheckOutcome(
        "first_order", value >= bound, f"derivative {value:.3e} (bound {bound:.3e})", value
    )


def derivative_refinement_check(
    coarse: SweepReport, fine: SweepReport, slack: float = 1.5
) -> CheckOutcome:
    """
    The worst derivative error on the finer grid is at most ``slack`` times the coarser one.
    """
    if not coarse.derivative_errors or not fine.derivative_errors:
        raise PreconditionError("Both sweeps need at least three points")
    coarse_worst = max(err for _, err in coarse.derivative_errors)
    fine_worst = max(err for _, err in fine.derivative_errors)
    passed = fine_worst <= slack * coarse_worst
    if not passed:
        logger.warning(
            f"Derivative error grew under refinement: {coarse_worst:.4f} -> {fine_worst:.4f}"
        )
    return CheckOutcome(
        "derivative_refinement",
        passed,
        f"coarse {coarse_worst:.4f}, fine {fine_worst:.4f}, slack {slack}",
        fine_worst,
    )
