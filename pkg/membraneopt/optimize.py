"""
Energy optimization over a rearrangement class.

Each outer iteration solves the state for the current density g, aligns the
generator with u^2 (ascending for minimization, descending for maximization)
and moves towards that alignment: the full step when it improves the energy
by more than ``energy_tol``, otherwise the first improving step of a
backtracking line search ``g + 2^-j (target - g)``. Line search iterates sit
inside the weak closure; when the loop ends on one, it is projected back to
the better of its own alignment and the best rearrangement evaluated so far.
A final swap search exchanges values between discordant cells while that
improves the energy. Only a run that ends aligned with its state counts as
converged.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .assumptions import check_a1
from .domain import CellSet, Domain
from .exceptions import PreconditionError
from .fields import Generator, ScalarField, align_decreasing, align_increasing
from .metrics import get_metrics
from .models import OptimizeOptions, SolverOptions
from .pde import SolveResult, solve_state
from .settings import get_settings
from .utils import count_discordant_pairs, relative_change, tie_clusters

logger = logging.getLogger(__name__)

BRUTE_FORCE_MAX_CELLS = 16
# Cells per level tried by the swap search, from each side of a level boundary
SWAP_CANDIDATES = 8

Aligner = Callable[[Generator, ScalarField, float], ScalarField]


@dataclass(frozen=True)
class OptimizationResult:
    """
    Outcome of a minimize or maximize run.

    Attributes:
        g_opt: Final density
        u_opt: State of the final density
        phi_history: Energy of the start and of every accepted iterate. In
            minimize mode it only rises at a projection back to the class.
        comonotone_violations: Discordant (g, u) pairs; against -u when maximizing
        converged: The run stopped on its own and ended with no violations
        iterations: Outer iterations performed
        mode: "minimize" or "maximize"
        stop_reason: fixed_point, stalled, line_search_exhausted, snapped,
            singleton or max_outer
        snapped: Whether a projection used the alignment of the interior iterate
        a1_holds: Result of the A1 check, None when it was skipped
        projections: Times an interior iterate was projected back to the class
        swaps: Improving value exchanges made by the final swap search
        relaxed_phi: Best energy reached inside the weak closure, None if the
            run never ended a descent there
    """

    g_opt: ScalarField
    u_opt: ScalarField
    phi_history: list[float]
    comonotone_violations: int
    converged: bool
    iterations: int
    mode: str
    stop_reason: str
    snapped: bool = False
    a1_holds: Optional[bool] = None
    projections: int = 0
    swaps: int = 0
    relaxed_phi: Optional[float] = None

    @property
    def phi(self) -> float:
        return self.phi_history[-1]


@dataclass(frozen=True)
class ShapeResult:
    """
    Optimal two-material layout.

    ``set_cells`` holds the alpha material. ``threshold_high`` and
    ``threshold_low`` are the k-th and (k+1)-th largest state values, which
    bracket the level c of the superlevel set; ``c`` is their midpoint.
    """

    set_cells: CellSet
    threshold_low: float
    threshold_high: float
    c: float
    psi: float
    u: ScalarField
    g: ScalarField
    gamma_effective: float
    k: int
    alpha: float
    beta: float
    optimization: OptimizationResult = field(repr=False)

    def is_superlevel_set(self) -> bool:
        """min of u over the set >= max of u outside it."""
        inside = self.set_cells.as_mask()
        u = self.u.values
        if inside.all() or not inside.any():
            return True
        return bool(u[inside].min() >= u[~inside].max())


@dataclass(frozen=True)
class BruteForceResult:
    set_cells: CellSet
    psi: float
    candidates: int


@dataclass(frozen=True)
class MultistartReport:
    """
    Agreement between optimizations started from different rearrangements.

    Attributes:
        results: One result per start, in seed order
        seeds: Seeds used
        phi_spread: max |phi_i - phi_j| / max |phi|
        max_l1_distance: max h^2 * sum |g_i - g_j|
        disagreeing_cells: max number of cells where two optima differ
    """

    results: list[OptimizationResult]
    seeds: list[int]
    phi_spread: float
    max_l1_distance: float
    disagreeing_cells: int


def comonotonicity_residual(
    g: ScalarField, u: ScalarField, tie_tol: Optional[float] = None
) -> int:
    """
    Number of cell pairs ordered oppositely by ``g`` and ``u``.

    Counts pairs (i, j) with ``u_i > u_j + tie_tol`` and ``g_i < g_j``, where
    g values are grouped into levels at relative resolution 1e-12. The default
    ``tie_tol`` is ``1e-12 * max|u|``. Runs in O(n log n).
    """
    g.domain.require_same(u.domain)
    gv = np.asarray(g.values)
    uv = np.asarray(u.values)
    if tie_tol is None:
        tie_tol = 1e-12 * float(np.abs(uv).max())
    levels = tie_clusters(gv, 1e-12 * float(np.abs(gv).max()))
    return count_discordant_pairs(levels, uv, tie_tol)


def _is_permutation(g: ScalarField, gen: Generator) -> bool:
    return bool(np.array_equal(np.sort(g.values), gen.ascending))


class _AlignmentOptimizer:
    """One optimization run; holds the iterate and its history."""

    def __init__(
        self,
        d: Domain,
        f: ScalarField,
        gen: Generator,
        opts: OptimizeOptions,
        solver: SolverOptions,
    ):
        self.d = d
        self.f = f
        self.gen = gen
        self.opts = opts
        self.solver = solver
        self.minimizing = opts.mode == "minimize"
        self.align: Aligner = align_increasing if self.minimizing else align_decreasing
        self.metrics = get_metrics()
        self._best: Optional[tuple[ScalarField, SolveResult]] = None

    def _solve(self, g: ScalarField) -> SolveResult:
        return solve_state(
            self.d,
            g,
            self.f,
            tol=self.opts.solver_tol,
            max_iter=self.solver.max_iter,
            method=self.solver.method,
        )

    def _better(self, candidate: float, current: float, margin: float) -> bool:
        if self.minimizing:
            return candidate < current - margin
        return candidate > current + margin

    def _target(self, state: SolveResult) -> ScalarField:
        w = state.u.values * state.u.values
        weight = ScalarField(self.d, w)
        return self.align(self.gen, weight, self.opts.tie_tol * float(w.max()))

    def _line_search(
        self, g: ScalarField, target: ScalarField, target_state: SolveResult, phi: float
    ) -> Optional[tuple[ScalarField, SolveResult, float]]:
        """First t = 2^-j with a strict improvement, or None."""
        if self._better(target_state.energy, phi, 0.0):
            return target, target_state, 1.0
        step = target.values - g.values
        tried = 0
        for j in range(1, self.opts.max_backtracks + 1):
            t = math.ldexp(1.0, -j)
            tried += 1
            trial = ScalarField(self.d, g.values + t * step)
            trial_state = self._solve(trial)
            if self._better(trial_state.energy, phi, 0.0):
                self._record_backtracks(tried)
                return trial, trial_state, t
        self._record_backtracks(tried)
        return None

    def _record_backtracks(self, count: int) -> None:
        if self.metrics is not None:
            self.metrics.record_backtracks(self.opts.mode, count)

    def _consider(self, g: ScalarField, state: SolveResult) -> None:
        """Keep the best rearrangement evaluated so far."""
        if self._best is None or self._better(state.energy, self._best[1].energy, 0.0):
            self._best = (g, state)

    def _project(self, state: SolveResult, phi: float) -> tuple[ScalarField, SolveResult, bool]:
        """
        Map an interior iterate back to the class: the better of its own
        alignment and the best rearrangement seen during the run.
        """
        snap = self._target(state)
        snap_state = self._solve(snap)
        self._consider(snap, snap_state)
        assert self._best is not None
        best, best_state = self._best
        if self._better(phi, best_state.energy, self.opts.snap_tol * abs(phi)):
            logger.info(
                f"Relaxed iterate at phi={phi:.15g} beats every rearrangement evaluated; "
                f"projecting to phi={best_state.energy:.15g}"
            )
        return best, best_state, best is snap

    def _swap_candidates(self, g: ScalarField, state: SolveResult) -> list[tuple[int, int]]:
        """Discordant cell pairs of adjacent levels, most discordant first."""
        u2 = state.u.values * state.u.values
        w = u2 if self.minimizing else -u2
        tie = self.opts.tie_tol * float(u2.max())
        levels = np.unique(g.values)
        pairs: list[tuple[float, int, int]] = []
        for low, high in zip(levels, levels[1:]):
            low_cells = np.flatnonzero(g.values == low)
            high_cells = np.flatnonzero(g.values == high)
            low_cells = low_cells[np.argsort(-w[low_cells], kind="stable")[:SWAP_CANDIDATES]]
            high_cells = high_cells[np.argsort(w[high_cells], kind="stable")[:SWAP_CANDIDATES]]
            for i in low_cells:
                for j in high_cells:
                    gap = float(w[i] - w[j])
                    if gap > tie:
                        pairs.append((gap, int(i), int(j)))
        pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
        return [(i, j) for _, i, j in pairs]

    def _swap_search(
        self, g: ScalarField, state: SolveResult, history: list[float]
    ) -> tuple[ScalarField, SolveResult, int]:
        """Exchange the values of discordant cells while that improves the energy."""
        swaps = 0
        improved = True
        while improved and swaps < self.opts.max_outer:
            improved = False
            for i, j in self._swap_candidates(g, state):
                values = np.array(g.values)
                values[i], values[j] = values[j], values[i]
                trial = ScalarField(self.d, values)
                trial_state = self._solve(trial)
                if self._better(trial_state.energy, state.energy, 0.0):
                    g, state = trial, trial_state
                    self._consider(g, state)
                    history.append(state.energy)
                    swaps += 1
                    improved = True
                    break
        if swaps:
            logger.debug(f"Swap search improved phi to {state.energy:.15g} in {swaps} swaps")
        return g, state, swaps

    def run(self, start: ScalarField, a1_holds: Optional[bool]) -> OptimizationResult:
        opts = self.opts
        g = start
        state = self._solve(g)
        phi = state.energy
        history = [phi]
        self._best = None
        self._consider(g, state)
        iterations = 0
        snapped = False
        projections = 0
        swaps = 0
        relaxed_phi: Optional[float] = None
        last_projection: Optional[np.ndarray] = None
        stop_reason = "max_outer"

        while True:
            stop_reason = "max_outer"
            while iterations < opts.max_outer:
                iterations += 1
                if self.metrics is not None:
                    self.metrics.record_outer_iteration(opts.mode)

                target = self._target(state)
                if np.array_equal(target.values, g.values):
                    stop_reason = "fixed_point"
                    break

                target_state = self._solve(target)
                self._consider(target, target_state)
                if self._better(target_state.energy, phi, opts.energy_tol * abs(phi)):
                    step: Optional[tuple[ScalarField, SolveResult, float]] = (
                        target,
                        target_state,
                        1.0,
                    )
                else:
                    step = self._line_search(g, target, target_state, phi)
                if step is None:
                    stop_reason = "line_search_exhausted"
                    break

                g, state, t = step
                previous, phi = phi, state.energy
                history.append(phi)
                logger.debug(f"Iteration {iterations}: phi={phi:.15g}, t={t:g}")
                if relative_change(previous, phi) < opts.energy_tol:
                    stop_reason = "stalled"
                    break

            if not _is_permutation(g, self.gen):
                if relaxed_phi is None or self._better(phi, relaxed_phi, 0.0):
                    relaxed_phi = phi
                g, state, used_snap = self._project(state, phi)
                phi = state.energy
                history.append(phi)
                projections += 1
                snapped = snapped or used_snap
                repeated = last_projection is not None and np.array_equal(
                    g.values, last_projection
                )
                last_projection = np.array(g.values)
                logger.debug(f"Projected interior iterate at iteration {iterations}: {phi:.15g}")
                if stop_reason == "max_outer":
                    break
                if not repeated and iterations < opts.max_outer:
                    continue
                if repeated:
                    stop_reason = "snapped"
            elif stop_reason == "max_outer":
                break

            g, state, made = self._swap_search(g, state, history)
            phi = state.energy
            swaps += made
            if not made or iterations >= opts.max_outer:
                break

        u = state.u
        if self.minimizing:
            violations = comonotonicity_residual(g, u, opts.tie_tol * u.max)
        else:
            violations = comonotonicity_residual(
                g, ScalarField(self.d, -u.values), opts.tie_tol * u.max
            )
        converged = stop_reason != "max_outer" and violations == 0
        if stop_reason != "max_outer" and violations:
            logger.warning(
                f"{opts.mode} stopped ({stop_reason}) with {violations} discordant pairs; "
                "the result is not aligned with its state"
            )

        logger.info(
            f"{opts.mode} finished: {stop_reason} after {iterations} iterations, "
            f"phi={phi:.15g}, violations={violations}, swaps={swaps}"
        )
        return OptimizationResult(
            g_opt=g,
            u_opt=u,
            phi_history=history,
            comonotone_violations=violations,
            converged=converged,
            iterations=iterations,
            mode=opts.mode,
            stop_reason=stop_reason,
            snapped=snapped,
            a1_holds=a1_holds,
            projections=projections,
            swaps=swaps,
            relaxed_phi=relaxed_phi,
        )


def _check_inputs(d: Domain, f: ScalarField, gen: Generator) -> None:
    d.require_same(f.domain)
    d.require_same(gen.domain)
    if (f.values < 0).any():
        raise PreconditionError("Force f must be non-negative")
    if not (f.values > 0).any():
        raise PreconditionError("Force f must not be identically zero")


def _a1_status(
    d: Domain, f: ScalarField, opts: OptimizeOptions, solver: SolverOptions
) -> Optional[bool]:
    if not opts.check_assumptions:
        return None
    report = check_a1(d, f, solver_tol=opts.solver_tol, method=solver.method)
    if not report.holds:
        logger.warning(
            f"Assumption A1 fails on {report.violating_cells} cells "
            f"(worst {report.worst_violation:.3e}); uniqueness and the optimality "
            "characterization are no longer guaranteed"
        )
    return report.holds


def _optimize(
    d: Domain,
    f: ScalarField,
    gen: Generator,
    opts: OptimizeOptions,
    solver: Optional[SolverOptions],
) -> OptimizationResult:
    _check_inputs(d, f, gen)
    solver = solver or SolverOptions()
    a1_holds = _a1_status(d, f, opts, solver)
    optimizer = _AlignmentOptimizer(d, f, gen, opts, solver)

    if gen.is_singleton:
        g = ScalarField(d, gen.sorted_values)
        state = optimizer._solve(g)
        logger.info("Rearrangement class has a single member; nothing to optimize")
        return OptimizationResult(
            g_opt=g,
            u_opt=state.u,
            phi_history=[state.energy],
            comonotone_violations=0,
            converged=True,
            iterations=1,
            mode=opts.mode,
            stop_reason="singleton",
            a1_holds=a1_holds,
        )

    if opts.seed is not None:
        start = gen.permuted(np.random.default_rng(opts.seed))
    else:
        start = optimizer.align(gen, f, opts.tie_tol * float(np.abs(f.values).max()))
    logger.info(f"Starting {opts.mode} on {d.n_cells} cells (seed={opts.seed})")
    return optimizer.run(start, a1_holds)


def minimize(
    d: Domain,
    f: ScalarField,
    gen: Generator,
    opts: Optional[OptimizeOptions] = None,
    solver: Optional[SolverOptions] = None,
) -> OptimizationResult:
    """
    Minimize the energy over the rearrangement class of ``gen``.

    Args:
        d: Domain
        f: Non-negative, not identically zero force
        gen: Generator of the class
        opts: Optimizer options (mode is forced to "minimize")
        solver: Method and iteration cap of the inner solves

    Returns:
        OptimizationResult; ``converged`` is False when ``max_outer`` was hit

    Raises:
        PreconditionError: On invalid inputs
        SolverError: If an inner solve fails
    """
    opts = (opts or OptimizeOptions()).model_copy(update={"mode": "minimize"})
    return _optimize(d, f, gen, opts, solver)


def maximize(
    d: Domain,
    f: ScalarField,
    gen: Generator,
    opts: Optional[OptimizeOptions] = None,
    solver: Optional[SolverOptions] = None,
) -> OptimizationResult:
    """
    Maximize the energy over the rearrangement class of ``gen``.

    The result is always a rearrangement. Maximizers need not be unique.
    """
    opts = (opts or OptimizeOptions()).model_copy(update={"mode": "maximize"})
    if not gen.is_singleton:
        logger.warning("Maximizers are not unique in general; the result depends on the start")
    return _optimize(d, f, gen, opts, solver)


def cell_count(d: Domain, gamma: float) -> int:
    """Number of cells realizing measure ``gamma``: round(gamma / h^2)."""
    return int(np.rint(gamma / d.cell_area))


def _check_materials(alpha: float, beta: float) -> None:
    if not 1.0 >= alpha > beta >= 0.0:
        raise PreconditionError(f"Need 1 >= alpha > beta >= 0, got alpha={alpha}, beta={beta}")


def shape_from_density(
    d: Domain,
    g: ScalarField,
    u: ScalarField,
    psi: float,
    alpha: float,
    beta: float,
    k: int,
    optimization: OptimizationResult,
) -> ShapeResult:
    """Extract the alpha set and the threshold bracket from a two-valued density."""
    set_cells = CellSet.from_mask(d, g.values == alpha)
    u_desc = np.sort(u.values)[::-1]
    high = float(u_desc[k - 1])
    low = float(u_desc[k]) if k < d.n_cells else 0.0
    return ShapeResult(
        set_cells=set_cells,
        threshold_low=low,
        threshold_high=high,
        c=0.5 * (low + high),
        psi=psi,
        u=u,
        g=g,
        gamma_effective=k * d.cell_area,
        k=k,
        alpha=alpha,
        beta=beta,
        optimization=optimization,
    )


def minimize_shape(
    d: Domain,
    f: ScalarField,
    alpha: float,
    beta: float,
    gamma: float,
    opts: Optional[OptimizeOptions] = None,
    solver: Optional[SolverOptions] = None,
) -> ShapeResult:
    """
    Best placement of a set of measure ``gamma`` holding material ``alpha``.

    ``gamma`` is realized by ``k = round(gamma / h^2)`` cells.

    Raises:
        PreconditionError: Unless 1 >= alpha > beta >= 0 and 0 < k < cell count
    """
    _check_materials(alpha, beta)
    if not 0 < gamma < d.measure:
        raise PreconditionError(f"gamma must lie in (0, {d.measure}), got {gamma}")
    k = cell_count(d, gamma)
    if k <= 0 or k >= d.n_cells:
        raise PreconditionError(f"gamma={gamma} maps to {k} of {d.n_cells} cells")

    opts = opts or OptimizeOptions()
    gen = Generator.two_valued(d, alpha, beta, k)
    result = minimize(d, f, gen, opts, solver)
    g, u, psi = result.g_opt, result.u_opt, result.phi
    shape = shape_from_density(d, g, u, psi, alpha, beta, k, result)
    logger.info(
        f"Shape k={k}: psi={psi:.12g}, c in [{shape.threshold_low:.6g}, "
        f"{shape.threshold_high:.6g}]"
    )
    return shape


def brute_force_min(
    d: Domain, f: ScalarField, alpha: float, beta: float, k: int, tol: float = 1e-12
) -> BruteForceResult:
    """
    Exhaustive search over all k-cell sets, dense solve per candidate.

    Candidates are visited in lexicographic order and only a strictly lower
    energy replaces the incumbent, so ties resolve to the first set.

    Raises:
        PreconditionError: If the domain has more than 16 cells, k is outside
            [1, n] or alpha <= beta
    """
    n = d.n_cells
    if n > BRUTE_FORCE_MAX_CELLS:
        raise PreconditionError(f"Brute force supports at most {BRUTE_FORCE_MAX_CELLS} cells")
    if not 1 <= k <= n:
        raise PreconditionError(f"k must lie in [1, {n}], got {k}")
    if not alpha > beta >= 0:
        raise PreconditionError("Need alpha > beta >= 0")
    d.require_same(f.domain)

    best_cells: Optional[tuple[int, ...]] = None
    best_psi = math.inf
    candidates = 0
    for cells in itertools.combinations(range(n), k):
        values = np.full(n, float(beta))
        values[list(cells)] = alpha
        psi = solve_state(d, ScalarField(d, values), f, tol=tol, method="dense").energy
        candidates += 1
        if psi < best_psi:
            best_psi, best_cells = psi, cells

    assert best_cells is not None
    logger.info(f"Brute force over {candidates} sets: psi*={best_psi:.15g}, set={best_cells}")
    return BruteForceResult(CellSet(d, np.array(best_cells)), best_psi, candidates)


def multistart(
    d: Domain,
    f: ScalarField,
    gen: Generator,
    runs: int,
    opts: Optional[OptimizeOptions] = None,
    solver: Optional[SolverOptions] = None,
    threads: Optional[int] = None,
) -> MultistartReport:
    """
    Minimize from ``runs`` random rearrangements and compare the optima.

    Starts use seeds ``base, base + 1, ...`` where ``base`` is ``opts.seed``
    (0 when unset). Runs execute on up to ``threads`` workers (default from
    ``MEMBRANE_OPT_THREADS``); results keep seed order.
    """
    if runs < 2:
        raise PreconditionError("multistart needs at least 2 runs")
    opts = opts or OptimizeOptions()
    _check_inputs(d, f, gen)
    if opts.check_assumptions:
        _a1_status(d, f, opts, solver or SolverOptions())
    base = opts.seed or 0
    seeds = [base + i for i in range(runs)]
    workers = threads or get_settings().threads

    def run(seed: int) -> OptimizationResult:
        run_opts = opts.model_copy(update={"seed": seed, "check_assumptions": False})
        return minimize(d, f, gen, run_opts, solver)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, seeds))

    phis = np.array([r.phi for r in results])
    scale = float(np.abs(phis).max())
    spread = float((phis.max() - phis.min()) / scale) if scale > 0 else 0.0
    max_l1 = 0.0
    disagreeing = 0
    for a, b in itertools.combinations(results, 2):
        diff = np.abs(a.g_opt.values - b.g_opt.values)
        max_l1 = max(max_l1, float(diff.sum()) * d.cell_area)
        disagreeing = max(disagreeing, int(np.count_nonzero(diff > 0)))

    logger.info(
        f"Multistart over {runs} seeds: phi spread {spread:.3e}, max L1 distance {max_l1:.3e}"
    )
    return MultistartReport(
        results=results,
        seeds=seeds,
        phi_spread=spread,
        max_l1_distance=max_l1,
        disagreeing_cells=disagreeing,
    )
