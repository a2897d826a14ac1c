"""
Grid checks of the hypotheses on the force f.

A1: ``v_f <= f`` where ``v_f`` solves the Poisson problem with load f.
A2: ``f <= -Laplace(f)``. On the grid the Laplacian of f uses zero ghosts,
so cells next to the exterior see f extended by zero; those cells are counted
in ``boundary_cells_flagged`` and can be left out with ``exclude_boundary``.
"""

import logging
from dataclasses import asdict, dataclass, replace
from typing import Any, Optional

import numpy as np

from .domain import Domain
from .exceptions import PreconditionError
from .fields import ScalarField
from .pde import SolveMethod, laplacian, solve_poisson, solve_state
from .utils import FloatArray, tie_clusters

logger = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-10


@dataclass(frozen=True)
class AssumptionReport:
    """
    Outcome of a cellwise comparison ``lhs <= rhs``.

    Attributes:
        name: Which check produced the report ("A1", "A2", "domination")
        holds: True iff worst_violation <= tolerance
        worst_violation: max over checked cells of (lhs - rhs)+
        violating_cells: Cells where lhs - rhs exceeds the tolerance
        margin: min over checked cells of (rhs - lhs)
        tolerance: Absolute slack used
        boundary_cells_flagged: Checked cells whose stencil reaches a ghost
    """

    name: str
    holds: bool
    worst_violation: float
    violating_cells: int
    margin: float
    tolerance: float
    boundary_cells_flagged: int = 0

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class FlatSectionReport:
    """Largest set on which the state is constant (within the tie tolerance)."""

    largest_measure: float
    level: float
    cells: int
    support_measure: float
    tie_tol: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _require_force(d: Domain, f: ScalarField) -> None:
    d.require_same(f.domain)
    if (f.values < 0).any():
        raise PreconditionError("Force f must be non-negative")
    if not (f.values > 0).any():
        raise PreconditionError("Force f must not be identically zero")


def _compare(
    name: str, lhs: FloatArray, rhs: FloatArray, slack: float, boundary_flagged: int = 0
) -> AssumptionReport:
    excess = lhs - rhs
    worst = float(max(excess.max(), 0.0)) if excess.size else 0.0
    margin = float((-excess).min()) if excess.size else float("inf")
    report = AssumptionReport(
        name=name,
        holds=worst <= slack,
        worst_violation=worst,
        violating_cells=int(np.count_nonzero(excess > slack)),
        margin=margin,
        tolerance=slack,
        boundary_cells_flagged=boundary_flagged,
    )
    logger.debug(f"{name}: holds={report.holds}, worst={worst:.3e}, margin={margin:.3e}")
    return report


def check_a1(
    d: Domain,
    f: ScalarField,
    tol: float = DEFAULT_RTOL,
    solver_tol: float = 1e-10,
    method: SolveMethod = "auto",
) -> AssumptionReport:
    """
    Check ``v_f <= f`` cellwise with slack ``tol * max f``.

    Raises:
        PreconditionError: If f is negative somewhere or identically zero
        SolverError: If the Poisson solve fails
    """
    _require_force(d, f)
    v = solve_poisson(d, f, tol=solver_tol, method=method).u
    return _compare("A1", np.asarray(v.values), np.asarray(f.values), tol * f.max)


def check_a2(
    d: Domain, f: ScalarField, tol: float = DEFAULT_RTOL, exclude_boundary: bool = False
) -> AssumptionReport:
    """
    Check ``f <= L f`` cellwise with slack ``tol * max f``.

    Args:
        d: Domain
        f: Non-negative force
        tol: Relative slack
        exclude_boundary: Skip cells with a ghost neighbour

    Returns:
        AssumptionReport; ``boundary_cells_flagged`` counts checked boundary cells
    """
    _require_force(d, f)
    lap_f = laplacian(d) @ np.asarray(f.values)
    keep = np.ones(d.n_cells, dtype=bool)
    ring = d.boundary_cells()
    if exclude_boundary:
        keep[ring] = False
        flagged = 0
    else:
        flagged = int(ring.size)
    return _compare("A2", np.asarray(f.values)[keep], lap_f[keep], tol * f.max, flagged)


def check_domination(
    d: Domain,
    g: ScalarField,
    f: ScalarField,
    tol: float = DEFAULT_RTOL,
    solver_tol: float = 1e-10,
    method: SolveMethod = "auto",
) -> AssumptionReport:
    """
    Check ``u_g <= v_f`` cellwise.

    The reported margin is the smallest ``v_f - u_g`` over the support of g
    (over all cells when g vanishes), so a positive margin shows the
    domination is strict where material is present.
    """
    _require_force(d, f)
    u = np.asarray(solve_state(d, g, f, tol=solver_tol, method=method).u.values)
    v = np.asarray(solve_poisson(d, f, tol=solver_tol, method=method).u.values)
    report = _compare("domination", u, v, tol * float(v.max()))
    support = np.asarray(g.values) > 0
    if support.any():
        report = replace(report, margin=float((v - u)[support].min()))
    return report


def flat_sections(
    u: ScalarField, g: Optional[ScalarField] = None, tie_tol: Optional[float] = None
) -> FlatSectionReport:
    """
    Largest level set of ``u`` inside the support of ``g``.

    Values chained within ``tie_tol`` (default ``1e-12 * max|u|``) count as one
    level. Without ``g`` every cell is considered.
    """
    values = np.asarray(u.values)
    if g is not None:
        u.domain.require_same(g.domain)
        selected = np.asarray(g.values) > 0
    else:
        selected = np.ones(values.size, dtype=bool)
    area = u.domain.cell_area
    if tie_tol is None:
        tie_tol = 1e-12 * float(np.abs(values).max())
    if not selected.any():
        return FlatSectionReport(0.0, float("nan"), 0, 0.0, tie_tol)

    chosen = values[selected]
    labels = tie_clusters(chosen, tie_tol)
    counts = np.bincount(labels)
    biggest = int(counts.argmax())
    return FlatSectionReport(
        largest_measure=int(counts[biggest]) * area,
        level=float(chosen[labels == biggest].mean()),
        cells=int(counts[biggest]),
        support_measure=int(selected.sum()) * area,
        tie_tol=tie_tol,
    )
