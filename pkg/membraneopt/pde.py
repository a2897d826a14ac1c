"""
State equation solver and energy functional.

The discrete state equation is ``(L + diag(g)) u = f`` where ``L`` is the
5-point negative Laplacian with zero Dirichlet ghosts: ``L_ii = 4/h^2`` and
``L_ij = -1/h^2`` for interior neighbours. The energy is the cell-sum
quadrature ``Phi(g) = h^2 * sum(f * u)``.
"""

import logging
import weakref
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import Domain
from .exceptions import PreconditionError, SolverError
from .fields import ScalarField
from .metrics import get_metrics
from .utils import FloatArray

logger = logging.getLogger(__name__)

SolveMethod = Literal["auto", "cg", "dense"]

# Unknown count up to which "auto" factorizes densely.
DENSE_LIMIT = 400
# CG restarts from the last iterate when the true residual misses the target.
MAX_RESTARTS = 3

_laplacians: "weakref.WeakKeyDictionary[Domain, sp.csr_matrix]" = weakref.WeakKeyDictionary()


@dataclass(frozen=True)
class SolveResult:
    """
    Result of a state solve.

    Attributes:
        u: Solution field
        iterations: CG iterations over all restarts (0 for the dense path)
        residual_norm: Relative residual ||f - K u|| / ||f||
        energy: h^2 * sum(f * u)
        method: Path taken, "dense" or "cg"
    """

    u: ScalarField
    iterations: int
    residual_norm: float
    energy: float
    method: str


def laplacian(d: Domain) -> sp.csr_matrix:
    """5-point negative Laplacian of the domain (cached per domain)."""
    cached = _laplacians.get(d)
    if cached is not None:
        return cached

    n = d.n_cells
    inv_h2 = 1.0 / d.cell_area
    nb = d.neighbors
    rows_nb, cols_pos = np.nonzero(nb >= 0)
    rows = np.concatenate((np.arange(n), rows_nb))
    cols = np.concatenate((np.arange(n), nb[rows_nb, cols_pos]))
    data = np.concatenate((np.full(n, 4.0 * inv_h2), np.full(rows_nb.size, -inv_h2)))
    matrix = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
    matrix.sort_indices()
    _laplacians[d] = matrix
    return matrix


def state_operator(d: Domain, g: ScalarField) -> sp.csr_matrix:
    """``L + diag(g)``."""
    d.require_same(g.domain)
    return (laplacian(d) + sp.diags(g.values, format="csr")).tocsr()


def _relative_residual(matrix: sp.csr_matrix, u: FloatArray, b: FloatArray) -> float:
    return float(np.linalg.norm(b - matrix @ u) / np.linalg.norm(b))


def _validate(d: Domain, g: ScalarField, f: ScalarField, tol: float) -> None:
    d.require_same(g.domain)
    d.require_same(f.domain)
    if (g.values < 0).any():
        raise PreconditionError("Density g must be non-negative")
    if (f.values < 0).any():
        raise PreconditionError("Force f must be non-negative")
    if not (f.values > 0).any():
        raise PreconditionError("Force f must not be identically zero")
    if not 0 < tol < 1:
        raise PreconditionError(f"Tolerance must lie in (0, 1), got {tol}")


def _solve_dense(matrix: sp.csr_matrix, b: FloatArray) -> FloatArray:
    u: FloatArray = scipy.linalg.solve(matrix.toarray(), b, assume_a="pos")
    return u


def _solve_cg(
    matrix: sp.csr_matrix, b: FloatArray, tol: float, max_iter: int
) -> tuple[FloatArray, int, float]:
    preconditioner = sp.diags(1.0 / matrix.diagonal(), format="csr")
    iterations = 0

    def count(_: FloatArray) -> None:
        nonlocal iterations
        iterations += 1

    u: Optional[FloatArray] = None
    residual = float("inf")
    for attempt in range(MAX_RESTARTS + 1):
        u, info = spla.cg(
            matrix, b, x0=u, rtol=tol, atol=0.0, maxiter=max_iter, M=preconditioner,
            callback=count,
        )
        residual = _relative_residual(matrix, u, b)
        if residual <= tol:
            return u, iterations, residual
        logger.debug(
            f"CG attempt {attempt + 1} ended with residual {residual:.3e} (info={info}), "
            "restarting"
        )
    raise SolverError(residual=residual, iterations=iterations, tolerance=tol)


def solve_state(
    d: Domain,
    g: ScalarField,
    f: ScalarField,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
    method: SolveMethod = "auto",
) -> SolveResult:
    """
    Solve ``(L + diag(g)) u = f``.

    Args:
        d: Domain
        g: Non-negative density
        f: Non-negative, not identically zero force
        tol: Relative residual target in (0, 1)
        max_iter: CG iteration cap per attempt (default 20 * cell count)
        method: "dense", "cg" or "auto" (dense up to 400 unknowns)

    Returns:
        SolveResult with the state and its energy

    Raises:
        PreconditionError: On a negative g or f, zero f or bad tolerance
        SolverError: If CG misses the tolerance after all restarts
    """
    _validate(d, g, f, tol)
    matrix = state_operator(d, g)
    b = np.asarray(f.values)
    n = d.n_cells
    resolved = "dense" if method == "dense" or (method == "auto" and n <= DENSE_LIMIT) else "cg"
    metrics = get_metrics()

    if metrics is not None:
        with metrics.track_solve(resolved):
            u, iterations, residual = _dispatch(resolved, matrix, b, tol, max_iter or 20 * n)
        metrics.record_iterations(resolved, iterations)
    else:
        u, iterations, residual = _dispatch(resolved, matrix, b, tol, max_iter or 20 * n)

    field = ScalarField(d, u)
    phi = float(np.dot(b, u)) * d.cell_area
    logger.debug(
        f"State solve ({resolved}): n={n}, iterations={iterations}, "
        f"residual={residual:.3e}, energy={phi:.12g}"
    )
    return SolveResult(
        u=field, iterations=iterations, residual_norm=residual, energy=phi, method=resolved
    )


def _dispatch(
    method: str, matrix: sp.csr_matrix, b: FloatArray, tol: float, max_iter: int
) -> tuple[FloatArray, int, float]:
    if method == "dense":
        u = _solve_dense(matrix, b)
        residual = _relative_residual(matrix, u, b)
        if residual > tol:
            raise SolverError(residual=residual, iterations=0, tolerance=tol)
        return u, 0, residual
    return _solve_cg(matrix, b, tol, max_iter)


def solve_poisson(
    d: Domain,
    f: ScalarField,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
    method: SolveMethod = "auto",
) -> SolveResult:
    """Solve ``L v = f``, the state equation with g = 0."""
    return solve_state(d, ScalarField.constant(d, 0.0), f, tol, max_iter, method)


def energy(
    d: Domain,
    g: ScalarField,
    f: ScalarField,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
    method: SolveMethod = "auto",
) -> float:
    """Phi(g) = h^2 * sum(f * u_g)."""
    return solve_state(d, g, f, tol, max_iter, method).energy


def energy_identity_residual(d: Domain, g: ScalarField, f: ScalarField, u: ScalarField) -> float:
    """
    Relative gap between the two sides of the energy identity.

    ``|sum(f u) - (u^T L u + sum(g u^2))| / |sum(f u)|``, all sums times h^2.
    """
    d.require_same(u.domain)
    matrix = state_operator(d, g)
    uv = np.asarray(u.values)
    work = float(np.dot(np.asarray(f.values), uv))
    quadratic = float(np.dot(uv, matrix @ uv))
    return abs(work - quadratic) / abs(work)


def gateaux_derivative(
    d: Domain,
    g: ScalarField,
    direction: ScalarField,
    f: ScalarField,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
    method: SolveMethod = "auto",
) -> float:
    """
    Derivative of Phi at ``g`` towards ``direction``: ``-h^2 * sum((direction - g) * u_g^2)``.

    Raises:
        PreconditionError: If ``direction`` has a negative value
    """
    d.require_same(direction.domain)
    if (direction.values < 0).any():
        raise PreconditionError("Direction must be non-negative")
    u = solve_state(d, g, f, tol, max_iter, method).u.values
    return -float(np.dot(direction.values - g.values, u * u)) * d.cell_area


def variational_lower_bound(d: Domain, g: ScalarField, f: ScalarField, v: ScalarField) -> float:
    """
    ``2 h^2 sum(f v) - h^2 v^T (L + diag g) v``; never exceeds Phi(g).

    Test fields are zero outside the domain by construction.
    """
    d.require_same(v.domain)
    matrix = state_operator(d, g)
    vv = np.asarray(v.values)
    return (2.0 * float(np.dot(np.asarray(f.values), vv)) - float(np.dot(vv, matrix @ vv))) * (
        d.cell_area
    )
