"""
Discretized planar domains.

A domain is a uniform grid of square cells of side ``h`` together with a mask
of interior cells. Cells outside the mask are Dirichlet ghosts: the state is
zero there. Interior cells are numbered in row-major order of the grid, rows
running upwards in y, and every array indexed by cells follows that order.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator, Optional, Union

import numpy as np

from .exceptions import DomainConstructionError, DomainMismatchError, PreconditionError
from .models import DiskSpec, DumbbellSpec, RectangleSpec
from .utils import FloatArray, IntArray

logger = logging.getLogger(__name__)

AnyDomainSpec = Union[RectangleSpec, DiskSpec, DumbbellSpec]

# Offsets (di, dj) of the left, right, lower and upper neighbour.
NEIGHBOR_OFFSETS = ((0, -1), (0, 1), (-1, 0), (1, 0))


@dataclass(frozen=True, eq=False)
class Domain:
    """
    Masked uniform grid.

    Attributes:
        spacing: Cell side h
        mask: Boolean array of shape (ny, nx); True marks interior cells
        origin: Coordinates (x0, y0) of the lower-left grid corner
        spec: The spec the domain was built from, if any

    Example:
        >>> d = build_domain(RectangleSpec(width=1, height=1, resolution=3))
        >>> d.n_cells, d.measure
        (9, 1.0)
    """

    spacing: float
    mask: np.ndarray
    origin: tuple[float, float] = (0.0, 0.0)
    spec: Optional[AnyDomainSpec] = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if not self.spacing > 0:
            raise PreconditionError(f"Spacing must be positive, got {self.spacing}")
        mask = np.array(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise PreconditionError("Mask must be two-dimensional")
        if not mask.any():
            raise DomainConstructionError("Domain has no interior cells")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def grid_shape(self) -> tuple[int, int]:
        """(ny, nx) of the underlying grid."""
        ny, nx = self.mask.shape
        return ny, nx

    @cached_property
    def cell_index(self) -> IntArray:
        """(n, 2) array of (row, column) grid indices of the interior cells."""
        idx = np.argwhere(self.mask).astype(np.int64)
        idx.setflags(write=False)
        return idx

    @property
    def n_cells(self) -> int:
        return int(self.cell_index.shape[0])

    @property
    def cell_area(self) -> float:
        return self.spacing * self.spacing

    @property
    def measure(self) -> float:
        """Total measure: cell count times h^2."""
        return self.n_cells * self.cell_area

    @cached_property
    def centroids(self) -> FloatArray:
        """(n, 2) array of cell centroid coordinates (x, y)."""
        h = self.spacing
        x0, y0 = self.origin
        rows = self.cell_index[:, 0]
        cols = self.cell_index[:, 1]
        xy = np.column_stack((x0 + (cols + 0.5) * h, y0 + (rows + 0.5) * h))
        xy.setflags(write=False)
        return xy

    @cached_property
    def lookup(self) -> IntArray:
        """Grid-shaped array mapping each grid cell to its cell number, -1 outside."""
        table = np.full(self.mask.shape, -1, dtype=np.int64)
        table[self.mask] = np.arange(self.n_cells, dtype=np.int64)
        table.setflags(write=False)
        return table

    @cached_property
    def neighbors(self) -> IntArray:
        """(n, 4) neighbour cell numbers (left, right, down, up); -1 for ghosts."""
        ny, nx = self.grid_shape
        padded = np.full((ny + 2, nx + 2), -1, dtype=np.int64)
        padded[1:-1, 1:-1] = self.lookup
        rows = self.cell_index[:, 0] + 1
        cols = self.cell_index[:, 1] + 1
        nb = np.column_stack([padded[rows + di, cols + dj] for di, dj in NEIGHBOR_OFFSETS])
        nb.setflags(write=False)
        return nb

    def boundary_cells(self) -> IntArray:
        """Cell numbers of interior cells with at least one ghost neighbour."""
        return np.flatnonzero((self.neighbors < 0).any(axis=1))

    def same_grid(self, other: "Domain") -> bool:
        """True when both domains have identical spacing, origin and mask."""
        if self is other:
            return True
        return (
            self.spacing == other.spacing
            and self.origin == other.origin
            and self.mask.shape == other.mask.shape
            and bool(np.array_equal(self.mask, other.mask))
        )

    def require_same(self, other: "Domain") -> None:
        """
        Raise if ``other`` lives on a different grid.

        Raises:
            DomainMismatchError: If the grids differ
        """
        if not self.same_grid(other):
            raise DomainMismatchError("Objects live on different domains")


@dataclass(frozen=True, eq=False)
class CellSet:
    """A set of interior cells of one domain, stored as sorted cell numbers."""

    domain: Domain
    indices: IntArray

    def __post_init__(self) -> None:
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        if idx.size and (idx[0] < 0 or idx[-1] >= self.domain.n_cells):
            raise PreconditionError("Cell number out of range")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_mask(cls, domain: Domain, selected: np.ndarray) -> "CellSet":
        """Build from a boolean array over the domain's cells."""
        selected = np.asarray(selected, dtype=bool)
        if selected.shape != (domain.n_cells,):
            raise PreconditionError("Selection must have one entry per cell")
        return cls(domain, np.flatnonzero(selected))

    def __len__(self) -> int:
        return int(self.indices.size)

    def __contains__(self, cell: object) -> bool:
        if not isinstance(cell, (int, np.integer)):
            return False
        pos = int(np.searchsorted(self.indices, cell))
        return pos < self.indices.size and int(self.indices[pos]) == int(cell)

    def __iter__(self) -> Iterator[int]:
        return iter(int(i) for i in self.indices)

    @property
    def measure(self) -> float:
        return len(self) * self.domain.cell_area

    def as_mask(self) -> np.ndarray:
        """Boolean array over the domain's cells."""
        selected = np.zeros(self.domain.n_cells, dtype=bool)
        selected[self.indices] = True
        return selected

    def issubset(self, other: "CellSet") -> bool:
        self.domain.require_same(other.domain)
        return bool(np.isin(self.indices, other.indices).all())

    def difference(self, other: "CellSet") -> "CellSet":
        self.domain.require_same(other.domain)
        return CellSet(self.domain, np.setdiff1d(self.indices, other.indices))

    def same_cells(self, other: "CellSet") -> bool:
        self.domain.require_same(other.domain)
        return bool(np.array_equal(self.indices, other.indices))


def _grid_mask(
    nx: int,
    ny: int,
    spacing: float,
    origin: tuple[float, float],
    inside: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> np.ndarray:
    x0, y0 = origin
    xs = x0 + (np.arange(nx) + 0.5) * spacing
    ys = y0 + (np.arange(ny) + 0.5) * spacing
    xx, yy = np.meshgrid(xs, ys)
    return np.asarray(inside(xx, yy), dtype=bool)


def _build_rectangle(spec: RectangleSpec) -> Domain:
    h = max(spec.width, spec.height) / spec.resolution
    nx = max(1, math.ceil(spec.width / h - 1e-9))
    ny = max(1, math.ceil(spec.height / h - 1e-9))
    mask = _grid_mask(
        nx, ny, h, (0.0, 0.0), lambda x, y: (x < spec.width) & (y < spec.height)
    )
    return Domain(spacing=h, mask=mask, origin=(0.0, 0.0), spec=spec)


def _build_disk(spec: DiskSpec) -> Domain:
    r = spec.radius
    n = spec.resolution
    h = 2.0 * r / n
    origin = (-r, -r)
    mask = _grid_mask(n, n, h, origin, lambda x, y: x * x + y * y < r * r)
    return Domain(spacing=h, mask=mask, origin=origin, spec=spec)


def _build_dumbbell(spec: DumbbellSpec) -> Domain:
    r = spec.lobe_radius
    half_neck = spec.neck_length / 2.0
    centre = half_neck + r
    half_width = centre + r
    h = 2.0 * half_width / spec.resolution
    nx = spec.resolution
    ny = max(1, math.ceil(2.0 * r / h - 1e-9))
    origin = (-half_width, -ny * h / 2.0)

    def inside(x: np.ndarray, y: np.ndarray) -> np.ndarray:
        left = (x + centre) ** 2 + y**2 < r * r
        right = (x - centre) ** 2 + y**2 < r * r
        neck = (np.abs(x) <= centre) & (np.abs(y) < spec.neck_halfwidth)
        return left | right | neck

    mask = _grid_mask(nx, ny, h, origin, inside)
    return Domain(spacing=h, mask=mask, origin=origin, spec=spec)


def build_domain(spec: AnyDomainSpec) -> Domain:
    """
    Build the masked grid for a domain spec.

    A grid cell is interior when its centroid lies strictly inside the shape.
    Dumbbell specs with ``target_measure`` are rescaled first.

    Args:
        spec: Rectangle, disk or dumbbell spec

    Returns:
        The constructed domain

    Raises:
        DomainConstructionError: If no cell centroid falls inside the shape
    """
    if isinstance(spec, RectangleSpec):
        domain = _build_rectangle(spec)
    elif isinstance(spec, DiskSpec):
        domain = _build_disk(spec)
    elif isinstance(spec, DumbbellSpec):
        if spec.target_measure is not None:
            return dumbbell_with_measure(
                spec.target_measure,
                spec.resolution,
                neck_length_ratio=spec.neck_length / spec.lobe_radius,
                neck_halfwidth_ratio=spec.neck_halfwidth / spec.lobe_radius,
            )
        domain = _build_dumbbell(spec)
    else:
        raise PreconditionError(f"Unsupported domain spec: {type(spec).__name__}")

    logger.debug(
        f"Built {type(spec).__name__}: {domain.n_cells} cells, h={domain.spacing:.6g}, "
        f"measure={domain.measure:.6g}"
    )
    return domain


def domain_measure(d: Domain) -> float:
    """Interior cell count times h^2."""
    return d.measure


def boundary_cells(d: Domain) -> IntArray:
    """Interior cells having at least one exterior 4-neighbour."""
    return d.boundary_cells()


def dumbbell_with_measure(
    target: float,
    resolution: int,
    neck_length_ratio: float = 1.0,
    neck_halfwidth_ratio: float = 0.35,
    rel_tol: float = 1e-3,
    max_steps: int = 60,
) -> Domain:
    """
    Dumbbell whose discrete measure matches ``target``.

    The neck length and half-width are fixed multiples of the lobe radius and
    the lobe radius is bisected. At fixed resolution the cell pattern does not
    depend on the scale, so the measure grows exactly like the radius squared
    and the bracket collapses onto the scaled radius after a few steps.

    Args:
        target: Desired measure
        resolution: Cells along the long axis
        neck_length_ratio: neck_length / lobe_radius
        neck_halfwidth_ratio: neck_halfwidth / lobe_radius (must be < 1)
        rel_tol: Relative measure tolerance that ends the bisection
        max_steps: Bisection step cap

    Returns:
        Domain built from a DumbbellSpec carrying the chosen lobe radius
    """
    if not target > 0:
        raise PreconditionError("Target measure must be positive")
    if not 0 < neck_halfwidth_ratio < 1:
        raise PreconditionError("Neck half-width ratio must lie in (0, 1)")

    def make(radius: float) -> Domain:
        spec = DumbbellSpec(
            lobe_radius=radius,
            neck_length=neck_length_ratio * radius,
            neck_halfwidth=neck_halfwidth_ratio * radius,
            resolution=resolution,
        )
        return _build_dumbbell(spec)

    unit = make(1.0)
    guess = math.sqrt(target / unit.measure)
    lo, hi = 0.5 * guess, 2.0 * guess
    radius = guess
    best = make(radius)
    for _ in range(max_steps):
        if abs(best.measure - target) <= rel_tol * target:
            break
        radius = 0.5 * (lo + hi)
        best = make(radius)
        if best.measure < target:
            lo = radius
        else:
            hi = radius

    logger.info(
        f"Dumbbell sized to measure {best.measure:.6g} (target {target:.6g}), "
        f"lobe radius {radius:.6g}"
    )
    return best
