"""
Scalar fields on a domain and rearrangement primitives.

Discretely, a rearrangement class is the set of all permutations of a
generator's cell values, and its weak closure is the majorization polytope of
that value vector: equal sums and dominated partial sums of the values sorted
in decreasing order.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .domain import Domain
from .exceptions import PreconditionError
from .utils import FloatArray, tie_clusters

logger = logging.getLogger(__name__)

WEAK_CLOSURE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class ScalarField:
    """
    One finite value per interior cell of a domain.

    Values are stored read-only in the domain's cell order.
    """

    domain: Domain
    values: FloatArray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.domain.n_cells,):
            raise PreconditionError(
                f"Field needs {self.domain.n_cells} values, got shape {values.shape}"
            )
        if not np.isfinite(values).all():
            raise PreconditionError("Field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, domain: Domain, value: float) -> "ScalarField":
        return cls(domain, np.full(domain.n_cells, float(value)))

    @classmethod
    def from_function(
        cls, domain: Domain, fn: Callable[[FloatArray, FloatArray], FloatArray]
    ) -> "ScalarField":
        """Sample ``fn(x, y)`` at the cell centroids."""
        xy = domain.centroids
        values = np.broadcast_to(np.asarray(fn(xy[:, 0], xy[:, 1]), dtype=np.float64), (len(xy),))
        return cls(domain, values)

    def with_values(self, values: FloatArray) -> "ScalarField":
        return ScalarField(self.domain, values)

    @property
    def max(self) -> float:
        return float(self.values.max())

    @property
    def min(self) -> float:
        return float(self.values.min())

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True, eq=False)
class Generator:
    """
    Value multiset of a rearrangement class.

    Attributes:
        domain: Domain the class lives on (one value per cell)
        sorted_values: The values in decreasing order

    Example:
        >>> gen = Generator.two_valued(d, alpha=1.0, beta=0.0, k=1)
        >>> gen.sorted_values[:2]
        array([1., 0.])
    """

    domain: Domain
    sorted_values: FloatArray

    def __post_init__(self) -> None:
        values = np.array(self.sorted_values, dtype=np.float64)
        if values.shape != (self.domain.n_cells,):
            raise PreconditionError(
                f"Generator needs {self.domain.n_cells} values, got shape {values.shape}"
            )
        if not np.isfinite(values).all():
            raise PreconditionError("Generator values must be finite")
        if (values < 0).any():
            raise PreconditionError("Generator values must be non-negative")
        if not (values > 0).any():
            raise PreconditionError("Generator must not be identically zero")
        if values.max() > 1.0:
            logger.warning(
                f"Generator value {values.max():.6g} exceeds 1; "
                "results outside the range 0 <= g <= 1"
            )
        values = np.sort(values)[::-1].copy()
        values.setflags(write=False)
        object.__setattr__(self, "sorted_values", values)

    @classmethod
    def from_field(cls, field: ScalarField) -> "Generator":
        return cls(field.domain, field.values)

    @classmethod
    def two_valued(cls, domain: Domain, alpha: float, beta: float, k: int) -> "Generator":
        """``alpha`` on ``k`` cells and ``beta`` on the rest."""
        n = domain.n_cells
        if not 0 <= k <= n:
            raise PreconditionError(f"k must lie in [0, {n}], got {k}")
        values = np.full(n, float(beta))
        values[:k] = alpha
        return cls(domain, values)

    @classmethod
    def from_fractions(
        cls, domain: Domain, values: Sequence[float], fractions: Sequence[float]
    ) -> "Generator":
        """
        Assign each value to a share of the cells.

        Cell counts are rounded with the largest-remainder rule so that they sum
        to the cell count exactly; equal remainders go to the earlier value.
        """
        if len(values) != len(fractions) or not values:
            raise PreconditionError("values and fractions must be non-empty and equal length")
        if any(p < 0 for p in fractions) or abs(math.fsum(fractions) - 1.0) > 1e-9:
            raise PreconditionError("Fractions must be non-negative and sum to 1")

        n = domain.n_cells
        quotas = np.asarray(fractions, dtype=np.float64) * n
        counts = np.floor(quotas).astype(np.int64)
        short = n - int(counts.sum())
        order = np.lexsort((np.arange(len(quotas)), -(quotas - counts)))
        counts[order[:short]] += 1
        return cls(domain, np.repeat(np.asarray(values, dtype=np.float64), counts))

    @property
    def ascending(self) -> FloatArray:
        return self.sorted_values[::-1]

    @property
    def is_singleton(self) -> bool:
        """True when the class has a single member (all values equal)."""
        return bool(self.sorted_values[0] == self.sorted_values[-1])

    def permuted(self, rng: np.random.Generator) -> ScalarField:
        """A uniformly random member of the class."""
        return ScalarField(self.domain, rng.permutation(self.sorted_values))


@dataclass(frozen=True)
class MonotoneProfile:
    """
    Step function on (0, |D|].

    ``levels[i]`` is the value on (breakpoints[i-1], breakpoints[i]].
    """

    breakpoints: FloatArray
    levels: FloatArray

    @property
    def total_measure(self) -> float:
        return float(self.breakpoints[-1])

    def compressed(self) -> "MonotoneProfile":
        """Merge consecutive steps with equal levels."""
        keep = np.append(self.levels[1:] != self.levels[:-1], True)
        return MonotoneProfile(self.breakpoints[keep], self.levels[keep])

    def value_at(self, s: float) -> float:
        if not 0 < s <= self.total_measure * (1 + 1e-12):
            raise PreconditionError(f"s must lie in (0, {self.total_measure}]")
        pos = int(np.searchsorted(self.breakpoints, s, side="left"))
        return float(self.levels[min(pos, len(self.levels) - 1)])

    def reversed(self) -> "MonotoneProfile":
        """The mirrored profile s -> p(|D| - s)."""
        return MonotoneProfile(self.breakpoints.copy(), self.levels[::-1].copy())


def _require_non_negative(f: ScalarField) -> None:
    if (f.values < 0).any():
        raise PreconditionError("Rearrangements need non-negative values")


def distribution_function(f: ScalarField, alpha: float) -> float:
    """Measure of {f >= alpha}."""
    if alpha < 0:
        raise PreconditionError("Level must be non-negative")
    return int(np.count_nonzero(f.values >= alpha)) * f.domain.cell_area


def decreasing_rearrangement(f: ScalarField) -> MonotoneProfile:
    """
    Decreasing step profile with the same distribution as ``f``.

    Raises:
        PreconditionError: If ``f`` has a negative value
    """
    _require_non_negative(f)
    n = f.domain.n_cells
    breakpoints = f.domain.cell_area * np.arange(1, n + 1, dtype=np.float64)
    return MonotoneProfile(breakpoints, np.sort(f.values)[::-1].copy())


def increasing_rearrangement(f: ScalarField) -> MonotoneProfile:
    """Increasing step profile with the same distribution as ``f``."""
    return decreasing_rearrangement(f).reversed()


def is_rearrangement(a: ScalarField, b: ScalarField) -> bool:
    """True iff the sorted value lists are exactly equal."""
    a.domain.require_same(b.domain)
    return bool(np.array_equal(np.sort(a.values), np.sort(b.values)))


def in_weak_closure(g: ScalarField, gen: Generator) -> bool:
    """
    Membership in the weak closure of the class generated by ``gen``.

    ``g`` belongs iff it is non-negative, has the generator's sum and every
    partial sum of its k largest values is at most the generator's, all up to
    a relative slack of 1e-12.
    """
    gen.domain.require_same(g.domain)
    if (g.values < 0).any():
        return False
    scale = float(gen.sorted_values.sum())
    slack = WEAK_CLOSURE_RTOL * scale
    if abs(float(g.values.sum()) - scale) > slack:
        return False
    partial_g = np.cumsum(np.sort(g.values)[::-1])
    partial_gen = np.cumsum(gen.sorted_values)
    return bool((partial_g <= partial_gen + slack).all())


def _alignment_order(w: ScalarField, tie_tol: float) -> np.ndarray:
    clusters = tie_clusters(w.values, tie_tol)
    return np.lexsort((np.arange(w.domain.n_cells), clusters))


def align_increasing(gen: Generator, w: ScalarField, tie_tol: float = 0.0) -> ScalarField:
    """
    Member of the class comonotone with ``w``.

    Cells are ordered by (w ascending, cell number ascending) and receive the
    generator values in ascending order, which maximizes sum(g * w) over the
    class. Values of ``w`` chained within ``tie_tol`` count as equal.

    Examples:
        gen {0, 0, 1}, w = [3, 1, 2] gives [1, 0, 0].
    """
    gen.domain.require_same(w.domain)
    values = np.empty(gen.domain.n_cells)
    values[_alignment_order(w, tie_tol)] = gen.ascending
    return ScalarField(w.domain, values)


def align_decreasing(gen: Generator, w: ScalarField, tie_tol: float = 0.0) -> ScalarField:
    """Member of the class anti-aligned with ``w``; minimizes sum(g * w)."""
    gen.domain.require_same(w.domain)
    values = np.empty(gen.domain.n_cells)
    values[_alignment_order(w, tie_tol)] = gen.sorted_values
    return ScalarField(w.domain, values)


def support_measure(f: ScalarField) -> float:
    """Measure of {f > 0}."""
    return int(np.count_nonzero(f.values > 0)) * f.domain.cell_area


def integrate(f: ScalarField) -> float:
    return float(f.values.sum()) * f.domain.cell_area


def inner(f: ScalarField, g: ScalarField) -> float:
    """Cell-sum quadrature of f * g."""
    f.domain.require_same(g.domain)
    return float((f.values * g.values).sum()) * f.domain.cell_area
