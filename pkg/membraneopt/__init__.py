"""
membrane-opt - Rearrangement optimization for membrane problems
~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

Finite-difference solver for ``-Laplace(u) + g u = f`` on planar grids, with
optimizers that place a fixed distribution of density g to minimize or
maximize the energy ``Phi(g) = integral of f u``.

Basic usage:
    >>> from membraneopt import DiskSpec, build_domain, ScalarField, minimize_shape
    >>> d = build_domain(DiskSpec(radius=1.0, resolution=64))
    >>> f = ScalarField.constant(d, 1.0)
    >>> shape = minimize_shape(d, f, alpha=1.0, beta=0.0, gamma=0.3 * d.measure)
    >>> shape.is_superlevel_set()
    True

Command line:
    $ membrane-opt sweep-gamma --config dumbbell.json --out out/
"""

from .analysis import (
    CheckOutcome,
    RadialProfile,
    SweepRecord,
    SweepReport,
    radial_profile,
    sweep_alpha,
    sweep_gamma,
    symmetric_difference,
)
from .assumptions import AssumptionReport, check_a1, check_a2, check_domination
from .domain import CellSet, Domain, build_domain, dumbbell_with_measure
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
from .fields import (
    Generator,
    ScalarField,
    align_decreasing,
    align_increasing,
    decreasing_rearrangement,
    in_weak_closure,
)
from .models import DiskSpec, DumbbellSpec, OptimizeOptions, RectangleSpec, RunConfig
from .optimize import (
    OptimizationResult,
    ShapeResult,
    brute_force_min,
    comonotonicity_residual,
    maximize,
    minimize,
    minimize_shape,
    multistart,
)
from .pde import SolveResult, energy, solve_state

# Metrics are optional - only import if prometheus_client is available
try:
    from prometheus_client import Counter  # noqa: F401

    from .metrics import SolverMetrics, init_metrics

    _METRICS_AVAILABLE = True
except ImportError:
    _METRICS_AVAILABLE = False
    SolverMetrics = None  # type: ignore[misc, assignment]
    init_metrics = None  # type: ignore[assignment]

__version__ = "0.1.0"

__all__ = [
    "AssumptionReport",
    "CellSet",
    "CheckOutcome",
    "ConfigError",
    "DiskSpec",
    "Domain",
    "DomainConstructionError",
    "DomainMismatchError",
    "DumbbellSpec",
    "Generator",
    "MembraneOptError",
    "OptimizationResult",
    "OptimizeOptions",
    "OptimizerError",
    "PreconditionError",
    "RadialProfile",
    "RectangleSpec",
    "RunConfig",
    "ScalarField",
    "ShapeResult",
    "SolveResult",
    "SolverError",
    "SweepRecord",
    "SweepReport",
    "TheoremCheckFailed",
    "align_decreasing",
    "align_increasing",
    "brute_force_min",
    "build_domain",
    "check_a1",
    "check_a2",
    "check_domination",
    "comonotonicity_residual",
    "decreasing_rearrangement",
    "dumbbell_with_measure",
    "energy",
    "in_weak_closure",
    "maximize",
    "minimize",
    "minimize_shape",
    "multistart",
    "radial_profile",
    "solve_state",
    "sweep_alpha",
    "sweep_gamma",
    "symmetric_difference",
]

# Add metrics to exports if available
if _METRICS_AVAILABLE:
    __all__.extend(["SolverMetrics", "init_metrics"])
