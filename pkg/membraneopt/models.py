"""
Pydantic models for run configuration.

A run is described by a single JSON document parsed into :class:`RunConfig`.
Domains, forces, generators and densities are discriminated unions keyed by
``shape`` or ``kind`` so that a config file reads like::

    {
        "domain": {"shape": "disk", "radius": 1.0, "resolution": 96},
        "force": {"kind": "constant", "value": 1.0},
        "generator": {"kind": "two_material", "alpha": 1.0, "beta": 0.0,
                      "gamma": 0.3, "relative": true}
    }
"""

import json
import math
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, FilePath, field_validator, model_validator

from .exceptions import ConfigError


class _ConfigModel(BaseModel):
    """Base for every config section: immutable, unknown keys rejected."""

    model_config = ConfigDict(extra="forbid", frozen=True)


# --------------------------------------------------------------------------- domains


class RectangleSpec(_ConfigModel):
    """Axis-aligned rectangle [0, width] x [0, height]."""

    shape: Literal["rectangle"] = "rectangle"
    width: float = Field(gt=0, description="Extent along x")
    height: float = Field(gt=0, description="Extent along y")
    resolution: int = Field(ge=1, description="Cells along the longest axis")


class DiskSpec(_ConfigModel):
    """Disk of the given radius centred at the origin."""

    shape: Literal["disk"] = "disk"
    radius: float = Field(gt=0, description="Disk radius")
    resolution: int = Field(ge=4, description="Cells across the diameter")


class DumbbellSpec(_ConfigModel):
    """
    Two disks joined by a horizontal neck, symmetric about both axes.

    When ``target_measure`` is set the lobe radius is found by bisection so that
    the discrete measure hits the target; the neck keeps its proportions
    relative to ``lobe_radius``.
    """

    shape: Literal["dumbbell"] = "dumbbell"
    lobe_radius: float = Field(default=1.0, gt=0, description="Radius of each lobe")
    neck_length: float = Field(default=1.0, gt=0, description="Gap between the two lobes")
    neck_halfwidth: float = Field(default=0.35, gt=0, description="Half the neck thickness")
    resolution: int = Field(ge=4, description="Cells along the long axis")
    target_measure: Optional[float] = Field(
        default=None, gt=0, description="Rescale the shape so its measure matches this value"
    )

    @model_validator(mode="after")
    def validate_neck(self) -> "DumbbellSpec":
        """The neck must be thinner than the lobes."""
        if self.neck_halfwidth >= self.lobe_radius:
            raise ValueError("neck_halfwidth must be smaller than lobe_radius")
        return self


DomainSpec = Annotated[Union[RectangleSpec, DiskSpec, DumbbellSpec], Field(discriminator="shape")]


# --------------------------------------------------------------------------- forces


class ConstantForce(_ConfigModel):
    kind: Literal["constant"] = "constant"
    value: float = Field(default=1.0, gt=0, description="Constant load")


class RadialForce(_ConfigModel):
    """Polynomial in the distance to the origin: f(r) = sum_k c_k r^k."""

    kind: Literal["radial"] = "radial"
    coefficients: list[float] = Field(min_length=1, description="c_0, c_1, ...")


class EigenfunctionForce(_ConfigModel):
    """
    Dirichlet eigenfunction of the grid's bounding box, clipped to its positive part.

    ``f = amplitude * sin(m pi (x - x0) / W) * sin(n pi (y - y0) / H)``.
    """

    kind: Literal["eigenfunction"] = "eigenfunction"
    mode: tuple[int, int] = Field(default=(1, 1), description="Mode numbers (m, n)")
    amplitude: float = Field(default=1.0, gt=0)

    @field_validator("mode")
    @classmethod
    def validate_mode(cls, v: tuple[int, int]) -> tuple[int, int]:
        if min(v) < 1:
            raise ValueError("Mode numbers must be >= 1")
        return v


class CsvForce(_ConfigModel):
    kind: Literal["csv"] = "csv"
    path: FilePath = Field(description="Field CSV with header x,y,value")


ForceSpec = Annotated[
    Union[ConstantForce, RadialForce, EigenfunctionForce, CsvForce], Field(discriminator="kind")
]


# --------------------------------------------------------------------------- generators


class TwoMaterialGenerator(_ConfigModel):
    """alpha on a set of measure gamma, beta elsewhere."""

    kind: Literal["two_material"] = "two_material"
    alpha: float = Field(description="Density of the stronger material")
    beta: float = Field(ge=0, description="Density of the weaker material")
    gamma: float = Field(gt=0, description="Measure of the alpha region")
    relative: bool = Field(
        default=False, description="Interpret gamma as a fraction of the domain measure"
    )

    @model_validator(mode="after")
    def validate_order(self) -> "TwoMaterialGenerator":
        if not self.alpha > self.beta:
            raise ValueError("alpha must be greater than beta")
        if self.relative and self.gamma >= 1.0:
            raise ValueError("Relative gamma must lie in (0, 1)")
        return self


class MultiGenerator(_ConfigModel):
    """Several density values, each occupying a fraction of the domain."""

    kind: Literal["multi"] = "multi"
    values: list[float] = Field(min_length=1)
    fractions: list[float] = Field(min_length=1)

    @model_validator(mode="after")
    def validate_fractions(self) -> "MultiGenerator":
        if len(self.values) != len(self.fractions):
            raise ValueError("values and fractions must have the same length")
        if any(v < 0 for v in self.values):
            raise ValueError("Generator values must be non-negative")
        if any(p < 0 for p in self.fractions):
            raise ValueError("Fractions must be non-negative")
        if abs(math.fsum(self.fractions) - 1.0) > 1e-9:
            raise ValueError("Fractions must sum to 1")
        return self


class CsvGenerator(_ConfigModel):
    """Generator taken from the values of a field CSV."""

    kind: Literal["csv"] = "csv"
    path: FilePath


GeneratorSpec = Annotated[
    Union[TwoMaterialGenerator, MultiGenerator, CsvGenerator], Field(discriminator="kind")
]


# --------------------------------------------------------------------------- densities


class ConstantDensity(_ConfigModel):
    kind: Literal["constant"] = "constant"
    value: float = Field(default=0.0, ge=0)


class CsvDensity(_ConfigModel):
    kind: Literal["csv"] = "csv"
    path: FilePath


DensitySpec = Annotated[Union[ConstantDensity, CsvDensity], Field(discriminator="kind")]


# --------------------------------------------------------------------------- options


class SolverOptions(_ConfigModel):
    """Options for the linear state solver."""

    tol: float = Field(default=1e-10, gt=0, lt=1, description="Relative residual target")
    max_iter: Optional[int] = Field(
        default=None, ge=1, description="CG iteration cap (default 20 * cell count)"
    )
    method: Literal["auto", "cg", "dense"] = Field(
        default="auto", description="auto uses a dense factorization up to 400 unknowns"
    )


class OptimizeOptions(_ConfigModel):
    """Options for the rearrangement optimizer."""

    mode: Literal["minimize", "maximize"] = "minimize"
    energy_tol: float = Field(default=1e-10, gt=0, description="Relative energy change stop")
    max_outer: int = Field(default=500, ge=1, description="Outer iteration cap")
    solver_tol: float = Field(default=1e-10, gt=0, lt=1, description="Inner solve tolerance")
    max_backtracks: int = Field(default=20, ge=0, description="Line search tries t = 2^-j")
    snap_tol: float = Field(
        default=1e-8, ge=0, description="Relative energy rise at a projection that gets logged"
    )
    tie_tol: float = Field(
        default=1e-12, ge=0, description="Relative tolerance under which state values tie"
    )
    seed: Optional[int] = Field(default=None, ge=0, description="Seed for a random start")
    check_assumptions: bool = Field(default=True, description="Check A1 before optimizing")


class OutputOptions(_ConfigModel):
    dir: Path = Field(default=Path("out"), description="Directory receiving all artifacts")
    formats: list[Literal["csv", "pgm", "json"]] = Field(
        default_factory=lambda: ["csv", "pgm", "json"]
    )


class SweepOptions(_ConfigModel):
    """Parameter lists and check thresholds for the sweep subcommands."""

    gammas: list[float] = Field(default_factory=list)
    alphas: list[float] = Field(default_factory=list)
    relative: bool = Field(default=True, description="gammas are fractions of the measure")
    target_alpha: Optional[float] = Field(
        default=None, description="alpha approached by the stability sequence"
    )
    derivative_tolerance: float = Field(default=0.10, gt=0)
    final_cells_cap: int = Field(default=2, ge=0)
    bins: int = Field(default=24, ge=1)


class MultistartOptions(_ConfigModel):
    runs: int = Field(default=5, ge=2)


class RunConfig(_ConfigModel):
    """Top-level run configuration."""

    domain: DomainSpec
    force: ForceSpec = Field(default_factory=ConstantForce)
    generator: Optional[GeneratorSpec] = None
    density: Optional[DensitySpec] = None
    solver: SolverOptions = Field(default_factory=SolverOptions)
    optimizer: OptimizeOptions = Field(default_factory=OptimizeOptions)
    output: OutputOptions = Field(default_factory=OutputOptions)
    sweep: SweepOptions = Field(default_factory=SweepOptions)
    multistart: MultistartOptions = Field(default_factory=MultistartOptions)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "RunConfig":
        """
        Load and validate a JSON config file.

        Raises:
            ConfigError: If the file cannot be read or is not JSON
            pydantic.ValidationError: If the document does not match the schema
        """
        try:
            text = Path(path).read_text(encoding="utf-8")
            data: Any = json.loads(text)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e
        return cls.model_validate(data)

    def canonical_json(self) -> str:
        """Stable JSON rendering used for run ids."""
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
