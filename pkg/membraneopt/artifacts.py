"""
Files emitted by a run.

- Field CSV: header ``x,y,value``, one row per interior cell in domain order,
  every number written with ``%.17g`` so that reading it back is lossless.
- Field PGM: plain P2 with maxval 65535, min-max scaled over the interior;
  exterior cells are 0 and the top image row is the largest y.
- Mask PGM: plain P2 with maxval 1; 1 marks a cell of the set.
- Manifest: one JSON document per run (see :class:`RunManifest`).

Nothing here depends on the clock except the manifest timestamps, so repeated
runs with the same config and seed produce byte-identical CSV and PGM files.
"""

import csv
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field

from .domain import CellSet, Domain
from .exceptions import ConfigError, DomainMismatchError
from .fields import ScalarField
from .models import RunConfig
from .utils import format_float, run_id

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FIELD_MAXVAL = 65535
CSV_HEADER = "x,y,value"
# Centroid coordinates in a field CSV must match the grid to this fraction of h.
CENTROID_RTOL = 1e-9


def write_field_csv(field: ScalarField, path: PathLike) -> Path:
    """Write ``x,y,value`` rows in domain order."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        for (x, y), value in zip(field.domain.centroids, field.values):
            writer.writerow([format_float(x), format_float(y), format_float(value)])
    return path


def read_field_csv(d: Domain, path: PathLike) -> ScalarField:
    """
    Read a field CSV written for domain ``d``.

    Raises:
        ConfigError: If the file is unreadable or malformed
        DomainMismatchError: If the rows do not follow the domain's centroids
    """
    path = Path(path)
    try:
        rows = path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ConfigError(f"Cannot read field CSV {path}: {e}") from e
    if not rows or rows[0].strip() != CSV_HEADER:
        raise ConfigError(f"{path}: expected header '{CSV_HEADER}'")
    body = [row for row in rows[1:] if row.strip()]
    try:
        data = np.array([[float(v) for v in row.split(",")] for row in body], dtype=np.float64)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e
    if data.shape != (d.n_cells, 3):
        raise DomainMismatchError(
            f"{path}: expected {d.n_cells} rows of 3 columns, got shape {data.shape}"
        )
    if not np.allclose(data[:, :2], d.centroids, rtol=0.0, atol=CENTROID_RTOL * d.spacing):
        raise DomainMismatchError(f"{path}: cell centroids do not match the domain")
    return ScalarField(d, data[:, 2])


def _grid_image(d: Domain, cell_values: np.ndarray) -> np.ndarray:
    image = np.zeros(d.grid_shape, dtype=np.int64)
    image[d.cell_index[:, 0], d.cell_index[:, 1]] = cell_values
    # Grid rows run upwards in y; image rows run downwards.
    return image[::-1]


def _write_pgm(path: Path, image: np.ndarray, maxval: int) -> None:
    ny, nx = image.shape
    lines = ["P2", f"{nx} {ny}", str(maxval)]
    lines.extend(" ".join(str(int(v)) for v in row) for row in image)
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _read_pgm(path: Path) -> tuple[np.ndarray, int]:
    try:
        text = path.read_text(encoding="ascii")
    except OSError as e:
        raise ConfigError(f"Cannot read PGM {path}: {e}") from e
    tokens = [t for line in text.splitlines() if not line.startswith("#") for t in line.split()]
    if len(tokens) < 4 or tokens[0] != "P2":
        raise ConfigError(f"{path}: not a plain PGM (P2) file")
    nx, ny, maxval = (int(t) for t in tokens[1:4])
    pixels = np.array([int(t) for t in tokens[4:]], dtype=np.int64)
    if pixels.size != nx * ny:
        raise ConfigError(f"{path}: expected {nx * ny} pixels, got {pixels.size}")
    return pixels.reshape(ny, nx), maxval


def write_field_pgm(field: ScalarField, path: PathLike) -> tuple[float, float]:
    """
    Write a 16-bit grey image of the field.

    Interior values are mapped linearly from [min, max] to [0, 65535]; a
    constant field maps to 65535.

    Returns:
        (min, max) used for scaling, recorded in the manifest
    """
    path = Path(path)
    values = np.asarray(field.values)
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        scaled = np.rint((values - lo) / (hi - lo) * FIELD_MAXVAL).astype(np.int64)
    else:
        scaled = np.full(values.size, FIELD_MAXVAL, dtype=np.int64)
    _write_pgm(path, _grid_image(field.domain, scaled), FIELD_MAXVAL)
    return lo, hi


def write_mask_pgm(cells: CellSet, path: PathLike) -> Path:
    path = Path(path)
    _write_pgm(path, _grid_image(cells.domain, cells.as_mask().astype(np.int64)), 1)
    return path


def read_mask_pgm(d: Domain, path: PathLike) -> CellSet:
    """
    Read a mask written by :func:`write_mask_pgm` back into a cell set.

    Raises:
        ConfigError: If the file is not a 0/1 plain PGM
        DomainMismatchError: If its size differs from the grid or it marks an
            exterior cell
    """
    path = Path(path)
    image, maxval = _read_pgm(path)
    if maxval != 1 or not np.isin(image, (0, 1)).all():
        raise ConfigError(f"{path}: mask values must be 0 or 1")
    if image.shape != d.grid_shape:
        raise DomainMismatchError(f"{path}: image is {image.shape}, grid is {d.grid_shape}")
    grid = image[::-1].astype(bool)
    if (grid & ~d.mask).any():
        raise DomainMismatchError(f"{path}: mask marks cells outside the domain")
    return CellSet.from_mask(d, grid[d.cell_index[:, 0], d.cell_index[:, 1]])


def write_table_csv(rows: Sequence[dict[str, Any]], path: PathLike) -> Path:
    """Write dict rows with the keys of the first row as header; floats as ``%.17g``."""
    path = Path(path)
    if not rows:
        path.write_text("", encoding="utf-8")
        return path

    def cell(value: Any) -> str:
        return format_float(value) if isinstance(value, float) else str(value)

    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: cell(value) for key, value in row.items()})
    return path


def compute_run_id(config: RunConfig, seed: Optional[int]) -> str:
    """Git-style id over the canonical config JSON followed by the seed."""
    payload = config.canonical_json() + "\n" + ("" if seed is None else str(seed))
    return run_id(payload.encode("utf-8"))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class RunManifest(BaseModel):
    """
    JSON summary of a single run.

    ``results`` holds the subcommand's numbers (energies, Phi history, c
    brackets, ...), ``checks`` the pass/fail entries and ``field_scales`` the
    min-max range of each field image.
    """

    run_id: str
    version: str
    command: str
    seed: Optional[int] = None
    started_at: str = Field(default_factory=_now)
    finished_at: Optional[str] = None
    config: dict[str, Any]
    results: dict[str, Any] = Field(default_factory=dict)
    checks: list[dict[str, Any]] = Field(default_factory=list)
    artifacts: list[str] = Field(default_factory=list)
    field_scales: dict[str, tuple[float, float]] = Field(default_factory=dict)

    @classmethod
    def start(
        cls, command: str, config: RunConfig, seed: Optional[int], version: str
    ) -> "RunManifest":
        return cls(
            run_id=compute_run_id(config, seed),
            version=version,
            command=command,
            seed=seed,
            config=config.model_dump(mode="json"),
        )

    def write(self, path: PathLike) -> Path:
        path = Path(path)
        self.finished_at = _now()
        path.write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        logger.info(f"Wrote manifest {path} (run {self.run_id})")
        return path
