"""
Tests for field, mask and table files and the run manifest.
"""

import json

import numpy as np
import pytest

from membraneopt.artifacts import (
    FIELD_MAXVAL,
    RunManifest,
    compute_run_id,
    read_field_csv,
    read_mask_pgm,
    write_field_csv,
    write_field_pgm,
    write_mask_pgm,
    write_table_csv,
)
from membraneopt.domain import CellSet, build_domain
from membraneopt.exceptions import ConfigError, DomainMismatchError
from membraneopt.fields import ScalarField
from membraneopt.models import DiskSpec, RectangleSpec, RunConfig


def pgm_pixels(path) -> tuple[list[str], np.ndarray]:
    tokens = path.read_text().split()
    nx, ny = int(tokens[1]), int(tokens[2])
    return tokens[:4], np.array([int(t) for t in tokens[4:]]).reshape(ny, nx)


class TestFieldCsv:
    """Test suite for field CSV files."""

    def test_lossless(self, tmp_path, unit_disk_32, rng):
        d = unit_disk_32
        field = ScalarField(d, rng.uniform(size=d.n_cells) / 3.0)
        path = write_field_csv(field, tmp_path / "f.csv")
        assert path.read_text().splitlines()[0] == "x,y,value"
        back = read_field_csv(d, path)
        assert np.array_equal(back.values, field.values)

    def test_wrong_domain(self, tmp_path, unit_square_3, unit_square_8):
        path = write_field_csv(ScalarField.constant(unit_square_3, 1.0), tmp_path / "f.csv")
        with pytest.raises(DomainMismatchError):
            read_field_csv(unit_square_8, path)

    def test_shifted_centroids(self, tmp_path):
        a = build_domain(RectangleSpec(width=1.0, height=1.0, resolution=3))
        b = build_domain(RectangleSpec(width=1.5, height=1.5, resolution=3))
        path = write_field_csv(ScalarField.constant(a, 1.0), tmp_path / "f.csv")
        with pytest.raises(DomainMismatchError):
            read_field_csv(b, path)

    def test_bad_header(self, tmp_path, unit_square_3):
        path = tmp_path / "f.csv"
        path.write_text("a,b,c\n0,0,0\n")
        with pytest.raises(ConfigError):
            read_field_csv(unit_square_3, path)

    def test_bad_number(self, tmp_path, unit_square_3):
        path = tmp_path / "f.csv"
        path.write_text("x,y,value\n0,0,abc\n")
        with pytest.raises(ConfigError):
            read_field_csv(unit_square_3, path)

    def test_missing_file(self, tmp_path, unit_square_3):
        with pytest.raises(ConfigError):
            read_field_csv(unit_square_3, tmp_path / "missing.csv")


class TestPgm:
    """Test suite for field and mask images."""

    def test_field_scaling(self, tmp_path):
        d = build_domain(RectangleSpec(width=2.0, height=1.0, resolution=2))
        field = ScalarField(d, np.array([0.0, 1.0]))
        lo, hi = write_field_pgm(field, tmp_path / "f.pgm")
        header, pixels = pgm_pixels(tmp_path / "f.pgm")
        assert (lo, hi) == (0.0, 1.0)
        assert header == ["P2", "2", "1", str(FIELD_MAXVAL)]
        assert pixels.tolist() == [[0, FIELD_MAXVAL]]

    def test_constant_field_is_white(self, tmp_path, unit_square_3):
        write_field_pgm(ScalarField.constant(unit_square_3, 0.4), tmp_path / "f.pgm")
        _, pixels = pgm_pixels(tmp_path / "f.pgm")
        assert (pixels == FIELD_MAXVAL).all()

    def test_top_row_is_largest_y(self, tmp_path):
        d = build_domain(RectangleSpec(width=1.0, height=2.0, resolution=2))
        field = ScalarField.from_function(d, lambda x, y: y)
        write_field_pgm(field, tmp_path / "f.pgm")
        _, pixels = pgm_pixels(tmp_path / "f.pgm")
        assert pixels[0, 0] == FIELD_MAXVAL
        assert pixels[-1, 0] == 0

    def test_exterior_is_black(self, tmp_path):
        d = build_domain(DiskSpec(radius=1.0, resolution=8))
        write_field_pgm(ScalarField.constant(d, 1.0), tmp_path / "f.pgm")
        _, pixels = pgm_pixels(tmp_path / "f.pgm")
        assert pixels[0, 0] == 0
        assert int((pixels > 0).sum()) == d.n_cells

    def test_mask_round_trip(self, tmp_path, unit_disk_32, rng):
        d = unit_disk_32
        cells = CellSet.from_mask(d, rng.uniform(size=d.n_cells) < 0.3)
        path = write_mask_pgm(cells, tmp_path / "m.pgm")
        assert path.read_text().splitlines()[2] == "1"
        assert read_mask_pgm(d, path).same_cells(cells)

    def test_mask_with_comment(self, tmp_path, unit_square_3):
        path = tmp_path / "m.pgm"
        path.write_text("P2\n# made by hand\n3 3\n1\n0 0 0\n0 1 0\n0 0 0\n")
        assert read_mask_pgm(unit_square_3, path).indices.tolist() == [4]

    def test_mask_outside_domain(self, tmp_path):
        d = build_domain(DiskSpec(radius=1.0, resolution=8))
        ny, nx = d.grid_shape
        rows = ["1" + " 0" * (nx - 1)] + [" ".join(["0"] * nx)] * (ny - 1)
        path = tmp_path / "m.pgm"
        path.write_text(f"P2\n{nx} {ny}\n1\n" + "\n".join(rows) + "\n")
        with pytest.raises(DomainMismatchError):
            read_mask_pgm(d, path)

    def test_mask_wrong_values(self, tmp_path, unit_square_3):
        path = tmp_path / "m.pgm"
        path.write_text("P2\n3 3\n1\n0 0 0\n0 2 0\n0 0 0\n")
        with pytest.raises(ConfigError):
            read_mask_pgm(unit_square_3, path)

    def test_mask_wrong_size(self, tmp_path, unit_square_3, unit_square_8):
        path = write_mask_pgm(CellSet(unit_square_3, np.array([4])), tmp_path / "m.pgm")
        with pytest.raises(DomainMismatchError):
            read_mask_pgm(unit_square_8, path)

    def test_not_a_pgm(self, tmp_path, unit_square_3):
        path = tmp_path / "m.pgm"
        path.write_text("P5\n3 3\n1\n")
        with pytest.raises(ConfigError):
            read_mask_pgm(unit_square_3, path)


def test_table_csv(tmp_path):
    path = write_table_csv([{"k": 2, "psi": 0.1}, {"k": 4, "psi": 0.05}], tmp_path / "t.csv")
    assert path.read_text().splitlines() == [
        "k,psi",
        "2,0.10000000000000001",
        "4,0.050000000000000003",
    ]


def test_empty_table(tmp_path):
    assert write_table_csv([], tmp_path / "t.csv").read_text() == ""


class TestManifest:
    """Test suite for RunManifest and run ids."""

    @pytest.fixture
    def config(self) -> RunConfig:
        return RunConfig.model_validate(
            {"domain": {"shape": "rectangle", "width": 1.0, "height": 1.0, "resolution": 4}}
        )

    def test_run_id_depends_on_seed(self, config):
        assert compute_run_id(config, 1) == compute_run_id(config, 1)
        assert compute_run_id(config, 1) != compute_run_id(config, 2)
        assert compute_run_id(config, None) != compute_run_id(config, 0)
        assert len(compute_run_id(config, None)) == 40

    def test_run_id_ignores_key_order(self):
        a = RunConfig.model_validate(
            {"domain": {"shape": "disk", "radius": 1.0, "resolution": 8}}
        )
        b = RunConfig.model_validate(
            {"domain": {"resolution": 8, "radius": 1.0, "shape": "disk"}}
        )
        assert compute_run_id(a, None) == compute_run_id(b, None)

    def test_write(self, tmp_path, config):
        manifest = RunManifest.start("solve", config, 3, "0.1.0")
        manifest.results["energy"] = 0.25
        manifest.checks.append({"name": "energy_identity", "passed": True})
        manifest.field_scales["u"] = (0.0, 0.25)
        path = manifest.write(tmp_path / "manifest.json")
        data = json.loads(path.read_text())
        assert data["command"] == "solve"
        assert data["seed"] == 3
        assert data["run_id"] == compute_run_id(config, 3)
        assert data["config"]["domain"]["shape"] == "rectangle"
        assert data["results"] == {"energy": 0.25}
        assert data["field_scales"]["u"] == [0.0, 0.25]
        assert data["finished_at"] is not None
