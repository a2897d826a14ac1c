"""
End-to-end tests for the membrane-opt command line.
"""

import json
from pathlib import Path
from typing import Any

import pytest

from membraneopt.cli import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, main

# 4 x 3 cells with h = 0.01; the radial load breaks every symmetry of the grid.
TINY = {"shape": "rectangle", "width": 0.04, "height": 0.03, "resolution": 4}
RADIAL = {"kind": "radial", "coefficients": [1.0, 20.0]}


def write_config(tmp_path: Path, **sections: Any) -> Path:
    path = tmp_path / "run.json"
    path.write_text(json.dumps(sections))
    return path


def run_cli(tmp_path: Path, command: str, config: Path, *extra: str, out: str = "out") -> int:
    return main([command, "--config", str(config), "--out", str(tmp_path / out), *extra])


def manifest(tmp_path: Path, out: str = "out") -> dict[str, Any]:
    return json.loads((tmp_path / out / "manifest.json").read_text())


def two_material(k: int, alpha: float = 1.0, beta: float = 0.0) -> dict[str, Any]:
    return {"kind": "two_material", "alpha": alpha, "beta": beta, "gamma": k / 12, "relative": True}


class TestSolve:
    def test_one_cell(self, tmp_path):
        config = write_config(
            tmp_path, domain={"shape": "rectangle", "width": 1.0, "height": 1.0, "resolution": 1}
        )
        assert run_cli(tmp_path, "solve", config) == EXIT_OK
        data = manifest(tmp_path)
        assert data["results"]["energy"] == pytest.approx(0.25)
        assert data["results"]["method"] == "dense"
        assert {"u.csv", "u.pgm", "g.csv", "g.pgm"} <= set(data["artifacts"])
        row = (tmp_path / "out" / "u.csv").read_text().splitlines()[1].split(",")
        assert row[:2] == ["0.5", "0.5"]
        assert float(row[2]) == pytest.approx(0.25)

    def test_formats(self, tmp_path):
        config = write_config(tmp_path, domain=TINY, output={"formats": ["csv"]})
        assert run_cli(tmp_path, "solve", config) == EXIT_OK
        out = tmp_path / "out"
        assert (out / "u.csv").exists()
        assert not (out / "u.pgm").exists()
        assert not (out / "manifest.json").exists()

    def test_density_from_generator(self, tmp_path):
        config = write_config(tmp_path, domain=TINY, force=RADIAL, generator=two_material(4))
        assert run_cli(tmp_path, "solve", config) == EXIT_OK
        values = [line.split(",")[2] for line in (tmp_path / "out" / "g.csv").read_text().split()]
        assert values[1:].count("1") == 4


class TestCheck:
    def test_unit_disk(self, tmp_path, capsys):
        config = write_config(tmp_path, domain={"shape": "disk", "radius": 1.0, "resolution": 32})
        assert run_cli(tmp_path, "check", config) == EXIT_OK
        assert "A1 holds: True" in capsys.readouterr().out
        results = manifest(tmp_path)["results"]
        assert results["a1"]["holds"] is True
        assert results["a2"]["holds"] is False

    def test_with_generator(self, tmp_path):
        config = write_config(tmp_path, domain=TINY, force=RADIAL, generator=two_material(4))
        assert run_cli(tmp_path, "check", config) == EXIT_OK
        results = manifest(tmp_path)["results"]
        assert results["domination"]["holds"] is True
        assert "flat_sections" in results


class TestOptimize:
    def test_minimize(self, tmp_path):
        config = write_config(tmp_path, domain=TINY, force=RADIAL, generator=two_material(4))
        assert run_cli(tmp_path, "minimize", config) == EXIT_OK
        data = manifest(tmp_path)
        assert data["results"]["converged"] is True
        assert [c["name"] for c in data["checks"]] == ["first_order"]
        assert "g_opt.pgm" in data["artifacts"]

    def test_maximize(self, tmp_path):
        config = write_config(tmp_path, domain=TINY, force=RADIAL, generator=two_material(4))
        assert run_cli(tmp_path, "maximize", config) == EXIT_OK
        assert manifest(tmp_path)["results"]["converged"] is True

    def test_iteration_cap_is_a_solver_failure(self, tmp_path):
        config = write_config(
            tmp_path,
            domain={"shape": "rectangle", "width": 1.0, "height": 1.0, "resolution": 8},
            generator={
                "kind": "two_material",
                "alpha": 1.0,
                "beta": 0.0,
                "gamma": 20 / 64,
                "relative": True,
            },
            optimizer={"max_outer": 1},
        )
        assert run_cli(tmp_path, "minimize", config, "--seed", "3") == EXIT_SOLVER
        data = manifest(tmp_path)
        assert data["results"]["stop_reason"] == "max_outer"
        assert data["seed"] == 3

    def test_shape(self, tmp_path):
        config = write_config(tmp_path, domain=TINY, force=RADIAL, generator=two_material(4))
        assert run_cli(tmp_path, "shape", config) == EXIT_OK
        data = manifest(tmp_path)
        assert data["results"]["k"] == 4
        assert len(data["results"]["set_cells"]) == 4
        assert {c["name"] for c in data["checks"]} == {"superlevel_set", "boundary_layer"}
        assert (tmp_path / "out" / "set.pgm").exists()

    def test_shape_needs_two_material(self, tmp_path):
        config = write_config(
            tmp_path,
            domain=TINY,
            generator={"kind": "multi", "values": [1.0, 0.0], "fractions": [0.5, 0.5]},
        )
        assert run_cli(tmp_path, "shape", config) == EXIT_CONFIG

    def test_oracle(self, tmp_path):
        config = write_config(tmp_path, domain=TINY, force=RADIAL, generator=two_material(4))
        assert run_cli(tmp_path, "oracle", config) == EXIT_OK
        data = manifest(tmp_path)
        assert data["results"]["candidates"] == 495
        assert all(c["passed"] for c in data["checks"])

    def test_multistart(self, tmp_path):
        config = write_config(
            tmp_path,
            domain=TINY,
            force=RADIAL,
            generator=two_material(4),
            multistart={"runs": 3},
        )
        assert run_cli(tmp_path, "multistart", config) == EXIT_OK
        assert manifest(tmp_path)["results"]["seeds"] == [0, 1, 2]


class TestSweeps:
    def test_gamma_sweep_emits_masks(self, tmp_path):
        config = write_config(
            tmp_path,
            domain=TINY,
            force=RADIAL,
            generator=two_material(4),
            sweep={"gammas": [2 / 12, 4 / 12, 6 / 12], "derivative_tolerance": 10.0},
        )
        assert run_cli(tmp_path, "sweep-gamma", config) == EXIT_OK
        out = tmp_path / "out"
        for i in range(3):
            assert (out / f"mask_gamma_{i:03d}.pgm").exists()
        rows = (out / "sweep_gamma.csv").read_text().splitlines()
        assert rows[0].startswith("parameter,psi,c")
        assert len(rows) == 4

    def test_failed_check_exit_code(self, tmp_path):
        config = write_config(
            tmp_path,
            domain=TINY,
            force=RADIAL,
            generator=two_material(4),
            sweep={"gammas": [2 / 12, 4 / 12, 6 / 12], "derivative_tolerance": 1e-12},
        )
        assert run_cli(tmp_path, "sweep-gamma", config) == EXIT_CHECK
        checks = {c["name"]: c["passed"] for c in manifest(tmp_path)["checks"]}
        assert checks["derivative"] is False
        assert checks["nesting"] is True

    def test_alpha_sweep(self, tmp_path):
        config = write_config(
            tmp_path,
            domain=TINY,
            force=RADIAL,
            generator=two_material(4, beta=0.1),
            sweep={"alphas": [0.6, 0.7, 0.75, 0.775], "target_alpha": 0.8},
        )
        assert run_cli(tmp_path, "sweep-alpha", config) == EXIT_OK
        names = {c["name"] for c in manifest(tmp_path)["checks"]}
        assert {"set_stability", "energy_stability"} <= names
        assert (tmp_path / "out" / "mask_alpha_004.pgm").exists()

    def test_empty_gammas(self, tmp_path):
        config = write_config(tmp_path, domain=TINY, generator=two_material(4))
        assert run_cli(tmp_path, "sweep-gamma", config) == EXIT_CONFIG


class TestConfigErrors:
    def test_unknown_key(self, tmp_path):
        config = write_config(tmp_path, domain=TINY, colour="blue")
        assert run_cli(tmp_path, "solve", config) == EXIT_CONFIG

    def test_missing_file(self, tmp_path):
        assert run_cli(tmp_path, "solve", tmp_path / "missing.json") == EXIT_CONFIG

    def test_not_json(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{domain:")
        assert run_cli(tmp_path, "solve", path) == EXIT_CONFIG

    def test_negative_seed(self, tmp_path):
        config = write_config(tmp_path, domain=TINY, generator=two_material(4))
        assert run_cli(tmp_path, "minimize", config, "--seed", "-1") == EXIT_CONFIG

    def test_bad_relative_gamma(self, tmp_path):
        config = write_config(
            tmp_path,
            domain=TINY,
            generator={
                "kind": "two_material",
                "alpha": 1.0,
                "beta": 0.0,
                "gamma": 1.5,
                "relative": True,
            },
        )
        assert run_cli(tmp_path, "shape", config) == EXIT_CONFIG

    def test_missing_generator(self, tmp_path):
        config = write_config(tmp_path, domain=TINY)
        assert run_cli(tmp_path, "minimize", config) == EXIT_CONFIG

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            main(["--version"])
        assert exc_info.value.code == 0
        assert "membrane-opt" in capsys.readouterr().out


def test_repeated_runs_are_byte_identical(tmp_path):
    config = write_config(tmp_path, domain=TINY, force=RADIAL, generator=two_material(4))
    assert run_cli(tmp_path, "shape", config, "--seed", "5", out="a") == EXIT_OK
    assert run_cli(tmp_path, "shape", config, "--seed", "5", out="b") == EXIT_OK
    for name in ("set.pgm", "u.csv", "u.pgm"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_csv_force_round_trip(tmp_path):
    assert run_cli(tmp_path, "solve", write_config(tmp_path, domain=TINY, force=RADIAL)) == EXIT_OK
    force_path = tmp_path / "force.csv"
    force_path.write_text((tmp_path / "out" / "u.csv").read_text())
    config = write_config(tmp_path, domain=TINY, force={"kind": "csv", "path": str(force_path)})
    assert run_cli(tmp_path, "solve", config, out="again") == EXIT_OK


def test_metrics_file(tmp_path, monkeypatch):
    pytest.importorskip("prometheus_client")
    monkeypatch.setenv("MEMBRANE_OPT_ENABLE_METRICS", "true")
    config = write_config(tmp_path, domain=TINY, force=RADIAL, generator=two_material(4))
    assert run_cli(tmp_path, "minimize", config) == EXIT_OK
    text = (tmp_path / "out" / "metrics.prom").read_text()
    assert "membraneopt_solves_total" in text
    assert "membraneopt_outer_iterations_total" in text
