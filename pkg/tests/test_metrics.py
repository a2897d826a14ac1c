"""
Tests for the optional Prometheus metrics.
"""

import pytest

from membraneopt.fields import Generator, ScalarField
from membraneopt.metrics import SolverMetrics, get_metrics, init_metrics, reset_metrics
from membraneopt.optimize import minimize
from membraneopt.pde import solve_poisson

pytest.importorskip("prometheus_client")


def test_disabled_collector_is_a_no_op():
    metrics = SolverMetrics(enabled=False)
    with metrics.track_solve("dense"):
        pass
    metrics.record_iterations("cg", 10)
    assert metrics.render() == b""
    assert metrics.get_metrics_dict() == {"enabled": False}


def test_global_collector():
    assert get_metrics() is None
    metrics = init_metrics()
    assert get_metrics() is metrics
    reset_metrics()
    assert get_metrics() is None


def test_solves_are_recorded(unit_square_8, unit_disk_32):
    metrics = init_metrics()
    solve_poisson(unit_square_8, ScalarField.constant(unit_square_8, 1.0))
    solve_poisson(unit_disk_32, ScalarField.constant(unit_disk_32, 1.0))
    assert metrics.solves_total.labels(method="dense")._value.get() == 1
    assert metrics.solves_total.labels(method="cg")._value.get() == 1
    assert metrics.solve_iterations_total.labels(method="cg")._value.get() > 0
    assert b"membraneopt_solve_duration_seconds" in metrics.render()


def test_outer_iterations_are_recorded(tiny_rectangle, rng):
    metrics = init_metrics(namespace="test")
    d = tiny_rectangle
    gen = Generator.two_valued(d, 1.0, 0.0, 4)
    result = minimize(d, ScalarField(d, rng.uniform(0.5, 1.5, d.n_cells)), gen)
    recorded = metrics.outer_iterations_total.labels(mode="minimize")._value.get()
    assert recorded == result.iterations
    assert metrics.get_metrics_dict()["namespace"] == "test"


def test_separate_registries():
    a = init_metrics()
    b = SolverMetrics()
    assert a.registry is not b.registry
