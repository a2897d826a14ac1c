"""
Prometheus metrics for solver and optimizer observability.

Collection is optional: without ``prometheus_client`` installed, or with
metrics disabled, every recording method is a no-op.
"""

import logging
import time
from collections.abc import Generator
from contextlib import contextmanager
from typing import Any, Optional

logger = logging.getLogger(__name__)

# Check if prometheus_client is available
try:
    from prometheus_client import CollectorRegistry, Counter, Histogram, generate_latest

    PROMETHEUS_AVAILABLE = True
except ImportError:
    PROMETHEUS_AVAILABLE = False
    logger.debug("prometheus_client not installed; metrics disabled")


class SolverMetrics:
    """
    Prometheus metrics collector for state solves and optimizer runs.

    Each collector owns its registry, so several collectors (for example one
    per test) never clash on metric names.

    Usage:
        from membraneopt.metrics import init_metrics

        metrics = init_metrics()
        # ... run solves / optimizations ...
        Path("metrics.prom").write_bytes(metrics.render())
    """

    def __init__(self, namespace: str = "membraneopt", enabled: bool = True):
        """
        Initialize metrics collector.

        Args:
            namespace: Prometheus namespace for metrics
            enabled: Whether metrics collection is enabled
        """
        self.namespace = namespace
        self.enabled = enabled and PROMETHEUS_AVAILABLE

        if not self.enabled:
            if not PROMETHEUS_AVAILABLE:
                logger.info("Metrics disabled: prometheus_client not installed")
            else:
                logger.info("Metrics disabled by configuration")
            return

        self._init_metrics()
        logger.info(f"Prometheus metrics initialized with namespace '{namespace}'")

    def _init_metrics(self) -> None:
        """Initialize Prometheus metrics."""
        self.registry = CollectorRegistry()

        self.solves_total = Counter(
            f"{self.namespace}_solves_total",
            "Total number of linear state solves",
            ["method"],  # dense, cg
            registry=self.registry,
        )

        self.solve_iterations_total = Counter(
            f"{self.namespace}_solve_iterations_total",
            "Total conjugate gradient iterations",
            ["method"],
            registry=self.registry,
        )

        self.solve_duration = Histogram(
            f"{self.namespace}_solve_duration_seconds",
            "Time spent in linear state solves",
            ["method"],
            buckets=(0.0001, 0.001, 0.005, 0.01, 0.05, 0.1, 0.5, 1.0, 5.0),
            registry=self.registry,
        )

        self.outer_iterations_total = Counter(
            f"{self.namespace}_outer_iterations_total",
            "Total optimizer outer iterations",
            ["mode"],  # minimize, maximize
            registry=self.registry,
        )

        self.backtracks_total = Counter(
            f"{self.namespace}_backtracks_total",
            "Total line search backtracking steps",
            ["mode"],
            registry=self.registry,
        )

    @contextmanager
    def track_solve(self, method: str) -> Generator[None, None, None]:
        """
        Context manager timing one state solve.

        Args:
            method: Solver path taken ("dense" or "cg")
        """
        if not self.enabled:
            yield
            return

        start_time = time.perf_counter()
        try:
            yield
        finally:
            duration = time.perf_counter() - start_time
            self.solves_total.labels(method=method).inc()
            self.solve_duration.labels(method=method).observe(duration)

    def record_iterations(self, method: str, iterations: int) -> None:
        if not self.enabled:
            return

        self.solve_iterations_total.labels(method=method).inc(iterations)

    def record_outer_iteration(self, mode: str) -> None:
        if not self.enabled:
            return

        self.outer_iterations_total.labels(mode=mode).inc()

    def record_backtracks(self, mode: str, count: int) -> None:
        """
        Record line search backtracking steps.

        Args:
            mode: Optimizer mode
            count: Number of halvings tried in one line search
        """
        if not self.enabled or count <= 0:
            return

        self.backtracks_total.labels(mode=mode).inc(count)

    def render(self) -> bytes:
        """Text exposition of all collected metrics (empty when disabled)."""
        if not self.enabled:
            return b""
        data: bytes = generate_latest(self.registry)
        return data

    def get_metrics_dict(self) -> dict[str, Any]:
        """
        Get a summary of the collector state.

        Returns:
            Dictionary of metric names and values
        """
        if not self.enabled:
            return {"enabled": False}

        return {
            "enabled": True,
            "prometheus_available": PROMETHEUS_AVAILABLE,
            "namespace": self.namespace,
        }


# Global metrics instance used by the solvers
_global_metrics: Optional[SolverMetrics] = None


def get_metrics() -> Optional[SolverMetrics]:
    """
    Get the global metrics instance.

    Returns:
        Global metrics collector or None if not initialized
    """
    return _global_metrics


def init_metrics(namespace: str = "membraneopt", enabled: bool = True) -> SolverMetrics:
    """
    Initialize the global metrics collector.

    Args:
        namespace: Prometheus namespace
        enabled: Whether to enable metrics

    Returns:
        Initialized metrics collector
    """
    global _global_metrics
    _global_metrics = SolverMetrics(namespace=namespace, enabled=enabled)
    return _global_metrics


def reset_metrics() -> None:
    """Drop the global collector (solves stop recording)."""
    global _global_metrics
    _global_metrics = None
