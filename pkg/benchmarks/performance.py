"""
Performance benchmarks for membrane-opt.

Times state solves, optimizer runs and sweeps on growing grids.

Performance Targets:
- Dense solve (<= 400 cells) p50: < 5ms
- CG solve on the unit disk at resolution 96: < 250ms
- Minimize on the unit disk at resolution 64: < 20s
- Energy identity residual after CG: < 1e-8
"""

import argparse
import statistics

# Add parent directory to path
import sys
import time
from pathlib import Path
from typing import Any, Callable

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np  # noqa: E402

from membraneopt import (  # noqa: E402
    DiskSpec,
    Generator,
    RectangleSpec,
    ScalarField,
    build_domain,
    minimize,
    solve_state,
    sweep_gamma,
)
from membraneopt.pde import energy_identity_residual  # noqa: E402


def _timed(fn: Callable[[], Any]) -> tuple[float, Any]:
    start = time.perf_counter()
    value = fn()
    return (time.perf_counter() - start) * 1000, value


class PerformanceBenchmark:
    """Performance testing for the solver and optimizer."""

    # Performance targets
    TARGETS = {
        "dense_p50_ms": 5.0,
        "cg_disk96_ms": 250.0,
        "minimize_disk64_s": 20.0,
        "energy_identity": 1e-8,
    }

    def __init__(self, quick: bool = False):
        self.results: dict[str, Any] = {}
        self.quick = quick  # Run faster with smaller grids and fewer samples
        self.passed_targets: list[str] = []
        self.failed_targets: list[str] = []
        self.rng = np.random.default_rng(0)

    def _check_target(self, name: str, value: float, target: float, higher_is_better: bool = True):
        """Check if a metric meets its target."""
        passed = value >= target if higher_is_better else value <= target

        if passed:
            self.passed_targets.append(name)
        else:
            self.failed_targets.append(name)

        return passed

    def benchmark_solve_latency(self, samples: int = None):
        """Dense solve latency on a 20 x 20 grid."""
        if samples is None:
            samples = 20 if self.quick else 100

        print(f"Dense Solve Latency ({samples} samples)")
        print("-" * 50)

        d = build_domain(RectangleSpec(width=1.0, height=1.0, resolution=20))
        f = ScalarField.constant(d, 1.0)
        latencies = []
        for _ in range(samples):
            g = ScalarField(d, self.rng.uniform(0, 1, d.n_cells))
            elapsed, _ = _timed(lambda: solve_state(d, g, f, method="dense"))
            latencies.append(elapsed)

        latencies.sort()
        stats = {
            "min": latencies[0],
            "median": statistics.median(latencies),
            "p95": latencies[int(len(latencies) * 0.95) - 1],
            "max": latencies[-1],
        }
        self.results["dense_latency"] = stats
        print(f"Min: {stats['min']:.2f}ms")
        print(f"Median: {stats['median']:.2f}ms")
        print(f"P95: {stats['p95']:.2f}ms")
        print(f"Max: {stats['max']:.2f}ms\n")

    def benchmark_cg_scaling(self):
        """CG time and iterations as the disk grid is refined."""
        print("CG Scaling Test")
        print("-" * 50)

        resolutions = [32, 64, 96] if self.quick else [32, 64, 96, 128, 192]
        rows = []
        for resolution in resolutions:
            d = build_domain(DiskSpec(radius=1.0, resolution=resolution))
            f = ScalarField.constant(d, 1.0)
            g = ScalarField(d, self.rng.uniform(0, 1, d.n_cells))
            elapsed, result = _timed(lambda: solve_state(d, g, f, method="cg"))
            residual = energy_identity_residual(d, g, f, result.u)
            rows.append(
                {
                    "resolution": resolution,
                    "cells": d.n_cells,
                    "ms": elapsed,
                    "iterations": result.iterations,
                    "identity": residual,
                }
            )
            print(
                f"res {resolution:4} | {d.n_cells:6} cells | {elapsed:8.1f}ms | "
                f"{result.iterations:5} iterations | identity {residual:.1e}"
            )

        self.results["cg_scaling"] = rows
        print()

    def benchmark_minimize(self):
        """One optimizer run on the unit disk."""
        resolution = 32 if self.quick else 64
        print(f"Minimize Test (unit disk, resolution {resolution})")
        print("-" * 50)

        d = build_domain(DiskSpec(radius=1.0, resolution=resolution))
        f = ScalarField.constant(d, 1.0)
        gen = Generator.two_valued(d, 1.0, 0.0, d.n_cells // 3)
        elapsed, result = _timed(lambda: minimize(d, f, gen))

        self.results["minimize"] = {
            "resolution": resolution,
            "seconds": elapsed / 1000,
            "iterations": result.iterations,
            "stop_reason": result.stop_reason,
        }
        print(f"Time: {elapsed / 1000:.2f}s")
        print(f"Iterations: {result.iterations} ({result.stop_reason})")
        print(f"Phi: {result.phi:.12g}\n")

    def benchmark_sweep_threads(self):
        """Gamma sweep with one thread against four."""
        resolution = 24 if self.quick else 48
        print(f"Sweep Threads Test (unit disk, resolution {resolution})")
        print("-" * 50)

        d = build_domain(DiskSpec(radius=1.0, resolution=resolution))
        f = ScalarField.constant(d, 1.0)
        gammas = [p * d.measure for p in (0.1, 0.2, 0.3, 0.4, 0.5)]
        timings = {}
        for threads in (1, 4):
            elapsed, _ = _timed(lambda: sweep_gamma(d, f, 1.0, 0.0, gammas, threads=threads))
            timings[threads] = elapsed
            print(f"{threads} threads: {elapsed / 1000:.2f}s")

        self.results["sweep_threads"] = timings
        print(f"Speedup: {timings[1] / timings[4]:.2f}x\n")

    def print_summary(self):
        """Print benchmark summary."""
        print("=" * 60)
        print("BENCHMARK SUMMARY")
        print("=" * 60)

        if "dense_latency" in self.results:
            p50 = self.results["dense_latency"]["median"]
            target = self.TARGETS["dense_p50_ms"]
            status = (
                "✅" if self._check_target("dense_p50_ms", p50, target, False) else "❌"
            )
            print(f"{status} Dense p50: {p50:.2f}ms (target: <{target}ms)")

        if "cg_scaling" in self.results:
            rows = self.results["cg_scaling"]
            worst = max(row["identity"] for row in rows)
            target = self.TARGETS["energy_identity"]
            status = (
                "✅" if self._check_target("energy_identity", worst, target, False) else "❌"
            )
            print(f"{status} Energy identity: {worst:.1e} (target: <{target})")
            disk96 = next((row for row in rows if row["resolution"] == 96), None)
            if disk96 is not None:
                target = self.TARGETS["cg_disk96_ms"]
                status = (
                    "✅"
                    if self._check_target("cg_disk96_ms", disk96["ms"], target, False)
                    else "❌"
                )
                print(f"{status} CG at resolution 96: {disk96['ms']:.1f}ms (target: <{target}ms)")

        if "minimize" in self.results and self.results["minimize"]["resolution"] == 64:
            seconds = self.results["minimize"]["seconds"]
            target = self.TARGETS["minimize_disk64_s"]
            status = (
                "✅" if self._check_target("minimize_disk64_s", seconds, target, False) else "❌"
            )
            print(f"{status} Minimize at resolution 64: {seconds:.2f}s (target: <{target}s)")

        # Final status
        print("\n" + "=" * 60)
        passed = len(self.passed_targets)
        failed = len(self.failed_targets)
        total = passed + failed

        if failed == 0:
            print(f"✅ ALL TARGETS PASSED ({passed}/{total})")
        else:
            print(f"❌ SOME TARGETS FAILED ({passed}/{total} passed)")
            print(f"   Failed: {', '.join(self.failed_targets)}")


def main(quick: bool = False):
    """Run all benchmarks."""
    benchmark = PerformanceBenchmark(quick=quick)
    print("Starting performance benchmarks...\n")

    benchmark.benchmark_solve_latency()
    benchmark.benchmark_cg_scaling()
    benchmark.benchmark_minimize()
    if not quick:
        benchmark.benchmark_sweep_threads()

    benchmark.print_summary()


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description="membrane-opt Performance Benchmarks")
    parser.add_argument(
        "--quick", action="store_true", help="Run quick benchmark with smaller grids"
    )
    args = parser.parse_args()

    main(quick=args.quick)
