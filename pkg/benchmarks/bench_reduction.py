#!/usr/bin/env python3
"""Benchmark the reduction-step hot kernel: compiled vs pure numpy.

Scenario mirrors the largest simulation scale: n = 1600 observations in
d = 8 split across g = 16 clusters.  Run after `pip install -e .`:

    python benchmarks/bench_reduction.py
"""

import time

import numpy as np

from tdclust import _core_py, datagen, solver
from tdclust.configuration import pooled_stats


def build_case():
    spec = datagen.GeneratorSpec(d=8, alpha=0.999, outlier_mode="none", seed=0)
    labeled = datagen.generate(spec)
    data = labeled.dataset
    settings = solver.SolverSettings(g=16, r=1440, starts=1, seed=0)
    rng = np.random.default_rng(0)
    init = solver.init_random_a(data, settings, rng)
    stats = pooled_stats(data, init)
    return data, stats, settings


def time_kernel(fn, pts, means, lower, repeats=50):
    fn(pts, means, lower)  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(pts, means, lower)
    return (time.perf_counter() - t0) / repeats


def time_full_step(data, stats, settings, repeats=20):
    t0 = time.perf_counter()
    for _ in range(repeats):
        cfg = solver.reduction_step(data, stats, settings.g, settings.r)
        pooled_stats(data, cfg, carried_means=stats.means)
    return (time.perf_counter() - t0) / repeats


def main():
    data, stats, settings = build_case()
    pts = data.points
    means = np.ascontiguousarray(stats.means)
    lower = stats.pooled_ssp.factor

    backends = [("python", _core_py)]
    try:
        from tdclust import _core

        backends.insert(0, ("compiled", _core))
    except ImportError:
        print("compiled backend unavailable; benchmarking the fallback only")

    print(f"n={data.n} d={data.d} g={settings.g} r={settings.r}")
    kernel_times = {}
    for name, module in backends:
        ms = time_kernel(module.distance_argmin, pts, means, lower) * 1e3
        kernel_times[name] = ms
        print(f"{name:>9} distance_argmin: {ms:8.3f} ms")

    from tdclust import _kernel

    original = (_kernel.distance_argmin, _kernel.distance_matrix)
    try:
        for name, module in backends:
            _kernel.distance_argmin = module.distance_argmin
            _kernel.distance_matrix = module.distance_matrix
            ms = time_full_step(data, stats, settings) * 1e3
            print(f"{name:>9} full reduction step: {ms:8.3f} ms")
    finally:
        _kernel.distance_argmin, _kernel.distance_matrix = original

    if len(kernel_times) == 2:
        speedup = kernel_times["python"] / kernel_times["compiled"]
        print(f"kernel speedup (compiled over python): {speedup:.1f}x")


if __name__ == "__main__":
    main()
