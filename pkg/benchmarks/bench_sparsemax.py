#!/usr/bin/env python3
"""Benchmark the compiled sparsemax kernel against the numpy fallback.

Times the forward projection and its VJP on the row shapes the encoders
actually produce (attention masks over 300- and 288-wide feature rows at
batch size 8, plus a wide stress shape), then times a short end-to-end
training run under each backend.

Run after an editable install:  python benchmarks/bench_sparsemax.py
"""

import time

import numpy as np

from contab import kernels
from contab.synthetic import generate_synthetic_cohorts
from contab.tabnet import TabNetConfig
from contab.training import TrainConfig, train

SHAPES = [(8, 288), (8, 300), (64, 300), (256, 600)]
REPEATS = 300


def time_kernel(backend: str, shape: tuple[int, int]) -> tuple[float, float]:
    kernels.set_backend(backend)
    rng = np.random.default_rng(0)
    z = rng.normal(size=shape)
    out, _ = kernels.sparsemax_forward(z)          # warm up
    grad = rng.normal(size=shape)

    started = time.perf_counter()
    for _ in range(REPEATS):
        out, _ = kernels.sparsemax_forward(z)
    forward = (time.perf_counter() - started) / REPEATS

    started = time.perf_counter()
    for _ in range(REPEATS):
        kernels.sparsemax_backward(out, grad)
    backward = (time.perf_counter() - started) / REPEATS
    return forward, backward


def time_training(backend: str) -> float:
    kernels.set_backend(backend)
    dataset, _ = generate_synthetic_cohorts(16, seed=1, separation=3.0)
    cfg = TrainConfig(epochs=25, batch_size=8)
    gene = TabNetConfig(input_dim=300)
    chrom = TabNetConfig(input_dim=288)
    started = time.perf_counter()
    train(dataset, cfg, gene, chrom)
    return time.perf_counter() - started


def main() -> None:
    backends = kernels.available_backends()
    print(f"available backends: {', '.join(backends)}")
    if "compiled" not in backends:
        print("compiled kernel not built; showing numpy only")

    print(f"\nper-call kernel times over {REPEATS} repeats (microseconds):")
    print(f"{'shape':>12} {'backend':>10} {'forward':>10} {'backward':>10}")
    for shape in SHAPES:
        for backend in backends:
            forward, backward = time_kernel(backend, shape)
            print(f"{str(shape):>12} {backend:>10} {forward * 1e6:>10.1f} {backward * 1e6:>10.1f}")

    print("\nend-to-end training run (25 epochs, 16 cohorts), best of 3:")
    results = {}
    for backend in backends:
        results[backend] = min(time_training(backend) for _ in range(3))
        print(f"{backend:>10}: {results[backend]:.2f} s")
    if len(results) == 2:
        ratio = results["numpy"] / results["compiled"]
        print(f"\ncompiled backend speedup on training: {ratio:.2f}x")


if __name__ == "__main__":
    main()
