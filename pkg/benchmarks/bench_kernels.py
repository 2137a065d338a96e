#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the numpy fallback.

Runs every hot kernel at default-scene sizes and prints per-kernel wall
times plus an end-to-end drag-step comparison.  The compiled core must be
built (`pip install -e .` or `python setup.py build_ext --inplace`).

    python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from dragfield.kernels import numpy_impl

try:
    from dragfield.kernels import _core as compiled
except ImportError:
    compiled = None


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def scene(channels=64, height=256, width=256, nblobs=3, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(30, 220, size=(nblobs, 2))
    sigmas = rng.uniform(2.2, 6.0, size=nblobs)
    amps = rng.uniform(1.0, 2.0, size=nblobs)
    sigs = rng.normal(size=(nblobs, channels))
    sigs /= np.linalg.norm(sigs, axis=1, keepdims=True)
    return centers, sigmas, amps, sigs, height, width


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    centers, sigmas, amps, sigs, h, w = scene()
    upstream = np.random.default_rng(1).normal(size=(sigs.shape[1], h, w))
    field = numpy_impl.field_forward(centers, sigmas, amps, sigs, h, w)
    weight = np.zeros((h, w))
    weight[: h // 2] = 1.0
    patch = np.ascontiguousarray(field[:, 100:123, 100:123])
    template = field[:, 111, 111].copy()
    z0 = template.copy()
    label = np.exp(-((np.mgrid[0:23, 0:23] - 11) ** 2).sum(axis=0) / (2 * 2.4 ** 2))

    cases = [
        ("field_forward",
         lambda impl: impl.field_forward(centers, sigmas, amps, sigs, h, w)),
        ("field_backward",
         lambda impl: impl.field_backward(centers, sigmas, amps, sigs, upstream)),
        ("masked_l1_forward",
         lambda impl: impl.masked_l1_forward(field, weight)),
        ("masked_l1_backward",
         lambda impl: impl.masked_l1_backward(field, weight, 1.0)),
        ("fused_score",
         lambda impl: impl.fused_score(patch, template, z0, 0.3)),
        ("train_filter (1000 iters)",
         lambda impl: impl.train_filter(patch, label, z0, 1000, 0.002, 0)),
    ]

    print(f"{'kernel':<28} {'numpy':>10} {'compiled':>10} {'speedup':>8}")
    print("-" * 60)
    for name, call in cases:
        t_np = timeit(lambda: call(numpy_impl), args.repeat)
        if compiled is None:
            print(f"{name:<28} {t_np * 1e3:9.2f}ms {'n/a':>10} {'':>8}")
            continue
        t_c = timeit(lambda: call(compiled), args.repeat)
        print(f"{name:<28} {t_np * 1e3:9.2f}ms {t_c * 1e3:9.2f}ms "
              f"{t_np / t_c:7.2f}x")

    # end-to-end: one engine step on the default scene under each backend
    print()
    import importlib
    import os
    import subprocess
    import sys

    for backend in ("numpy", "compiled"):
        if backend == "compiled" and compiled is None:
            print("engine step (compiled): extension not built")
            continue
        code = (
            "import time\n"
            "from dragfield.scenarios import template_single_blob\n"
            "from dragfield.engine import start_session, step\n"
            "sc = template_single_blob()\n"
            "s = start_session(sc)\n"
            "step(s)\n"
            "t0 = time.perf_counter()\n"
            "for _ in range(5): step(s)\n"
            "print((time.perf_counter() - t0) / 5)\n"
        )
        env = dict(os.environ, DRAGFIELD_KERNELS=backend)
        out = subprocess.run([sys.executable, "-c", code], env=env,
                             capture_output=True, text=True, check=True)
        print(f"engine step ({backend}): {float(out.stdout) * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
