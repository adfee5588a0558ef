"""Time the compiled kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both variants are called directly, so the environment flag does not matter
here. Outputs one line per kernel with the best-of-N wall time and the max
absolute difference between the two results.
"""

import argparse
import time

import numpy as np

from opflow import kernels, maze


def best_of(fn, repeat):
    fn()  # warm-up (triggers compilation for the jitted variant)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a, float) - np.asarray(b, float))))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    grid = maze.generate_maze(9, rng)
    walls = np.ascontiguousarray(grid.walls)

    fields = rng.standard_normal((2000, 8, 8))
    normals = rng.standard_normal(200_000)
    uniforms = rng.random(200_000)
    start = np.array([1.5, 1.5])
    paths = np.ascontiguousarray(maze.collect_dataset(grid, 100_000, rng, n_windows=5000).trajectories)

    cases = {
        "lattice_terms (2000 x 8x8)": (
            lambda: kernels.lattice_terms_jit(fields),
            lambda: kernels.lattice_terms_numpy(fields),
        ),
        "walk (200k steps)": (
            lambda: kernels.walk_jit(walls, start, 0.15, 0.2, 0.2, normals, uniforms),
            lambda: kernels.walk_numpy(walls, start, 0.15, 0.2, 0.2, normals, uniforms),
        ),
        "first_violation (5000 paths)": (
            lambda: kernels.first_violation_jit(walls, paths, 6),
            lambda: kernels.first_violation_numpy(walls, paths, 6),
        ),
    }
    print(f"{'kernel':32s} {'numba [ms]':>11s} {'numpy [ms]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for name, (fast, slow) in cases.items():
        tj, a = best_of(fast, args.repeat)
        tn, b = best_of(slow, max(1, args.repeat // 2))
        diff = max_diff(a, b)
        print(f"{name:32s} {1e3 * tj:11.2f} {1e3 * tn:11.2f} {tn / tj:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
