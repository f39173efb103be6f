#!/usr/bin/env python3
"""Compare the compiled kernels against the pure-numpy fallback.

The implementation is chosen at import time from the MFMO_PURE_NUMPY
environment variable, so this script re-invokes itself once per mode and
prints a combined table. Timings are the best of `--reps` runs after a
warmup pass (which also pays the JIT compilation cost).
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _cases(rng):
    n, d = 250, 30
    x = rng.random((n, d))
    thetas = 10.0 ** rng.uniform(-2, 1, size=(16, d))
    xq = rng.random((120, d))
    f = rng.random((400, 2))
    return {
        "corr_batch_250x30x16": lambda k, sq=None: k.corr_from_sqdiff_batch(
            k.pairwise_sqdiff(x), n, thetas, 1e-8),
        "cross_corr_120x250": lambda k: k.gaussian_cross(
            xq, x, thetas[0]),
        "pareto_ranks_400": lambda k: k.pareto_ranks(f),
    }


def run_child(reps: int) -> None:
    from mfmo import _kernels
    rng = np.random.default_rng(0)
    cases = _cases(rng)
    timings = {}
    for name, fn in cases.items():
        fn(_kernels)  # warmup / compile
        best = float("inf")
        for _ in range(reps):
            t0 = time.perf_counter()
            fn(_kernels)
            best = min(best, time.perf_counter() - t0)
        timings[name] = best
    print(json.dumps({"implementation": _kernels.IMPLEMENTATION,
                      "timings": timings}))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--reps", type=int, default=7)
    parser.add_argument("--child", action="store_true",
                        help=argparse.SUPPRESS)
    args = parser.parse_args()
    if args.child:
        run_child(args.reps)
        return 0
    results = {}
    for label, flag in (("numba", "0"), ("numpy", "1")):
        env = {**os.environ, "MFMO_PURE_NUMPY": flag}
        proc = subprocess.run(
            [sys.executable, os.path.abspath(__file__), "--child",
             "--reps", str(args.reps)],
            env=env, capture_output=True, text=True, check=True)
        results[label] = json.loads(proc.stdout.strip().splitlines()[-1])
    if results["numba"]["implementation"] != "numba":
        print("note: numba unavailable, both columns ran the numpy path")
    header = f"{'kernel':<28}{'numba (ms)':>12}{'numpy (ms)':>12}" \
             f"{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name in results["numba"]["timings"]:
        t_nb = results["numba"]["timings"][name] * 1e3
        t_np = results["numpy"]["timings"][name] * 1e3
        print(f"{name:<28}{t_nb:>12.3f}{t_np:>12.3f}{t_np / t_nb:>9.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
