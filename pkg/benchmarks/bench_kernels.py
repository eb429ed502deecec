"""Compare the numba kernels against the pure-numpy fallback.

The backend is fixed at import time, so each backend runs in a child
process with CORRCOX_DISABLE_NUMBA set accordingly.

    python benchmarks/bench_kernels.py [--n 1000] [--repeat 5]
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def child(n, repeat):
    from corrcox import FitConfig, default_truth, fit_stage1, profile_hazard
    from corrcox._accel import backend_name
    from corrcox.estimator import ProfileProblem

    truth = default_truth()
    data = truth.sample_dataset(n, np.random.default_rng(0))
    cfg = FitConfig(param_box=truth.param_box, lipschitz_L=1.0, tau=1.0)
    prob = ProfileProblem(data, truth.error_model, 1.0)
    v = np.full(prob.n_knots, 0.7)

    # warm up (compiles on the numba path)
    profile_hazard(data, [0.7], truth.error_model, cfg)
    prob.reduced(v, np.array([0.7]))

    out = {
        "backend": backend_name(),
        "reduced_terms_s": _best_of(lambda: prob.reduced(v, np.array([0.7])), repeat * 20),
        "profile_solve_s": _best_of(
            lambda: profile_hazard(data, [0.7], truth.error_model, cfg), repeat),
        "stage1_fit_s": _best_of(lambda: fit_stage1(data, truth.error_model, cfg), max(1, repeat // 2)),
    }
    print(json.dumps(out))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args()
    if args.child:
        child(args.n, args.repeat)
        return
    rows = []
    for disable in ("0", "1"):
        env = dict(os.environ, CORRCOX_DISABLE_NUMBA=disable)
        res = subprocess.run([sys.executable, __file__, "--child", "--n", str(args.n),
                              "--repeat", str(args.repeat)],
                             env=env, capture_output=True, text=True, check=True)
        rows.append(json.loads(res.stdout.strip().splitlines()[-1]))
    keys = ["reduced_terms_s", "profile_solve_s", "stage1_fit_s"]
    print(f"n = {args.n}")
    print(f"{'kernel':<18}" + "".join(f"{r['backend']:>12}" for r in rows) + f"{'speedup':>10}")
    for k in keys:
        a, b = rows[0][k], rows[1][k]
        print(f"{k:<18}{a * 1e3:>10.3f}ms{b * 1e3:>10.3f}ms{b / a:>9.1f}x")


if __name__ == "__main__":
    main()
