"""Compare the compiled kernels with the pure-Python fallback.

Run ``python3 benchmarks/bench_kernels.py``.  Each case is timed with
``timeit`` on both backends; results agree to the printed tolerance.
"""
import argparse
import math
import timeit

import numpy as np

from sparseapprox import _backend
from sparseapprox.index_sets import hyperbolic_cross
from sparseapprox.orthopoly import eval_1d, evaluation_matrix, intrinsic_weights
from sparseapprox.pipeline import sample_points
from sparseapprox.srlasso import default_config, primal_dual, restarted


def cases(m, n, d):
    rng = np.random.default_rng(0)
    iset = hyperbolic_cross(n, d)
    Y = sample_points(m, d, "legendre", rng)
    z = rng.uniform(-1, 1, 10_000)
    A = evaluation_matrix(Y, iset, "legendre") / math.sqrt(m)
    B = rng.standard_normal((m, 1)) / math.sqrt(m)
    w = intrinsic_weights("legendre", iset).values
    nA = float(np.linalg.norm(A, 2))
    cfg = default_config("practical", m, d, 0.5, "legendre", iset, A, zeta=1e-8, R=20, norm_A=nA)
    return {
        "eval_1d (10k points, degree 60)": lambda b: eval_1d("legendre", 60, z, backend=b),
        f"assemble ({m} x {len(iset)})": lambda b: evaluation_matrix(Y, iset, "legendre", backend=b),
        "pd_iterate (200 steps)": lambda b: primal_dual(A, B, w, None, cfg.lam, cfg.tau, cfg.sigma,
                                                        200, backend=b, norm_A=nA).ergodic,
        f"restart_loop (20 x {cfg.T} steps)": lambda b: restarted(A, B, w, None, cfg, backend=b)[0],
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=250)
    ap.add_argument("--n", type=int, default=184)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _backend.COMPILED:
        raise SystemExit("compiled kernels are not built; run pip install -e . first")
    print(f"{'case':38s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speedup':>8s} {'max diff':>9s}")
    for name, fn in cases(args.m, args.n, args.d).items():
        times = {}
        for b in ("python", "compiled"):
            times[b] = min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) * 1e3
        diff = float(np.abs(np.asarray(fn("python")) - np.asarray(fn("compiled"))).max())
        print(f"{name:38s} {times['python']:12.2f} {times['compiled']:14.2f} "
              f"{times['python'] / times['compiled']:7.1f}x {diff:9.1e}")


if __name__ == "__main__":
    main()
