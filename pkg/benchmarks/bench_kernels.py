"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--scale 1.0] [--repeat 5] [--json out.json]

Both modules are imported directly, so DISTEVAL_BACKEND does not matter
here.  Each kernel is compiled and checked for agreement before timing;
the table reports the best of ``--repeat`` runs.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from disteval import _kernels_numpy as npk

try:
    from disteval import _kernels_numba as nbk
except ImportError:  # numba missing
    nbk = None


def cases(scale, rng):
    n_req = int(20_000 * scale)
    lengths = rng.integers(0, 30, size=n_req)
    indptr = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    ranks = rng.integers(1, 1001, size=int(indptr[-1])).astype(np.int64)
    gains = rng.integers(1, 4, size=ranks.size).astype(np.float64)
    n_items = int(200_000 * scale)
    index = rng.integers(0, 5_000, size=n_items).astype(np.int64)
    weights = rng.random(n_items)
    x = rng.random(int(2_000 * scale))
    w = rng.integers(1, 4, size=x.size).astype(np.float64)
    idx = rng.integers(0, x.size, size=(1000, x.size))
    probs = np.array([0.025, 0.1, 0.5, 0.9, 0.975])
    grid = np.linspace(0, 1, 200)
    big = rng.random(int(200_000 * scale))
    return {
        "rbp_rows": (indptr, ranks, 0.8),
        "dcg_rows": (indptr, ranks, gains),
        "first_rank_rows": (indptr, ranks),
        "accumulate": (index, weights, 5_000),
        "quantiles": (big, probs),
        "wquantiles": (big, rng.integers(1, 4, size=big.size).astype(np.float64), probs),
        "bootstrap_stats": (x, idx, probs),
        "bootstrap_stats_weighted": (x, w, idx, probs),
        "kde_eval": (x, grid, 0.05),
    }


def best_of(fn, args, repeat):
    t = timeit.Timer(lambda: fn(*args))
    number, _ = t.autorange()
    return min(t.repeat(repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="multiplies every input size")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)
    if nbk is None:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1

    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"{'kernel':<26} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}  max |diff|")
    for name, kargs in cases(args.scale, rng).items():
        a = getattr(npk, name)(*kargs)
        b = getattr(nbk, name)(*kargs)  # first call compiles
        diff = float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))
        t_np = best_of(getattr(npk, name), kargs, args.repeat)
        t_nb = best_of(getattr(nbk, name), kargs, args.repeat)
        rows.append({"kernel": name, "numpy_s": t_np, "numba_s": t_nb, "max_abs_diff": diff})
        print(f"{name:<26} {t_np * 1e3:>10.3f} {t_nb * 1e3:>10.3f} {t_np / t_nb:>7.1f}x  {diff:.1e}")
    if args.json:
        with open(args.json, "w") as f:
            json.dump({"scale": args.scale, "seed": args.seed, "results": rows}, f, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
