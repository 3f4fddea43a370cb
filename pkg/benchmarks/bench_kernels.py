"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat N] [--json out.json]

The first numba call compiles (or loads from cache) and is excluded.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from structbias import kernels
from structbias._backend import HAVE_NUMBA


def random_tree(rng, n):
    parent = np.full(n, -1, dtype=np.int64)
    depth = np.zeros(n, dtype=np.int64)
    for k in range(1, n):
        parent[k] = rng.integers(0, k)
        depth[k] = depth[parent[k]] + 1
    return parent, depth


def cases(rng):
    parent, depth = random_tree(rng, 400)
    owner = np.sort(rng.integers(0, 400, size=1024))
    table = rng.integers(0, 500, size=(400, 400))
    a = rng.integers(0, 50, size=600)
    b = rng.integers(0, 50, size=600)
    idx = rng.integers(0, 561, size=200_000)
    vals = rng.normal(size=200_000)
    return {
        "pair_positions(400 sections)": (kernels.pair_positions_numba, kernels.pair_positions_numpy,
                                         (parent, depth)),
        "gather_pairs(1024 tokens)": (kernels.gather_pairs_numba, kernels.gather_pairs_numpy,
                                      (owner, table)),
        "scatter_add(200k -> 561)": (kernels.scatter_add_numba, kernels.scatter_add_numpy,
                                     (idx, vals, 561)),
        "lcs_length(600 x 600)": (kernels.lcs_length_numba, kernels.lcs_length_numpy, (a, b)),
        "match_lengths(600 x 600)": (kernels.match_lengths_numba, kernels.match_lengths_numpy,
                                     (a, b)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    if not HAVE_NUMBA:
        print("numba is not installed; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':<30} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, (fast, slow, inputs) in cases(rng).items():
        a, b = fast(*inputs), slow(*inputs)
        if not np.array_equal(np.asarray(a), np.asarray(b)):
            print(f"{name}: backends disagree", file=sys.stderr)
            return 1
        t_fast = min(timeit.repeat(lambda: fast(*inputs), number=1, repeat=args.repeat)) * 1e3
        t_slow = min(timeit.repeat(lambda: slow(*inputs), number=1, repeat=args.repeat)) * 1e3
        rows.append({"kernel": name, "numba_ms": t_fast, "numpy_ms": t_slow})
        print(f"{name:<30} {t_fast:>10.3f} {t_slow:>10.3f} {t_slow / t_fast:>7.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
