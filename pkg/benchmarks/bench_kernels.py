"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 3]

Prints one line per kernel with the best wall time of each backend, the
speed-up, and whether both backends returned identical results.
"""
import argparse
import time

import numpy as np

from acbound.kernels import available_backends


def _cases(rng):
    words = rng.integers(0, 2**16, size=4096).astype(np.uint64).reshape(-1, 1)
    Q = rng.dirichlet(np.ones(8), size=3)
    idx = rng.integers(0, 17, size=200_000)
    y = rng.integers(0, 2, size=200_000)
    cost = rng.integers(0, 50, size=(1600, 41))
    lv = np.arange(41) / 40
    allowed = np.abs(lv[:, None] - lv[None, :]) <= 0.075
    return {
        "greedy_code(b=16, h=2)": ("greedy_code", (16, 2)),
        "min_pairwise_hamming(4096 words)": ("min_pairwise_hamming", (words,)),
        "fano_min_worst(K=3, s=8)": ("fano_min_worst", (Q,)),
        "vote_counts(n=2e5)": ("vote_counts", (idx, y, 17)),
        "viterbi_lex(1600 x 41)": ("viterbi_lex", (cost, allowed)),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; only the numpy fallback is available")
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':36s} {'python [s]':>11s} {'cython [s]':>11s} {'speed-up':>9s}  equal")
    for label, (name, fargs) in cases.items():
        times, outs = {}, {}
        for bname, mod in backends.items():
            best = np.inf
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                outs[bname] = getattr(mod, name)(*fargs)
                best = min(best, time.perf_counter() - t0)
            times[bname] = best
        tp = times["python"]
        tc = times.get("cython", np.nan)
        eq = _same(outs["python"], outs["cython"]) if "cython" in outs else "n/a"
        print(f"{label:36s} {tp:11.4f} {tc:11.4f} {tp / tc:9.1f}  {eq}")


if __name__ == "__main__":
    main()
