"""Time each kernel in its numpy and numba flavours on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Prints one row per kernel: best-of-N wall time for both flavours, the
speed-up, and the largest absolute difference between their outputs.
"""

import argparse
import time

import numpy as np

from idprisk import kernels
from idprisk._jit import HAVE_NUMBA


def _best(fn, repeat):
    fn()  # warm-up (includes compilation for numba)
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases(rng):
    losses = np.sort(rng.normal(0.0, 3.0, 200_000))
    pmf = rng.random(losses.size)
    pmf /= pmf.sum()
    eps = np.linspace(0.0, 10.0, 400)
    yield ("hockey_stick", lambda: kernels.hockey_stick_numpy(losses, pmf, 1e-12, eps),
           lambda: kernels.hockey_stick_numba(losses, pmf, 1e-12, eps))

    e = np.linspace(0.0, 40.0, 800)
    d = np.exp(-e)
    a = np.linspace(0.0, 1.0, 2001)
    yield ("tradeoff_envelope", lambda: kernels.tradeoff_envelope_numpy(e, d, a),
           lambda: kernels.tradeoff_envelope_numba(e, d, a))

    z = rng.standard_normal((20_000, 100))
    u = rng.random((20_000, 100))
    yield ("llr_scores", lambda: kernels.llr_scores_numpy(z, u, 0.05, 0.8),
           lambda: kernels.llr_scores_numba(z, u, 0.05, 0.8))

    vals = rng.normal(size=3000)
    labels = np.repeat(np.arange(4), 750)
    yield ("jt_pair_count", lambda: np.array(kernels.jt_pair_count_numpy(vals, labels, 4)),
           lambda: np.array(kernels.jt_pair_count_numba(vals, labels, 4)))

    group_of = np.repeat(np.arange(2), [600, 400])
    take = np.array([300, 200])
    noise = rng.random((512, 1000))
    yield ("greedy_split", lambda: kernels.greedy_split_numpy(group_of, 2, take, noise),
           lambda: kernels.greedy_split_numba(group_of, 2, take, noise))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy flavour would run")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'numpy [ms]':>12}{'numba [ms]':>12}{'speed-up':>10}{'max |diff|':>14}")
    for name, slow, fast in cases(rng):
        t_np, a = _best(slow, args.repeat)
        t_nb, b = _best(fast, args.repeat)
        diff = float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))
        print(f"{name:<20}{t_np * 1e3:>12.2f}{t_nb * 1e3:>12.2f}{t_np / t_nb:>10.1f}{diff:>14.3g}")


if __name__ == "__main__":
    main()
