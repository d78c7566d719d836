"""Time the numba and numpy kernel backends on representative inputs.

    python3 benchmarks/bench_kernels.py [--seconds 3] [--repeat 5]

Prints the best wall time per call for each kernel and backend, the speedup
and the max absolute difference between the two backends' outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from mater import _kernels


def _inputs(seconds: float, seed: int = 0):
    sr = 16000
    rng = np.random.default_rng(seed)
    t = np.arange(int(seconds * sr)) / sr
    x = np.sin(2 * np.pi * 140 * t) + 0.3 * np.sin(2 * np.pi * 280 * t) + 0.05 * rng.normal(size=t.size)
    frame_n, hop_n = 400, 160
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_n)[::hop_n].copy()
    lag_min, lag_max = sr // 500 - 1, sr // 60 + 1
    starts = np.array([0, x.size // 2])
    ends = np.array([x.size // 2 - 1000, x.size])
    period = np.full(x.size, sr / 140.0)
    probs = rng.dirichlet(np.ones(8), size=3000)
    return {
        "nccf": (frames, lag_min, lag_max),
        "pick_pulses": (x, starts, ends, period),
        "column_ranks": (probs,),
    }


def _best(fn, args, repeat):
    fn(*args)  # warm-up (JIT compile for numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def _maxdiff(a, b):
    if isinstance(a, tuple):
        return max(_maxdiff(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        return float("inf")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seconds", type=float, default=3.0, help="length of the synthetic signal")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    inputs = _inputs(args.seconds)
    fast = dict(zip(("nccf", "pick_pulses", "column_ranks"), _kernels.backend_kernels("numba")))
    slow = dict(zip(("nccf", "pick_pulses", "column_ranks"), _kernels.backend_kernels("numpy")))
    print(f"{'kernel':<14}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}{'max |diff|':>12}")
    for name, a in inputs.items():
        tn, on = _best(fast[name], a, args.repeat)
        tp, op = _best(slow[name], a, args.repeat)
        print(f"{name:<14}{tn * 1e3:>10.2f}{tp * 1e3:>10.2f}{tp / tn:>9.1f}{_maxdiff(on, op):>12.2e}")


if __name__ == "__main__":
    main()
