"""Hot numeric kernels with two interchangeable backends.

Each kernel exists as a numba ``@njit`` loop and as a pure-numpy version.
The numba path is used when numba imports and ``MATER_DISABLE_NUMBA`` is
unset (or ``0``); otherwise the numpy path is used. Both paths compute the
same quantities; they agree to floating-point rounding, not bit-for-bit.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _flag_disabled() -> bool:
    return os.environ.get("MATER_DISABLE_NUMBA", "0").strip().lower() not in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and not _flag_disabled()
BACKEND = "numba" if USE_NUMBA else "numpy"


def _njit(func):
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


# ---------------------------------------------------------------------------
# normalized cross-correlation over a lag range, one row per frame


def _nccf_loop(frames, lag_min, lag_max):
    n_frames, n = frames.shape
    n_lags = lag_max - lag_min + 1
    out = np.zeros((n_frames, n_lags))
    for f in range(n_frames):
        x = frames[f]
        for k in range(n_lags):
            lag = lag_min + k
            if lag >= n:
                break
            num = 0.0
            e0 = 0.0
            e1 = 0.0
            for i in range(n - lag):
                a = x[i]
                b = x[i + lag]
                num += a * b
                e0 += a * a
                e1 += b * b
            den = np.sqrt(e0 * e1)
            if den > 1e-20:
                out[f, k] = num / den
    return out


nccf_numba = _njit(_nccf_loop)


def nccf_numpy(frames: np.ndarray, lag_min: int, lag_max: int) -> np.ndarray:
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    n_frames, n = frames.shape
    lags = np.arange(lag_min, lag_max + 1)
    out = np.zeros((n_frames, lags.size))
    valid = lags < n
    if n_frames == 0 or not valid.any():
        return out
    lags_v = lags[valid]
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(frames, nfft, axis=1)
    acf = np.fft.irfft(spec * np.conj(spec), nfft, axis=1)[:, lags_v]
    sq = frames * frames
    # prefix and suffix sums; a difference of prefix sums would cancel away
    # quiet tails that follow a loud onset
    head = np.cumsum(sq, axis=1)
    tail = np.cumsum(sq[:, ::-1], axis=1)[:, ::-1]
    e_head = head[:, n - lags_v - 1]
    e_tail = tail[:, lags_v]
    den = np.sqrt(np.clip(e_head, 0.0, None) * np.clip(e_tail, 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(den > 1e-20, acf / np.where(den > 1e-20, den, 1.0), 0.0)
    out[:, valid] = r
    return out


# ---------------------------------------------------------------------------
# glottal pulse picking guided by a per-sample period estimate
#
# Returns (peak sample index, fractional offset, peak amplitude, chain id)
# per pulse. A chain is a run of pulses each found one period after the last;
# index and offset stay separate so period differences are exact
# under whole-sample shifts.


def _refine_peak_py(x, k):
    if k <= 0 or k >= x.shape[0] - 1:
        return 0.0, x[k]
    a = x[k - 1]
    b = x[k]
    c = x[k + 1]
    den = a - 2.0 * b + c
    if den >= 0.0:
        return 0.0, b
    delta = 0.5 * (a - c) / den
    return delta, b - 0.25 * (a - c) * delta


def _argmax_range_py(x, lo, hi):
    best = lo
    for i in range(lo + 1, hi):
        if x[i] > x[best]:
            best = i
    return best


_refine_peak = _njit(_refine_peak_py)
_argmax_range = _njit(_argmax_range_py)


def _pulses_loop(x, starts, ends, period):
    n = x.shape[0]
    idx = np.empty(n, dtype=np.int64)
    frac = np.empty(n)
    amp = np.empty(n)
    chain = np.empty(n, dtype=np.int64)
    count = 0
    n_chains = 0
    for r in range(starts.shape[0]):
        b = ends[r]
        lo = starts[r]
        while lo < b - 1:
            # first positive peak, scanning one local period at a time
            hi = min(lo + max(int(np.ceil(period[lo])), 1) + 1, b)
            p = _argmax_range(x, lo, hi)
            if x[p] <= 0.0:
                lo = hi
                continue
            while True:
                pd, pa = _refine_peak(x, p)
                idx[count] = p
                frac[count] = pd
                amp[count] = pa
                chain[count] = n_chains
                count += 1
                t = period[p]
                lo = max(p + int(np.floor(0.7 * t)), p + 1)
                hi = min(p + int(np.ceil(1.3 * t)) + 1, b)
                if lo >= hi:
                    break
                q = _argmax_range(x, lo, hi)
                if x[q] <= 0.0:
                    break
                p = q
            n_chains += 1
    return idx[:count], frac[:count], amp[:count], chain[:count]


pulses_numba = _njit(_pulses_loop)


def pulses_numpy(x: np.ndarray, starts: np.ndarray, ends: np.ndarray, period: np.ndarray):
    """Same chain as the numba kernel; windows searched with ``np.argmax``."""
    idx, frac, amp, chain = [], [], [], []
    n_chains = 0
    for a, b in zip(starts.tolist(), ends.tolist()):
        lo = a
        while lo < b - 1:
            hi = min(lo + max(int(np.ceil(period[lo])), 1) + 1, b)
            p = lo + int(np.argmax(x[lo:hi]))
            if x[p] <= 0.0:
                lo = hi
                continue
            while True:
                pd, pa = _refine_peak_py(x, p)
                idx.append(p)
                frac.append(pd)
                amp.append(pa)
                chain.append(n_chains)
                t = period[p]
                lo = max(p + int(np.floor(0.7 * t)), p + 1)
                hi = min(p + int(np.ceil(1.3 * t)) + 1, b)
                if lo >= hi:
                    break
                q = lo + int(np.argmax(x[lo:hi]))
                if x[q] <= 0.0:
                    break
                p = q
            n_chains += 1
    return (
        np.asarray(idx, dtype=np.int64),
        np.asarray(frac, dtype=np.float64),
        np.asarray(amp, dtype=np.float64),
        np.asarray(chain, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# descending average ranks, column-wise


def _ranks_loop(values):
    m, k = values.shape
    out = np.empty((m, k))
    for c in range(k):
        col = values[:, c]
        order = np.argsort(-col, kind="mergesort")
        i = 0
        while i < m:
            j = i
            while j + 1 < m and col[order[j + 1]] == col[order[i]]:
                j += 1
            r = 0.5 * (i + j) + 1.0
            for t in range(i, j + 1):
                out[order[t], c] = r
            i = j + 1
    return out


ranks_numba = _njit(_ranks_loop)


def ranks_numpy(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    m, k = values.shape
    out = np.empty((m, k))
    if m == 0:
        return out
    order = np.argsort(-values, axis=0, kind="mergesort")
    srt = np.take_along_axis(values, order, axis=0)
    pos = np.arange(m, dtype=np.float64)
    for c in range(k):
        new_group = np.r_[True, srt[1:, c] != srt[:-1, c]]
        gid = np.cumsum(new_group) - 1
        first = pos[new_group]
        last = np.r_[first[1:] - 1, m - 1]
        out[order[:, c], c] = 0.5 * (first + last)[gid] + 1.0
    return out


if USE_NUMBA:
    nccf = nccf_numba
    pick_pulses = pulses_numba
    column_ranks = ranks_numba
else:
    nccf = nccf_numpy
    pick_pulses = pulses_numpy
    column_ranks = ranks_numpy


def backend_kernels(name: str):
    """Return ``(nccf, pick_pulses, column_ranks)`` for ``"numba"`` or ``"numpy"``."""
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not installed")
        return nccf_numba, pulses_numba, ranks_numba
    if name == "numpy":
        return nccf_numpy, pulses_numpy, ranks_numpy
    raise ValueError(f"unknown backend {name!r}")
