"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba implementations are used when numba imports cleanly and
``FAASMETER_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are always
importable as ``*_numpy`` / ``*_numba`` so tests and the benchmark can
compare them directly.
"""

from __future__ import annotations

import heapq
import os

import numpy as np

try:  # pragma: no cover - exercised implicitly by the backend flag
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return wrap


def _numba_requested() -> bool:
    flag = os.environ.get("FAASMETER_DISABLE_NUMBA", "").strip().lower()
    return flag in ("", "0", "false", "no")


USE_NUMBA = HAVE_NUMBA and _numba_requested()
BACKEND = "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# interval overlap: M[i, col[k]] += weight[k] * |[s_k, e_k) ∩ bin_i|
# ---------------------------------------------------------------------------


def interval_overlap_numpy(starts, ends, cols, weights, t0, delta, n_rows, n_cols):
    starts = np.asarray(starts, dtype=np.float64)
    ends = np.asarray(ends, dtype=np.float64)
    cols = np.asarray(cols, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    out = np.zeros((n_rows, n_cols), dtype=np.float64)
    if starts.size == 0 or n_rows == 0:
        return out

    s = np.clip((starts - t0) / delta, 0.0, float(n_rows))
    e = np.clip((ends - t0) / delta, 0.0, float(n_rows))
    keep = e > s
    s, e, cols, weights = s[keep], e[keep], cols[keep], weights[keep]
    if s.size == 0:
        return out

    i0 = np.minimum(np.floor(s).astype(np.int64), n_rows - 1)
    i1 = np.minimum(np.ceil(e).astype(np.int64) - 1, n_rows - 1)
    i1 = np.maximum(i1, i0)

    same = i0 == i1
    np.add.at(out, (i0[same], cols[same]), (e[same] - s[same]) * delta * weights[same])

    span = ~same
    if np.any(span):
        a0, a1, c, w = i0[span], i1[span], cols[span], weights[span]
        np.add.at(out, (a0, c), (a0 + 1 - s[span]) * delta * w)
        np.add.at(out, (a1, c), (e[span] - a1) * delta * w)
        diff = np.zeros((n_rows + 1, n_cols), dtype=np.float64)
        np.add.at(diff, (a0 + 1, c), delta * w)
        np.add.at(diff, (a1, c), -delta * w)
        full = np.cumsum(diff[:-1], axis=0)
        # the cumsum leaves exact zeros outside spans but may carry rounding inside
        out += full
    return out


@njit(cache=True)
def _interval_overlap_nb(starts, ends, cols, weights, t0, delta, n_rows, n_cols):
    out = np.zeros((n_rows, n_cols), dtype=np.float64)
    for k in range(starts.shape[0]):
        s = (starts[k] - t0) / delta
        e = (ends[k] - t0) / delta
        if s < 0.0:
            s = 0.0
        if e > n_rows:
            e = float(n_rows)
        if s > n_rows:
            s = float(n_rows)
        if e < 0.0:
            e = 0.0
        if e <= s:
            continue
        i0 = min(int(np.floor(s)), n_rows - 1)
        i1 = min(int(np.ceil(e)) - 1, n_rows - 1)
        if i1 < i0:
            i1 = i0
        c = cols[k]
        w = weights[k]
        if i0 == i1:
            out[i0, c] += (e - s) * delta * w
            continue
        out[i0, c] += (i0 + 1 - s) * delta * w
        for i in range(i0 + 1, i1):
            out[i, c] += delta * w
        out[i1, c] += (e - i1) * delta * w
    return out


def interval_overlap_numba(starts, ends, cols, weights, t0, delta, n_rows, n_cols):
    return _interval_overlap_nb(
        np.ascontiguousarray(starts, dtype=np.float64),
        np.ascontiguousarray(ends, dtype=np.float64),
        np.ascontiguousarray(cols, dtype=np.int64),
        np.ascontiguousarray(weights, dtype=np.float64),
        float(t0),
        float(delta),
        int(n_rows),
        int(n_cols),
    )


# ---------------------------------------------------------------------------
# FCFS multi-server queue
# ---------------------------------------------------------------------------


def fcfs_schedule_numpy(arrivals, durations, servers):
    arrivals = np.asarray(arrivals, dtype=np.float64)
    durations = np.asarray(durations, dtype=np.float64)
    n = arrivals.size
    if servers <= 0:
        raise ValueError("servers must be positive")
    if servers >= n:
        return arrivals.copy()
    free_at = [0.0] * servers
    heapq.heapify(free_at)
    starts = np.empty(n, dtype=np.float64)
    for k in range(n):
        earliest = heapq.heappop(free_at)
        start = arrivals[k] if arrivals[k] > earliest else earliest
        starts[k] = start
        heapq.heappush(free_at, start + durations[k])
    return starts


@njit(cache=True)
def _fcfs_schedule_nb(arrivals, durations, servers):
    n = arrivals.shape[0]
    free_at = np.zeros(servers, dtype=np.float64)
    starts = np.empty(n, dtype=np.float64)
    for k in range(n):
        j = 0
        best = free_at[0]
        for m in range(1, servers):
            if free_at[m] < best:
                best = free_at[m]
                j = m
        start = arrivals[k] if arrivals[k] > best else best
        starts[k] = start
        free_at[j] = start + durations[k]
    return starts


def fcfs_schedule_numba(arrivals, durations, servers):
    arrivals = np.ascontiguousarray(arrivals, dtype=np.float64)
    if servers <= 0:
        raise ValueError("servers must be positive")
    if servers >= arrivals.size:
        return arrivals.copy()
    return _fcfs_schedule_nb(arrivals, np.ascontiguousarray(durations, dtype=np.float64), int(servers))


# ---------------------------------------------------------------------------
# normalized shift objective: mean_t (w[t+k] - r[t])^2 for k in [-kmax, kmax]
# ---------------------------------------------------------------------------


def shift_objective_numpy(w, r, kmax):
    w = np.asarray(w, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    n = w.size
    out = np.empty(2 * kmax + 1, dtype=np.float64)
    for idx, k in enumerate(range(-kmax, kmax + 1)):
        if k >= 0:
            d = w[k:] - r[: n - k]
        else:
            d = w[: n + k] - r[-k:]
        out[idx] = np.mean(d * d)
    return out


@njit(cache=True)
def _shift_objective_nb(w, r, kmax):
    n = w.shape[0]
    out = np.empty(2 * kmax + 1, dtype=np.float64)
    for idx in range(2 * kmax + 1):
        k = idx - kmax
        acc = 0.0
        if k >= 0:
            m = n - k
            for t in range(m):
                d = w[t + k] - r[t]
                acc += d * d
        else:
            m = n + k
            for t in range(m):
                d = w[t] - r[t - k]
                acc += d * d
        out[idx] = acc / m
    return out


def shift_objective_numba(w, r, kmax):
    return _shift_objective_nb(
        np.ascontiguousarray(w, dtype=np.float64),
        np.ascontiguousarray(r, dtype=np.float64),
        int(kmax),
    )


if USE_NUMBA:
    interval_overlap = interval_overlap_numba
    fcfs_schedule = fcfs_schedule_numba
    shift_objective = shift_objective_numba
else:
    interval_overlap = interval_overlap_numpy
    fcfs_schedule = fcfs_schedule_numpy
    shift_objective = shift_objective_numpy


def bin_means(timestamps, values, t_end, t0, delta, n_rows):
    """Time-weighted mean of a sample-and-hold signal on a uniform grid.

    Sample ``k`` holds from ``timestamps[k]`` to ``timestamps[k+1]`` and the
    last one holds until ``t_end``.  Grid bins before the first sample see the
    first value (held backward); bins past ``t_end`` see the last value.
    """
    ts = np.asarray(timestamps, dtype=np.float64)
    vs = np.asarray(values, dtype=np.float64)
    if ts.size == 0:
        raise ValueError("empty signal")
    grid_end = t0 + n_rows * delta
    starts = ts.copy()
    ends = np.empty_like(ts)
    ends[:-1] = ts[1:]
    ends[-1] = max(t_end, grid_end)
    starts[0] = min(starts[0], t0)
    cols = np.zeros(ts.size, dtype=np.int64)
    acc = interval_overlap(starts, ends, cols, vs, t0, delta, n_rows, 1)
    return acc[:, 0] / delta
