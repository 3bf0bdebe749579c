"""Temporal skew estimation and correction between power signals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from faasmeter._kernels import shift_objective
from faasmeter.traces import SYSTEM_COUNTER_ID, CounterTrace, PowerTrace, Source, TraceMeta, window_means

DEFAULT_BOUND_S = 5.0
DEFAULT_DRIFT_INTERVAL_S = 120.0
FLAT_COV = 0.01


class SkewError(ValueError):
    pass


class FlatSignalError(SkewError):
    """The signal carries no timing information (coefficient of variation < 1%)."""


@dataclass(frozen=True)
class SkewEstimate:
    offset_s: float
    residual: float
    estimated_at: float


def _common_grid(power: PowerTrace, reference: PowerTrace) -> tuple[np.ndarray, np.ndarray, float, float]:
    if len(power) == 0 or len(reference) == 0:
        raise SkewError("empty trace")
    period = max(power.period, reference.period)
    t0 = max(power.start, reference.start)
    t1 = min(power.end, reference.end)
    n = int(math.floor((t1 - t0) / period + 1e-9))
    if n < 2:
        raise SkewError("traces do not overlap")
    same = (
        math.isclose(power.period, reference.period)
        and len(power) == len(reference)
        and np.array_equal(power.timestamps, reference.timestamps)
    )
    if same:
        return np.asarray(power.watts), np.asarray(reference.watts), float(power.start), period
    return window_means(power, t0, period, n), window_means(reference, t0, period, n), t0, period


def _normalize(x: np.ndarray, what: str) -> np.ndarray:
    mean = float(np.mean(x))
    if not mean > 0:
        raise SkewError(f"{what} signal has zero mean")
    if float(np.std(x)) / mean < FLAT_COV:
        raise FlatSignalError(f"{what} signal is flat (CoV < {FLAT_COV:.0%}); skew is unidentifiable")
    return x / mean


def skew_objective(w: np.ndarray, r: np.ndarray, kmax: int) -> np.ndarray:
    """Mean squared difference of mean-normalised signals for shifts -kmax..kmax samples."""
    return shift_objective(w, r, kmax)


def estimate_skew(power: PowerTrace, reference: PowerTrace, bound: float = DEFAULT_BOUND_S) -> SkewEstimate:
    """Find the lag ``s`` minimising ``sum_t (W(t+s)/mean(W) - R(t)/mean(R))^2``.

    The search is exhaustive over whole-sample shifts within ``±bound`` and
    then refined by fitting a parabola through the best grid point and its
    neighbours.  A positive offset means ``power`` lags ``reference``.
    """
    w, r, t0, period = _common_grid(power, reference)
    kmax = int(math.floor(bound / period + 1e-9))
    if w.size * period < 2 * bound or w.size <= 2 * kmax:
        raise SkewError(f"traces shorter than 2x bound ({2 * bound} s)")
    wn = _normalize(w, "power")
    rn = _normalize(r, "reference")
    obj = skew_objective(wn, rn, kmax)
    best = int(np.argmin(obj))
    frac = 0.0
    residual = float(obj[best])
    if 0 < best < obj.size - 1:
        fm, f0, fp = obj[best - 1], obj[best], obj[best + 1]
        curv = fm - 2.0 * f0 + fp
        if curv > 0:
            frac = float(np.clip(0.5 * (fm - fp) / curv, -0.5, 0.5))
            residual = float(f0 - 0.25 * (fm - fp) * frac)
    residual = min(residual, float(obj[best]))
    offset = (best - kmax + frac) * period
    return SkewEstimate(offset_s=float(offset), residual=residual, estimated_at=float(t0 + w.size * period))


def apply_skew(power: PowerTrace, offset: float) -> PowerTrace:
    """Shift timestamps by ``-offset`` and drop samples leaving the original window."""
    if offset == 0 or len(power) == 0:
        return power
    t = np.asarray(power.timestamps) - offset
    keep = (t >= power.start - 1e-9) & (t < power.end - 1e-9)
    return power.with_(timestamps=t[keep], watts=np.asarray(power.watts)[keep])


def reference_from_counters(counters: CounterTrace, counter: int = 3) -> PowerTrace:
    """Unitless load series from summed per-principal counter deltas (instructions by default).

    Fallback skew reference when no CPU power trace exists.
    """
    funcs, _ = counters.split_system()
    period = counters.meta.nominal_period_s if counters.meta and counters.meta.nominal_period_s else None
    ts = np.asarray(counters.timestamps)
    if ts.size == 0:
        raise SkewError("no counters")
    if period is None:
        steps = np.diff(np.unique(ts))
        period = float(steps.min()) if steps.size else 1.0
    grid = np.arange(ts.min(), ts.max() + period / 2, period)
    idx = np.clip(np.rint((np.asarray(funcs.timestamps) - grid[0]) / period).astype(np.int64), 0, grid.size - 1)
    series = np.zeros(grid.size)
    np.add.at(series, idx, np.asarray(funcs.counters)[:, counter].astype(np.float64))
    scale = series.max() if series.max() > 0 else 1.0
    return PowerTrace(grid, series / scale, Source.CPU, TraceMeta(0.0, period, f"counters[{counter}]"))


class DriftMonitor:
    """Re-estimates skew over consecutive windows and reports only real changes."""

    def __init__(self, bound: float = DEFAULT_BOUND_S, interval: float = DEFAULT_DRIFT_INTERVAL_S, window: float | None = None):
        if interval < 10:
            raise ValueError("drift interval must be >= 10 s")
        self.bound = bound
        self.interval = interval
        self.window = interval if window is None else window
        self.last: SkewEstimate | None = None
        self.flat_signal = False

    def step(self, power: PowerTrace, reference: PowerTrace, t_end: float) -> SkewEstimate | None:
        t0 = t_end - self.window
        p = _slice(power, t0, t_end)
        r = _slice(reference, t0, t_end)
        try:
            est = estimate_skew(p, r, self.bound)
        except FlatSignalError:
            self.flat_signal = True
            return None
        est = SkewEstimate(est.offset_s, est.residual, t_end)
        period = max(power.period, reference.period)
        if self.last is None or abs(est.offset_s - self.last.offset_s) > period:
            self.last = est
            return est
        return None


def _slice(trace: PowerTrace, t0: float, t1: float) -> PowerTrace:
    ts = np.asarray(trace.timestamps)
    keep = (ts >= t0 - 1e-9) & (ts < t1 - 1e-9)
    return trace.with_(timestamps=ts[keep], watts=np.asarray(trace.watts)[keep])


def monitor_drift(
    power: PowerTrace,
    reference: PowerTrace,
    interval: float = DEFAULT_DRIFT_INTERVAL_S,
    bound: float = DEFAULT_BOUND_S,
    monitor: DriftMonitor | None = None,
) -> Iterator[SkewEstimate]:
    """Yield a new :class:`SkewEstimate` whenever the skew moves by more than one sample."""
    mon = monitor or DriftMonitor(bound=bound, interval=interval)
    start = max(power.start, reference.start)
    stop = min(power.end, reference.end)
    t_end = start + mon.window
    while t_end <= stop + 1e-9:
        est = mon.step(power, reference, t_end)
        if est is not None:
            yield est
        t_end += mon.interval
