"""Trace data types, CSV readers/writers and resampling.

Four trace kinds share one convention: a CSV file with a fixed header and
rows in non-decreasing time order, plus an optional ``<file>.meta.json``
sidecar holding the epoch and nominal sample period.  Values are immutable
once constructed.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from faasmeter._kernels import bin_means

SYSTEM_COUNTER_ID = "__system__"
CONTROL_PLANE_ID = "__control_plane__"

POWER_HEADER = ("timestamp", "source", "watts")
INVOCATION_HEADER = ("function_id", "start", "end", "warm")
UTILIZATION_HEADER = ("timestamp", "principal", "cpu_percent")
COUNTER_HEADER = ("timestamp", "function_id", "c0", "c1", "c2", "c3")

COUNTER_NAMES = (
    "unhalted_core_cycles",
    "unhalted_reference_cycles",
    "llc_misses",
    "instructions_retired",
)


class TraceError(ValueError):
    """Base class for trace parsing and validation failures."""


class TraceParseError(TraceError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class TraceInvariantError(TraceError):
    def __init__(self, message: str, record=None, line: int | None = None):
        super().__init__(message if record is None else f"{message}: {record!r}")
        self.record = record
        self.line = line


def _row_invariant(path, lineno: int, message: str, record) -> TraceInvariantError:
    return TraceInvariantError(f"{path}:{lineno}: {message}", record, lineno)


class Source(str, enum.Enum):
    SYSTEM = "system"
    CPU = "cpu"
    REST = "rest"


class Principal(str, enum.Enum):
    CONTROL_PLANE = "control_plane"
    OS = "os"
    SYSTEM_WIDE = "system_wide"


def quantize_ms(t) -> np.ndarray:
    """Snap timestamps to the nearest millisecond.

    ``rint(t*1000)/1000`` is the double nearest to the decimal ``k/1000``, so
    it survives a ``%.3f`` text round trip unchanged.
    """
    return np.rint(np.asarray(t, dtype=np.float64) * 1000.0) / 1000.0


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class TraceMeta:
    epoch_unix_s: float = 0.0
    nominal_period_s: float | None = None
    source_label: str = ""

    def to_dict(self) -> dict:
        return {
            "epoch_unix_s": self.epoch_unix_s,
            "nominal_period_s": self.nominal_period_s,
            "source_label": self.source_label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TraceMeta":
        unknown = set(d) - {"epoch_unix_s", "nominal_period_s", "source_label"}
        if unknown:
            raise TraceError(f"unknown metadata keys: {sorted(unknown)}")
        return cls(
            epoch_unix_s=float(d.get("epoch_unix_s", 0.0)),
            nominal_period_s=None if d.get("nominal_period_s") is None else float(d["nominal_period_s"]),
            source_label=str(d.get("source_label", "")),
        )


def _check_monotone(t: np.ndarray, what: str) -> None:
    if t.size > 1:
        bad = np.flatnonzero(np.diff(t) < 0)
        if bad.size:
            k = int(bad[0]) + 1
            raise TraceInvariantError(f"{what} out of order at row {k}", float(t[k]))


class PowerTrace:
    """Timestamped power samples (watts) from a single source."""

    kind = "power"

    def __init__(self, timestamps, watts, source: Source | str = Source.SYSTEM, meta: TraceMeta | None = None):
        t = quantize_ms(timestamps)
        w = np.asarray(watts, dtype=np.float64)
        if t.shape != w.shape or t.ndim != 1:
            raise TraceInvariantError("timestamps and watts must be 1-d and equal length")
        if not np.all(np.isfinite(w)):
            raise TraceInvariantError("non-finite power sample")
        if np.any(w < 0):
            k = int(np.flatnonzero(w < 0)[0])
            raise TraceInvariantError("negative power", (float(t[k]), float(w[k])))
        _check_monotone(t, "power sample")
        self.timestamps = _frozen(t, np.float64)
        self.watts = _frozen(w, np.float64)
        self.source = Source(source)
        self.meta = meta

    def __len__(self) -> int:
        return self.timestamps.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, PowerTrace):
            return NotImplemented
        return (
            self.source == other.source
            and self.meta == other.meta
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.watts, other.watts)
        )

    def __repr__(self) -> str:
        return f"PowerTrace(source={self.source.value}, n={len(self)}, period={self.period})"

    @property
    def period(self) -> float:
        if self.meta is not None and self.meta.nominal_period_s:
            return self.meta.nominal_period_s
        if len(self) > 1:
            return float(np.median(np.diff(self.timestamps)))
        return 1.0

    @property
    def start(self) -> float:
        return float(self.timestamps[0])

    @property
    def end(self) -> float:
        """End of the support: the last sample holds for one period."""
        return float(self.timestamps[-1]) + self.period

    def with_(self, timestamps=None, watts=None, source=None, meta=None) -> "PowerTrace":
        return PowerTrace(
            self.timestamps if timestamps is None else timestamps,
            self.watts if watts is None else watts,
            self.source if source is None else source,
            self.meta if meta is None else meta,
        )


class InvocationTrace:
    """Per-invocation records, ordered by start time."""

    kind = "invocations"

    def __init__(self, function_ids, starts, ends, warm=None, meta: TraceMeta | None = None):
        ids = tuple(str(f) for f in function_ids)
        s = np.asarray(starts, dtype=np.float64).reshape(-1)
        e = np.asarray(ends, dtype=np.float64).reshape(-1)
        w = np.ones(s.size, dtype=bool) if warm is None else np.asarray(warm, dtype=bool).reshape(-1)
        if not (len(ids) == s.size == e.size == w.size):
            raise TraceInvariantError("invocation columns differ in length")
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(e))):
            raise TraceInvariantError("non-finite invocation time")
        bad = np.flatnonzero(e <= s)
        if bad.size:
            k = int(bad[0])
            raise TraceInvariantError("invocation latency must be positive", (ids[k], float(s[k]), float(e[k])))
        _check_monotone(s, "invocation start")
        self.function_ids = ids
        self.starts = _frozen(s, np.float64)
        self.ends = _frozen(e, np.float64)
        self.warm = _frozen(w, bool)
        self.meta = meta

    def __len__(self) -> int:
        return len(self.function_ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, InvocationTrace):
            return NotImplemented
        return (
            self.function_ids == other.function_ids
            and self.meta == other.meta
            and np.array_equal(self.starts, other.starts)
            and np.array_equal(self.ends, other.ends)
            and np.array_equal(self.warm, other.warm)
        )

    def __repr__(self) -> str:
        return f"InvocationTrace(n={len(self)}, functions={self.functions})"

    @property
    def latencies(self) -> np.ndarray:
        return self.ends - self.starts

    @property
    def functions(self) -> list[str]:
        return sorted(set(self.function_ids))

    def ids_array(self) -> np.ndarray:
        return np.array(self.function_ids, dtype=object)

    def mask(self, function_id: str) -> np.ndarray:
        return self.ids_array() == function_id

    def select(self, keep: np.ndarray) -> "InvocationTrace":
        keep = np.asarray(keep, dtype=bool)
        ids = [f for f, k in zip(self.function_ids, keep) if k]
        return InvocationTrace(ids, self.starts[keep], self.ends[keep], self.warm[keep], self.meta)

    def without(self, function_id: str) -> "InvocationTrace":
        return self.select(~self.mask(function_id))

    def mean_latency(self, function_id: str) -> float:
        m = self.mask(function_id)
        if not m.any():
            raise KeyError(function_id)
        return float(np.mean(self.latencies[m]))


class UtilizationTrace:
    """CPU utilisation of shared principals and of the whole system."""

    kind = "utilization"

    def __init__(self, timestamps, principals, cpu_percent, meta: TraceMeta | None = None):
        t = quantize_ms(timestamps).reshape(-1)
        p = tuple(Principal(x) for x in principals)
        c = np.asarray(cpu_percent, dtype=np.float64).reshape(-1)
        if not (t.size == len(p) == c.size):
            raise TraceInvariantError("utilization columns differ in length")
        if np.any(~np.isfinite(c)) or np.any(c < 0):
            k = int(np.flatnonzero(~np.isfinite(c) | (c < 0))[0])
            raise TraceInvariantError("cpu_percent must be finite and nonnegative", (float(t[k]), float(c[k])))
        _check_monotone(t, "utilization sample")
        self.timestamps = _frozen(t, np.float64)
        self.principals = p
        self.cpu_percent = _frozen(c, np.float64)
        self.meta = meta

    def __len__(self) -> int:
        return self.timestamps.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, UtilizationTrace):
            return NotImplemented
        return (
            self.principals == other.principals
            and self.meta == other.meta
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.cpu_percent, other.cpu_percent)
        )

    def series(self, principal: Principal | str) -> tuple[np.ndarray, np.ndarray]:
        principal = Principal(principal)
        m = np.array([p is principal for p in self.principals], dtype=bool)
        return self.timestamps[m], self.cpu_percent[m]


class CounterTrace:
    """Per-interval performance counter deltas, keyed by function id.

    Rows whose function id is :data:`SYSTEM_COUNTER_ID` carry system-wide
    counters used for normalisation.
    """

    kind = "counters"

    def __init__(self, timestamps, function_ids, counters, meta: TraceMeta | None = None):
        t = quantize_ms(timestamps).reshape(-1)
        ids = tuple(str(f) for f in function_ids)
        c = np.asarray(counters, dtype=np.int64).reshape(-1, 4) if len(ids) else np.zeros((0, 4), np.int64)
        if not (t.size == len(ids) == c.shape[0]):
            raise TraceInvariantError("counter columns differ in length")
        if np.any(c < 0):
            k = int(np.flatnonzero((c < 0).any(axis=1))[0])
            raise TraceInvariantError("counters must be nonnegative deltas", (float(t[k]), ids[k]))
        _check_monotone(t, "counter sample")
        self.timestamps = _frozen(t, np.float64)
        self.function_ids = ids
        self.counters = _frozen(c, np.int64)
        self.meta = meta

    def __len__(self) -> int:
        return self.timestamps.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, CounterTrace):
            return NotImplemented
        return (
            self.function_ids == other.function_ids
            and self.meta == other.meta
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.counters, other.counters)
        )

    def split_system(self) -> tuple["CounterTrace", "CounterTrace"]:
        """Return (per-function rows, system-wide rows)."""
        sysmask = np.array([f == SYSTEM_COUNTER_ID for f in self.function_ids], dtype=bool)
        return self._select(~sysmask), self._select(sysmask)

    def _select(self, keep: np.ndarray) -> "CounterTrace":
        ids = [f for f, k in zip(self.function_ids, keep) if k]
        return CounterTrace(self.timestamps[keep], ids, self.counters[keep], self.meta)


Trace = PowerTrace | InvocationTrace | UtilizationTrace | CounterTrace

_HEADERS = {
    "power": POWER_HEADER,
    "invocations": INVOCATION_HEADER,
    "utilization": UTILIZATION_HEADER,
    "counters": COUNTER_HEADER,
}


def meta_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def _read_meta(path: Path) -> TraceMeta | None:
    mp = meta_path(path)
    if not mp.exists():
        return None
    with open(mp) as fh:
        return TraceMeta.from_dict(json.load(fh))


def _parse_rows(path: Path, kind: str):
    header = _HEADERS[kind]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise TraceParseError(path, 1, "missing header") from None
        if tuple(h.strip() for h in first) != header:
            raise TraceParseError(path, 1, f"expected header {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise TraceParseError(path, lineno, f"expected {len(header)} fields, got {len(row)}")
            yield lineno, row


def _parse_float(path, lineno, text):
    try:
        v = float(text)
    except ValueError:
        raise TraceParseError(path, lineno, f"not a number: {text!r}") from None
    if not math.isfinite(v):
        raise TraceParseError(path, lineno, f"non-finite value: {text!r}")
    return v


def _parse_int(path, lineno, text):
    try:
        return int(text)
    except ValueError:
        raise TraceParseError(path, lineno, f"not an integer: {text!r}") from None


def _check_row_order(path, lineno, prev, cur):
    if prev is not None and cur < prev:
        raise TraceParseError(path, lineno, f"row out of order ({cur} < {prev})")


def read_power_traces(path) -> dict[Source, PowerTrace]:
    """Read a power CSV that may interleave several sources, one trace per source."""
    path = Path(path)
    meta = _read_meta(path)
    rows: dict[Source, tuple[list, list]] = {}
    last: dict[Source, float] = {}
    for lineno, (ts, src, w) in _parse_rows(path, "power"):
        try:
            source = Source(src.strip())
        except ValueError:
            raise TraceParseError(path, lineno, f"unknown source {src!r}") from None
        t = _parse_float(path, lineno, ts)
        watts = _parse_float(path, lineno, w)
        if watts < 0:
            raise _row_invariant(path, lineno, "negative power", (t, src.strip(), watts))
        _check_row_order(path, lineno, last.get(source), t)
        last[source] = t
        rows.setdefault(source, ([], []))
        rows[source][0].append(t)
        rows[source][1].append(watts)
    return {s: PowerTrace(t, w, s, meta) for s, (t, w) in rows.items()}


def read_trace(path, kind: str, source: Source | str | None = None) -> Trace:
    """Read and validate a trace of ``kind`` from a CSV file.

    For power files holding several sources pass ``source`` to pick one; an
    empty power file yields an empty system trace.
    """
    path = Path(path)
    if kind not in _HEADERS:
        raise ValueError(f"unknown trace kind {kind!r}")
    meta = _read_meta(path)

    if kind == "power":
        traces = read_power_traces(path)
        if source is not None:
            source = Source(source)
            return traces.get(source, PowerTrace([], [], source, meta))
        if not traces:
            return PowerTrace([], [], Source.SYSTEM, meta)
        if len(traces) > 1:
            raise TraceError(f"{path} holds several sources {sorted(s.value for s in traces)}; pass source=")
        return next(iter(traces.values()))

    if kind == "invocations":
        ids, starts, ends, warm = [], [], [], []
        prev = None
        for lineno, (fid, s, e, w) in _parse_rows(path, kind):
            start = _parse_float(path, lineno, s)
            end = _parse_float(path, lineno, e)
            if end <= start:
                raise _row_invariant(path, lineno, "end not after start", (fid, start, end))
            _check_row_order(path, lineno, prev, start)
            prev = start
            flag = w.strip().lower()
            if flag not in ("true", "false", "1", "0"):
                raise TraceParseError(path, lineno, f"warm must be true/false, got {w!r}")
            ids.append(fid)
            starts.append(start)
            ends.append(end)
            warm.append(flag in ("true", "1"))
        return InvocationTrace(ids, starts, ends, warm, meta)

    if kind == "utilization":
        ts, ps, cs = [], [], []
        prev = None
        for lineno, (t, p, c) in _parse_rows(path, kind):
            tt = _parse_float(path, lineno, t)
            try:
                principal = Principal(p.strip())
            except ValueError:
                raise TraceParseError(path, lineno, f"unknown principal {p!r}") from None
            cpu = _parse_float(path, lineno, c)
            if cpu < 0:
                raise _row_invariant(path, lineno, "negative cpu_percent", (tt, p.strip(), cpu))
            _check_row_order(path, lineno, prev, tt)
            prev = tt
            ts.append(tt)
            ps.append(principal)
            cs.append(cpu)
        return UtilizationTrace(ts, ps, cs, meta)

    ts, ids, cs = [], [], []
    prev = None
    for lineno, (t, fid, *c) in _parse_rows(path, kind):
        tt = _parse_float(path, lineno, t)
        vals = [_parse_int(path, lineno, x) for x in c]
        if any(v < 0 for v in vals):
            raise _row_invariant(path, lineno, "negative counter delta", (tt, fid, *vals))
        _check_row_order(path, lineno, prev, tt)
        prev = tt
        ts.append(tt)
        ids.append(fid)
        cs.append(vals)
    return CounterTrace(ts, ids, cs, meta)


def _rows_for(trace: Trace) -> Iterable[tuple]:
    if isinstance(trace, PowerTrace):
        src = trace.source.value
        for t, w in zip(trace.timestamps, trace.watts):
            yield (f"{t:.3f}", src, _fmt(w))
    elif isinstance(trace, InvocationTrace):
        for f, s, e, w in zip(trace.function_ids, trace.starts, trace.ends, trace.warm):
            yield (f, _fmt(s), _fmt(e), "true" if w else "false")
    elif isinstance(trace, UtilizationTrace):
        for t, p, c in zip(trace.timestamps, trace.principals, trace.cpu_percent):
            yield (f"{t:.3f}", p.value, _fmt(c))
    elif isinstance(trace, CounterTrace):
        for t, f, c in zip(trace.timestamps, trace.function_ids, trace.counters):
            yield (f"{t:.3f}", f, *(str(int(x)) for x in c))
    else:
        raise TypeError(f"not a trace: {type(trace).__name__}")


def write_trace(trace: Trace | list[PowerTrace], path) -> None:
    """Write ``trace`` as CSV (and its metadata sidecar when present).

    A list of power traces is written into a single file, one block per
    source, so system and CPU power can share ``power.csv``.
    """
    path = Path(path)
    traces = trace if isinstance(trace, list) else [trace]
    if not traces:
        raise ValueError("nothing to write")
    kinds = {t.kind for t in traces}
    if len(kinds) != 1 or (len(traces) > 1 and kinds != {"power"}):
        raise ValueError("only power traces can share a file")
    header = _HEADERS[traces[0].kind]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for t in traces:
            writer.writerows(_rows_for(t))
    meta = traces[0].meta
    if meta is not None:
        with open(meta_path(path), "w") as fh:
            json.dump(meta.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def resample(trace: PowerTrace, period: float) -> PowerTrace:
    """Resample onto a uniform grid starting at the first sample.

    Each output bin is the time-weighted mean of the sample-and-hold input;
    gaps hold the previous value and the last sample is held to the end of
    the final bin, so ``sum(out.watts) * period`` equals the integral of the
    held input over the output grid.
    """
    if period <= 0:
        raise ValueError("period must be positive")
    if len(trace) == 0:
        raise TraceError("cannot resample an empty trace")
    t0 = trace.start
    n = max(1, int(math.ceil((trace.end - t0) / period - 1e-9)))
    values = bin_means(trace.timestamps, trace.watts, trace.end, t0, period, n)
    values = np.maximum(values, 0.0)
    meta = TraceMeta(
        epoch_unix_s=trace.meta.epoch_unix_s if trace.meta else 0.0,
        nominal_period_s=float(period),
        source_label=trace.meta.source_label if trace.meta else "",
    )
    return PowerTrace(t0 + period * np.arange(n), values, trace.source, meta)


def energy(trace: PowerTrace, t0: float | None = None, t1: float | None = None) -> float:
    """Joules of the sample-and-hold signal over ``[t0, t1)`` (default: full support)."""
    if len(trace) == 0:
        return 0.0
    t0 = trace.start if t0 is None else t0
    t1 = trace.end if t1 is None else t1
    if t1 <= t0:
        return 0.0
    ts = trace.timestamps
    ends = np.empty_like(ts)
    ends[:-1] = ts[1:]
    ends[-1] = trace.end
    lo = np.clip(ts, t0, t1)
    hi = np.clip(ends, t0, t1)
    return float(np.sum(trace.watts * (hi - lo)))


def window_means(trace: PowerTrace, t0: float, delta: float, n: int) -> np.ndarray:
    """Mean watts of ``trace`` in ``n`` bins of width ``delta`` from ``t0``."""
    if len(trace) == 0:
        raise TraceError("empty power trace")
    return bin_means(trace.timestamps, trace.watts, trace.end, t0, delta, n)
