"""Synthetic FaaS workloads and full-system power signals with known truth.

The power model is additive: idle draw, plus each running invocation's
active watts, plus a fixed control-plane energy per invocation smeared over
a short window around its start.  The binned signal then gets Gaussian
noise, quantisation and a time skew, mimicking a coarse external meter.
"""

from __future__ import annotations

import dataclasses
import json
import math
import zlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from faasmeter._kernels import fcfs_schedule, interval_overlap
from faasmeter.traces import (
    CONTROL_PLANE_ID,
    SYSTEM_COUNTER_ID,
    CounterTrace,
    InvocationTrace,
    Principal,
    PowerTrace,
    Source,
    TraceMeta,
    UtilizationTrace,
)

MAX_SKEW_S = 10.0
IAT_KINDS = ("constant", "exponential", "lognormal", "bursty")

# per core-second of a "typical" function: core cycles, ref cycles, LLC misses, instructions
_BASE_COUNTER_RATES = np.array([3.0e9, 2.4e9, 4.0e6, 4.5e9])


class ConfigError(ValueError):
    """Invalid scenario or workload configuration."""


@dataclass(frozen=True)
class IATSpec:
    kind: str = "exponential"
    mean: float = 1.0
    cov: float = 1.0  # lognormal only
    on_s: float = 0.0  # bursty only
    off_s: float = 0.0

    def __post_init__(self):
        if self.kind not in IAT_KINDS:
            raise ConfigError(f"iat.kind must be one of {IAT_KINDS}, got {self.kind!r}")
        if not self.mean > 0:
            raise ConfigError("iat.mean must be > 0")
        if self.kind == "lognormal" and not self.cov > 0:
            raise ConfigError("iat.cov must be > 0 for lognormal IATs")
        if self.kind == "bursty" and not (self.on_s > 0 and self.off_s >= 0):
            raise ConfigError("bursty IATs need on_s > 0 and off_s >= 0")


@dataclass(frozen=True)
class FunctionSpec:
    function_id: str
    mean_latency: float
    latency_cov: float = 0.1
    iat: IATSpec = field(default_factory=IATSpec)
    start: float = 0.0
    stop: float | None = None

    def __post_init__(self):
        if not self.function_id or self.function_id.startswith("__"):
            raise ConfigError(f"invalid function_id {self.function_id!r}")
        if not self.mean_latency > 0:
            raise ConfigError(f"{self.function_id}: mean_latency must be > 0")
        if self.latency_cov < 0:
            raise ConfigError(f"{self.function_id}: latency_cov must be >= 0")
        if self.start < 0 or (self.stop is not None and self.stop <= self.start):
            raise ConfigError(f"{self.function_id}: need 0 <= start < stop")


@dataclass(frozen=True)
class WorkloadSpec:
    functions: tuple[FunctionSpec, ...]
    duration: float
    seed: int = 0

    def __post_init__(self):
        if not self.duration > 0:
            raise ConfigError("duration must be > 0")
        ids = [f.function_id for f in self.functions]
        if len(set(ids)) != len(ids):
            raise ConfigError("duplicate function_id in workload")

    @property
    def function_ids(self) -> list[str]:
        return [f.function_id for f in self.functions]

    def without(self, function_id: str) -> "WorkloadSpec":
        if function_id not in self.function_ids:
            raise KeyError(function_id)
        fs = tuple(f for f in self.functions if f.function_id != function_id)
        return dataclasses.replace(self, functions=fs)


@dataclass(frozen=True)
class GroundTruth:
    idle_watts: float
    per_function_watts: dict[str, float]
    control_plane_joules_per_invocation: float = 0.0
    noise_std_watts: float = 0.0
    quantization_step_watts: float = 0.0
    injected_skew: float = 0.0

    def __post_init__(self):
        for name in ("idle_watts", "control_plane_joules_per_invocation", "noise_std_watts", "quantization_step_watts"):
            if getattr(self, name) < 0:
                raise ConfigError(f"truth.{name} must be >= 0")
        for fid, w in self.per_function_watts.items():
            if w < 0:
                raise ConfigError(f"truth.per_function_watts[{fid!r}] must be >= 0")
        if abs(self.injected_skew) > MAX_SKEW_S:
            raise ConfigError(f"truth.injected_skew must lie within ±{MAX_SKEW_S} s")


@dataclass(frozen=True)
class SynthesisOptions:
    period: float = 1.0
    concurrency_cap: int | None = None
    cp_window: float = 0.5
    cp_align: str = "center"  # "center" straddles the start, "start" begins at it
    cpu_fraction: float = 0.8
    per_function_cpu_fraction: dict[str, float] = field(default_factory=dict)
    cpu_trace: bool = True
    cpu_noise_std_watts: float = 0.0
    counters: bool = True
    counter_weights: tuple[float, float, float, float] = (60.0, 20.0, 10.0, 40.0)
    cores: int = 8
    cpu_util: float = 1.0
    os_cpu_percent: float = 2.0
    skew_steps: tuple[tuple[float, float], ...] = ()
    concurrency_discount: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.period > 0:
            raise ConfigError("synthesis.period must be > 0")
        if self.concurrency_cap is not None and self.concurrency_cap < 1:
            raise ConfigError("synthesis.concurrency_cap must be >= 1")
        if not self.cp_window > 0:
            raise ConfigError("synthesis.cp_window must be > 0")
        if self.cp_align not in ("center", "start"):
            raise ConfigError("synthesis.cp_align must be 'center' or 'start'")
        fracs = [self.cpu_fraction, *self.per_function_cpu_fraction.values()]
        if any(not 0 <= f <= 1 for f in fracs):
            raise ConfigError("cpu fractions must lie in [0, 1]")
        if any(abs(s) > MAX_SKEW_S for _, s in self.skew_steps):
            raise ConfigError(f"skew steps must lie within ±{MAX_SKEW_S} s")
        if any(not 0 <= d < 1 for d in self.concurrency_discount.values()):
            raise ConfigError("concurrency discounts must lie in [0, 1)")

    def cpu_fraction_of(self, function_id: str) -> float:
        return self.per_function_cpu_fraction.get(function_id, self.cpu_fraction)


@dataclass(frozen=True)
class Scenario:
    name: str
    workload: WorkloadSpec
    truth: GroundTruth
    options: SynthesisOptions = field(default_factory=SynthesisOptions)


@dataclass(frozen=True)
class SimulatedRun:
    invocations: InvocationTrace
    system_power: PowerTrace
    cpu_power: PowerTrace | None
    utilization: UtilizationTrace
    counters: CounterTrace | None
    truth: GroundTruth
    options: SynthesisOptions
    duration: float
    horizon: float
    arrivals: np.ndarray
    true_power: np.ndarray  # unskewed, noiseless system power per period

    @property
    def rest_power(self) -> PowerTrace | None:
        if self.cpu_power is None:
            return None
        return PowerTrace(
            self.system_power.timestamps,
            np.maximum(self.system_power.watts - self.cpu_power.watts, 0.0),
            Source.REST,
            self.system_power.meta,
        )


# ---------------------------------------------------------------------------
# workload generation
# ---------------------------------------------------------------------------


def function_rng(seed: int, function_id: str, stream: int = 0) -> np.random.Generator:
    """Independent stream per (seed, function) so ablations keep survivors' schedules."""
    key = zlib.crc32(function_id.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(key, stream)))


def lognormal_params(mean: float, cov: float) -> tuple[float, float]:
    sigma2 = math.log1p(cov * cov)
    return math.log(mean) - sigma2 / 2.0, math.sqrt(sigma2)


def _draw_iats(rng: np.random.Generator, iat: IATSpec, n: int) -> np.ndarray:
    if iat.kind == "constant":
        return np.full(n, iat.mean)
    if iat.kind == "lognormal":
        mu, sigma = lognormal_params(iat.mean, iat.cov)
        return rng.lognormal(mu, sigma, n)
    return rng.exponential(iat.mean, n)


def _arrivals(rng: np.random.Generator, fn: FunctionSpec, stop: float) -> np.ndarray:
    iat = fn.iat
    if iat.kind == "constant":
        return np.arange(fn.start, stop, iat.mean)
    if iat.kind == "bursty":
        out = []
        cycle = iat.on_s + iat.off_s
        t_on = fn.start
        while t_on < stop:
            t = t_on + rng.exponential(iat.mean)
            t_off = min(t_on + iat.on_s, stop)
            while t < t_off:
                out.append(t)
                t += rng.exponential(iat.mean)
            t_on += cycle
        return np.asarray(out, dtype=np.float64)
    chunks = []
    t = fn.start
    expected = int((stop - fn.start) / iat.mean) + 16
    while t < stop:
        gaps = _draw_iats(rng, iat, expected)
        times = t + np.cumsum(gaps)
        chunks.append(times)
        t = float(times[-1])
    times = np.concatenate(chunks) if chunks else np.empty(0)
    return times[times < stop]


def generate_workload(spec: WorkloadSpec) -> InvocationTrace:
    """Draw arrivals and lognormal latencies for every function.

    Invocations that would finish after ``spec.duration`` (or the function's
    ``stop``) are dropped so every record lies inside the trace.
    """
    ids, starts, ends = [], [], []
    order = []
    for idx, fn in enumerate(spec.functions):
        rng = function_rng(spec.seed, fn.function_id)
        stop = spec.duration if fn.stop is None else min(fn.stop, spec.duration)
        arr = _arrivals(rng, fn, stop)
        if fn.latency_cov > 0:
            mu, sigma = lognormal_params(fn.mean_latency, fn.latency_cov)
            lat = function_rng(spec.seed, fn.function_id, 1).lognormal(mu, sigma, arr.size)
        else:
            lat = np.full(arr.size, fn.mean_latency)
        keep = arr + lat <= spec.duration
        arr, lat = arr[keep], lat[keep]
        ids.extend([fn.function_id] * arr.size)
        starts.append(arr)
        ends.append(arr + lat)
        order.append(np.full(arr.size, idx))
    if not ids:
        return InvocationTrace([], [], [])
    s = np.concatenate(starts)
    e = np.concatenate(ends)
    o = np.concatenate(order)
    perm = np.lexsort((o, s))
    return InvocationTrace([ids[k] for k in perm], s[perm], e[perm])


# ---------------------------------------------------------------------------
# power synthesis
# ---------------------------------------------------------------------------


def _cp_windows(starts: np.ndarray, opts: SynthesisOptions) -> tuple[np.ndarray, np.ndarray]:
    if opts.cp_align == "start":
        lo = starts.copy()
    else:
        lo = np.maximum(starts - opts.cp_window / 2.0, 0.0)
    return lo, lo + opts.cp_window


def queue_invocations(invocations: InvocationTrace, cap: int | None) -> InvocationTrace:
    """FCFS admission of invocations onto at most ``cap`` concurrent slots."""
    if cap is None or len(invocations) == 0:
        return invocations
    lat = invocations.latencies
    starts = fcfs_schedule(invocations.starts, lat, int(cap))
    return InvocationTrace(invocations.function_ids, starts, starts + lat, invocations.warm, invocations.meta)


def _running_matrix(inv: InvocationTrace, columns: list[str], t0: float, period: float, n: int) -> np.ndarray:
    index = {f: k for k, f in enumerate(columns)}
    cols = np.array([index[f] for f in inv.function_ids], dtype=np.int64)
    return interval_overlap(inv.starts, inv.ends, cols, np.ones(len(inv)), t0, period, n, len(columns))


def _dynamic_power(inv, truth, opts, columns, t0, period, n, cpu_only=False) -> np.ndarray:
    """Mean dynamic watts per bin (functions + control plane) on the grid at ``t0``."""
    run = _running_matrix(inv, columns, t0, period, n)
    watts = np.array([truth.per_function_watts[f] for f in columns])
    if cpu_only:
        watts = watts * np.array([opts.cpu_fraction_of(f) for f in columns])
    conc = run / period
    if opts.concurrency_discount:
        disc = np.array([opts.concurrency_discount.get(f, 0.0) for f in columns])
        with np.errstate(divide="ignore", invalid="ignore"):
            scaled = np.where(conc > 0, conc ** (1.0 - disc), 0.0)
        dyn = scaled @ watts
    else:
        dyn = conc @ watts
    jcp = truth.control_plane_joules_per_invocation
    if jcp > 0 and len(inv):
        lo, hi = _cp_windows(inv.starts, opts)
        frac = opts.cpu_fraction if cpu_only else 1.0
        cp = interval_overlap(lo, hi, np.zeros(len(inv), np.int64), np.full(len(inv), jcp / opts.cp_window), t0, period, n, 1)
        dyn = dyn + frac * cp[:, 0] / period
    return dyn


def _skew_profile(opts: SynthesisOptions, truth: GroundTruth, n: int) -> np.ndarray:
    grid = np.arange(n) * opts.period
    skew = np.full(n, truth.injected_skew)
    for t_from, s in sorted(opts.skew_steps):
        skew[grid >= t_from] = s
    return skew


def synthesize_power(
    invocations: InvocationTrace,
    truth: GroundTruth,
    period: float | None = None,
    concurrency_cap: int | None = None,
    *,
    options: SynthesisOptions | None = None,
    duration: float | None = None,
    horizon: float | None = None,
    seed: int = 0,
) -> SimulatedRun:
    """Render the noisy power, utilisation and counter traces for ``invocations``.

    ``horizon`` fixes the length of the rendered signal; paired runs used for
    marginal energy must share it.  Positive skew means the reported system
    power lags the true power.
    """
    opts = options or SynthesisOptions()
    if period is not None or concurrency_cap is not None:
        opts = dataclasses.replace(
            opts,
            period=opts.period if period is None else period,
            concurrency_cap=opts.concurrency_cap if concurrency_cap is None else concurrency_cap,
        )
    p = opts.period
    arrivals = np.asarray(invocations.starts, dtype=np.float64).copy()
    inv = queue_invocations(invocations, opts.concurrency_cap)
    columns = inv.functions
    missing = set(columns) - set(truth.per_function_watts)
    if missing:
        raise ConfigError(f"truth.per_function_watts lacks {sorted(missing)}")

    last = 0.0
    if len(inv):
        last = float(inv.ends.max())
        if truth.control_plane_joules_per_invocation > 0:
            last = max(last, float(_cp_windows(inv.starts, opts)[1].max()))
    if horizon is None:
        horizon = math.ceil(max(duration or 0.0, last, p) / p - 1e-9) * p
    n = int(round(horizon / p))
    grid = np.arange(n) * p
    meta = TraceMeta(0.0, p, "simulator")

    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(0x5EED,)))

    true_dyn = _dynamic_power(inv, truth, opts, columns, 0.0, p, n)
    skews = _skew_profile(opts, truth, n)
    reported = np.empty(n)
    for s in np.unique(skews):
        rows = skews == s
        if s == 0.0:
            reported[rows] = true_dyn[rows]
        else:
            reported[rows] = _dynamic_power(inv, truth, opts, columns, -float(s), p, n)[rows]
    system = truth.idle_watts + reported
    if truth.noise_std_watts > 0:
        system = system + rng.normal(0.0, truth.noise_std_watts, n)
    system = np.maximum(system, 0.0)
    if truth.quantization_step_watts > 0:
        q = truth.quantization_step_watts
        system = np.round(system / q) * q
    system_trace = PowerTrace(grid, system, Source.SYSTEM, meta)

    cpu_trace = None
    if opts.cpu_trace:
        cpu = _dynamic_power(inv, truth, opts, columns, 0.0, p, n, cpu_only=True)
        if opts.cpu_noise_std_watts > 0:
            cpu = cpu + rng.normal(0.0, opts.cpu_noise_std_watts, n)
        cpu_trace = PowerTrace(grid, np.maximum(cpu, 0.0), Source.CPU, meta)

    running = _running_matrix(inv, columns, 0.0, p, n)
    cp_busy = np.zeros(n)
    if len(inv):
        lo, hi = _cp_windows(inv.starts, opts)
        cp_busy = interval_overlap(lo, hi, np.zeros(len(inv), np.int64), np.ones(len(inv)), 0.0, p, n, 1)[:, 0]
    utilization = _utilization(grid, running, cp_busy, opts)
    counters = _counters(grid, running, cp_busy, columns, truth, opts, seed) if opts.counters else None

    return SimulatedRun(
        invocations=inv,
        system_power=system_trace,
        cpu_power=cpu_trace,
        utilization=utilization,
        counters=counters,
        truth=truth,
        options=opts,
        duration=float(duration if duration is not None else horizon),
        horizon=float(horizon),
        arrivals=arrivals,
        true_power=truth.idle_watts + true_dyn,
    )


def _utilization(grid, running, cp_busy, opts: SynthesisOptions) -> UtilizationTrace:
    p = opts.period
    cp_pct = 100.0 * cp_busy / p
    os_pct = np.full(grid.size, opts.os_cpu_percent)
    sys_pct = 100.0 * opts.cpu_util * running.sum(axis=1) / p + cp_pct + os_pct
    sys_pct = np.minimum(sys_pct, 100.0 * opts.cores)
    n = grid.size
    ts = np.repeat(grid, 3)
    principals = [Principal.CONTROL_PLANE, Principal.OS, Principal.SYSTEM_WIDE] * n
    vals = np.column_stack([cp_pct, os_pct, sys_pct]).reshape(-1)
    return UtilizationTrace(ts, principals, np.round(vals, 6), TraceMeta(0.0, p, "simulator"))


def counter_rates(function_id: str, cpu_watts: float, opts: SynthesisOptions, seed: int) -> np.ndarray:
    """Counter increments per running second consistent with the linear CPU model."""
    jitter = function_rng(seed, function_id, 7).uniform(0.5, 1.5, 4)
    sig = _BASE_COUNTER_RATES * jitter
    capacity = _BASE_COUNTER_RATES * opts.cores
    unit_power = float(np.dot(opts.counter_weights, sig / capacity))
    return sig * (cpu_watts / unit_power)


def _counters(grid, running, cp_busy, columns, truth, opts, seed) -> CounterTrace:
    p = opts.period
    capacity = np.round(_BASE_COUNTER_RATES * opts.cores * p).astype(np.int64)
    rates = [
        counter_rates(f, truth.per_function_watts[f] * opts.cpu_fraction_of(f), opts, seed) for f in columns
    ]
    cp_rate = None
    jcp = truth.control_plane_joules_per_invocation
    if jcp > 0:
        cp_rate = counter_rates(CONTROL_PLANE_ID, opts.cpu_fraction * jcp / opts.cp_window, opts, seed)
    ts, ids, rows = [], [], []
    for i, t in enumerate(grid):
        ts.append(t)
        ids.append(SYSTEM_COUNTER_ID)
        rows.append(capacity)
        if cp_rate is not None and cp_busy[i] > 0:
            ts.append(t)
            ids.append(CONTROL_PLANE_ID)
            rows.append(np.round(cp_rate * cp_busy[i]).astype(np.int64))
        for j, f in enumerate(columns):
            if running[i, j] > 0:
                ts.append(t)
                ids.append(f)
                rows.append(np.round(rates[j] * running[i, j]).astype(np.int64))
    return CounterTrace(ts, ids, np.array(rows, dtype=np.int64).reshape(-1, 4), TraceMeta(0.0, p, "simulator"))


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def true_footprints(run: SimulatedRun, policy: str = "individual") -> dict[str, float]:
    """Ground-truth joules per invocation for every function in the run.

    ``individual`` is active watts times mean latency; ``marginal`` adds the
    control-plane energy each invocation triggers; ``total`` further adds the
    even per-function idle share over the whole run divided by activations.
    """
    if policy not in ("individual", "marginal", "total"):
        raise ValueError(f"unknown policy {policy!r}")
    inv = run.invocations
    out = {}
    funcs = inv.functions
    for f in funcs:
        j = run.truth.per_function_watts[f] * inv.mean_latency(f)
        if policy in ("marginal", "total"):
            j += run.truth.control_plane_joules_per_invocation
        if policy == "total":
            j += run.truth.idle_watts * run.horizon / len(funcs) / int(inv.mask(f).sum())
        out[f] = j
    return out


def true_footprint(run: SimulatedRun, function_id: str, policy: str = "individual") -> float:
    fps = true_footprints(run, policy)
    if function_id not in fps:
        raise KeyError(f"unknown function id {function_id!r}")
    return fps[function_id]


def true_idle_shares(run: SimulatedRun, t0: float, t1: float) -> dict[str, float]:
    """Even split of idle energy over ``[t0, t1)`` among functions active in it."""
    inv = run.invocations
    active = sorted({f for f, s, e in zip(inv.function_ids, inv.starts, inv.ends) if s < t1 and e > t0})
    if not active:
        return {}
    share = run.truth.idle_watts * (t1 - t0) / len(active)
    return {f: share for f in active}


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


def simulate(scenario: Scenario, exclude: str | None = None, horizon: float | None = None, seed_offset: int = 0) -> SimulatedRun:
    """Generate the workload and render it; ``exclude`` drops one function (paired ablation)."""
    spec = scenario.workload if exclude is None else scenario.workload.without(exclude)
    inv = generate_workload(spec)
    return synthesize_power(
        inv,
        scenario.truth,
        options=scenario.options,
        duration=spec.duration,
        horizon=horizon,
        seed=spec.seed + seed_offset,
    )


def _check_keys(d: dict, allowed: set[str], where: str, required: set[str] = frozenset()) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key {unknown[0]!r}")
    missing = sorted(required - set(d))
    if missing:
        raise ConfigError(f"{where}: missing key {missing[0]!r}")


def _build(cls, d: dict, where: str, required=(), convert=None):
    names = {f.name for f in dataclasses.fields(cls)}
    _check_keys(d, names, where, set(required))
    kwargs = dict(d)
    for k, fn in (convert or {}).items():
        if k in kwargs:
            kwargs[k] = fn(kwargs[k])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def scenario_from_dict(d: dict) -> Scenario:
    _check_keys(d, {"name", "workload", "truth", "synthesis"}, "scenario", {"workload", "truth"})
    w = d["workload"]
    _check_keys(w, {"functions", "duration", "seed"}, "workload", {"functions", "duration"})
    fns = []
    for k, f in enumerate(w["functions"]):
        where = f"workload.functions[{k}]"
        iat = _build(IATSpec, f.get("iat", {}), f"{where}.iat")
        fns.append(_build(FunctionSpec, {**f, "iat": iat}, where, ("function_id", "mean_latency")))
    workload = WorkloadSpec(tuple(fns), float(w["duration"]), int(w.get("seed", 0)))
    truth = _build(GroundTruth, d["truth"], "truth", ("idle_watts", "per_function_watts"))
    options = _build(
        SynthesisOptions,
        d.get("synthesis", {}),
        "synthesis",
        convert={
            "counter_weights": tuple,
            "skew_steps": lambda xs: tuple(tuple(x) for x in xs),
        },
    )
    missing = set(workload.function_ids) - set(truth.per_function_watts)
    if missing:
        raise ConfigError(f"truth.per_function_watts: missing key {sorted(missing)[0]!r}")
    return Scenario(d.get("name", "scenario"), workload, truth, options)


def scenario_to_dict(s: Scenario) -> dict:
    def plain(obj):
        d = dataclasses.asdict(obj)
        return json.loads(json.dumps(d))

    w = plain(s.workload)
    return {"name": s.name, "workload": w, "truth": plain(s.truth), "synthesis": plain(s.options)}


def bundled_scenarios() -> list[str]:
    root = resources.files("faasmeter") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(path_or_name) -> Scenario:
    """Load a scenario JSON by path, or by bundled name such as ``four_fn``."""
    p = Path(path_or_name)
    if p.exists():
        text = p.read_text()
    else:
        name = str(path_or_name)
        name = name[:-5] if name.endswith(".json") else name
        res = resources.files("faasmeter") / "scenarios" / f"{Path(name).name}.json"
        if not res.is_file():
            raise FileNotFoundError(f"no scenario file or bundled scenario named {path_or_name!r}")
        text = res.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario is not valid JSON: {exc}") from None
    return scenario_from_dict(data)
