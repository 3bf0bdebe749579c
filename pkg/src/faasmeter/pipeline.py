"""End-to-end profiling of a trace bundle: skew correction, solve, attribute."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from faasmeter.attribution import FootprintSpectrum, spectrum_for_window
from faasmeter.disagg import (
    ContributionMatrix,
    DisaggError,
    PowerModelCpu,
    Solution,
    build_contributions,
    footprints,
    solve_combined,
    solve_full,
    solve_no_idle,
    train_cpu_model,
)
from faasmeter.kalman import KalmanParams, OnlineResult, run_online
from faasmeter.signal import (
    DEFAULT_BOUND_S,
    SkewError,
    SkewEstimate,
    apply_skew,
    estimate_skew,
    reference_from_counters,
)
from faasmeter.traces import CounterTrace, InvocationTrace, PowerTrace, UtilizationTrace, window_means

MODES = ("full", "no-idle", "combined")


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ProfileConfig:
    mode: str = "no-idle"
    delta: float = 1.0
    principals: tuple[str, ...] = ()
    idle_watts: float = 0.0
    correct_skew: bool = True
    skew_bound: float = DEFAULT_BOUND_S
    online: bool = False
    kalman: KalmanParams = field(default_factory=KalmanParams)
    spectrum_window: float = 60.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ProfileError(f"mode must be one of {', '.join(MODES)}; got {self.mode!r}")
        if not self.delta > 0:
            raise ProfileError("delta must be > 0 s")
        if self.idle_watts < 0:
            raise ProfileError("idle_watts must be >= 0")
        if not 0 < self.skew_bound <= 10:
            raise ProfileError("skew bound must lie in (0, 10] s")
        if not self.spectrum_window > 0:
            raise ProfileError("spectrum window must be > 0 s")


@dataclass
class ProfileResult:
    config: ProfileConfig
    matrix: ContributionMatrix
    solution: Solution
    footprints: dict[str, float]
    predicted: np.ndarray
    skew: SkewEstimate | None = None
    skew_reference: str | None = None
    cpu_model: PowerModelCpu | None = None
    online: OnlineResult | None = None
    spectra: list[FootprintSpectrum] = field(default_factory=list)

    @property
    def total_error(self) -> float:
        W = self.matrix.W
        ok = W > 0
        return float(np.mean(np.abs(W[ok] - self.predicted[ok]) / W[ok])) if ok.any() else 0.0


def _grid_window(power: PowerTrace, delta: float) -> tuple[float, float]:
    t0 = math.ceil(power.start / delta - 1e-9) * delta
    t1 = math.floor(power.end / delta + 1e-9) * delta
    if t1 <= t0:
        raise ProfileError("power trace shorter than one interval")
    return t0, t1


def correct_skew(
    system: PowerTrace,
    cpu: PowerTrace | None = None,
    counters: CounterTrace | None = None,
    bound: float = DEFAULT_BOUND_S,
) -> tuple[PowerTrace, SkewEstimate | None, str | None]:
    """Align system power to the CPU trace, else to a counter-derived reference.

    Returns the (possibly unchanged) trace, the estimate and the reference used.
    """
    refs = []
    if cpu is not None and len(cpu):
        refs.append(("cpu", cpu))
    if counters is not None and len(counters):
        try:
            refs.append(("counters", reference_from_counters(counters)))
        except SkewError:
            pass
    for name, ref in refs:
        try:
            est = estimate_skew(system, ref, bound)
        except SkewError:
            continue
        period = system.period
        shift = round(est.offset_s / period) * period
        return apply_skew(system, shift), est, name
    return system, None, None


def profile(
    invocations: InvocationTrace,
    system_power: PowerTrace,
    cpu_power: PowerTrace | None = None,
    utilization: UtilizationTrace | None = None,
    counters: CounterTrace | None = None,
    config: ProfileConfig | None = None,
) -> ProfileResult:
    """Profile one trace bundle; see :class:`ProfileConfig` for the knobs."""
    cfg = config or ProfileConfig()
    if cfg.mode == "combined":
        if cpu_power is None:
            raise ProfileError("combined mode needs a cpu power trace (source=cpu in power.csv)")
        if counters is None:
            raise ProfileError("combined mode needs a counters trace (counters.csv)")
    if cfg.principals and utilization is None:
        raise ProfileError("shared principals need a utilization trace (utilization.csv)")
    if len(invocations) == 0:
        raise ProfileError("invocation trace is empty")

    skew = ref_name = None
    power = system_power
    if cfg.correct_skew:
        power, skew, ref_name = correct_skew(system_power, cpu_power, counters, cfg.skew_bound)
    window = _grid_window(power, cfg.delta)
    try:
        cm = build_contributions(invocations, utilization, cfg.delta, window, cfg.principals, power)
    except DisaggError as exc:
        raise ProfileError(str(exc)) from None

    model = None
    if cfg.mode == "full":
        sol = solve_full(cm)
        predicted = cm.occupancy @ sol.x
    elif cfg.mode == "no-idle":
        sol = solve_no_idle(cm, idle_watts=cfg.idle_watts)
        predicted = cfg.idle_watts + cm.occupancy @ sol.x
    else:
        model = train_cpu_model(counters, cpu_power)
        W_cpu = window_means(cpu_power, cm.t0, cm.delta, cm.n_rows)
        sol = solve_combined(cm, cm.W, W_cpu, model, counters, cfg.idle_watts)
        predicted = cfg.idle_watts + cm.occupancy @ sol.x

    result = ProfileResult(
        config=cfg,
        matrix=cm,
        solution=sol,
        footprints=footprints(sol, invocations),
        predicted=predicted,
        skew=skew,
        skew_reference=ref_name,
        cpu_model=model,
    )
    if cfg.online:
        params = cfg.kalman if math.isclose(cfg.kalman.delta, cfg.delta) else KalmanParams(
            **{**cfg.kalman.__dict__, "delta": cfg.delta}
        )
        result.online = run_online(
            invocations,
            power,
            params,
            idle_watts=cfg.idle_watts,
            utilization=utilization,
            principals=cfg.principals,
            window=window,
        )
    result.spectra = window_spectra(result, invocations)
    return result


def window_spectra(result: ProfileResult, invocations: InvocationTrace, per_window: bool = False) -> list[FootprintSpectrum]:
    """Per-window footprint spectra.

    Online profiles use each step's filtered power; batch profiles apply the
    whole-trace solution to every window.  With ``per_window`` every window
    is solved on its own instead, which gives statistically independent
    estimates.  Idle is attributed only when the solution excludes it
    (no-idle and combined modes).
    """
    cfg = result.config
    cm = result.matrix
    idle = cfg.idle_watts if cfg.mode != "full" else 0.0
    lat = {f: invocations.mean_latency(f) for f in invocations.functions}
    out = []
    if per_window:
        k = max(1, int(round(cfg.spectrum_window / cm.delta)))
        for lo in range(0, cm.n_rows, k):
            sub = cm.rows(lo, min(lo + k, cm.n_rows))
            sub = sub.select([c for c in sub.columns if sub.C[:, sub.index(c)].sum() > 0])
            sol = solve_full(sub) if cfg.mode == "full" else solve_no_idle(sub, idle_watts=idle)
            out.append(spectrum_for_window(sub, sol, invocations, idle, lat))
        return out
    if result.online is not None and result.online.snapshots:
        for snap in result.online.snapshots:
            lo = int(round((snap.t0 - cm.t0) / cm.delta))
            hi = int(round((snap.t1 - cm.t0) / cm.delta))
            sub = cm.rows(lo, hi)
            out.append(spectrum_for_window(sub, snap.watts, invocations, idle, lat))
        return out
    k = max(1, int(round(cfg.spectrum_window / cm.delta)))
    x = result.solution.as_dict()
    for lo in range(0, cm.n_rows, k):
        sub = cm.rows(lo, min(lo + k, cm.n_rows))
        out.append(spectrum_for_window(sub, x, invocations, idle, lat))
    return out
