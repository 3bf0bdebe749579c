"""Software power capping by footprint-aware admission control.

At every tick (one power sample period) the FCFS queue head is admitted if
the predicted energy over the horizon stays within the cap::

    W * t + J  <=  W_cap * t

where ``W`` is the last measured system power and ``J`` the function's
footprint.  Admissions inside one tick are checked in order against a
running total.  The buffer policy instead admits while ``W + b < W_cap``.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from faasmeter.simulator import GroundTruth, Scenario, SynthesisOptions, generate_workload
from faasmeter.traces import InvocationTrace, PowerTrace, Source, TraceMeta


class CapMode(str, enum.Enum):
    FOOTPRINT = "footprint"
    BUFFER = "buffer"


class Decision(str, enum.Enum):
    ADMIT = "admit"
    DEFER = "defer"


class StarvationError(RuntimeError):
    """The cap leaves no room for the queue head; the run cannot make progress."""


@dataclass(frozen=True)
class CapPolicy:
    cap_watts: float
    horizon: float = 1.0
    mode: CapMode = CapMode.FOOTPRINT
    buffer_watts: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mode", CapMode(self.mode))
        if not self.cap_watts > 0:
            raise ValueError("cap_watts must be > 0")
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0 s")
        if self.buffer_watts < 0:
            raise ValueError("buffer_watts must be >= 0")


@dataclass(frozen=True)
class QueueDecision:
    invocation: int
    function_id: str
    decision: Decision
    predicted_joules: float
    observed_watts: float
    time: float = 0.0
    fallback: bool = False

    def to_dict(self) -> dict:
        return {
            "invocation": self.invocation,
            "function_id": self.function_id,
            "decision": self.decision.value,
            "predicted_joules": self.predicted_joules,
            "observed_watts": self.observed_watts,
            "time": self.time,
            "fallback": self.fallback,
        }


def admit(
    function_id: str,
    current_watts: float,
    footprint: float | None,
    policy: CapPolicy,
    invocation: int = -1,
    time: float = 0.0,
) -> QueueDecision:
    """Admission test for one queue head.

    A missing footprint under the footprint policy falls back to the buffer
    rule for this decision and is flagged.
    """
    t = policy.horizon
    if policy.mode is CapMode.FOOTPRINT and footprint is not None:
        predicted = current_watts * t + footprint
        ok = predicted <= policy.cap_watts * t
        return QueueDecision(
            invocation, function_id, Decision.ADMIT if ok else Decision.DEFER, float(predicted), float(current_watts), time
        )
    fallback = policy.mode is CapMode.FOOTPRINT
    predicted = (current_watts + policy.buffer_watts) * t
    ok = current_watts + policy.buffer_watts < policy.cap_watts
    return QueueDecision(
        invocation, function_id, Decision.ADMIT if ok else Decision.DEFER, float(predicted), float(current_watts), time, fallback
    )


@dataclass
class CappedRun:
    policy: CapPolicy
    invocations: InvocationTrace
    arrivals: np.ndarray
    power: PowerTrace
    decisions: list[QueueDecision] = field(default_factory=list)

    @property
    def overshoot(self) -> float:
        """Fraction of power samples above the cap."""
        w = np.asarray(self.power.watts)
        # a sample sitting exactly on the cap (to rounding) is not an overshoot
        limit = self.policy.cap_watts * (1.0 + 1e-9)
        return float(np.mean(w > limit)) if w.size else 0.0

    @property
    def latencies(self) -> np.ndarray:
        """End-to-end latency including queueing delay, in arrival order."""
        return np.asarray(self.invocations.ends) - self.arrivals

    @property
    def waits(self) -> np.ndarray:
        return np.asarray(self.invocations.starts) - self.arrivals

    def latency_by_function(self) -> dict[str, np.ndarray]:
        ids = self.invocations.ids_array()
        lat = self.latencies
        return {f: lat[ids == f] for f in self.invocations.functions}

    def summary(self) -> dict:
        lat = self.latencies
        per = {
            f: {"mean_s": float(v.mean()), "std_s": float(v.std()), "n": int(v.size)}
            for f, v in self.latency_by_function().items()
        }
        return {
            "cap_watts": self.policy.cap_watts,
            "mode": self.policy.mode.value,
            "horizon_s": self.policy.horizon,
            "buffer_watts": self.policy.buffer_watts,
            "overshoot_fraction": self.overshoot,
            "mean_latency_s": float(lat.mean()) if lat.size else 0.0,
            "latency_std_s": float(lat.std()) if lat.size else 0.0,
            "mean_wait_s": float(self.waits.mean()) if lat.size else 0.0,
            "deferrals": sum(d.decision is Decision.DEFER for d in self.decisions),
            "fallbacks": sum(d.fallback for d in self.decisions),
            "per_function": per,
        }


def _bin_add(dyn: np.ndarray, s: float, e: float, watts: float, period: float) -> None:
    """Add ``watts`` over ``[s, e)`` to the per-bin mean power array."""
    n = dyn.size
    k0 = int(math.floor(s / period))
    k1 = min(int(math.ceil(e / period)), n)
    for k in range(max(k0, 0), k1):
        lo = max(s, k * period)
        hi = min(e, (k + 1) * period)
        if hi > lo:
            dyn[k] += watts * (hi - lo) / period


def run_capped(
    workload: InvocationTrace,
    truth: GroundTruth,
    policy: CapPolicy,
    footprints: dict[str, float] | str | None = None,
    options: SynthesisOptions | None = None,
    seed: int = 0,
    duration: float | None = None,
    max_wait: float = 600.0,
) -> CappedRun:
    """Closed-loop capped execution of ``workload`` (arrival times and latencies).

    Power is rendered as execution proceeds; every decision during tick ``k``
    sees the noisy measurement of sample ``k - 1``.  Deferred heads are
    retried at tick starts; an arrival to an empty queue is decided at once.  Control-plane energy is drawn
    at the start of each admitted invocation.  Latency includes queue wait.

    ``footprints="exact"`` gives the controller each invocation's true added
    energy (its own latency times active watts, plus control-plane energy).
    """
    opts = options or SynthesisOptions()
    p = opts.period
    exact = isinstance(footprints, str)
    if exact and footprints != "exact":
        raise ValueError(f"unknown footprint source {footprints!r}")
    footprints = {} if exact or footprints is None else footprints
    order = np.argsort(np.asarray(workload.starts), kind="stable")
    ids = [workload.function_ids[k] for k in order]
    arr = np.asarray(workload.starts)[order]
    lat = np.asarray(workload.latencies)[order]
    n_inv = len(ids)

    end_hint = max(duration or 0.0, float((arr + lat).max()) if n_inv else 0.0)
    n_bins = int(math.ceil(end_hint / p)) + 1
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(0xCA9,)))
    noise_chunk = 4096

    dyn = np.zeros(n_bins)
    noise = np.zeros(0)
    measured = []

    def grow(k: int):
        nonlocal dyn, noise
        if k >= dyn.size:
            dyn = np.concatenate([dyn, np.zeros(max(k + 1 - dyn.size, dyn.size))])
        while k >= noise.size:
            fresh = rng.normal(0.0, truth.noise_std_watts, noise_chunk) if truth.noise_std_watts > 0 else np.zeros(noise_chunk)
            noise = np.concatenate([noise, fresh])

    def sample(k: int) -> float:
        grow(k)
        w = max(truth.idle_watts + dyn[k] + noise[k], 0.0)
        q = truth.quantization_step_watts
        return float(np.round(w / q) * q) if q > 0 else w

    if policy.cap_watts <= truth.idle_watts and n_inv:
        raise StarvationError(
            f"cap {policy.cap_watts:g} W is at or below idle power {truth.idle_watts:g} W; every invocation would defer"
        )
    starts = np.full(n_inv, np.nan)
    busy_until = -math.inf
    queue: deque[int] = deque()
    decisions: list[QueueDecision] = []
    jcp = truth.control_plane_joules_per_invocation

    def drain(now: float, running_w: float) -> float:
        """Admit queue heads at ``now`` until one is deferred; returns the running total."""
        nonlocal busy_until
        while queue:
            i = queue[0]
            f = ids[i]
            j = truth.per_function_watts[f] * lat[i] + jcp if exact else footprints.get(f)
            d = admit(f, running_w, j, policy, int(order[i]), now)
            decisions.append(d)
            if d.decision is Decision.DEFER:
                break
            queue.popleft()
            starts[i] = now
            busy_until = max(busy_until, now + lat[i])
            _bin_add(dyn, now, now + lat[i], truth.per_function_watts[f], p)
            if jcp > 0:
                _bin_add(dyn, now, now + opts.cp_window, jcp / opts.cp_window, p)
            if policy.mode is CapMode.FOOTPRINT and not d.fallback:
                running_w += j / policy.horizon
            else:
                running_w += policy.buffer_watts
        return running_w

    nxt = 0
    k = 0
    blocked_since = None
    carry = 0.0
    while nxt < n_inv or queue:
        t = k * p
        grow(k + int(math.ceil(lat.max() / p)) + 2 if n_inv else k)
        # the controller sees the last completed sample, plus the predicted
        # draw of anything it admitted mid-tick that the sample only partly holds
        running_w = (measured[-1] if measured else truth.idle_watts) + carry
        carry = 0.0
        while nxt < n_inv and arr[nxt] <= t + 1e-12:
            queue.append(nxt)
            nxt += 1
        running_w = drain(t, running_w)
        # arrivals inside the tick reaching an empty queue are decided on arrival
        while nxt < n_inv and arr[nxt] < t + p - 1e-12:
            queue.append(nxt)
            nxt += 1
            if len(queue) == 1:
                before = running_w
                running_w = drain(float(arr[queue[0]]), running_w)
                carry += running_w - before
        if queue and busy_until <= t:
            blocked_since = t if blocked_since is None else blocked_since
            if t - blocked_since >= max_wait:
                f = ids[queue[0]]
                raise StarvationError(
                    f"invocation of {f!r} deferred for {max_wait:g} s with nothing running: "
                    f"cap {policy.cap_watts:g} W leaves no room above idle {truth.idle_watts:g} W "
                    f"for footprint {footprints.get(f, float('nan')):g} J over {policy.horizon:g} s"
                )
        else:
            blocked_since = None
        measured.append(sample(k))
        k += 1

    done = float(np.nanmax(starts + lat)) if n_inv else 0.0
    last = int(math.ceil(max(done, end_hint) / p))
    while len(measured) < last:
        measured.append(sample(len(measured)))
    grid = np.arange(len(measured)) * p
    power = PowerTrace(grid, np.array(measured), Source.SYSTEM, TraceMeta(0.0, p, f"capped {policy.mode.value}"))
    # FCFS keeps start times in arrival order
    inv = InvocationTrace(ids, starts, starts + lat)
    return CappedRun(policy, inv, arr, power, decisions)


def run_capped_scenario(
    scenario: Scenario,
    policy: CapPolicy,
    footprints: dict[str, float] | str | None = None,
    max_wait: float = 600.0,
) -> CappedRun:
    """Generate the scenario's workload and run it under ``policy``.

    Without explicit footprints the true individual footprints
    (active watts times mean latency) are used.
    """
    wl = generate_workload(scenario.workload)
    if footprints is None:
        footprints = {
            f: scenario.truth.per_function_watts[f] * wl.mean_latency(f) for f in wl.functions
        }
    return run_capped(
        wl,
        scenario.truth,
        policy,
        footprints,
        scenario.options,
        seed=scenario.workload.seed,
        duration=scenario.workload.duration,
        max_wait=max_wait,
    )


def cap_sweep(scenario: Scenario, caps, mode: CapMode = CapMode.FOOTPRINT, buffer_watts: float = 0.0, footprints=None) -> list[dict]:
    """Summaries for each cap, in the order given."""
    out = []
    for c in caps:
        run = run_capped_scenario(scenario, CapPolicy(float(c), 1.0, mode, buffer_watts), footprints)
        out.append(run.summary())
    return out
