"""Online refinement of per-function power with a FaaS-shaped Kalman step.

Each step solves the window's least squares (``U``), measures the scalar
innovation of the previous estimate, and blends::

    X_i = alpha * X_{i-1} + beta * U_i + K * Z_i

with a per-function gain ``K_j = P_j A_j / (sum_k A_k^2 P_k + r)``.
Functions that completed no invocation in the step are left untouched.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from faasmeter.disagg import ContributionMatrix, build_contributions, solve_no_idle
from faasmeter.traces import InvocationTrace, PowerTrace, UtilizationTrace


class KalmanError(ValueError):
    pass


@dataclass(frozen=True)
class KalmanParams:
    alpha: float = 0.8
    beta: float = 0.2
    gamma: float = 0.1
    r_scale: float = 1.0
    p0: float = 1.0
    step: float = 60.0
    init: float = 100.0
    delta: float = 1.0
    alpha_beta_bound: float = 1.2

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise KalmanError(f"{name} must lie in [0, 1], got {v}")
        if self.alpha + self.beta > self.alpha_beta_bound:
            raise KalmanError(f"alpha + beta exceeds {self.alpha_beta_bound}")
        if self.r_scale < 0:
            raise KalmanError("measurement noise must be nonnegative")
        if self.p0 < 0:
            raise KalmanError("p0 must be nonnegative")
        if not (self.step > 0 and self.init > 0 and self.delta > 0):
            raise KalmanError("step, init and delta must be positive")

    @property
    def r(self) -> float:
        """Measurement noise, proportional to 1/delta."""
        return self.r_scale / self.delta


@dataclass(frozen=True)
class LatencyStats:
    """Welford running mean/variance of latencies (seconds, seconds^2)."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, samples) -> "LatencyStats":
        n, mean, m2 = self.n, self.mean, self.m2
        for x in np.asarray(samples, dtype=np.float64).reshape(-1):
            n += 1
            d = x - mean
            mean += d / n
            m2 += d * (x - mean)
        return LatencyStats(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0


@dataclass(frozen=True)
class KalmanState:
    x_hat: dict[str, float]
    P: dict[str, float]
    latency: dict[str, LatencyStats]
    params: KalmanParams
    t: float = 0.0

    @property
    def functions(self) -> list[str]:
        return sorted(self.x_hat)

    def joules(self) -> dict[str, float]:
        return {f: x * self.latency[f].mean for f, x in self.x_hat.items() if f in self.latency and self.latency[f].n}


def _latencies_by_function(cm: ContributionMatrix, latencies) -> dict[str, np.ndarray]:
    latencies = latencies or {}
    return {c: np.asarray(latencies.get(c, ()), dtype=np.float64) for c in cm.columns}


def init_state(
    cm: ContributionMatrix,
    params: KalmanParams | None = None,
    latencies: dict | None = None,
    idle_watts: float = 0.0,
    prior: dict[str, float] | None = None,
) -> KalmanState:
    """Initial estimate from one large window (or a prior footprint map)."""
    params = params or KalmanParams()
    lat = _latencies_by_function(cm, latencies)
    stats = {c: LatencyStats().update(v) for c, v in lat.items() if v.size}
    if prior is not None:
        x = {f: max(float(v), 0.0) for f, v in prior.items()}
    else:
        active = [c for c in cm.columns if cm.C[:, cm.index(c)].sum() > 0]
        if not active:
            return KalmanState({}, {}, {}, params, cm.window[1])
        sol = solve_no_idle(cm.select(active), idle_watts=idle_watts)
        x = {c: max(float(v), 0.0) for c, v in zip(sol.columns, sol.x)}
    for f in x:
        stats.setdefault(f, LatencyStats())
    return KalmanState(x, {f: params.p0 for f in x}, stats, params, cm.window[1])


def kalman_step(
    state: KalmanState,
    cm: ContributionMatrix,
    A=None,
    latencies: dict | None = None,
    idle_watts: float = 0.0,
) -> KalmanState:
    """One filter update over the window described by ``cm`` (with ``cm.W`` set)."""
    if cm.W is None:
        raise KalmanError("contribution matrix lacks power measurements")
    p = state.params
    if p.r < 0:
        raise KalmanError("negative measurement noise")
    A = cm.A.sum(axis=0) if A is None else np.asarray(A, dtype=np.float64).reshape(-1)
    if A.shape != (len(cm.columns),):
        raise KalmanError(f"A has shape {A.shape}, expected ({len(cm.columns)},)")

    running = cm.C.sum(axis=0)
    present = [k for k, c in enumerate(cm.columns) if running[k] > 0]
    x_new = dict(state.x_hat)
    P_new = dict(state.P)
    stats = dict(state.latency)
    lat = _latencies_by_function(cm, latencies)

    if present:
        sub = cm.select([cm.columns[k] for k in present])
        U = solve_no_idle(sub, idle_watts=idle_watts).as_dict()
        target = np.maximum(sub.W - idle_watts, 0.0)
        prev = np.array([state.x_hat.get(c, U[c]) for c in sub.columns])
        z_bar = float(np.mean(target - sub.occupancy @ prev))

        updating = [cm.columns[k] for k in present if A[k] > 0 and cm.columns[k] in state.x_hat]
        a = {c: float(A[cm.index(c)]) for c in updating}
        P_pred = {}
        for c in updating:
            sigma = stats[c].variance if c in stats else 0.0
            P_pred[c] = p.alpha * state.P[c] + p.gamma * sigma
        denom = sum(a[c] ** 2 * P_pred[c] for c in updating) + p.r
        for c in updating:
            K = P_pred[c] * a[c] / denom if denom > 0 else 0.0
            P_new[c] = (1.0 - K * a[c]) * P_pred[c]
            x_new[c] = max(p.alpha * state.x_hat[c] + p.beta * U[c] + K * z_bar, 0.0)

        for c in sub.columns:
            if c not in state.x_hat:
                # new function: alpha=0, beta=1, K=0
                x_new[c] = max(U[c], 0.0)
                P_new[c] = p.p0

    for c, v in lat.items():
        if v.size or c in x_new:
            stats[c] = stats.get(c, LatencyStats()).update(v)
    return KalmanState(x_new, P_new, stats, p, cm.window[1])


@dataclass(frozen=True)
class Snapshot:
    t0: float
    t1: float
    watts: dict[str, float]
    joules: dict[str, float]
    p_variance: dict[str, float]
    activations: dict[str, int]
    running: dict[str, float]
    measured: np.ndarray
    predicted: np.ndarray
    initial: bool = False

    @property
    def total_error(self) -> float:
        ok = self.measured > 0
        if not ok.any():
            return 0.0
        return float(np.mean(np.abs(self.measured[ok] - self.predicted[ok]) / self.measured[ok]))


@dataclass
class OnlineResult:
    snapshots: list[Snapshot] = field(default_factory=list)
    state: KalmanState | None = None

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def steps(self) -> list[Snapshot]:
        return [s for s in self.snapshots if not s.initial]

    def series(self, function_id: str, what: str = "joules") -> np.ndarray:
        return np.array([getattr(s, what)[function_id] for s in self.snapshots if function_id in getattr(s, what)])

    def total_errors(self) -> np.ndarray:
        return np.array([s.total_error for s in self.steps])


def _step_latencies(inv: InvocationTrace, t0: float, t1: float) -> dict[str, np.ndarray]:
    ends = np.asarray(inv.ends)
    sel = (ends >= t0) & (ends < t1)
    ids = inv.ids_array()[sel]
    lat = np.asarray(inv.latencies)[sel]
    return {f: lat[ids == f] for f in set(ids)}


def _snapshot(state: KalmanState, cm: ContributionMatrix, idle_watts: float, initial: bool) -> Snapshot:
    x = np.array([state.x_hat.get(c, 0.0) for c in cm.columns])
    predicted = idle_watts + cm.occupancy @ x
    joules = state.joules()
    present = {c for k, c in enumerate(cm.columns) if cm.C[:, k].sum() > 0}
    return Snapshot(
        t0=cm.window[0],
        t1=cm.window[1],
        watts=dict(state.x_hat),
        joules=joules,
        p_variance=dict(state.P),
        activations={c: v for c, v in cm.activations().items() if c in present},
        running={c: v for c, v in cm.running_time().items() if c in present},
        measured=np.asarray(cm.W, dtype=np.float64),
        predicted=predicted,
        initial=initial,
    )


def run_online(
    invocations: InvocationTrace,
    power: PowerTrace,
    params: KalmanParams | None = None,
    idle_watts: float = 0.0,
    utilization: UtilizationTrace | None = None,
    principals=(),
    window: tuple[float, float] | None = None,
    prior: dict[str, float] | None = None,
) -> OnlineResult:
    """Initialise on the first ``init`` seconds, then step every ``step`` seconds."""
    params = params or KalmanParams()
    if len(invocations) == 0 or len(power) == 0:
        return OnlineResult()
    d = params.delta
    if window is None:
        window = (math.ceil(power.start / d - 1e-9) * d, math.floor(power.end / d + 1e-9) * d)
    full = build_contributions(
        invocations,
        utilization,
        d,
        window,
        principals,
        power,
        functions=invocations.functions,
    )
    n_init = max(1, int(round(params.init / d)))
    n_step = max(1, int(round(params.step / d)))
    if full.n_rows < n_init:
        raise KalmanError(f"trace shorter than the initial window ({params.init} s)")

    result = OnlineResult()
    head = full.rows(0, n_init)
    state = init_state(head, params, _step_latencies(invocations, *head.window), idle_watts, prior)
    result.snapshots.append(_snapshot(state, head, idle_watts, True))
    lo = n_init
    while lo < full.n_rows:
        hi = min(lo + n_step, full.n_rows)
        cm = full.rows(lo, hi)
        state = kalman_step(state, cm, latencies=_step_latencies(invocations, *cm.window), idle_watts=idle_watts)
        result.snapshots.append(_snapshot(state, cm, idle_watts, False))
        lo = hi
    result.state = state
    return result


def with_params(params: KalmanParams, **changes) -> KalmanParams:
    return dataclasses.replace(params, **changes)
