"""Contribution matrices and least-squares power disaggregation.

Rows are intervals of width ``delta``; columns are functions (seconds of
running time in the interval) optionally followed by shared principals
(utilisation-normalised busy time).  Solving ``min ||C x - W||`` with
``x >= 0`` gives each column's power while running.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from faasmeter._kernels import bin_means, interval_overlap
from faasmeter.traces import (
    CONTROL_PLANE_ID,
    CounterTrace,
    InvocationTrace,
    Principal,
    PowerTrace,
    UtilizationTrace,
    window_means,
)

OS_ID = "__os__"
DEFAULT_DELTA = 1.0
RETRAIN_THRESHOLD = 0.05
MIN_TRAINING_SAMPLES = 30

PRINCIPAL_COLUMNS = {
    "cp": (CONTROL_PLANE_ID, Principal.CONTROL_PLANE),
    "control_plane": (CONTROL_PLANE_ID, Principal.CONTROL_PLANE),
    "os": (OS_ID, Principal.OS),
}


class DisaggError(ValueError):
    pass


@dataclass(frozen=True)
class ContributionMatrix:
    t0: float
    delta: float
    columns: tuple[str, ...]
    C: np.ndarray
    A: np.ndarray
    W: np.ndarray | None = None
    shared: tuple[str, ...] = ()

    @property
    def n_rows(self) -> int:
        return self.C.shape[0]

    @property
    def occupancy(self) -> np.ndarray:
        """Mean concurrency per interval (``C / delta``); ``occupancy @ x`` is mean watts."""
        return self.C / self.delta

    @property
    def window(self) -> tuple[float, float]:
        return self.t0, self.t0 + self.n_rows * self.delta

    @property
    def functions(self) -> tuple[str, ...]:
        return tuple(c for c in self.columns if c not in self.shared)

    def index(self, column: str) -> int:
        return self.columns.index(column)

    def with_power(self, W) -> "ContributionMatrix":
        W = np.asarray(W, dtype=np.float64)
        if W.shape != (self.n_rows,):
            raise DisaggError(f"W has shape {W.shape}, expected ({self.n_rows},)")
        return ContributionMatrix(self.t0, self.delta, self.columns, self.C, self.A, W, self.shared)

    def rows(self, lo: int, hi: int) -> "ContributionMatrix":
        W = None if self.W is None else self.W[lo:hi]
        return ContributionMatrix(self.t0 + lo * self.delta, self.delta, self.columns, self.C[lo:hi], self.A[lo:hi], W, self.shared)

    def select(self, columns) -> "ContributionMatrix":
        idx = [self.index(c) for c in columns]
        shared = tuple(c for c in columns if c in self.shared)
        return ContributionMatrix(self.t0, self.delta, tuple(columns), self.C[:, idx], self.A[:, idx], self.W, shared)

    def aggregate(self, k: int) -> "ContributionMatrix":
        """Merge ``k`` adjacent intervals (trailing partial group dropped)."""
        n = (self.n_rows // k) * k
        C = self.C[:n].reshape(-1, k, self.C.shape[1]).sum(axis=1)
        A = self.A[:n].reshape(-1, k, self.A.shape[1]).sum(axis=1)
        W = None if self.W is None else self.W[:n].reshape(-1, k).mean(axis=1)
        return ContributionMatrix(self.t0, self.delta * k, self.columns, C, A, W, self.shared)

    def running_time(self) -> dict[str, float]:
        return {c: float(self.C[:, j].sum()) for j, c in enumerate(self.columns)}

    def activations(self) -> dict[str, int]:
        return {c: int(round(self.A[:, j].sum())) for j, c in enumerate(self.columns)}


def _principal_fraction(util: UtilizationTrace, principal: Principal, t0: float, delta: float, n: int) -> np.ndarray:
    ts, pct = util.series(principal)
    if ts.size == 0:
        raise DisaggError(f"utilization lacks {principal.value} samples")
    period = util.meta.nominal_period_s if util.meta and util.meta.nominal_period_s else delta
    return bin_means(ts, pct, float(ts[-1]) + period, t0, delta, n)


def build_contributions(
    invocations: InvocationTrace,
    utilization: UtilizationTrace | None = None,
    delta: float = DEFAULT_DELTA,
    window: tuple[float, float] | None = None,
    principals=(),
    power: PowerTrace | None = None,
    functions=None,
) -> ContributionMatrix:
    """Build C (running seconds), A (completions) and optionally W per interval.

    Only functions with running time in the window get columns unless
    ``functions`` lists them explicitly.  ``principals`` may contain ``"cp"``
    and/or ``"os"``; their column is ``cpu% / system cpu% * delta``.
    """
    if not delta > 0:
        raise DisaggError("delta must be positive")
    if window is None:
        if len(invocations) == 0:
            raise DisaggError("empty window: no invocations and no explicit window")
        window = (
            math.floor(float(invocations.starts.min()) / delta) * delta,
            math.ceil(float(invocations.ends.max()) / delta) * delta,
        )
    t0, t1 = float(window[0]), float(window[1])
    n = int(round((t1 - t0) / delta))
    if n <= 0:
        raise DisaggError("empty window")

    ids = invocations.ids_array()
    starts, ends = np.asarray(invocations.starts), np.asarray(invocations.ends)
    in_win = (starts < t1) & (ends > t0)
    if functions is None:
        columns = sorted(set(ids[in_win]))
    else:
        columns = list(functions)
    index = {f: k for k, f in enumerate(columns)}
    sel = np.array([in_win[k] and ids[k] in index for k in range(len(ids))], dtype=bool)
    cols = np.array([index[f] for f in ids[sel]], dtype=np.int64)
    m = len(columns)
    C = interval_overlap(starts[sel], ends[sel], cols, np.ones(cols.size), t0, delta, n, m)

    A = np.zeros((n, m))
    done = sel & (ends >= t0) & (ends < t1)
    if done.any():
        rows = np.floor((ends[done] - t0) / delta).astype(np.int64)
        rows = np.clip(rows, 0, n - 1)
        np.add.at(A, (rows, np.array([index[f] for f in ids[done]], dtype=np.int64)), 1.0)

    shared = []
    extra_C, extra_A = [], []
    for p in principals:
        if p not in PRINCIPAL_COLUMNS:
            raise DisaggError(f"unknown principal {p!r}")
        col, principal = PRINCIPAL_COLUMNS[p]
        if col in shared:
            continue
        if utilization is None:
            raise DisaggError(f"utilization trace required for principal {p!r}")
        part = _principal_fraction(utilization, principal, t0, delta, n)
        total = _principal_fraction(utilization, Principal.SYSTEM_WIDE, t0, delta, n)
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(total > 0, part / total, 0.0)
        extra_C.append(np.clip(frac * delta, 0.0, delta))
        extra_A.append(A.sum(axis=1))
        shared.append(col)
    if shared:
        C = np.column_stack([C, *extra_C])
        A = np.column_stack([A, *extra_A])
        columns = columns + shared

    W = window_means(power, t0, delta, n) if power is not None else None
    return ContributionMatrix(t0, float(delta), tuple(columns), C, A, W, tuple(shared))


@dataclass(frozen=True)
class Solution:
    columns: tuple[str, ...]
    x: np.ndarray
    unidentifiable: tuple[str, ...] = ()
    degenerate: bool = False
    residual_norm: float = 0.0
    parts: dict = field(default_factory=dict)

    def as_dict(self) -> dict[str, float]:
        return {c: float(v) for c, v in zip(self.columns, self.x)}

    def __getitem__(self, column: str) -> float:
        return float(self.x[self.columns.index(column)])


def _unpack(C, W, columns):
    if isinstance(C, ContributionMatrix):
        cm = C
        W = cm.W if W is None else W
        columns = cm.columns if columns is None else columns
        C = cm.occupancy
    C = np.atleast_2d(np.asarray(C, dtype=np.float64))
    if W is None:
        raise DisaggError("no power vector W supplied")
    W = np.asarray(W, dtype=np.float64).reshape(-1)
    if C.shape[0] != W.shape[0]:
        raise DisaggError(f"C has {C.shape[0]} rows but W has {W.shape[0]}")
    if columns is None:
        columns = tuple(str(k) for k in range(C.shape[1]))
    return C, W, tuple(columns)


def solve_full(C, W=None, columns=None) -> Solution:
    """Nonnegative least squares ``argmin_{x>=0} ||C x - W||``.

    All-zero columns are unidentifiable and pinned to 0.  If the active
    columns are rank deficient the minimum-norm least-squares solution is
    used when it is feasible, and the result is flagged degenerate.
    """
    C, W, columns = _unpack(C, W, columns)
    m = C.shape[1]
    x = np.zeros(m)
    norms = np.linalg.norm(C, axis=0) if C.size else np.zeros(m)
    active = np.flatnonzero(norms > 0)
    unident = tuple(columns[k] for k in range(m) if norms[k] == 0)
    degenerate = False
    if active.size:
        Ca = C[:, active]
        xa, _ = nnls(Ca, W, maxiter=max(50, 10 * active.size))
        if np.linalg.matrix_rank(Ca) < active.size:
            degenerate = True
            xmn = np.linalg.pinv(Ca) @ W
            scale = max(1.0, float(np.abs(xmn).max()))
            if np.all(xmn >= -1e-9 * scale):
                xa = np.maximum(xmn, 0.0)
        x[active] = xa
    res = float(np.linalg.norm(C @ x - W)) if C.size else float(np.linalg.norm(W))
    return Solution(columns, x, unident, degenerate, res)


def solve_no_idle(C, W=None, idle_watts: float = 0.0, columns=None) -> Solution:
    """:func:`solve_full` against ``max(W - idle, 0)``."""
    C, W, columns = _unpack(C, W, columns)
    return solve_full(C, np.maximum(W - idle_watts, 0.0), columns)


# ---------------------------------------------------------------------------
# CPU power model from performance counters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerModelCpu:
    weights: np.ndarray
    intercept: float
    trained_at: float
    training_error: float
    n_samples: int = 0

    def predict(self, S) -> np.ndarray:
        """CPU watts for normalised counter vectors (``...x4``); all-zero rows give 0."""
        S = np.asarray(S, dtype=np.float64)
        p = S @ self.weights + self.intercept
        idle = ~np.any(S != 0, axis=-1)
        return np.where(idle, 0.0, np.maximum(p, 0.0))


def _grid_index(ts: np.ndarray, t0: float, delta: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.floor((ts - t0) / delta + 1e-9).astype(np.int64)
    return idx, (idx >= 0) & (idx < n)


def normalized_counters(
    counters: CounterTrace,
    t0: float,
    delta: float,
    n: int,
    columns=None,
    system_counters: CounterTrace | None = None,
) -> tuple[tuple[str, ...], np.ndarray]:
    """Per-interval counters of each principal divided by system-wide counters.

    Rows of the same function in one interval (concurrent containers) are
    summed first.  Intervals with zero system counters give zeros.
    Returns ``(columns, S)`` with ``S`` of shape ``(n, len(columns), 4)``.
    """
    funcs, sysrows = counters.split_system()
    if system_counters is not None:
        sysrows = system_counters
    if len(sysrows) == 0:
        raise DisaggError("no system-wide counters")
    if columns is None:
        columns = tuple(sorted(set(funcs.function_ids)))
    index = {f: k for k, f in enumerate(columns)}

    sys_tot = np.zeros((n, 4))
    idx, ok = _grid_index(np.asarray(sysrows.timestamps), t0, delta, n)
    np.add.at(sys_tot, idx[ok], np.asarray(sysrows.counters, dtype=np.float64)[ok])

    raw = np.zeros((n, len(columns), 4))
    idx, ok = _grid_index(np.asarray(funcs.timestamps), t0, delta, n)
    known = np.array([f in index for f in funcs.function_ids], dtype=bool)
    ok &= known
    if ok.any():
        cols = np.array([index[f] for f, k in zip(funcs.function_ids, ok) if k], dtype=np.int64)
        np.add.at(raw, (idx[ok], cols), np.asarray(funcs.counters, dtype=np.float64)[ok])
    with np.errstate(divide="ignore", invalid="ignore"):
        S = np.where(sys_tot[:, None, :] > 0, raw / sys_tot[:, None, :], 0.0)
    return tuple(columns), S


def _counter_grid(counters: CounterTrace, cpu_power: PowerTrace) -> tuple[float, float, int]:
    delta = None
    if counters.meta and counters.meta.nominal_period_s:
        delta = counters.meta.nominal_period_s
    delta = delta or cpu_power.period
    t0 = cpu_power.start
    n = int(math.floor((cpu_power.end - t0) / delta + 1e-9))
    return t0, delta, n


def train_cpu_model(
    counters: CounterTrace,
    cpu_power: PowerTrace,
    system_counters: CounterTrace | None = None,
) -> PowerModelCpu:
    """Fit ``cpu_watts_i = sum_j (w . S_ij + b)`` over active principals ``j``.

    A plain least-squares fit of the linear model; each active principal in
    an interval contributes one intercept.
    """
    t0, delta, n = _counter_grid(counters, cpu_power)
    columns, S = normalized_counters(counters, t0, delta, n, system_counters=system_counters)
    y = window_means(cpu_power, t0, delta, n)
    active = np.any(S != 0, axis=-1)
    feats = np.column_stack([S.sum(axis=1), active.sum(axis=1)])
    use = np.ones(n, dtype=bool)
    if use.sum() < MIN_TRAINING_SAMPLES:
        raise DisaggError(f"need >= {MIN_TRAINING_SAMPLES} aligned samples, got {int(use.sum())}")
    funcs, sysrows = counters.split_system()
    sys_all = sysrows if system_counters is None else system_counters
    if len(sys_all) == 0 or not np.any(np.asarray(sys_all.counters)):
        raise DisaggError("system-wide counters are all zero")
    coef, *_ = np.linalg.lstsq(feats[use], y[use], rcond=None)
    model = PowerModelCpu(np.asarray(coef[:4]), float(coef[4]), float(t0 + n * delta), 0.0, int(use.sum()))
    pred = model.predict(S).sum(axis=1)
    pos = y > 0
    err = float(np.mean(np.abs(pred[pos] - y[pos]) / y[pos])) if pos.any() else 0.0
    return PowerModelCpu(model.weights, model.intercept, model.trained_at, err, model.n_samples)


def predict_cpu_power(
    model: PowerModelCpu,
    counters: CounterTrace,
    system_counters: CounterTrace | None = None,
    t0: float | None = None,
    delta: float | None = None,
    n: int | None = None,
    columns=None,
) -> dict[str, np.ndarray]:
    """Per-interval CPU watts predicted for every principal in ``counters``."""
    if t0 is None or delta is None or n is None:
        ts = np.asarray(counters.timestamps)
        if ts.size == 0:
            return {}
        delta = delta or (counters.meta.nominal_period_s if counters.meta and counters.meta.nominal_period_s else 1.0)
        t0 = float(ts.min()) if t0 is None else t0
        n = int(math.floor((float(ts.max()) - t0) / delta)) + 1 if n is None else n
    if np.asarray(counters.counters).shape[1:] != (4,):
        raise DisaggError("counter layout must have 4 counters")
    cols, S = normalized_counters(counters, t0, delta, n, columns, system_counters)
    P = model.predict(S)
    return {c: P[:, k] for k, c in enumerate(cols)}


def cpu_model_error(model: PowerModelCpu, counters: CounterTrace, cpu_power: PowerTrace) -> float:
    """Relative gap between observed CPU energy and the sum of predicted principal energy."""
    t0, delta, n = _counter_grid(counters, cpu_power)
    pred = predict_cpu_power(model, counters, t0=t0, delta=delta, n=n)
    total_pred = sum(float(v.sum()) for v in pred.values())
    observed = float(window_means(cpu_power, t0, delta, n).sum())
    if observed <= 0:
        return 0.0 if total_pred == 0 else math.inf
    return abs(total_pred - observed) / observed


def needs_retrain(model: PowerModelCpu, counters: CounterTrace, cpu_power: PowerTrace, threshold: float = RETRAIN_THRESHOLD) -> bool:
    return cpu_model_error(model, counters, cpu_power) > threshold


def solve_combined(
    cm: ContributionMatrix,
    W_sys,
    W_cpu,
    model: PowerModelCpu,
    counters: CounterTrace,
    idle_watts: float = 0.0,
) -> Solution:
    """CPU-model power plus disaggregated rest-of-system power, per column.

    The rest-of-system target is ``W_sys - W_cpu`` (less ``idle_watts``);
    shared principals take part only in that solve.  A column's CPU part is
    its predicted CPU energy divided by its running time.
    """
    W_sys = _as_rows(W_sys, cm)
    W_cpu = _as_rows(W_cpu, cm)
    rest = solve_no_idle(cm.occupancy, W_sys - W_cpu, idle_watts, cm.columns)
    pred = predict_cpu_power(model, counters, t0=cm.t0, delta=cm.delta, n=cm.n_rows, columns=cm.columns)
    x_cpu = np.zeros(len(cm.columns))
    for j, c in enumerate(cm.columns):
        run = float(cm.C[:, j].sum())
        if run > 0 and c in pred:
            x_cpu[j] = float(pred[c].sum()) * cm.delta / run
    x = x_cpu + rest.x
    res = float(np.linalg.norm(cm.occupancy @ x - np.maximum(W_sys - idle_watts, 0.0)))
    return Solution(
        cm.columns,
        x,
        rest.unidentifiable,
        rest.degenerate,
        res,
        {"cpu": x_cpu, "rest": rest.x},
    )


def _as_rows(W, cm: ContributionMatrix) -> np.ndarray:
    if isinstance(W, PowerTrace):
        return window_means(W, cm.t0, cm.delta, cm.n_rows)
    W = np.asarray(W, dtype=np.float64)
    if W.shape != (cm.n_rows,):
        raise DisaggError(f"power vector has shape {W.shape}, expected ({cm.n_rows},)")
    return W


def footprints(solution: Solution, invocations: InvocationTrace) -> dict[str, float]:
    """Joules per invocation: column power times the function's mean latency."""
    out = {}
    for c, x in zip(solution.columns, solution.x):
        if c.startswith("__"):
            continue
        m = invocations.mask(c)
        if m.any():
            out[c] = float(x) * float(np.mean(invocations.latencies[m]))
    return out
