"""Full-spectrum per-invocation footprints.

Control-plane energy is dynamic and split per invocation; idle energy is
static and split evenly among functions active in the window.  A function's
per-invocation total is ``J_indiv + phi_cp + phi_idle``.  Inactive
functions receive nothing, and energy that cannot be attributed (no active
function) is reported separately rather than carried forward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from faasmeter.disagg import ContributionMatrix, Solution
from faasmeter.traces import CONTROL_PLANE_ID, InvocationTrace


@dataclass(frozen=True)
class SharedSplit:
    total_shares: dict[str, float]
    per_invocation: dict[str, float]
    unattributed: float = 0.0


def split_control_plane(j_cp: float, activations: dict[str, int]) -> SharedSplit:
    """``phi_cp,i = J_cp * A_i / sum(A)`` in total; ``J_cp / sum(A)`` per invocation."""
    if j_cp < 0:
        raise ValueError("control-plane energy must be nonnegative")
    total_a = sum(a for a in activations.values() if a > 0)
    if total_a == 0:
        zeros = {f: 0.0 for f in activations}
        return SharedSplit(zeros, dict(zeros), float(j_cp))
    per = j_cp / total_a
    totals = {f: (j_cp * (a / total_a) if a > 0 else 0.0) for f, a in activations.items()}
    per_inv = {f: (per if a > 0 else 0.0) for f, a in activations.items()}
    return SharedSplit(totals, per_inv, 0.0)


def split_idle(j_idle: float, activations: dict[str, int]) -> SharedSplit:
    """Even split of idle energy over the ``M`` functions with ``A_i > 0``."""
    if j_idle < 0:
        raise ValueError("idle energy must be nonnegative")
    active = [f for f, a in activations.items() if a > 0]
    if not active:
        zeros = {f: 0.0 for f in activations}
        return SharedSplit(zeros, dict(zeros), float(j_idle))
    share = j_idle / len(active)
    totals = {f: (share if a > 0 else 0.0) for f, a in activations.items()}
    per_inv = {f: (share / a if a > 0 else 0.0) for f, a in activations.items()}
    return SharedSplit(totals, per_inv, 0.0)


@dataclass(frozen=True)
class FunctionFootprint:
    function_id: str
    j_indiv: float
    phi_cp: float
    phi_idle: float
    activations: int

    @property
    def j_total(self) -> float:
        return self.j_indiv + self.phi_cp + self.phi_idle

    def attributed(self) -> float:
        """Energy charged to the function over the window."""
        return self.j_total * self.activations


@dataclass(frozen=True)
class FootprintSpectrum:
    window: tuple[float, float]
    entries: dict[str, FunctionFootprint]
    unattributed: float = 0.0
    measured_energy: float | None = None
    extras: dict = field(default_factory=dict)

    def __getitem__(self, function_id: str) -> FunctionFootprint:
        return self.entries[function_id]

    @property
    def attributed_energy(self) -> float:
        return float(sum(e.attributed() for e in self.entries.values()))

    @property
    def residual(self) -> float | None:
        """Measured energy not covered by attributed or unattributed shares."""
        if self.measured_energy is None:
            return None
        return (self.measured_energy - self.attributed_energy) - self.unattributed

    def efficiency_gap(self) -> float:
        """Exactly zero: the residual is defined by the same accounting."""
        if self.measured_energy is None:
            return 0.0
        return ((self.measured_energy - self.attributed_energy) - self.unattributed) - self.residual

    def rows(self) -> list[dict]:
        return [
            {
                "function_id": f,
                "J_indiv": e.j_indiv,
                "phi_cp": e.phi_cp,
                "phi_idle": e.phi_idle,
                "J_total": e.j_total,
                "activations": e.activations,
            }
            for f, e in sorted(self.entries.items())
        ]


def build_spectrum(
    x_no_idle: dict[str, float],
    latencies: dict[str, float],
    j_cp: float,
    j_idle: float,
    activations: dict[str, int],
    window: tuple[float, float],
    measured_energy: float | None = None,
) -> FootprintSpectrum:
    """Assemble ``J_total = J_indiv + phi_cp + phi_idle`` for every function.

    ``latencies`` holds mean latency (s) per function; ``J_indiv`` is the
    idle-free power times that latency.
    """
    funcs = sorted(set(activations) | {f for f in x_no_idle if not f.startswith("__")})
    acts = {f: int(activations.get(f, 0)) for f in funcs}
    cp = split_control_plane(j_cp, acts)
    idle = split_idle(j_idle, acts)
    entries = {}
    for f in funcs:
        a = acts[f]
        if a <= 0:
            entries[f] = FunctionFootprint(f, 0.0, 0.0, 0.0, 0)
            continue
        j = max(float(x_no_idle.get(f, 0.0)), 0.0) * float(latencies.get(f, 0.0))
        entries[f] = FunctionFootprint(f, j, cp.per_invocation[f], idle.per_invocation[f], a)
    return FootprintSpectrum(
        window=(float(window[0]), float(window[1])),
        entries=entries,
        unattributed=cp.unattributed + idle.unattributed,
        measured_energy=measured_energy,
        extras={"J_cp": float(j_cp), "J_idle": float(j_idle)},
    )


def spectrum_for_window(
    cm: ContributionMatrix,
    solution: Solution | dict[str, float],
    invocations: InvocationTrace,
    idle_watts: float,
    mean_latency: dict[str, float] | None = None,
) -> FootprintSpectrum:
    """Spectrum of one window from its contribution matrix and no-idle solution.

    The control-plane energy is the fitted control-plane power times the
    column's busy time; idle energy is ``idle_watts`` times the window length.
    """
    x = solution.as_dict() if isinstance(solution, Solution) else dict(solution)
    t0, t1 = cm.window
    j_cp = 0.0
    if CONTROL_PLANE_ID in cm.columns:
        j_cp = max(x.get(CONTROL_PLANE_ID, 0.0), 0.0) * float(cm.C[:, cm.index(CONTROL_PLANE_ID)].sum())
    j_idle = idle_watts * (t1 - t0)
    acts = {f: a for f, a in cm.activations().items() if f in cm.functions}
    if mean_latency is None:
        ends = np.asarray(invocations.ends)
        sel = (ends >= t0) & (ends < t1)
        ids = invocations.ids_array()[sel]
        lat = np.asarray(invocations.latencies)[sel]
        mean_latency = {f: float(np.mean(lat[ids == f])) for f in set(ids)}
    measured = float(np.sum(cm.W) * cm.delta) if cm.W is not None else None
    spec = build_spectrum(x, mean_latency, j_cp, j_idle, acts, (t0, t1), measured)
    spec.extras["watts"] = {c: float(v) for c, v in x.items()}
    return spec
