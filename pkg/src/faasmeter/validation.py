"""Validity metrics and the paired-run marginal-energy harness."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from faasmeter.pipeline import ProfileConfig, ProfileResult, profile
from faasmeter.simulator import Scenario, SimulatedRun, simulate, true_footprints
from faasmeter.traces import PowerTrace, window_means


class ValidationError(ValueError):
    pass


def _ordered(J, J_star) -> tuple[list, np.ndarray, np.ndarray]:
    if isinstance(J, dict) or isinstance(J_star, dict):
        if not (isinstance(J, dict) and isinstance(J_star, dict)):
            raise ValidationError("pass both footprints as dicts or both as arrays")
        if set(J) != set(J_star):
            raise ValidationError(f"function sets differ: {sorted(set(J) ^ set(J_star))}")
        ids = sorted(J_star)
        return ids, np.array([J[f] for f in ids], float), np.array([J_star[f] for f in ids], float)
    a = np.asarray(J, dtype=np.float64).reshape(-1)
    b = np.asarray(J_star, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ValidationError("footprint vectors differ in length")
    return list(range(a.size)), a, b


def individual_difference(J, J_star):
    """``|J - J*| / J*`` per function (dict in, dict out; arrays in, array out)."""
    ids, a, b = _ordered(J, J_star)
    if np.any(b <= 0):
        raise ValidationError("ground-truth footprint must be > 0")
    d = np.abs(a - b) / b
    return dict(zip(ids, d.tolist())) if isinstance(J_star, dict) else d


def cosine_similarity(J, J_star) -> float:
    ids, a, b = _ordered(J, J_star)
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0 or nb == 0:
        raise ValidationError("cosine similarity of a zero vector")
    return float(np.dot(a, b) / (na * nb))


def total_error(measured, predicted) -> float:
    """Mean of ``|W - W_hat| / W`` over samples."""
    if isinstance(measured, PowerTrace):
        if isinstance(predicted, PowerTrace):
            if len(measured) != len(predicted) or not np.allclose(measured.timestamps, predicted.timestamps):
                p = measured.period
                predicted = window_means(predicted, measured.start, p, len(measured))
            else:
                predicted = predicted.watts
        measured = measured.watts
    W = np.asarray(measured, dtype=np.float64).reshape(-1)
    Wh = np.asarray(predicted, dtype=np.float64).reshape(-1)
    if W.shape != Wh.shape:
        raise ValidationError("measured and predicted power have different lengths")
    if W.size == 0:
        raise ValidationError("empty power series")
    if np.any(W <= 0):
        raise ValidationError("measured power has a zero sample")
    return float(np.mean(np.abs(W - Wh) / W))


def latency_normalized_variance(J_series, T_series) -> float:
    """``std(J) / std(T)``; infinite when latencies do not vary."""
    J = np.asarray(J_series, dtype=np.float64).reshape(-1)
    T = np.asarray(T_series, dtype=np.float64).reshape(-1)
    if J.size < 2 or T.size < 2:
        raise ValidationError("need at least two observations of J and T")
    sj, st = float(np.std(J, ddof=1)), float(np.std(T, ddof=1))
    if st == 0:
        return math.inf
    return sj / st


def footprint_cov(J_series) -> float:
    J = np.asarray(J_series, dtype=np.float64).reshape(-1)
    if J.size < 2:
        raise ValidationError("need at least two footprint observations")
    m = float(np.mean(J))
    if m == 0:
        return math.inf
    return float(np.std(J, ddof=1) / abs(m))


# ---------------------------------------------------------------------------
# marginal energy
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarginalEnergy:
    function_id: str
    joules_per_invocation: float
    invocations: int
    negative: bool


def _total_energy(trace) -> float:
    if isinstance(trace, SimulatedRun):
        trace = trace.system_power
    return math.fsum(np.asarray(trace.watts, dtype=np.float64) * trace.period)


def marginal_energy(full, ablated, invocations: int, function_id: str = "") -> MarginalEnergy:
    """Per-invocation energy increase between ``T(S)`` and ``T(S - f)``.

    The two runs must share the arrival schedule of every other function and
    the rendered horizon.  Negative values are flagged, not clamped.
    """
    if invocations <= 0:
        raise ValidationError(f"function {function_id!r} has zero invocations in the full run")
    if isinstance(full, SimulatedRun) and isinstance(ablated, SimulatedRun) and full.horizon != ablated.horizon:
        raise ValidationError("paired runs must share a horizon")
    m = (_total_energy(full) - _total_energy(ablated)) / invocations
    return MarginalEnergy(function_id, float(m), int(invocations), m < 0)


def ablation_marginals(scenario: Scenario, independent_noise: bool = True) -> tuple[SimulatedRun, dict[str, MarginalEnergy]]:
    """Full run plus one paired ablation per function.

    With ``independent_noise`` each ablated run draws fresh measurement noise,
    as two separate hardware runs would.
    """
    full = simulate(scenario)
    out = {}
    for k, f in enumerate(sorted(scenario.workload.function_ids)):
        abl = simulate(scenario, exclude=f, horizon=full.horizon, seed_offset=(k + 1) if independent_noise else 0)
        n = int(full.invocations.mask(f).sum())
        out[f] = marginal_energy(full, abl, n, f)
    return full, out


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


@dataclass
class ValidationReport:
    scenario: str
    mode: str
    reference: str
    footprints: dict[str, float]
    reference_footprints: dict[str, float]
    individual_difference: dict[str, float]
    cosine_similarity: float
    total_error: float
    latency_normalized_variance: dict[str, float] = field(default_factory=dict)
    footprint_cov: dict[str, float] = field(default_factory=dict)
    negative_marginals: list[str] = field(default_factory=list)
    skew_s: float | None = None

    def passed(self, cosine_min: float = 0.98) -> bool:
        return self.cosine_similarity >= cosine_min

    def to_dict(self) -> dict:
        return asdict(self)


def online_metrics(result: ProfileResult, invocations) -> tuple[dict[str, float], dict[str, float]]:
    """Latency-normalised variance and CoV of the per-step footprint series."""
    lnv, cov = {}, {}
    if result.online is None:
        return lnv, cov
    for f in invocations.functions:
        series = np.array([s.joules[f] for s in result.online.steps if f in s.activations and f in s.joules])
        if series.size < 2:
            continue
        lat = invocations.latencies[invocations.mask(f)]
        if lat.size >= 2:
            lnv[f] = latency_normalized_variance(series, lat)
        cov[f] = footprint_cov(series)
    return lnv, cov


def validate_run(
    scenario: Scenario,
    run: SimulatedRun,
    reference: dict[str, float],
    mode: str,
    online: bool = True,
    reference_name: str = "marginal",
    negatives=(),
    principals=(),
) -> ValidationReport:
    cfg = ProfileConfig(mode=mode, idle_watts=scenario.truth.idle_watts, online=online, principals=tuple(principals))
    res = profile(run.invocations, run.system_power, run.cpu_power, run.utilization, run.counters, cfg)
    est = {f: res.footprints.get(f, 0.0) for f in reference}
    lnv, cov = online_metrics(res, run.invocations)
    W = res.matrix.W
    ok = W > 0
    te = total_error(W[ok], res.predicted[ok])
    return ValidationReport(
        scenario=scenario.name,
        mode=mode,
        reference=reference_name,
        footprints=est,
        reference_footprints=dict(reference),
        individual_difference=individual_difference(est, reference),
        cosine_similarity=cosine_similarity(est, reference),
        total_error=te,
        latency_normalized_variance=lnv,
        footprint_cov=cov,
        negative_marginals=list(negatives),
        skew_s=None if res.skew is None else res.skew.offset_s,
    )


def run_validation(
    scenario: Scenario,
    modes=("no-idle", "combined"),
    reference: str = "marginal",
    online: bool = True,
) -> list[ValidationReport]:
    """Profile the scenario in each mode and score it against ground truth.

    ``reference='marginal'`` uses the paired-ablation harness;
    ``'oracle'`` uses the simulator's individual-plus-control-plane footprint.
    Modes needing traces the scenario lacks are skipped.
    """
    if reference == "marginal":
        run, marg = ablation_marginals(scenario)
        ref = {f: m.joules_per_invocation for f, m in marg.items()}
        negatives = sorted(f for f, m in marg.items() if m.negative)
        if negatives:
            # a negative ground truth cannot anchor a relative metric
            ref = {f: v for f, v in ref.items() if v > 0}
    elif reference == "oracle":
        run = simulate(scenario)
        ref = true_footprints(run, "marginal")
        negatives = []
    else:
        raise ValidationError(f"unknown reference {reference!r}")
    reports = []
    for mode in modes:
        if mode == "combined" and (run.cpu_power is None or run.counters is None):
            continue
        reports.append(validate_run(scenario, run, ref, mode, online, reference, negatives))
    return reports


def write_reports(reports: list[ValidationReport], out_dir) -> list[Path]:
    """``report.csv`` (one row per function and mode) and ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["scenario,mode,function_id,footprint_j,reference_j,individual_difference,latency_normalized_variance,footprint_cov"]
    for r in sorted(reports, key=lambda r: (r.scenario, r.mode)):
        for f in sorted(r.reference_footprints):
            lines.append(
                ",".join(
                    [
                        r.scenario,
                        r.mode,
                        f,
                        repr(float(r.footprints[f])),
                        repr(float(r.reference_footprints[f])),
                        repr(float(r.individual_difference[f])),
                        repr(float(r.latency_normalized_variance.get(f, math.nan))),
                        repr(float(r.footprint_cov.get(f, math.nan))),
                    ]
                )
            )
    csv_path = out / "report.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    summary = {
        "reports": [
            {
                "scenario": r.scenario,
                "mode": r.mode,
                "reference": r.reference,
                "cosine_similarity": r.cosine_similarity,
                "total_error": r.total_error,
                "mean_individual_difference": float(np.mean(list(r.individual_difference.values()))),
                "negative_marginals": r.negative_marginals,
                "skew_s": r.skew_s,
            }
            for r in sorted(reports, key=lambda r: (r.scenario, r.mode))
        ]
    }
    json_path = out / "summary.json"
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True, allow_nan=True) + "\n")
    return [csv_path, json_path]


# ---------------------------------------------------------------------------
# pricing stability
# ---------------------------------------------------------------------------


def pricing_sweep(base: Scenario, n: int = 20, seed: int = 0) -> list[Scenario]:
    """``n`` perturbed copies of ``base``: load, noise, skew and workload seed vary."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(0x5EE9,)))
    out = []
    for k in range(n):
        load = float(rng.uniform(0.6, 1.6))
        fns = tuple(
            dataclasses.replace(f, iat=dataclasses.replace(f.iat, mean=f.iat.mean / load)) for f in base.workload.functions
        )
        truth = dataclasses.replace(
            base.truth,
            noise_std_watts=float(rng.uniform(0.5, 2.0)),
            injected_skew=float(np.round(rng.uniform(-3.0, 4.0), 3)),
        )
        workload = dataclasses.replace(base.workload, functions=fns, seed=base.workload.seed + 1000 + k)
        out.append(dataclasses.replace(base, name=f"{base.name}_sweep{k:02d}", workload=workload, truth=truth))
    return out


@dataclass(frozen=True)
class StabilityResult:
    scenario: str
    footprint_cov: dict[str, float]
    latency_normalized_variance: dict[str, float]

    @property
    def mean_cov(self) -> float:
        vals = [v for v in self.footprint_cov.values() if math.isfinite(v)]
        return float(np.mean(vals)) if vals else math.inf


def pricing_stability(scenario: Scenario, mode: str = "no-idle") -> StabilityResult:
    """Per-function CoV and latency-normalised variance of online footprints."""
    run = simulate(scenario)
    cfg = ProfileConfig(mode=mode, idle_watts=scenario.truth.idle_watts, online=True)
    res = profile(run.invocations, run.system_power, run.cpu_power, run.utilization, run.counters, cfg)
    lnv, cov = online_metrics(res, run.invocations)
    return StabilityResult(scenario.name, cov, lnv)
