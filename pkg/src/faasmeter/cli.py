"""Command-line entry point: ``faasmeter simulate | signal | profile | validate | cap | report``.

Every command writes into one output directory together with a
``manifest.json`` of SHA-256 hashes.  Exit codes: 0 ok, 1 usage or bad
configuration, 2 validation failure, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from faasmeter.capping import CapMode, CapPolicy, StarvationError, run_capped_scenario
from faasmeter.disagg import PRINCIPAL_COLUMNS
from faasmeter.kalman import KalmanError, KalmanParams
from faasmeter.pipeline import MODES, ProfileConfig, ProfileError, correct_skew, profile
from faasmeter.signal import DEFAULT_BOUND_S, DEFAULT_DRIFT_INTERVAL_S, SkewError, monitor_drift
from faasmeter.simulator import ConfigError, load_scenario, simulate
from faasmeter.traces import (
    CounterTrace,
    InvocationTrace,
    PowerTrace,
    Source,
    TraceError,
    UtilizationTrace,
    read_power_traces,
    read_trace,
    write_trace,
)
from faasmeter.validation import ValidationError, run_validation, write_reports

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_IO = 0, 1, 2, 3
DEFAULT_OUT = "faasmeter_out"
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


class OutputValidationError(Exception):
    pass


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    scenario: str | None = None
    mode: str = "no-idle"
    principals: tuple[str, ...] = ()
    online: bool = False
    kalman: KalmanParams = dataclasses.field(default_factory=KalmanParams)
    delta: float = 1.0
    skew_bound: float = DEFAULT_BOUND_S
    out: str | None = None
    seed: int | None = None
    idle_watts: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {', '.join(MODES)}, got {self.mode!r}")
        bad = [p for p in self.principals if p not in PRINCIPAL_COLUMNS]
        if bad:
            raise ConfigError(f"principals: unknown principal {bad[0]!r}")
        if not 0 < self.delta <= 60:
            raise ConfigError("delta: must lie in (0, 60] s")
        if not 0 < self.skew_bound <= 10:
            raise ConfigError("skew_bound: must lie in (0, 10] s")
        if self.idle_watts is not None and self.idle_watts < 0:
            raise ConfigError("idle_watts: must be >= 0 W")
        if self.seed is not None and self.seed < 0:
            raise ConfigError("seed: must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("run config: expected a JSON object")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"run config: unknown key {unknown[0]!r}")
        kw = dict(d)
        if "kalman" in kw:
            k = kw["kalman"]
            knames = {f.name for f in dataclasses.fields(KalmanParams)}
            if not isinstance(k, dict):
                raise ConfigError("kalman: expected an object")
            unknown = sorted(set(k) - knames)
            if unknown:
                raise ConfigError(f"kalman: unknown key {unknown[0]!r}")
            try:
                kw["kalman"] = KalmanParams(**k)
            except KalmanError as exc:
                raise ConfigError(f"kalman: {exc}") from None
        if "principals" in kw:
            kw["principals"] = tuple(kw["principals"])
        return cls(**kw)


def _load_run_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    return RunConfig.from_dict(data)


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _out_dir(arg) -> Path:
    out = Path(arg or os.environ.get("FAASMETER_OUT") or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _dump_json(obj, path: Path) -> Path:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _dump_jsonl(rows, path: Path) -> Path:
    with open(path, "w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True, default=_json_default) + "\n")
    return path


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def _check_outputs(files) -> None:
    """Schema-level checks: JSON parses, JSON-lines parse, CSV rows match the header."""
    for p in files:
        p = Path(p)
        text = p.read_text()
        try:
            if p.suffix == ".json":
                json.loads(text)
            elif p.suffix == ".jsonl":
                for line in text.splitlines():
                    json.loads(line)
            elif p.suffix == ".csv":
                rows = list(csv.reader(io.StringIO(text)))
                if not rows:
                    raise OutputValidationError(f"{p.name}: empty CSV")
                width = len(rows[0])
                if any(len(r) != width for r in rows[1:] if r):
                    raise OutputValidationError(f"{p.name}: ragged CSV rows")
        except json.JSONDecodeError as exc:
            raise OutputValidationError(f"{p.name}: invalid JSON ({exc})") from None


def write_manifest(out: Path, files) -> Path:
    """``manifest.json`` mapping each written file to its SHA-256."""
    files = sorted({Path(f).resolve() for f in files})
    _check_outputs(files)
    entries = {}
    for f in files:
        entries[f.relative_to(out.resolve()).as_posix()] = hashlib.sha256(f.read_bytes()).hexdigest()
    return _dump_json({"files": entries}, out / MANIFEST)


def _strip_meta(trace):
    if isinstance(trace, PowerTrace):
        return PowerTrace(trace.timestamps, trace.watts, trace.source)
    if isinstance(trace, InvocationTrace):
        return InvocationTrace(trace.function_ids, trace.starts, trace.ends, trace.warm)
    if isinstance(trace, UtilizationTrace):
        return UtilizationTrace(trace.timestamps, trace.principals, trace.cpu_percent)
    if isinstance(trace, CounterTrace):
        return CounterTrace(trace.timestamps, trace.function_ids, trace.counters)
    raise TypeError(type(trace).__name__)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _scenario(arg, seed=None):
    if arg is None:
        raise UsageError("--scenario is required")
    try:
        sc = load_scenario(arg)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    if seed is not None:
        sc = dataclasses.replace(sc, workload=dataclasses.replace(sc.workload, seed=int(seed)))
    return sc


def cmd_simulate(args) -> int:
    sc = _scenario(args.scenario, args.seed)
    run = simulate(sc, exclude=args.exclude)
    out = _out_dir(args.out)
    files = []
    power = [_strip_meta(run.system_power)]
    if run.cpu_power is not None:
        power.append(_strip_meta(run.cpu_power))
    write_trace(power, out / "power.csv")
    write_trace(_strip_meta(run.invocations), out / "invocations.csv")
    write_trace(_strip_meta(run.utilization), out / "utilization.csv")
    files += [out / "power.csv", out / "invocations.csv", out / "utilization.csv"]
    if run.counters is not None:
        write_trace(_strip_meta(run.counters), out / "counters.csv")
        files.append(out / "counters.csv")
    truth = {
        "scenario": sc.name,
        "seed": sc.workload.seed,
        "excluded": args.exclude,
        "period_s": run.options.period,
        "horizon_s": run.horizon,
        "idle_watts": sc.truth.idle_watts,
        "per_function_watts": dict(sorted(sc.truth.per_function_watts.items())),
        "control_plane_joules_per_invocation": sc.truth.control_plane_joules_per_invocation,
        "noise_std_watts": sc.truth.noise_std_watts,
        "quantization_step_watts": sc.truth.quantization_step_watts,
        "injected_skew_s": sc.truth.injected_skew,
        "invocations": {f: int(run.invocations.mask(f).sum()) for f in run.invocations.functions},
    }
    files.append(_dump_json(truth, out / "truth.json"))
    write_manifest(out, files)
    print(f"wrote {len(files)} files to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# trace loading
# ---------------------------------------------------------------------------


@dataclass
class Bundle:
    invocations: InvocationTrace
    system: PowerTrace
    cpu: PowerTrace | None
    utilization: UtilizationTrace | None
    counters: CounterTrace | None
    calibration: dict


def _load_bundle(args) -> Bundle:
    base = Path(args.traces) if getattr(args, "traces", None) else None

    def pick(flag, name):
        explicit = getattr(args, flag, None)
        if explicit:
            return Path(explicit)
        if base is not None and (base / name).exists():
            return base / name
        return None

    pp = pick("power", "power.csv")
    ip = pick("invocations", "invocations.csv")
    if pp is None:
        raise FileNotFoundError("no power trace: pass --traces DIR or --power FILE")
    if ip is None:
        raise FileNotFoundError("no invocation trace: pass --traces DIR or --invocations FILE")
    powers = read_power_traces(pp)
    if Source.SYSTEM not in powers:
        raise TraceError(f"{pp}: no rows with source=system")
    up = pick("utilization", "utilization.csv")
    cp = pick("counters", "counters.csv")
    calib = {}
    if base is not None and (base / "truth.json").exists():
        calib = json.loads((base / "truth.json").read_text())
    return Bundle(
        invocations=read_trace(ip, "invocations"),
        system=powers[Source.SYSTEM],
        cpu=powers.get(Source.CPU),
        utilization=read_trace(up, "utilization") if up else None,
        counters=read_trace(cp, "counters") if cp else None,
        calibration=calib,
    )


# ---------------------------------------------------------------------------
# signal
# ---------------------------------------------------------------------------


def _reference_trace(arg, b: Bundle):
    """Resolve ``--reference``: a keyword or a power CSV (its cpu rows if any)."""
    if arg in ("auto", "cpu", "counters"):
        if arg == "cpu" and b.cpu is None:
            raise UsageError("--reference cpu needs a cpu power trace (source=cpu rows in power.csv)")
        if arg == "counters" and b.counters is None:
            raise UsageError("--reference counters needs counters.csv")
        cpu = b.cpu if arg in ("auto", "cpu") else None
        counters = b.counters if arg in ("auto", "counters") else None
        return cpu, counters
    traces = read_power_traces(arg)
    if not traces:
        raise TraceError(f"{arg}: empty reference trace")
    ref = traces.get(Source.CPU) or next(iter(traces.values()))
    return ref, None


def cmd_signal(args) -> int:
    b = _load_bundle(args)
    out = _out_dir(args.out)
    cpu, counters = _reference_trace(args.reference, b)
    files = []
    if args.action == "sync":
        corrected, est, ref = correct_skew(b.system, cpu, counters, args.bound)
        if est is None:
            raise SkewError("no usable reference signal (flat or missing); skew left uncorrected")
        power = [corrected] + ([b.cpu] if b.cpu is not None else [])
        write_trace([_strip_meta(p) for p in power], out / "power.csv")
        files.append(out / "power.csv")
        record = {"offset_s": est.offset_s, "residual": est.residual, "estimated_at_s": est.estimated_at,
                  "reference": ref if args.reference in ("auto", "cpu", "counters") else str(args.reference)}
        files.append(_dump_json(record, out / "skew.json"))
        print(json.dumps(record, sort_keys=True))
    else:
        from faasmeter.signal import reference_from_counters

        ref = cpu if cpu is not None else (reference_from_counters(counters) if counters is not None else None)
        if ref is None:
            raise UsageError("drift monitoring needs a cpu trace or counters")
        rows = [
            {"estimated_at_s": e.estimated_at, "offset_s": e.offset_s, "residual": e.residual}
            for e in monitor_drift(b.system, ref, args.interval, args.bound)
        ]
        files.append(_dump_jsonl(rows, out / "drift.jsonl"))
        for r in rows:
            print(json.dumps(r, sort_keys=True))
    write_manifest(out, files)
    return EXIT_OK


# ---------------------------------------------------------------------------
# profile
# ---------------------------------------------------------------------------


def _merged_config(args) -> RunConfig:
    cfg = _load_run_config(getattr(args, "config", None))
    over = {}
    for name in ("mode", "delta", "skew_bound", "idle_watts", "out", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            over[name] = v
    if getattr(args, "principals", None) is not None:
        over["principals"] = tuple(p for p in args.principals.split(",") if p)
    if getattr(args, "online", None) is not None:
        over["online"] = args.online
    k = {}
    for name in ("alpha", "beta", "gamma", "step", "init", "r_scale"):
        v = getattr(args, name, None)
        if v is not None:
            k[name] = v
    if k:
        try:
            over["kalman"] = dataclasses.replace(cfg.kalman, **k)
        except KalmanError as exc:
            raise ConfigError(f"kalman: {exc}") from None
    return dataclasses.replace(cfg, **over)


def cmd_profile(args) -> int:
    run_cfg = _merged_config(args)
    b = _load_bundle(args)
    idle = run_cfg.idle_watts
    if idle is None:
        idle = b.calibration.get("idle_watts")
    if idle is None:
        if run_cfg.mode != "full":
            raise UsageError(f"mode {run_cfg.mode} needs --idle-watts (or truth.json with idle_watts)")
        idle = 0.0
    if run_cfg.mode == "combined" and b.cpu is None:
        raise ProfileError("combined mode needs a cpu power trace: power.csv has no source=cpu rows")
    if run_cfg.mode == "combined" and b.counters is None:
        raise ProfileError("combined mode needs counters.csv")
    kalman = dataclasses.replace(run_cfg.kalman, delta=run_cfg.delta)
    cfg = ProfileConfig(
        mode=run_cfg.mode,
        delta=run_cfg.delta,
        principals=run_cfg.principals,
        idle_watts=float(idle),
        correct_skew=not args.no_skew_correction,
        skew_bound=run_cfg.skew_bound,
        online=run_cfg.online,
        kalman=kalman,
        spectrum_window=kalman.step if run_cfg.online else args.window,
    )
    res = profile(b.invocations, b.system, b.cpu, b.utilization, b.counters, cfg)
    out = _out_dir(run_cfg.out)

    windows = []
    for spec in res.spectra:
        t0, t1 = spec.window
        lo = int(round((t0 - res.matrix.t0) / res.matrix.delta))
        hi = int(round((t1 - res.matrix.t0) / res.matrix.delta))
        sub = res.matrix.rows(lo, hi)
        watts = spec.extras.get("watts", {})
        windows.append(
            {
                "t0": t0,
                "t1": t1,
                "mode": cfg.mode,
                "X": watts,
                "running_s": {c: v for c, v in sub.running_time().items()},
                "activations": {c: v for c, v in sub.activations().items()},
                "idle_watts": cfg.idle_watts if cfg.mode != "full" else 0.0,
                "measured_j": float(np.sum(sub.W) * sub.delta),
            }
        )
    summary = {
        "mode": cfg.mode,
        "delta_s": cfg.delta,
        "idle_watts": cfg.idle_watts,
        "principals": list(cfg.principals),
        "online": cfg.online,
        "skew_s": None if res.skew is None else res.skew.offset_s,
        "skew_reference": res.skew_reference,
        "X_watts": res.solution.as_dict(),
        "footprints_j": dict(sorted(res.footprints.items())),
        "degenerate": res.solution.degenerate,
        "unidentifiable": list(res.solution.unidentifiable),
        "total_error": res.total_error,
    }
    if res.cpu_model is not None:
        summary["cpu_model"] = {
            "weights": res.cpu_model.weights.tolist(),
            "intercept": res.cpu_model.intercept,
            "training_error": res.cpu_model.training_error,
        }
    if res.online is not None:
        summary["online_total_error"] = res.online.total_errors().tolist()
    files = [
        _dump_json(summary, out / "footprints.json"),
        _dump_jsonl(windows, out / "windows.jsonl"),
        _dump_jsonl(_spectrum_rows(res.spectra), out / "spectra.jsonl"),
    ]
    if res.online is not None:
        rows = (
            {
                "timestamp": snap.t1,
                "function_id": f,
                "watts": snap.watts[f],
                "joules_per_invocation": snap.joules.get(f),
                "p_variance": snap.p_variance.get(f),
            }
            for snap in res.online.snapshots
            for f in sorted(snap.watts)
        )
        files.append(_dump_jsonl(rows, out / "online.jsonl"))
    write_manifest(out, files)
    print(" ".join(f"{f}={j:.3f}J" for f, j in sorted(res.footprints.items())))
    return EXIT_OK


def _spectrum_rows(spectra) -> list[dict]:
    rows = []
    for s in spectra:
        rows.append(
            {
                "t0": s.window[0],
                "t1": s.window[1],
                "functions": s.rows(),
                "unattributed_j": s.unattributed,
                "measured_j": s.measured_energy,
                "residual_j": s.residual,
                "J_cp": s.extras.get("J_cp", 0.0),
                "J_idle": s.extras.get("J_idle", 0.0),
            }
        )
    return rows


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------


def cmd_validate(args) -> int:
    run_cfg = _merged_config(args)
    sc = _scenario(args.scenario or run_cfg.scenario, run_cfg.seed)
    modes = [m for m in args.modes.split(",") if m]
    bad = [m for m in modes if m not in MODES]
    if bad:
        raise UsageError(f"--modes: unknown mode {bad[0]!r}")
    reports = run_validation(sc, modes, reference=args.reference, online=not args.batch)
    out = _out_dir(run_cfg.out)
    files = write_reports(reports, out)
    write_manifest(out, files)
    failed = [r.mode for r in reports if r.cosine_similarity < args.min_cosine]
    for r in reports:
        print(f"{r.mode}: cosine={r.cosine_similarity:.6f} total_error={r.total_error:.4f}")
    if failed:
        print(f"cosine below {args.min_cosine} for {', '.join(failed)}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


# ---------------------------------------------------------------------------
# cap
# ---------------------------------------------------------------------------


def cmd_cap(args) -> int:
    sc = _scenario(args.scenario, args.seed)
    policy = CapPolicy(args.cap_watts, args.horizon, CapMode(args.mode), args.buffer)
    fp = None
    if args.footprints == "exact":
        fp = "exact"
    elif args.footprints not in (None, "truth"):
        data = json.loads(Path(args.footprints).read_text())
        fp = data.get("footprints_j", data)
    try:
        run = run_capped_scenario(sc, policy, fp, max_wait=args.max_wait)
    except StarvationError as exc:
        print(f"starvation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = _out_dir(args.out)
    files = [
        _dump_jsonl((d.to_dict() for d in run.decisions), out / "decisions.jsonl"),
        _dump_json(run.summary(), out / "summary.json"),
    ]
    write_manifest(out, files)
    s = run.summary()
    print(f"overshoot {s['overshoot_fraction']:.4f}, mean latency {s['mean_latency_s']:.3f} s, {s['deferrals']} deferrals")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def _read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


def cmd_report(args) -> int:
    src = Path(args.results)
    if not src.is_dir():
        raise FileNotFoundError(f"results directory {src} does not exist")
    windows_p, spectra_p, summary_p = src / "windows.jsonl", src / "spectra.jsonl", src / "summary.json"
    if not any(p.exists() for p in (windows_p, spectra_p, summary_p)):
        raise FileNotFoundError(f"{src} holds no profile or validation results")
    out = _out_dir(args.out)
    files = []
    lines = []
    if windows_p.exists():
        wins = _read_jsonl(windows_p)
        cols = sorted({c for w in wins for c in w["X"]})
        rows = []
        for w in wins:
            parts = [w["X"].get(c, 0.0) * w["running_s"].get(c, 0.0) for c in cols]
            idle_j = w["idle_watts"] * (w["t1"] - w["t0"])
            rows.append([w["t0"], w["t1"], idle_j, *parts, math.fsum([idle_j, *parts]), w["measured_j"]])
        header = ["t0_s", "t1_s", "idle_j", *[f"{c}_j" for c in cols], "predicted_total_j", "measured_j"]
        files.append(_write_csv(out / "stacked_energy.csv", header, rows))
        lines.append(f"windows: {len(wins)}")
    if spectra_p.exists() and args.spectrum:
        rows = []
        for s in _read_jsonl(spectra_p):
            for r in s["functions"]:
                rows.append(
                    [s["t0"], s["t1"], r["function_id"], r["J_indiv"], r["phi_cp"], r["phi_idle"], r["J_total"], r["activations"]]
                )
        header = ["t0_s", "t1_s", "function_id", "J_indiv", "phi_cp", "phi_idle", "J_total", "activations"]
        files.append(_write_csv(out / "spectrum.csv", header, rows))
    if summary_p.exists():
        summ = json.loads(summary_p.read_text())
        rows = [
            [r["scenario"], r["mode"], r["reference"], r["cosine_similarity"], r["total_error"], r["mean_individual_difference"]]
            for r in summ.get("reports", [])
        ]
        header = ["scenario", "mode", "reference", "cosine_similarity", "total_error", "mean_individual_difference"]
        files.append(_write_csv(out / "metrics.csv", header, rows))
        for r in rows:
            lines.append(f"{r[0]} {r[1]}: cosine {r[3]!r}, total error {r[4]!r}")
    if not files:
        raise FileNotFoundError(f"{src}: nothing to report")
    text = "\n".join(lines) + "\n"
    (out / "report.txt").write_text(text)
    files.append(out / "report.txt")
    write_manifest(out, files)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_out(p):
    p.add_argument("--out", metavar="DIR", help="output directory [path]; default $FAASMETER_OUT or ./faasmeter_out")


def _add_traces(p):
    p.add_argument("--traces", metavar="DIR", help="directory with power.csv, invocations.csv, ... [path]")
    p.add_argument("--power", metavar="CSV", help="power trace, overrides --traces [path]")
    p.add_argument("--invocations", metavar="CSV", help="invocation trace, overrides --traces [path]")
    p.add_argument("--utilization", metavar="CSV", help="utilization trace [path]")
    p.add_argument("--counters", metavar="CSV", help="performance counter trace [path]")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="faasmeter", description="Energy footprints for serverless functions.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="render traces and ground truth for a scenario")
    p.add_argument("--scenario", required=True, metavar="JSON", help="scenario file or bundled name [path|name]")
    p.add_argument("--seed", type=int, help="override the workload seed [integer]")
    p.add_argument("--exclude", metavar="ID", help="drop one function (paired ablation run) [function id]")
    _add_out(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("signal", help="estimate and correct skew between power signals")
    p.add_argument("action", choices=("sync", "drift"), help="sync: correct once; drift: report skew changes [choice]")
    _add_traces(p)
    p.add_argument(
        "--reference", default="auto", metavar="REF", help="auto, cpu, counters, or a reference power CSV [choice|path]"
    )
    p.add_argument("--bound", type=float, default=DEFAULT_BOUND_S, help="largest skew searched [s]")
    p.add_argument("--interval", type=float, default=DEFAULT_DRIFT_INTERVAL_S, help="drift re-estimation interval [s]")
    _add_out(p)
    p.set_defaults(func=cmd_signal)

    p = sub.add_parser("profile", help="disaggregate power into per-function footprints")
    _add_traces(p)
    p.add_argument("--config", metavar="JSON", help="run configuration file; flags override it [path]")
    p.add_argument("--mode", choices=MODES, help="solver mode (default no-idle) [choice]")
    p.add_argument("--delta", type=float, help="interval width (default 1.0) [s]")
    p.add_argument("--principals", metavar="LIST", help="shared principals, comma separated: cp,os [list]")
    p.add_argument("--idle-watts", dest="idle_watts", type=float, help="calibrated idle power [W]")
    p.add_argument("--online", action="store_true", default=None, help="also run the online Kalman profiler [flag]")
    p.add_argument("--alpha", type=float, help="Kalman weight on the previous estimate [0-1]")
    p.add_argument("--beta", type=float, help="Kalman weight on the window solution [0-1]")
    p.add_argument("--gamma", type=float, help="Kalman latency-variance gain [0-1]")
    p.add_argument("--r-scale", dest="r_scale", type=float, help="measurement noise scale, divided by delta [W^2 s]")
    p.add_argument("--step", type=float, help="Kalman step length (default 60) [s]")
    p.add_argument("--init", type=float, help="initial window length (default 100) [s]")
    p.add_argument("--skew-bound", dest="skew_bound", type=float, help="largest skew searched (default 5) [s]")
    p.add_argument("--no-skew-correction", action="store_true", help="use system power as recorded [flag]")
    p.add_argument("--window", type=float, default=60.0, help="spectrum window for batch profiles [s]")
    p.add_argument("--out", metavar="DIR", help="output directory [path]; default $FAASMETER_OUT or ./faasmeter_out")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("validate", help="score footprints against simulator ground truth")
    p.add_argument("--scenario", metavar="JSON", help="scenario file or bundled name [path|name]")
    p.add_argument("--config", metavar="JSON", help="run configuration file [path]")
    p.add_argument("--modes", default="no-idle,combined", help="comma-separated solver modes [list]")
    p.add_argument("--reference", choices=("marginal", "oracle"), default="marginal", help="ground truth source [choice]")
    p.add_argument("--batch", action="store_true", help="skip the online profiler [flag]")
    p.add_argument("--min-cosine", dest="min_cosine", type=float, default=0.98, help="pass threshold [dimensionless]")
    p.add_argument("--seed", type=int, help="override the workload seed [integer]")
    p.add_argument("--out", metavar="DIR", help="output directory [path]; default $FAASMETER_OUT or ./faasmeter_out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("cap", help="run a scenario under a software power cap")
    p.add_argument("--scenario", required=True, metavar="JSON", help="scenario file or bundled name [path|name]")
    p.add_argument("--cap-watts", dest="cap_watts", type=float, required=True, help="power cap [W]")
    p.add_argument("--mode", choices=[m.value for m in CapMode], default="footprint", help="admission rule [choice]")
    p.add_argument("--buffer", type=float, default=0.0, help="buffer-rule headroom per admission [W]")
    p.add_argument("--horizon", type=float, default=1.0, help="admission horizon t [s]")
    p.add_argument("--footprints", metavar="SRC", help="truth (default), exact, or footprints.json [path|choice]")
    p.add_argument("--max-wait", dest="max_wait", type=float, default=600.0, help="starvation timeout [s]")
    p.add_argument("--seed", type=int, help="override the workload seed [integer]")
    _add_out(p)
    p.set_defaults(func=cmd_cap)

    p = sub.add_parser("report", help="summaries and plot-ready CSVs from profile/validate outputs")
    p.add_argument("--results", required=True, metavar="DIR", help="profile or validate output directory [path]")
    p.add_argument("--spectrum", action="store_true", help="also emit the per-window footprint spectrum [flag]")
    _add_out(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, ProfileError, KalmanError) as exc:
        print(f"faasmeter: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, OutputValidationError, SkewError) as exc:
        print(f"faasmeter: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (OSError, TraceError) as exc:
        print(f"faasmeter: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
