import csv
import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from faasmeter import cli
from faasmeter.pipeline import ProfileConfig, profile
from faasmeter.traces import Source, read_power_traces, read_trace, write_trace


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert run("simulate", "--scenario", "four_fn", "--out", out) == 0
    return out


@pytest.fixture(scope="module")
def profile_dir(sim_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("prof")
    assert run("profile", "--traces", sim_dir, "--mode", "no-idle", "--principals", "cp", "--out", out) == 0
    return out


def test_simulate_writes_five_files_and_manifest(sim_dir):
    names = {"power.csv", "invocations.csv", "utilization.csv", "counters.csv", "truth.json"}
    assert names <= {p.name for p in sim_dir.iterdir()}
    manifest = json.loads((sim_dir / "manifest.json").read_text())
    listed = {e["path"] if isinstance(e, dict) else e for e in manifest["files"]}
    assert names <= {os.path.basename(p) for p in listed}


def test_simulate_is_deterministic(tmp_path, sim_dir):
    assert run("simulate", "--scenario", "four_fn", "--out", tmp_path) == 0
    assert (tmp_path / "manifest.json").read_bytes() == (sim_dir / "manifest.json").read_bytes()


def test_out_directory_defaults_to_env(tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv("FAASMETER_OUT", str(target))
    assert run("simulate", "--scenario", "three_fn") == 0
    assert (target / "manifest.json").exists()


def test_invalid_scenario_names_the_key(tmp_path, capsys):
    bad = json.loads((cli.Path(cli.__file__).parent / "scenarios" / "three_fn.json").read_text())
    bad["truth"]["idle_wats"] = bad["truth"].pop("idle_watts")
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(bad))
    assert run("simulate", "--scenario", p, "--out", tmp_path / "o") == 1
    assert "idle_wats" in capsys.readouterr().err


def test_missing_required_argument_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run("simulate")
    assert exc.value.code == 1


def test_unknown_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 1


@pytest.mark.parametrize("command", ["simulate", "signal", "profile", "validate", "cap", "report"])
def test_help_lists_units_for_every_flag(command):
    parser = cli.build_parser()
    sub = next(a for a in parser._actions if a.__class__.__name__ == "_SubParsersAction")
    p = sub.choices[command]
    for action in p._actions:
        if action.dest == "help":
            continue
        assert action.help and "[" in action.help and "]" in action.help, (command, action.dest)


def test_help_exits_zero():
    r = subprocess.run([sys.executable, "-m", "faasmeter", "profile", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "--idle-watts" in r.stdout and "[W]" in r.stdout


def test_combined_without_cpu_names_missing_input(tmp_path, capsys):
    src = tmp_path / "sim"
    assert run("simulate", "--scenario", "jetson", "--out", src) == 0
    assert run("profile", "--traces", src, "--mode", "combined", "--out", tmp_path / "p") == 1
    err = capsys.readouterr().err
    assert "cpu" in err and "power" in err


def test_jetson_no_idle_profile_emits_json_lines(tmp_path):
    src = tmp_path / "sim"
    assert run("simulate", "--scenario", "jetson", "--out", src) == 0
    out = tmp_path / "p"
    assert run("profile", "--traces", src, "--mode", "no-idle", "--principals", "cp", "--out", out) == 0
    lines = (out / "windows.jsonl").read_text().splitlines()
    assert lines
    for line in lines:
        row = json.loads(line)
        assert {"t0", "t1", "X", "running_s", "measured_j"} <= set(row)
    summary = json.loads((out / "footprints.json").read_text())
    assert summary["skew_reference"] == "counters"
    assert set(summary["footprints_j"]) == {"aes", "dd", "image", "video"}


def test_profile_is_deterministic(sim_dir, profile_dir, tmp_path):
    assert run("profile", "--traces", sim_dir, "--mode", "no-idle", "--principals", "cp", "--out", tmp_path) == 0
    assert (tmp_path / "manifest.json").read_bytes() == (profile_dir / "manifest.json").read_bytes()


def test_stacked_csv_sums_to_predicted_total(sim_dir, profile_dir, tmp_path):
    assert run("report", "--results", profile_dir, "--spectrum", "--out", tmp_path) == 0
    with open(tmp_path / "stacked_energy.csv") as fh:
        rows = list(csv.DictReader(fh))
    parts = [k for k in rows[0] if k.endswith("_j") and k not in ("predicted_total_j", "measured_j")]
    for r in rows:
        assert math.fsum(float(r[k]) for k in parts) == pytest.approx(float(r["predicted_total_j"]), rel=1e-12)

    # independent route: the pipeline's predicted power integrated over each window
    truth = json.loads((sim_dir / "truth.json").read_text())
    powers = read_power_traces(sim_dir / "power.csv")
    res = profile(
        read_trace(sim_dir / "invocations.csv", "invocations"),
        powers[Source.SYSTEM],
        powers.get(Source.CPU),
        read_trace(sim_dir / "utilization.csv", "utilization"),
        read_trace(sim_dir / "counters.csv", "counters"),
        ProfileConfig(mode="no-idle", principals=("cp",), idle_watts=truth["idle_watts"], spectrum_window=60.0),
    )
    cm = res.matrix
    for r in rows:
        lo = int(round((float(r["t0_s"]) - cm.t0) / cm.delta))
        hi = int(round((float(r["t1_s"]) - cm.t0) / cm.delta))
        expected = float(res.predicted[lo:hi].sum() * cm.delta)
        assert float(r["predicted_total_j"]) == pytest.approx(expected, rel=1e-9)
    assert (tmp_path / "spectrum.csv").exists()


def test_report_on_empty_directory_fails(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert run("report", "--results", empty, "--out", tmp_path / "o") == 3
    assert run("report", "--results", tmp_path / "missing", "--out", tmp_path / "o") == 3


def test_report_reproduces_validation_cosine(tmp_path, capsys):
    val = tmp_path / "val"
    code = run("validate", "--scenario", "three_fn", "--modes", "no-idle", "--batch", "--out", val)
    assert code in (0, 2)
    capsys.readouterr()
    assert run("report", "--results", val, "--out", tmp_path / "r") == 0
    summary = json.loads((val / "summary.json").read_text())
    with open(tmp_path / "r" / "metrics.csv") as fh:
        metrics = list(csv.DictReader(fh))
    for rep, row in zip(summary["reports"], metrics):
        assert repr(rep["cosine_similarity"]) == row["cosine_similarity"]
    text = (tmp_path / "r" / "report.txt").read_text()
    assert repr(summary["reports"][0]["cosine_similarity"]) in text


def test_validate_fails_below_threshold(tmp_path):
    code = run("validate", "--scenario", "three_fn", "--modes", "no-idle", "--batch", "--min-cosine", "1.01", "--out", tmp_path)
    assert code == 2


def test_validate_rejects_unknown_mode(tmp_path):
    assert run("validate", "--scenario", "three_fn", "--modes", "magic", "--out", tmp_path) == 1


def test_signal_sync_with_reference_csv(sim_dir, tmp_path, capsys):
    powers = read_power_traces(sim_dir / "power.csv")
    ref = tmp_path / "ref.csv"
    write_trace(powers[Source.CPU], ref)
    out = tmp_path / "s"
    assert run("signal", "sync", "--traces", sim_dir, "--reference", ref, "--out", out) == 0
    record = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert record["reference"] == str(ref)
    assert record["offset_s"] == pytest.approx(2.0, abs=1.0)
    assert json.loads((out / "skew.json").read_text()) == record
    assert Source.SYSTEM in read_power_traces(out / "power.csv")


def test_signal_drift_writes_json_lines(sim_dir, tmp_path, capsys):
    assert run("signal", "drift", "--traces", sim_dir, "--interval", "300", "--out", tmp_path) == 0
    rows = [json.loads(x) for x in (tmp_path / "drift.jsonl").read_text().splitlines()]
    assert rows and all({"estimated_at_s", "offset_s", "residual"} == set(r) for r in rows)


def test_signal_on_flat_reference_is_validation_failure(sim_dir, tmp_path):
    powers = read_power_traces(sim_dir / "power.csv")
    cpu = powers[Source.CPU]
    flat = type(cpu)(cpu.timestamps, np.full(len(cpu), 10.0), Source.CPU)
    ref = tmp_path / "flat.csv"
    write_trace(flat, ref)
    assert run("signal", "sync", "--traces", sim_dir, "--reference", ref, "--out", tmp_path / "s") == 2


def test_online_profile_writes_snapshots(sim_dir, tmp_path):
    assert run("profile", "--traces", sim_dir, "--online", "--principals", "cp", "--out", tmp_path) == 0
    rows = [json.loads(x) for x in (tmp_path / "online.jsonl").read_text().splitlines()]
    assert rows
    assert {"timestamp", "function_id", "watts", "joules_per_invocation", "p_variance"} == set(rows[0])
    assert {r["function_id"] for r in rows} >= {"aes", "dd", "image", "video"}


def test_missing_traces_is_io_error(tmp_path):
    assert run("profile", "--traces", tmp_path, "--idle-watts", "15", "--out", tmp_path / "o") == 3


def test_bad_run_config_key_is_usage_error(sim_dir, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"mode": "no-idle", "delt": 1.0}))
    assert run("profile", "--traces", sim_dir, "--config", cfg, "--out", tmp_path / "o") == 1
    assert "delt" in capsys.readouterr().err


def test_cap_writes_decisions_and_summary(tmp_path):
    assert run("cap", "--scenario", "server_cap", "--cap-watts", "180", "--out", tmp_path) == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["cap_watts"] == 180.0
    first = json.loads((tmp_path / "decisions.jsonl").read_text().splitlines()[0])
    assert first["decision"] in ("admit", "defer")


def test_cap_starvation_exit_code(tmp_path, capsys):
    assert run("cap", "--scenario", "server_cap", "--cap-watts", "1", "--out", tmp_path) == 2
    assert "starvation" in capsys.readouterr().err
