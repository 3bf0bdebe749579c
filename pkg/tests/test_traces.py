import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faasmeter.traces import (
    CounterTrace,
    InvocationTrace,
    Principal,
    PowerTrace,
    Source,
    TraceInvariantError,
    TraceMeta,
    TraceParseError,
    UtilizationTrace,
    energy,
    read_power_traces,
    read_trace,
    resample,
    write_trace,
)


def _write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_one_row_power(tmp_path):
    p = _write(tmp_path, "timestamp,source,watts\n0.000,system,95.0\n")
    tr = read_trace(p, "power")
    assert len(tr) == 1 and tr.watts[0] == 95.0 and tr.source is Source.SYSTEM


@pytest.mark.parametrize("kind,header", [
    ("power", "timestamp,source,watts"),
    ("invocations", "function_id,start,end,warm"),
    ("utilization", "timestamp,principal,cpu_percent"),
    ("counters", "timestamp,function_id,c0,c1,c2,c3"),
])
def test_header_only_is_empty(tmp_path, kind, header):
    tr = read_trace(_write(tmp_path, header + "\n"), kind)
    assert len(tr) == 0


def test_negative_watts_rejected(tmp_path):
    with pytest.raises(TraceInvariantError) as exc:
        read_trace(_write(tmp_path, "timestamp,source,watts\n0.000,system,-1\n"), "power")
    assert exc.value.line == 2 and exc.value.record[2] == -1.0


def test_parse_error_has_line_number(tmp_path):
    p = _write(tmp_path, "timestamp,source,watts\n0.000,system,1\n1.000,system,abc\n")
    with pytest.raises(TraceParseError) as exc:
        read_trace(p, "power")
    assert exc.value.line == 3


def test_out_of_order_rows_rejected(tmp_path):
    p = _write(tmp_path, "timestamp,source,watts\n1.000,system,1\n0.000,system,1\n")
    with pytest.raises(TraceParseError):
        read_trace(p, "power")


def test_invocation_invariants():
    with pytest.raises(TraceInvariantError):
        InvocationTrace(["f"], [1.0], [1.0])
    inv = InvocationTrace(["f", "g"], [0.0, 0.5], [1.0, 2.5])
    np.testing.assert_allclose(inv.latencies, [1.0, 2.0])


def test_counters_nonnegative():
    with pytest.raises(TraceInvariantError):
        CounterTrace([0.0], ["f"], [[1, 2, -3, 4]])


def test_unwritable_path(tmp_path):
    tr = PowerTrace([0.0], [1.0])
    with pytest.raises(OSError):
        write_trace(tr, tmp_path / "missing" / "dir" / "p.csv")


power_values = st.lists(st.floats(0, 1e4, allow_nan=False, allow_infinity=False), min_size=0, max_size=60)


@settings(max_examples=50, deadline=None)
@given(power_values, st.sampled_from([0.25, 1.0, 0.001]))
def test_power_round_trip(tmp_path_factory, watts, period):
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    tr = PowerTrace(np.arange(len(watts)) * period, watts, Source.CPU, TraceMeta(1.7e9, period, "x"))
    write_trace(tr, path)
    back = read_trace(path, "power", Source.CPU)
    assert back == tr


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(0, 40))
def test_other_kinds_round_trip(tmp_path_factory, seed, n):
    rng = np.random.default_rng(seed)
    d = tmp_path_factory.mktemp("rt")
    s = np.sort(rng.uniform(0, 100, n))
    inv = InvocationTrace([f"f{k % 3}" for k in range(n)], s, s + rng.uniform(0.01, 5, n), rng.random(n) < 0.5)
    ts = np.repeat(np.arange(n, dtype=float), 3)
    util = UtilizationTrace(ts, [Principal.CONTROL_PLANE, Principal.OS, Principal.SYSTEM_WIDE] * n, rng.uniform(0, 800, 3 * n))
    ctr = CounterTrace(np.arange(n, dtype=float), ["f"] * n, rng.integers(0, 2**40, (n, 4)))
    for tr, kind in ((inv, "invocations"), (util, "utilization"), (ctr, "counters")):
        write_trace(tr, d / f"{kind}.csv")
        assert read_trace(d / f"{kind}.csv", kind) == tr


def test_second_write_byte_identical(tmp_path):
    rng = np.random.default_rng(1)
    tr = PowerTrace(np.arange(10_000) * 0.25, rng.uniform(0, 200, 10_000), meta=TraceMeta(0.0, 0.25, "m"))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trace(tr, a)
    write_trace(read_trace(a, "power"), b)
    assert a.read_bytes() == b.read_bytes()


def test_multi_source_file(tmp_path):
    sys_ = PowerTrace([0.0, 1.0], [100.0, 110.0], Source.SYSTEM)
    cpu = PowerTrace([0.0, 1.0], [40.0, 50.0], Source.CPU)
    write_trace([sys_, cpu], tmp_path / "p.csv")
    got = read_power_traces(tmp_path / "p.csv")
    assert got[Source.SYSTEM] == sys_ and got[Source.CPU] == cpu


def test_resample_constant():
    tr = PowerTrace(np.arange(40) * 0.25, np.full(40, 50.0))
    out = resample(tr, 1.0)
    np.testing.assert_allclose(out.watts, 50.0)


def test_resample_equal_weight_mean():
    out = resample(PowerTrace([0.0, 0.5], [0.0, 100.0]), 1.0)
    assert out.watts[0] == pytest.approx(50.0)


def test_resample_holds_across_gap():
    out = resample(PowerTrace([0.0, 1.0, 4.0], [10.0, 20.0, 30.0]), 1.0)
    np.testing.assert_allclose(out.watts[:4], [10.0, 20.0, 20.0, 20.0])


def test_resample_empty_raises():
    with pytest.raises(ValueError):
        resample(PowerTrace([], []), 1.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([0.5, 1.0, 2.0, 3.0]))
def test_resample_preserves_energy(seed, period):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 50))
    ts = np.round(np.cumsum(rng.uniform(0.05, 2.0, n)), 3)
    tr = PowerTrace(ts - ts[0], rng.uniform(0, 300, n))
    out = resample(tr, period)
    assert float(out.watts.sum() * period) == pytest.approx(_held_integral(tr, out), rel=1e-9)


def _held_integral(tr, out):
    # integral of the held input out to the end of the last output bin
    end = out.timestamps[-1] + out.meta.nominal_period_s
    t = np.append(tr.timestamps, end)
    return float(np.sum(tr.watts * np.diff(np.minimum(t, end))))


def test_energy_of_step_signal():
    tr = PowerTrace([0.0, 1.0, 3.0], [10.0, 20.0, 5.0], meta=TraceMeta(0.0, 1.0, ""))
    assert energy(tr, 0.0, 3.0) == pytest.approx(50.0)
