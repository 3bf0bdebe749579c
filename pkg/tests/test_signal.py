import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faasmeter.signal import (
    DriftMonitor,
    FlatSignalError,
    SkewError,
    apply_skew,
    estimate_skew,
    monitor_drift,
    reference_from_counters,
    skew_objective,
)
from faasmeter.simulator import simulate
from faasmeter.traces import PowerTrace, TraceMeta

from conftest import make_scenario


def _bursty(skew=0.0, duration=600.0, **kw):
    return make_scenario(
        [("a", 1.5, 6.0), ("b", 4.0, 15.0)], {"a": 40.0, "b": 25.0}, duration=duration, idle=20.0, skew=skew, **kw
    )


@pytest.fixture(scope="module")
def skewed_run():
    return simulate(_bursty(skew=2.0))


def test_self_alignment(skewed_run):
    est = estimate_skew(skewed_run.cpu_power, skewed_run.cpu_power)
    assert est.offset_s == 0.0


def test_injected_skew_recovered(skewed_run):
    est = estimate_skew(skewed_run.system_power, skewed_run.cpu_power)
    assert abs(est.offset_s - 2.0) <= 1.0


def test_flat_signal_refused(skewed_run):
    flat = PowerTrace(skewed_run.cpu_power.timestamps, np.full(len(skewed_run.cpu_power), 50.0))
    with pytest.raises(FlatSignalError):
        estimate_skew(flat, skewed_run.cpu_power)


def test_zero_mean_refused(skewed_run):
    zero = PowerTrace(skewed_run.cpu_power.timestamps, np.zeros(len(skewed_run.cpu_power)))
    with pytest.raises(SkewError):
        estimate_skew(zero, skewed_run.cpu_power)


def test_short_trace_refused():
    tr = PowerTrace(np.arange(6.0), [1, 2, 3, 4, 5, 6])
    with pytest.raises(SkewError):
        estimate_skew(tr, tr, bound=5.0)


def test_apply_skew_identity_and_inverse(skewed_run):
    p = skewed_run.system_power
    assert apply_skew(p, 0.0) is p
    back = apply_skew(apply_skew(p, 3.0), -3.0)
    common = np.isin(p.timestamps, back.timestamps)
    assert common.sum() == len(p) - 6  # each shift drops 3 edge samples
    np.testing.assert_array_equal(back.watts, p.watts[common])


def test_apply_skew_preserves_overlap_energy(skewed_run):
    p = skewed_run.system_power
    q = apply_skew(p, 2.0)
    np.testing.assert_array_equal(q.watts, p.watts[2:])


def test_correction_reduces_rest_variance(skewed_run):
    sys_, cpu = skewed_run.system_power, skewed_run.cpu_power
    before = np.var(sys_.watts - cpu.watts)
    est = estimate_skew(sys_, cpu)
    fixed = apply_skew(sys_, round(est.offset_s))
    n = len(fixed)
    after = np.var(fixed.watts - cpu.watts[:n])
    assert after < before


@settings(max_examples=15, deadline=None)
@given(st.integers(-3, 3), st.floats(0.1, 50.0))
def test_shift_equivariance_and_scale_invariance(shift, scale):
    run = simulate(_bursty(duration=400.0))
    ref = run.cpu_power
    n = len(ref)
    w = np.asarray(run.system_power.watts)
    shifted = np.roll(w, shift)[5:-5] * scale
    p = PowerTrace(ref.timestamps[5:-5], shifted, meta=TraceMeta(0.0, 1.0, ""))
    r = PowerTrace(ref.timestamps[5:-5], ref.watts[5:-5], meta=TraceMeta(0.0, 1.0, ""))
    est = estimate_skew(p, r)
    assert abs(est.offset_s - shift) <= 1.0
    base = estimate_skew(PowerTrace(r.timestamps, np.roll(w, shift)[5:-5]), r)
    assert est.offset_s == pytest.approx(base.offset_s, abs=1e-9)
    assert n > 0


def test_objective_minimum_consistent(skewed_run):
    est = estimate_skew(skewed_run.system_power, skewed_run.cpu_power)
    w = skewed_run.system_power.watts / skewed_run.system_power.watts.mean()
    r = skewed_run.cpu_power.watts / skewed_run.cpu_power.watts.mean()
    assert est.residual <= skew_objective(w, r, 5).min() + 1e-12


def test_drift_constant_skew_single_estimate():
    run = simulate(_bursty(skew=2.0, duration=900.0))
    ests = list(monitor_drift(run.system_power, run.cpu_power, interval=120.0))
    assert len(ests) == 1
    assert abs(ests[0].offset_s - 2.0) <= 1.0


def test_drift_step_emits_two():
    sc = _bursty(skew=1.0, duration=960.0, skew_steps=((480.0, 3.0),))
    run = simulate(sc)
    ests = list(monitor_drift(run.system_power, run.cpu_power, interval=120.0))
    assert len(ests) == 2
    assert abs(ests[0].offset_s - 1.0) <= 1.0
    assert abs(ests[1].offset_s - 3.0) <= 1.0


def test_drift_flat_signal_flagged(skewed_run):
    flat = PowerTrace(skewed_run.cpu_power.timestamps, np.full(len(skewed_run.cpu_power), 80.0))
    mon = DriftMonitor(interval=120.0)
    assert list(monitor_drift(flat, skewed_run.cpu_power, monitor=mon)) == []
    assert mon.flat_signal


def test_drift_interval_bound():
    with pytest.raises(ValueError):
        DriftMonitor(interval=5.0)


def test_counter_reference_recovers_skew():
    sc = dataclasses.replace(_bursty(skew=2.0), options=_bursty(skew=2.0, cpu_trace=False).options)
    run = simulate(sc)
    assert run.cpu_power is None
    est = estimate_skew(run.system_power, reference_from_counters(run.counters))
    assert abs(est.offset_s - 2.0) <= 1.0
