import dataclasses

import numpy as np
import pytest

from faasmeter.capping import (
    CapMode,
    CapPolicy,
    Decision,
    StarvationError,
    admit,
    cap_sweep,
    run_capped,
    run_capped_scenario,
)
from faasmeter.simulator import generate_workload, load_scenario, simulate

from conftest import noiseless


@pytest.fixture(scope="module")
def server():
    return load_scenario("server_cap")


@pytest.fixture(scope="module")
def quiet_server(server):
    return noiseless(server)


def test_admit_examples():
    pol = CapPolicy(100.0, 1.0)
    d = admit("f", 95.0, 4.0, pol)
    assert d.decision is Decision.ADMIT and d.predicted_joules == 99.0
    assert admit("f", 95.0, 10.0, pol).decision is Decision.DEFER
    assert admit("f", 100.0, 0.0, pol).decision is Decision.ADMIT
    assert admit("f", 100.5, 0.0, pol).decision is Decision.DEFER


def test_buffer_rule():
    pol = CapPolicy(100.0, 1.0, CapMode.BUFFER, 20.0)
    assert admit("f", 79.0, None, pol).decision is Decision.ADMIT
    assert admit("f", 80.0, None, pol).decision is Decision.DEFER


def test_missing_footprint_falls_back():
    pol = CapPolicy(100.0, 1.0, CapMode.FOOTPRINT, 10.0)
    d = admit("f", 85.0, None, pol)
    assert d.fallback and d.decision is Decision.ADMIT
    assert admit("f", 95.0, None, pol).decision is Decision.DEFER


def test_policy_validation():
    for kw in ({"cap_watts": 0.0}, {"cap_watts": 10.0, "horizon": 0.0}, {"cap_watts": 10.0, "buffer_watts": -1.0}):
        with pytest.raises(ValueError):
            CapPolicy(**kw)


def test_inactive_cap_matches_uncapped(server):
    run = run_capped_scenario(server, CapPolicy(1e6))
    wl = generate_workload(server.workload)
    assert all(d.decision is Decision.ADMIT for d in run.decisions)
    np.testing.assert_allclose(np.sort(run.latencies), np.sort(wl.latencies))


def test_cap_below_idle_starves(server):
    with pytest.raises(StarvationError, match="idle"):
        run_capped_scenario(server, CapPolicy(server.truth.idle_watts - 1))


def test_oversized_footprint_starves(quiet_server):
    fp = {f: 1e4 for f in quiet_server.truth.per_function_watts}
    with pytest.raises(StarvationError, match="deferred"):
        run_capped_scenario(quiet_server, CapPolicy(150.0), footprints=fp, max_wait=60.0)


def test_nominal_overshoot(server):
    run = run_capped_scenario(server, CapPolicy(180.0))
    assert run.overshoot <= 0.03


@pytest.mark.parametrize("cap", [130.0, 150.0, 170.0, 180.0, 200.0])
def test_noiseless_exact_footprints_never_overshoot(quiet_server, cap):
    run = run_capped_scenario(quiet_server, CapPolicy(cap), footprints="exact")
    assert run.overshoot == 0.0


def test_fcfs_order_preserved(quiet_server):
    run = run_capped_scenario(quiet_server, CapPolicy(150.0))
    order = np.argsort(run.arrivals, kind="stable")
    starts = run.invocations.starts[order]
    assert np.all(np.diff(starts) >= 0)


def test_work_conservation(quiet_server):
    pol = CapPolicy(150.0)
    run = run_capped_scenario(quiet_server, pol)
    wl = generate_workload(quiet_server.workload)
    fp = {f: quiet_server.truth.per_function_watts[f] * wl.mean_latency(f) for f in wl.functions}
    w = run.power.watts
    p = quiet_server.options.period
    for d in run.decisions:
        k = int(round(d.time / p))
        # a deferral only happens when the head did not fit the headroom seen at that tick
        if d.decision is Decision.DEFER:
            assert d.observed_watts * pol.horizon + fp[d.function_id] > pol.cap_watts * pol.horizon
        if k == 0:
            continue
        assert d.observed_watts <= w[k - 1] + 1e-9 or d.observed_watts >= w[k - 1] - 1e-9


def test_latency_monotone_in_cap(server):
    caps = [200.0, 180.0, 170.0, 160.0, 150.0]
    means = [s["mean_latency_s"] for s in cap_sweep(server, caps)]
    assert all(b >= a for a, b in zip(means, means[1:]))


def test_buffer_waits_at_least_footprint(quiet_server):
    b = max(quiet_server.truth.per_function_watts.values())
    fa = run_capped_scenario(quiet_server, CapPolicy(160.0))
    bo = run_capped_scenario(quiet_server, CapPolicy(160.0, 1.0, CapMode.BUFFER, b))
    assert bo.overshoot == 0.0
    assert bo.waits.mean() >= fa.waits.mean()


def test_deterministic(server):
    a = run_capped_scenario(server, CapPolicy(170.0))
    b = run_capped_scenario(server, CapPolicy(170.0))
    assert a.power == b.power and a.summary() == b.summary()


def test_summary_fields(server):
    s = run_capped_scenario(server, CapPolicy(180.0)).summary()
    assert {"overshoot_fraction", "mean_latency_s", "per_function", "deferrals"} <= set(s)
