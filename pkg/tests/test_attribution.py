import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from faasmeter.attribution import build_spectrum, split_control_plane, split_idle, spectrum_for_window
from faasmeter.disagg import build_contributions, solve_no_idle
from faasmeter.pipeline import ProfileConfig, profile, window_spectra
from faasmeter.simulator import load_scenario, simulate
from faasmeter.traces import CONTROL_PLANE_ID


def test_control_plane_split_example():
    s = split_control_plane(10.0, {"a": 3, "b": 1})
    assert s.total_shares == {"a": 7.5, "b": 2.5}
    assert s.per_invocation == {"a": 2.5, "b": 2.5}


def test_control_plane_single_and_null():
    assert split_control_plane(4.0, {"a": 2}).total_shares == {"a": 4.0}
    s = split_control_plane(4.0, {"a": 2, "b": 0})
    assert s.total_shares["b"] == 0.0 and s.per_invocation["b"] == 0.0


def test_control_plane_unattributable():
    s = split_control_plane(4.0, {"a": 0})
    assert s.unattributed == 4.0 and s.total_shares == {"a": 0.0}


def test_idle_split_examples():
    assert split_idle(90.0, {"a": 1, "b": 2, "c": 5}).total_shares == {"a": 30.0, "b": 30.0, "c": 30.0}
    assert split_idle(90.0, {"a": 4}).total_shares == {"a": 90.0}
    s = split_idle(95.0 * 60.0, {"a": 6, "b": 3})
    assert s.per_invocation == {"a": 475.0, "b": 950.0}


def test_idle_split_no_active():
    s = split_idle(50.0, {"a": 0, "b": 0})
    assert s.unattributed == 50.0


def test_negative_energy_rejected():
    with pytest.raises(ValueError):
        split_idle(-1.0, {"a": 1})
    with pytest.raises(ValueError):
        split_control_plane(-1.0, {"a": 1})


acts = st.dictionaries(st.sampled_from(list("abcdef")), st.integers(0, 50), min_size=1)


@settings(max_examples=200, deadline=None)
@given(acts, st.floats(0, 1e4), st.floats(0, 1e5), st.floats(0, 1e3))
def test_spectrum_identities(activations, j_cp, j_idle, w):
    x = {f: w * (k + 1) for k, f in enumerate(sorted(activations))}
    lat = {f: 0.5 + k for k, f in enumerate(sorted(activations))}
    spec = build_spectrum(x, lat, j_cp, j_idle, activations, (0.0, 60.0), measured_energy=1e6)
    cp = split_control_plane(j_cp, activations)
    idle = split_idle(j_idle, activations)
    both_cp = split_control_plane(j_cp, activations)
    for f, e in spec.entries.items():
        # linearity: J_total is the exact sum of its parts
        assert e.j_total == e.j_indiv + e.phi_cp + e.phi_idle
        # shared part equals the cp share plus the idle share
        assert e.phi_cp + e.phi_idle == cp.per_invocation[f] + idle.per_invocation[f]
        assert min(e.j_indiv, e.phi_cp, e.phi_idle) >= 0
        if activations[f] == 0:
            assert (e.j_indiv, e.phi_cp, e.phi_idle, e.j_total) == (0.0, 0.0, 0.0, 0.0)
    assert spec.efficiency_gap() == 0.0
    assert both_cp == cp


@settings(max_examples=100, deadline=None)
@given(acts, st.sampled_from(list("abcdef")), st.floats(0.1, 1e3))
def test_control_plane_share_monotone(activations, f, j_cp):
    a = dict(activations)
    a.setdefault(f, 0)
    before = split_control_plane(j_cp, a).total_shares[f]
    a[f] += 1
    after = split_control_plane(j_cp, a).total_shares[f]
    assert after >= before


def test_efficiency_on_simulator_run(four_fn_run):
    run = four_fn_run
    res = profile(run.invocations, run.system_power, run.cpu_power, run.utilization, run.counters,
                  ProfileConfig(idle_watts=run.truth.idle_watts, principals=("cp",)))
    for spec in res.spectra:
        assert spec.residual == pytest.approx(spec.measured_energy - spec.attributed_energy - spec.unattributed)
        assert spec.efficiency_gap() == 0.0
    measured = sum(s.measured_energy for s in res.spectra)
    accounted = sum(s.attributed_energy + s.unattributed for s in res.spectra)
    assert abs(measured - accounted) / measured < 0.1


def test_window_control_plane_energy(four_fn_run):
    run = four_fn_run
    cm = build_contributions(run.invocations, run.utilization, 1.0, (0.0, 600.0), ("cp",), run.system_power)
    sol = solve_no_idle(cm, idle_watts=15.0)
    spec = spectrum_for_window(cm, sol, run.invocations, 15.0)
    busy = cm.C[:, cm.index(CONTROL_PLANE_ID)].sum()
    assert spec.extras["J_cp"] == pytest.approx(max(sol[CONTROL_PLANE_ID], 0.0) * busy)
    assert spec.extras["J_idle"] == pytest.approx(15.0 * 600.0)


def test_inactive_function_in_window_is_null(four_fn_run):
    sc = load_scenario("dynamic")
    run = simulate(sc)
    res = profile(run.invocations, run.system_power, run.cpu_power, run.utilization, run.counters,
                  ProfileConfig(idle_watts=15.0, spectrum_window=60.0))
    first = res.spectra[0]
    assert first["video"].j_total == 0.0 and first["video"].activations == 0


def test_twins_symmetric():
    sc = load_scenario("twins")
    run = simulate(sc)
    res = profile(run.invocations, run.system_power, run.cpu_power, run.utilization, run.counters,
                  ProfileConfig(idle_watts=sc.truth.idle_watts))
    assert abs(res.footprints["image_a"] - res.footprints["image_b"]) <= 0.05 * res.footprints["image_a"]
    spectra = window_spectra(res, run.invocations, per_window=True)
    a, b = (np.array([s[f].j_total for s in spectra if f in s.entries and s[f].activations > 0])
            for f in ("image_a", "image_b"))
    pooled_se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    assert abs(a.mean() - b.mean()) <= 2 * pooled_se
