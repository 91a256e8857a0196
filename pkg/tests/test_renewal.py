import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from regenlab.coupling import DStatus, Increment, RegenerationRecord
from regenlab.environment import EnvironmentSpec, make_environment
from regenlab.errors import InsufficientDataError
from regenlab.renewal import (EscapeClass, autocorrelation_test, classify_escape,
                              dichotomy_verdict, harmonic_escape_probe, iid_tests, ks_test,
                              limit_velocity_summary, ratio_estimate, tau1_moment_report,
                              velocity_direct, velocity_renewal, wilson_interval, zero_one_report)
from regenlab.sde import SimConfig, Trajectory, polyline_trajectory, simulate_path

E1 = np.array([1.0, 0.0])


def lin(vx, vy=0.0, horizon=50.0):
    return polyline_trajectory([0, horizon], [[0, 0], [vx * horizon, vy * horizon]], 1 / 16)


def record(dls, dts, z0=None, infinite=True):
    incs = [Increment(k + 1, dt, (dl, 0.0), dl, 0.0, dl) for k, (dl, dt) in enumerate(zip(dls, dts))]
    return RegenerationRecord([], [], incs, z0, False,
                              DStatus("infinite_within_horizon" if infinite else "finite", None if infinite else 2),
                              0.1, "scripted")


def test_direct_velocity_deterministic():
    v = velocity_direct([lin(0.5) for _ in range(5)], E1)
    assert v.estimate == pytest.approx(0.5) and v.se == 0.0 and v.method == "direct"


def test_direct_velocity_rejects_empty_and_mixed():
    with pytest.raises(ValueError):
        velocity_direct([], E1)
    with pytest.raises(ValueError):
        velocity_direct([lin(0.5, horizon=10), lin(0.5, horizon=20)], E1)


def test_direct_velocity_drifted_brownian():
    env = make_environment(EnvironmentSpec(mode="constant", drift_mean=(0.5, 0.0)))
    trajs = [simulate_path(env, np.zeros(2), SimConfig(horizon=50, replicate_seed=s)) for s in range(500)]
    v = velocity_direct(trajs, E1)
    assert abs(v.estimate - 0.5) <= 3 * v.se
    # exact law: l.X_T / T has standard deviation 1/sqrt(T)
    assert v.se == pytest.approx(1 / math.sqrt(50 * 500), rel=0.15)


def test_direct_velocity_symmetric_contains_zero():
    env = make_environment(EnvironmentSpec(mode="constant", drift_mean=(0.0, 0.0)))
    trajs = [simulate_path(env, np.zeros(2), SimConfig(horizon=50, replicate_seed=s)) for s in range(300)]
    lo, hi = velocity_direct(trajs, E1).ci()
    assert lo <= 0.0 <= hi


def test_renewal_arithmetic():
    v = velocity_renewal([record([1, 1, 1], [2, 2, 2])])
    assert v.estimate == 0.5 and v.se == 0.0 and v.n_effective == 3


def test_renewal_needs_two_increments():
    with pytest.raises(InsufficientDataError):
        velocity_renewal([record([1.0], [2])])


def test_ratio_se_against_delta_method_by_hand():
    x = np.array([3.0, 5.0, 4.0, 8.0])
    t = np.array([2.0, 3.0, 3.0, 4.0])
    v, se = ratio_estimate(x, t)
    assert v == pytest.approx(20 / 12)
    # gradient of f(mx, mt) = mx/mt is (1/mt, -mx/mt^2); covariance of the means is S/n
    S = np.cov(np.vstack([x, t]))
    g = np.array([1 / 3, -5 / 9])
    assert se == pytest.approx(math.sqrt(g @ S @ g / 4))


def test_bootstrap_se_is_close_to_delta():
    rng = np.random.default_rng(0)
    recs = [record(list(rng.normal(2, 0.5, 5)), list(rng.integers(2, 6, 5))) for _ in range(200)]
    d = velocity_renewal(recs)
    b = velocity_renewal(recs, se_method="bootstrap", n_boot=500)
    assert b.estimate == d.estimate
    assert b.se == pytest.approx(d.se, rel=0.3)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(-5, 20), st.integers(1, 30)), min_size=2, max_size=40), st.randoms())
def test_renewal_invariant_under_reordering(pairs, rnd):
    dls, dts = zip(*pairs)
    a = velocity_renewal([record(list(dls), list(dts))])
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    dls2, dts2 = zip(*shuffled)
    b = velocity_renewal([record(list(dls2), list(dts2))])
    assert a.estimate == pytest.approx(b.estimate, rel=1e-12, abs=1e-12)
    assert a.se == pytest.approx(b.se, rel=1e-9, abs=1e-12)


def test_classify_examples():
    assert classify_escape(lin(1.0), E1, 10).label == "plus"
    assert classify_escape(lin(-1.0), E1, 10).label == "minus"
    t = np.arange(50 * 16 + 1) / 16
    sine = Trajectory(1 / 16, np.column_stack([5 * np.sin(t), 0 * t]), None, 50.0)
    assert classify_escape(sine, E1, 10).label == "oscillating"
    assert classify_escape(lin(0.01), E1, 10).label == "undecided"


def test_classify_backtrack_spoils_escape():
    # reaches 10 (>= theta/2), falls to 4 (< theta/4 = 5), then ends at 30
    tr = polyline_trajectory([0, 10, 16, 40], [[0, 0], [10, 0], [4, 0], [30, 0]], 1 / 16)
    c = classify_escape(tr, E1, 20)
    assert c.label == "undecided" and c.evidence["tail_min"] == pytest.approx(4.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=2, max_size=15), st.floats(0.1, 10))
def test_classify_scale_consistent(levels, scale):
    times = list(range(len(levels) + 1))
    ys = [0.0] + levels
    a = polyline_trajectory(times, [[y, 0] for y in ys], 1 / 16)
    b = polyline_trajectory(times, [[y * scale, 0] for y in ys], 1 / 16)
    la = classify_escape(a, E1, 20).label
    lb = classify_escape(b, E1, 20 * scale).label
    if la != lb:
        # only exact ties at a threshold may flip under rounding
        ev = classify_escape(a, E1, 20).evidence
        ties = [ev["terminal"], ev["max"], ev["min"], ev["tail_min"] or 0.0]
        assert any(abs(abs(v) - q) < 1e-9 for v in ties for q in (5, 10, 20))


@pytest.mark.parametrize("k, n", [(98, 100), (0, 100), (50, 100), (3, 40), (40, 40)])
def test_wilson_matches_scipy(k, n):
    ci = stats.binomtest(k, n).proportion_ci(0.95, method="wilson")
    assert wilson_interval(k, n) == pytest.approx((ci.low, ci.high), abs=1e-12)


def test_zero_one_examples():
    classes = ["plus"] * 98 + ["oscillating", "undecided"]
    rep = zero_one_report(classes, E1)
    assert rep["events"]["plus"]["p"] == 0.98
    assert rep["events"]["plus"]["verdict"] == "consistent with 1"
    assert rep["events"]["minus"]["verdict"] == "consistent with 0"
    rep = zero_one_report(["oscillating"] * 60)
    assert rep["events"]["plus_or_minus"]["p"] == 0.0
    assert rep["events"]["plus_or_minus"]["verdict"] == "consistent with 0"
    rep = zero_one_report(["plus"] * 50 + ["minus"] * 50)
    assert rep["events"]["plus_or_minus"]["p"] == 1.0
    assert rep["events"]["plus_or_minus"]["verdict"] == "consistent with 1"
    assert rep["events"]["plus"]["verdict"] == "inconsistent with dichotomy"


def test_zero_one_needs_enough_replicates():
    with pytest.raises(InsufficientDataError):
        zero_one_report(["plus"] * 10)


@settings(max_examples=50)
@given(st.lists(st.sampled_from(["plus", "minus", "oscillating", "undecided"]), min_size=30, max_size=200))
def test_zero_one_frequencies_are_coherent(labels):
    e = zero_one_report([EscapeClass(x) for x in labels])["events"]
    assert e["plus"]["p"] + e["minus"]["p"] <= e["plus_or_minus"]["p"] + 1e-15
    assert e["plus_or_minus"]["p"] <= 1.0


def test_dichotomy_verdict_undetermined_band():
    assert dichotomy_verdict(0.05, 0.95) == "undetermined"


def test_autocorrelation_iid_calibration():
    rng = np.random.default_rng(1)
    ok = sum(autocorrelation_test(rng.exponential(size=200), 1, n_perm=199, seed=i).p_value > 0.01
             for i in range(100))
    assert ok >= 90


def test_autocorrelation_copied_sequence_rejected():
    x = np.repeat(np.random.default_rng(2).exponential(size=100), 2)
    rep = autocorrelation_test(x, 1)
    assert rep.statistic > 0.4 and rep.reject


def test_degenerate_samples_flagged():
    rep = autocorrelation_test(np.full(60, 3.0), 1)
    assert rep.degenerate and rep.p_value is None
    assert ks_test([1.0] * 40, [1.0] * 40).degenerate


def test_ks_method_switch():
    rng = np.random.default_rng(3)
    assert "asymp" in ks_test(rng.normal(size=40), rng.normal(size=35)).method
    assert "exact" in ks_test(rng.normal(size=20), rng.normal(size=35)).method


def test_iid_tests_report_set():
    rng = np.random.default_rng(4)
    recs = []
    for _ in range(30):
        dts = list(rng.integers(2, 9, 4))
        z0 = Increment(0, int(rng.integers(2, 9)), (0, 0), float(rng.normal(3, 1)), 0, 0)
        recs.append(record(list(rng.normal(3, 1, 4)), dts, z0=z0))
    reps = iid_tests(recs)
    names = [r.name for r in reps]
    assert len(reps) == 10
    assert sum(n.startswith("autocorr") for n in names) == 6
    assert sum(n.startswith("ks_even_odd") for n in names) == 2
    assert sum(n.startswith("ks_delay") for n in names) == 2
    with pytest.raises(InsufficientDataError):
        iid_tests(recs[:5])


def test_tau1_moments_deterministic():
    z0 = Increment(0, 4, (4.0, 0.0), 4.0, 0.0, 4.0)
    rep = tau1_moment_report([record([], [], z0=z0) for _ in range(40)])
    assert rep["l_x_tau1"]["mean"] == 4.0 and rep["l_x_tau1"]["se"] == 0.0
    assert rep["tau1"]["mean"] == 4.0
    assert rep["verdict"] == "stable"


def test_tau1_moments_low_n_has_no_verdict():
    z0 = Increment(0, 4, (4.0, 0.0), 4.0, 0.0, 4.0)
    recs = [record([], [], z0=z0) for _ in range(5)] + [record([], [], z0=z0, infinite=False)] * 40
    rep = tau1_moment_report(recs)
    assert rep["n"] == 5 and rep["low_n"] and rep["verdict"] is None


def test_limit_velocity_constant_drift():
    s = limit_velocity_summary([lin(0.5, horizon=100) for _ in range(10)], theta=20)
    assert s["l_star"] == pytest.approx([1.0, 0.0])
    assert s["v_plus"] == pytest.approx(0.5) and s["v_minus"] is None


def test_limit_velocity_two_populations():
    trajs = [lin(0.5, horizon=100)] * 10 + [lin(-0.3, horizon=100)] * 10
    s = limit_velocity_summary(trajs, theta=20)
    assert s["l_star"] == pytest.approx([1.0, 0.0])
    assert s["v_plus"] == pytest.approx(0.5) and s["v_minus"] == pytest.approx(0.3)
    assert s["collinearity"] == 1.0


def test_limit_velocity_all_oscillating():
    t = np.arange(100 * 16 + 1) / 16
    sine = Trajectory(1 / 16, np.column_stack([15 * np.sin(t), 15 * np.cos(t)]), None, 100.0)
    s = limit_velocity_summary([sine] * 5, theta=20)
    assert s["zero_velocity"] and s["v_plus"] == 0.0


@pytest.mark.parametrize("drift, expected", [(2.0, 1.0), (-2.0, 0.0)])
def test_harmonic_probe_ballistic(drift, expected):
    env = make_environment(EnvironmentSpec(mode="constant", drift_mean=(drift, 0.0)))
    rows = harmonic_escape_probe(env, [[0, 0], [5, 3]], E1, 20, horizon=40)
    assert all(r["r_hat"] == expected for r in rows)


def test_harmonic_probe_planar_recurrence():
    env = make_environment(EnvironmentSpec(mode="constant", drift_mean=(0.0, 0.0)))
    rows = harmonic_escape_probe(env, [[0, 0]], E1, 100, horizon=200)
    assert rows[0]["r_hat"] <= 0.15
