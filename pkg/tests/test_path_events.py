import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from regenlab.path_events import (SlabSpec, event_Cm, hitting_time, oscillation_fraction,
                                  oscillation_stats, running_max, slab_exit_time)
from regenlab.sde import polyline_trajectory

E1 = np.array([1.0, 0.0])
DT = 1 / 16


def line(speed, horizon, d=2, x0=0.0):
    p0 = np.zeros(d)
    p0[0] = x0
    p1 = p0.copy()
    p1[0] += speed * horizon
    return polyline_trajectory([0, horizon], [p0, p1], DT)


def path1d(times, levels, horizon=None):
    return polyline_trajectory(times, [[v, 0.0] for v in levels], DT, horizon)


def test_hitting_time_examples():
    tr = line(1.0, 10)
    assert hitting_time(tr, E1, 2.0, "abs_ge") == 2.0
    assert hitting_time(tr, E1, -1.0, "rel_le") is None
    # up to 3 on [0, 3], then slope -1: relative level -1 at t = 7
    up_down = path1d([0, 3, 10], [0, 3, -4])
    assert hitting_time(up_down, E1, -1.0, "rel_le") == pytest.approx(7.0, abs=1e-12)


def test_relative_modes_use_start_level():
    tr = line(1.0, 10, x0=5.0)
    assert hitting_time(tr, E1, 2.0, "rel_ge") == pytest.approx(2.0)
    assert hitting_time(tr, E1, 7.0, "abs_ge") == pytest.approx(2.0)
    assert hitting_time(tr, E1, 0.0, "abs_le") is None


def test_crossing_is_interpolated_between_samples():
    tr = polyline_trajectory([0, 1], [[0, 0], [1, 0]], dt=0.25)
    assert hitting_time(tr, E1, 0.3, "abs_ge") == pytest.approx(0.3, abs=1e-15)


def test_slab_exit_examples():
    assert slab_exit_time(line(1.0, 10, x0=5.0), SlabSpec((1.0, 0.0), 0, 10)) == pytest.approx(5.0)
    assert slab_exit_time(line(1.0, 10, x0=12.0), SlabSpec((1.0, 0.0), 0, 10)) == 0.0
    # 5 -> 8 -> 4 -> 9 -> 13: leaves (0, 10) where 9 -> 13 crosses 10
    zig = path1d([0, 1, 2, 3, 4], [5, 8, 4, 9, 13])
    assert slab_exit_time(zig, SlabSpec((1.0, 0.0), 0, 10)) == pytest.approx(3.25, abs=1e-12)


def test_closed_slab_keeps_boundary_points():
    tr = path1d([0, 2, 4], [5, 10, 5])
    assert slab_exit_time(tr, SlabSpec((1.0, 0.0), 0, 10)) == pytest.approx(2.0)
    assert slab_exit_time(tr, SlabSpec((1.0, 0.0), 0, 10, closed=True)) is None


def test_slab_spec_validation():
    with pytest.raises(ValueError):
        SlabSpec((1.0, 0.0), 3, 3)
    with pytest.raises(ValueError):
        SlabSpec((1.0, 1.0), 0, 3)


def test_running_max():
    assert running_max(line(1.0, 10), E1, 4) == pytest.approx(4.0)
    tr = path1d([0, 3, 5], [0, 3, 1])
    assert running_max(tr, E1, 5) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        running_max(tr, E1, 6)


def test_running_max_monotone_on_random_path(field_env):
    from regenlab.sde import SimConfig, simulate_path
    tr = simulate_path(field_env, np.zeros(2), SimConfig(horizon=30, replicate_seed=2))
    rng = np.random.default_rng(0)
    for _ in range(100):
        t1, t2 = np.sort(rng.uniform(0, 30, 2))
        assert running_max(tr, E1, t2) >= running_max(tr, E1, t1)


def test_oscillation_linear_paths():
    # L = 9: at speed 1 the inner band [3, 6] is entered at t=3 and the slab left at t=9
    slow = oscillation_stats(line(1.0, 40), E1, 9.0, 0, 2)
    assert (slow.N, slow.k, slow.h) == (1, 1, pytest.approx(9.0))
    fast = oscillation_stats(line(10.0, 4), E1, 9.0, 0, 2)
    assert (fast.N, fast.k, fast.h) == (0, 0, 0.0)


def test_oscillation_dwell_then_exit_up():
    tr = path1d([0, 1, 3, 4, 6], [0, 4, 5, 20, 20])
    st_ = oscillation_stats(tr, E1, 9.0, 0, 2)
    assert (st_.N, st_.k) == (1, 1)
    assert st_.h == pytest.approx(3 + 4 / 15)


def test_oscillation_counts_only_long_visits():
    # visit 1: enters at 0.75, leaves through 0 at 1.2 (short)
    # visit 2: enters again at 2.75, leaves through 9 at 4.46875 (long)
    tr = path1d([0, 1, 1.25, 2, 2.5, 3, 4, 5.5], [0, 4, -1, -1, 2, 4, 4, 20])
    s = oscillation_stats(tr, E1, 9.0, 0, 2)
    assert len(s.visits) == 2
    assert s.visits[0] == pytest.approx((0.75, 1.2))
    assert s.visits[1][0] == pytest.approx(2.75)
    assert (s.N, s.k) == (1, 2)
    assert s.h == pytest.approx(4 + 5 * 1.5 / 16)


def test_oscillation_never_reaching_far_level_is_infinite():
    s = oscillation_stats(path1d([0, 5, 100], [0, 4, 4]), E1, 9.0, 0, 2)
    assert s.h == math.inf and s.N == 0 and s.k == 0


def test_oscillation_fraction_extremes():
    assert oscillation_fraction(line(10.0, 30), E1, 9.0, 0, 2, 10) == 1.0
    assert oscillation_fraction(path1d([0, 20], [0, 1]), E1, 9.0, 10, 2, 10) == 0.0


def test_oscillation_rejects_bad_alpha():
    with pytest.raises(ValueError):
        oscillation_stats(line(1.0, 10), E1, 9.0, 0, 1)


@pytest.mark.parametrize("knots, expected", [
    # fast monotone run
    (([0, 10], [0, 100]), True),
    # at T_0 + 1 the level is 4 < 2L' = 6
    (([0, 1, 3], [0, 4, 100]), False),
    # above 2L' at T_0 + 1, then drops below 6 before reaching 18
    (([0, 1, 2, 3], [0, 8, 5, 100]), False),
    # above 2L', backs off to 7 but never below 6, then reaches 18
    (([0, 1, 2, 3], [0, 8, 7, 100]), True),
])
def test_event_Cm_truth_table(knots, expected):
    tr = path1d(*knots)
    assert event_Cm(tr, 0, 9.0, 3.0, 1, 10, 2) is expected


def test_event_Cm_position_cap():
    # K = 1: the level at T_0 + 1 must stay below L = 9
    tr = path1d([0, 1, 3], [0, 12, 100])
    assert event_Cm(tr, 0, 9.0, 3.0, 1, 1, 2) is False
    assert event_Cm(tr, 0, 9.0, 3.0, 1, 2, 2) is True


levels = st.lists(st.floats(-20, 20, allow_nan=False), min_size=3, max_size=12)


@settings(max_examples=60, deadline=None)
@given(levels, st.floats(-15, 15), st.floats(0, 10))
def test_hitting_time_monotone_in_level(ys, u, du):
    tr = path1d(list(range(len(ys))), ys)
    t1 = hitting_time(tr, E1, u, "abs_ge")
    t2 = hitting_time(tr, E1, u + du, "abs_ge")
    if t2 is not None:
        assert t1 is not None and t1 <= t2 + 1e-12


@settings(max_examples=60, deadline=None)
@given(levels, st.integers(0, 2))
def test_h_nondecreasing_in_alpha(ys, m):
    tr = path1d(list(range(len(ys) + 1)), [0.0] + [abs(v) * 2 for v in ys])
    hs = [oscillation_stats(tr, E1, 4.5, m, a).h for a in (2, 3, 4, 5)]
    assert all(a <= b for a, b in zip(hs, hs[1:]))


@settings(max_examples=40, deadline=None)
@given(levels)
def test_visit_count_bounded_by_time(ys):
    tr = path1d(list(range(len(ys) + 1)), [0.0] + [abs(v) * 2 for v in ys])
    L, alpha, M = 4.5, 2, 3
    lev_far = hitting_time(tr, E1, (M + alpha) * L, "abs_ge")
    assume(lev_far is not None)
    total = sum(oscillation_stats(tr, E1, L, m, alpha).N for m in range(M + 1))
    assert total <= lev_far + 1e-9


@settings(max_examples=40, deadline=None)
@given(levels)
def test_event_Cm_consistent_with_hitting_times(ys):
    tr = path1d(list(range(len(ys) + 1)), [0.0] + [v * 2 for v in ys])
    if event_Cm(tr, 0, 9.0, 3.0, 1, 10, 2):
        t_star = hitting_time(tr, E1, 0.0, "abs_ge") + 1
        rest = polyline_trajectory(*_tail(tr, t_star), DT)
        far = hitting_time(rest, E1, 18.0, "abs_ge")
        drop = hitting_time(rest, E1, 6.0, "abs_le")
        assert far is not None and (drop is None or drop > far)


def _tail(tr, t0):
    i = int(round(t0 / DT))
    pts = tr.points[i:]
    return np.arange(len(pts)) * DT, pts
