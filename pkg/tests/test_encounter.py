import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regenlab.encounter import (EncounterConfig, clip_segments, encounter_probability,
                                pair_encounter, segment_distances, write_encounter_csv)
from regenlab.environment import EnvironmentSpec
from regenlab.sde import polyline_trajectory

E1 = np.array([1.0, 0.0])
L = 8.0


def seg_brute(p0, p1, q0, q1, m=401):
    s = np.linspace(0, 1, m)
    P = p0 + s[:, None] * (p1 - p0)
    Q = q0 + s[:, None] * (q1 - q0)
    return np.sqrt(((P[:, None, :] - Q[None, :, :]) ** 2).sum(-1)).min()


def test_segment_distance_known_cases():
    p0, p1 = np.array([[0.0, 0.0]]), np.array([[2.0, 0.0]])
    cases = [
        (([1.0, 1.0], [1.0, 3.0]), 1.0),     # perpendicular, above the middle
        (([3.0, 0.0], [5.0, 0.0]), 1.0),     # collinear, disjoint
        (([0.0, 2.0], [2.0, 2.0]), 2.0),     # parallel
        (([1.0, -1.0], [1.0, 1.0]), 0.0),    # crossing
        (([4.0, 3.0], [4.0, 3.0]), math.hypot(2, 3)),  # degenerate second segment
    ]
    for (q0, q1), expected in cases:
        d = segment_distances(p0, p1, np.array([q0]), np.array([q1]))[0]
        assert d == pytest.approx(expected, abs=1e-12)


pts = st.tuples(st.floats(-5, 5), st.floats(-5, 5))


@settings(max_examples=200)
@given(pts, pts, pts, pts)
def test_segment_distance_matches_dense_sampling(a, b, c, d):
    p0, p1, q0, q1 = map(np.array, (a, b, c, d))
    got = segment_distances(p0[None], p1[None], q0[None], q1[None])[0]
    ref = seg_brute(p0, p1, q0, q1)
    span = max(np.linalg.norm(p1 - p0), np.linalg.norm(q1 - q0))
    # sampling only over-estimates the true minimum, by at most half a sample spacing
    assert got <= ref + 1e-9
    assert got >= ref - span / 400 - 1e-9


def test_clip_segments_to_window():
    pts_ = np.array([[0.0, 0.0], [10.0, 0.0], [30.0, 0.0]])
    a, b = clip_segments(pts_, E1, 8.0, 16.0)
    np.testing.assert_allclose(a, [[8.0, 0.0], [10.0, 0.0]])
    np.testing.assert_allclose(b, [[10.0, 0.0], [16.0, 0.0]])


def paths(offset, horizon=40):
    x = polyline_trajectory([0, horizon], [[0, 0], [horizon, 0]], 1 / 16)
    y = polyline_trajectory([0, horizon], [[3 * L, offset], [3 * L - horizon, offset]], 1 / 16)
    return x, y


def test_crossing_lines_meet():
    x, y = paths(0.0)
    assert pair_encounter(x, y, E1, L, 3 * L, 1.0)


def test_far_parallel_lines_do_not_meet():
    x, y = paths(10.0)
    assert not pair_encounter(x, y, E1, L, 3 * L, 1.0)


def test_zigzags_at_distance_1_9R():
    # x zig-zags between y=0 and y=-1, y between 2.9 and 4; closest vertices 1.9 apart at l-level 12
    x = polyline_trajectory([0, 6, 12, 18, 24], [[0, -1], [6, 0], [12, 1.0], [18, 0], [24, -1]], 1 / 16)
    y = polyline_trajectory([0, 6, 12, 18, 24], [[24, 4], [18, 3.5], [12, 2.9], [6, 3.5], [0, 4]], 1 / 16)
    assert seg_brute(np.array([6.0, 0]), np.array([12.0, 1.0]), np.array([18.0, 3.5]),
                     np.array([12.0, 2.9])) == pytest.approx(1.9, abs=1e-9)
    assert pair_encounter(x, y, E1, L, 3 * L, 1.0)
    assert not pair_encounter(x, y, E1, L, 3 * L, 0.94)


def test_meeting_outside_window_is_ignored():
    # closest approach happens at l-level 4 < L
    x = polyline_trajectory([0, 30], [[0, 0], [30, 0]], 1 / 16)
    y = polyline_trajectory([0, 18, 20, 30], [[24, 10], [6, 10], [4, 0.5], [4, 0.5]], 1 / 16)
    assert not pair_encounter(x, y, E1, L, 3 * L, 1.0)
    assert pair_encounter(x, y, E1, 2.0, 3 * L, 1.0)


def random_walk(seed, start, n=120):
    rng = np.random.default_rng(seed)
    steps = rng.normal(size=(n, 2)) + [0.3, 0.0]
    p = np.vstack([start, start + np.cumsum(steps, axis=0)])
    return polyline_trajectory(np.arange(n + 1), p, 1 / 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.2, 3.0), st.tuples(st.floats(-50, 50), st.floats(-50, 50)))
def test_encounter_properties(seed, R, shift):
    x = random_walk(seed, np.array([0.0, 0.0]))
    y = random_walk(seed + 1, np.array([3 * L, 0.0]))
    hit = pair_encounter(x, y, E1, L, 3 * L, R)
    assert pair_encounter(y, x, E1, L, 3 * L, R) == hit
    if hit:
        assert pair_encounter(x, y, E1, L, 3 * L, R * 1.5)
    v = np.array(shift)
    dl = float(v @ E1)
    assert pair_encounter(x.points + v, y.points + v, E1, L + dl, 3 * L + 2 * dl, R) == hit


def test_broad_phase_agrees_with_brute_force():
    from regenlab.encounter import clip_segments as clip
    for seed in range(30):
        x = random_walk(seed, np.array([0.0, 0.0]), 60)
        y = random_walk(seed + 100, np.array([3 * L, 2.0]), 60)
        pa, pb = clip(x.points, E1, L, 2 * L)
        qa, qb = clip(y.points, E1, L, 2 * L)
        if len(pa) and len(qa):
            i, j = np.meshgrid(np.arange(len(pa)), np.arange(len(qa)), indexing="ij")
            i, j = i.ravel(), j.ravel()
            brute = bool(np.any(segment_distances(pa[i], pb[i], qa[j], qb[j]) < 2.0))
        else:
            brute = False
        assert pair_encounter(x, y, E1, L, 3 * L, 1.0) == brute


def test_config_validation():
    with pytest.raises(ValueError):
        EncounterConfig(3.0, (9.0, 0.0), 10, 10, 10).validate(E1, 1.0)
    with pytest.raises(ValueError):
        EncounterConfig(8.0, (20.0, 0.0), 10, 10, 10).validate(E1, 1.0)
    with pytest.raises(ValueError):
        encounter_probability(EnvironmentSpec(), EncounterConfig(8.0, (24.0, 0.0), 0, 10, 10))


def test_strong_drift_rarely_meets(tmp_path):
    spec = EnvironmentSpec(mode="constant", drift_mean=(3.0, 0.0))
    row = encounter_probability(spec, EncounterConfig(8.0, (24.0, 0.0), 100, 20, 20), seed=1)
    assert row["gamma"] <= 0.05 and row["n"] == 100
    assert row["ci_low"] <= row["gamma"] <= row["ci_high"]
    out = tmp_path / "enc.csv"
    write_encounter_csv([row], out)
    assert out.read_text().splitlines()[0] == "L,y_L,n,encounters,gamma,ci_low,ci_high"


def test_encounter_deterministic_across_threads():
    spec = EnvironmentSpec(coefficient_bound=20.0, drift_mean=(0.1, 0.0), drift_amplitude=0.4,
                           diffusion_amplitude=0.2)
    cfg = EncounterConfig(8.0, (24.0, 0.0), 20, 60, 60)
    assert encounter_probability(spec, cfg, threads=1) == encounter_probability(spec, cfg, threads=4)
