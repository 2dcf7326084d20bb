import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import greedy_match_oracle
from touchpipe.image import Rect
from touchpipe.tracking import (
    MatchResult,
    TipObservation,
    Tracker,
    TrackingConfig,
    TrackState,
    des_predict,
    des_update,
    match,
)


class TestDesUpdate:
    def test_constant_input_fixed_point(self):
        s = TrackState.start(1, (4.0, 9.0))
        des_update(s, (4.0, 9.0))
        assert s.s1 == pytest.approx([4.0, 9.0])
        assert s.s2 == pytest.approx([4.0, 9.0])

    def test_single_step_arithmetic(self):
        s = TrackState.start(1, (0.0, 0.0), alpha=0.5)
        s.s1[:] = 0
        s.s2[:] = 0
        des_update(s, (10.0, 0.0))
        assert s.s1 == pytest.approx([5.0, 0.0])
        assert s.s2 == pytest.approx([2.5, 0.0])

    def test_linear_motion_lag_offsets(self):
        # steady state on p_t = v * t: s1 -> p - (1-a)/a v, s2 -> p - 2 (1-a)/a v
        alpha = 0.5
        v = np.array([3.0, 4.0])
        s = TrackState.start(1, (0.0, 0.0), alpha=alpha)
        for t in range(1, 101):
            des_update(s, v * t)
        p = v * 100
        lag = (1 - alpha) / alpha
        assert s.s1 == pytest.approx(p - lag * v, abs=1e-6)
        assert s.s2 == pytest.approx(p - 2 * lag * v, abs=1e-6)

    def test_axes_evolve_independently(self, rng):
        sx = TrackState.start(1, (1.0, 0.0), alpha=0.3)
        sy = TrackState.start(2, (0.0, 1.0), alpha=0.3)
        both = TrackState.start(3, (1.0, 1.0), alpha=0.3)
        for _ in range(20):
            p = rng.uniform(-5, 5, 2)
            des_update(sx, (p[0], 0.0))
            des_update(sy, (0.0, p[1]))
            des_update(both, p)
        assert both.s1 == pytest.approx([sx.s1[0], sy.s1[1]])
        assert both.s2 == pytest.approx([sx.s2[0], sy.s2[1]])


class TestDesPredict:
    def test_fixed_point_predicts_itself(self):
        s = TrackState.start(1, (7.0, 2.0))
        for lam in (0, 1, 5, 20):
            assert des_predict(s, lam) == pytest.approx([7.0, 2.0])

    def test_lambda_zero_formula(self):
        s = TrackState.start(1, (0.0, 0.0), alpha=0.4)
        s.s1 = np.array([10.0, 4.0])
        s.s2 = np.array([6.0, 2.0])
        assert des_predict(s, 0) == pytest.approx(2 * s.s1 - s.s2)

    def test_converged_linear_motion_prediction(self):
        alpha = 0.5
        v = np.array([1.5, -2.0])
        s = TrackState.start(1, (0.0, 0.0), alpha=alpha)
        for t in range(1, 201):
            des_update(s, v * t)
        pred = des_predict(s, 1)
        assert pred == pytest.approx(v * 201, abs=1e-6)

    def test_alpha_bounds_enforced(self):
        with pytest.raises(ValueError):
            TrackingConfig(alpha=1.0)
        with pytest.raises(ValueError):
            TrackingConfig(alpha=0.0)

    def test_negative_horizon_rejected(self):
        s = TrackState.start(1, (0.0, 0.0))
        with pytest.raises(ValueError):
            des_predict(s, -1)


def static_track(tid, pos, bbox=None):
    t = TrackState.start(tid, pos)
    t.cluster_bbox = bbox
    return t


class TestMatch:
    def test_simple_pairing(self):
        tracks = [static_track(1, (100.0, 100.0))]
        tips = [TipObservation(0, (101.0, 100.0))]
        result = match(tracks, tips, gate=60.0)
        assert result.pairs == [(1, 0)]
        assert result.births == [] and result.deaths == []

    def test_birth_outside_gate(self):
        tracks = [static_track(1, (0.0, 0.0))]
        tips = [TipObservation(0, (500.0, 0.0))]
        result = match(tracks, tips, gate=60.0)
        assert result.births == [0]
        assert result.deaths == [1]

    def test_crossing_pattern_greedy(self):
        tracks = [static_track(1, (0.0, 0.0)), static_track(2, (10.0, 0.0))]
        tips = [TipObservation(0, (1.0, 0.0)), TipObservation(1, (9.0, 0.0))]
        result = match(tracks, tips, gate=60.0)
        assert sorted(result.pairs) == [(1, 0), (2, 1)]

    def test_matches_brute_force_oracle(self):
        # exhaustive comparison on random point sets with n <= 8
        rng = np.random.default_rng(5)
        for _ in range(1000):
            n_t = int(rng.integers(0, 9))
            n_o = int(rng.integers(0, 9))
            tracks = [
                static_track(i + 1, tuple(rng.uniform(0, 200, 2))) for i in range(n_t)
            ]
            tips = [
                TipObservation(j, tuple(rng.uniform(0, 200, 2))) for j in range(n_o)
            ]
            gate = float(rng.uniform(20, 150))
            ours = sorted(match(tracks, tips, gate).pairs)
            oracle = greedy_match_oracle(
                {t.track_id: tuple(des_predict(t, 1.0)) for t in tracks},
                {o.tip_id: o.position for o in tips},
                gate,
            )
            assert ours == oracle

    def test_injective_both_ways(self, rng):
        tracks = [static_track(i + 1, tuple(rng.uniform(0, 50, 2))) for i in range(6)]
        tips = [TipObservation(j, tuple(rng.uniform(0, 50, 2))) for j in range(6)]
        result = match(tracks, tips, gate=100.0)
        t_ids = [p[0] for p in result.pairs]
        o_ids = [p[1] for p in result.pairs]
        assert len(set(t_ids)) == len(t_ids)
        assert len(set(o_ids)) == len(o_ids)

    def test_bbox_gate_prunes(self):
        far_bbox = Rect(500.0, 500.0, 520.0, 520.0)
        near_bbox = Rect(0.0, 0.0, 20.0, 20.0)
        tracks = [static_track(1, (10.0, 10.0), far_bbox)]
        tips = [TipObservation(0, (10.0, 10.0), near_bbox)]
        assert match(tracks, tips, gate=60.0).pairs == []
        # same geometry without bboxes: matches
        tracks[0].cluster_bbox = None
        assert match(tracks, tips, gate=60.0).pairs == [(1, 0)]

    def test_gate_inflation_lets_slow_neighbors_match(self):
        a = Rect(0.0, 0.0, 10.0, 10.0)
        b = Rect(40.0, 0.0, 50.0, 10.0)  # disjoint, within one gate radius
        tracks = [static_track(1, (5.0, 5.0), a)]
        tips = [TipObservation(0, (8.0, 5.0), b)]
        assert match(tracks, tips, gate=60.0).pairs == [(1, 0)]

    def test_gating_is_pure_pruning_when_everything_intersects(self, rng):
        big = Rect(0.0, 0.0, 400.0, 400.0)
        for _ in range(50):
            tracks = [
                static_track(i + 1, tuple(rng.uniform(0, 200, 2)), big) for i in range(5)
            ]
            tips = [
                TipObservation(j, tuple(rng.uniform(0, 200, 2)), big) for j in range(5)
            ]
            gated = sorted(match(tracks, tips, gate=80.0).pairs)
            for t in tracks:
                t.cluster_bbox = None
            ungated = sorted(match(tracks, tips, gate=80.0).pairs)
            assert gated == ungated

    @given(seed=st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_deterministic_under_shuffling(self, seed):
        rng = np.random.default_rng(seed)
        tracks = [static_track(i + 1, tuple(rng.uniform(0, 100, 2))) for i in range(5)]
        tips = [TipObservation(j, tuple(rng.uniform(0, 100, 2))) for j in range(5)]
        base = match(tracks, tips, gate=70.0).pairs
        order = rng.permutation(5)
        shuffled = match(
            [tracks[i] for i in order], [tips[i] for i in rng.permutation(5)], gate=70.0
        ).pairs
        assert sorted(base) == sorted(shuffled)


class TestTracker:
    def test_ids_never_reused(self):
        tracker = Tracker(TrackingConfig(miss_tolerance=0))
        a = tracker.step([TipObservation(0, (10.0, 10.0))])
        assert a == {0: 1}
        # miss the track until removal, then a new detection gets a new id
        tracker.step([])
        b = tracker.step([TipObservation(0, (10.0, 10.0))])
        assert b == {0: 2}

    def test_miss_tolerance_keeps_tracks(self):
        tracker = Tracker(TrackingConfig(miss_tolerance=2))
        tracker.step([TipObservation(0, (10.0, 10.0))])
        tracker.step([])
        tracker.step([])
        assert 1 in tracker.tracks  # survived two missed frames
        assigned = tracker.step([TipObservation(0, (12.0, 10.0))])
        assert assigned == {0: 1}
        tracker.step([])
        tracker.step([])
        tracker.step([])
        assert not tracker.tracks

    def test_continuous_motion_keeps_identity(self):
        tracker = Tracker(TrackingConfig())
        for t in range(30):
            assigned = tracker.step([TipObservation(0, (10.0 + 3 * t, 20.0))])
            assert assigned == {0: 1}
