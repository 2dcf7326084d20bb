"""Fingertip tracking across frames.

Positions are smoothed with double exponential smoothing, which predicts
linear motion one frame ahead at a fraction of a Kalman filter's cost.
Predictions are matched to the new detections greedily by distance, with
the candidate pair set pruned to pairs whose previous/current hand-cluster
bounding boxes intersect.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .image import Rect

DEFAULT_ALPHA = 0.5
DEFAULT_GATE = 60.0
DEFAULT_MISS_TOLERANCE = 2


@dataclass
class TrackingConfig:
    alpha: float = DEFAULT_ALPHA
    gate: float = DEFAULT_GATE
    miss_tolerance: int = DEFAULT_MISS_TOLERANCE

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly inside (0, 1)")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrackingConfig":
        return cls(**doc)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "gate": self.gate, "miss_tolerance": self.miss_tolerance}


@dataclass
class TrackState:
    """Double-exponential-smoothing state of one tracked fingertip."""

    track_id: int
    alpha: float
    s1: np.ndarray  # first smoothing statistic
    s2: np.ndarray  # second smoothing statistic
    last_observed: np.ndarray
    age: int = 0
    missed: int = 0
    cluster_bbox: Rect | None = None

    @classmethod
    def start(cls, track_id: int, position, alpha: float = DEFAULT_ALPHA) -> "TrackState":
        # until motion accrues, both statistics equal the first observation
        p = np.asarray(position, dtype=np.float64)
        return cls(track_id, alpha, p.copy(), p.copy(), p.copy())


def des_update(state: TrackState, position) -> TrackState:
    """Fold one observation into both smoothing statistics (in order)."""
    p = np.asarray(position, dtype=np.float64)
    state.s1 = state.alpha * p + (1.0 - state.alpha) * state.s1
    state.s2 = state.alpha * state.s1 + (1.0 - state.alpha) * state.s2
    state.last_observed = p.copy()
    state.age += 1
    return state


def des_predict(state: TrackState, lam: float) -> np.ndarray:
    """Predicted position lam frame intervals ahead of the last update."""
    if lam < 0:
        raise ValueError("prediction horizon must be >= 0")
    k = state.alpha * lam / (1.0 - state.alpha)
    return (2.0 + k) * state.s1 - (1.0 + k) * state.s2


@dataclass(frozen=True)
class TipObservation:
    """One confirmed fingertip of the current frame, as the matcher sees it."""

    tip_id: int
    position: tuple
    cluster_bbox: Rect | None = None


@dataclass
class MatchResult:
    pairs: list  # (track_id, tip_id), each id in at most one category
    births: list  # tip ids with no matching track
    deaths: list  # track ids left unmatched this frame


def match(tracks: list, tips: list, gate: float = DEFAULT_GATE) -> MatchResult:
    """Greedy minimum-distance assignment between predictions and detections.

    A pair is admissible if the track's previous-frame cluster bbox and the
    tip's current cluster bbox, each inflated by the gate radius, intersect
    (pairs lacking either bbox skip the test), and if the lambda=1 predicted
    position lies within the gate of the observation. Repeatedly commits the
    globally smallest (distance, track id, tip id) admissible pair.
    """
    omega = []
    for track in tracks:
        pred = des_predict(track, 1.0)
        for tip in tips:
            if track.cluster_bbox is not None and tip.cluster_bbox is not None:
                if not track.cluster_bbox.inflate(gate).intersects(
                    tip.cluster_bbox.inflate(gate)
                ):
                    continue
            d = float(np.hypot(pred[0] - tip.position[0], pred[1] - tip.position[1]))
            if d <= gate:
                omega.append((d, track.track_id, tip.tip_id))

    pairs = []
    used_tracks: set = set()
    used_tips: set = set()
    while omega:
        best = min(omega)
        d, track_id, tip_id = best
        pairs.append((track_id, tip_id))
        used_tracks.add(track_id)
        used_tips.add(tip_id)
        omega = [e for e in omega if e[1] != track_id and e[2] != tip_id]

    births = [t.tip_id for t in tips if t.tip_id not in used_tips]
    deaths = [t.track_id for t in tracks if t.track_id not in used_tracks]
    return MatchResult(pairs, births, deaths)


class Tracker:
    """Owns track lifecycles across frames; ids are never reused."""

    def __init__(self, cfg: TrackingConfig, first_id: int = 1):
        self.cfg = cfg
        self.tracks: dict[int, TrackState] = {}
        self._next_id = first_id

    def allocate_id(self) -> int:
        sid = self._next_id
        self._next_id += 1
        return sid

    def step(self, tips: list) -> dict:
        """Advance one frame; returns tip_id -> track_id for the matched set.

        Unmatched detections start new tracks; unmatched tracks coast for up
        to miss_tolerance frames before removal.
        """
        ordered = sorted(self.tracks.values(), key=lambda t: t.track_id)
        result = match(ordered, tips, self.cfg.gate)
        by_tip = {t.tip_id: t for t in tips}

        assigned = {}
        for track_id, tip_id in result.pairs:
            tip = by_tip[tip_id]
            track = self.tracks[track_id]
            des_update(track, tip.position)
            track.missed = 0
            track.cluster_bbox = tip.cluster_bbox
            assigned[tip_id] = track_id

        for tip_id in result.births:
            tip = by_tip[tip_id]
            track = TrackState.start(self.allocate_id(), tip.position, self.cfg.alpha)
            track.cluster_bbox = tip.cluster_bbox
            self.tracks[track.track_id] = track
            assigned[tip_id] = track.track_id

        for track_id in result.deaths:
            track = self.tracks[track_id]
            track.missed += 1
            if track.missed > self.cfg.miss_tolerance:
                del self.tracks[track_id]

        return assigned
