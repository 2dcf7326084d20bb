"""Accuracy metrics against labeled ground truth.

Detections and truth fingertips are matched greedily by distance, one to
one, within a match radius. Hit rate is correct detections over visible
truth; false-positive rate is unmatched detections over all detections;
hand precision counts a hand only when all of its matched detections landed
in one cluster that contains no other hand's detections. All rates are
exact rationals over the counters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from .tuio import read_event_log

DEFAULT_MATCH_RADIUS = 8.0


class EvaluationError(ValueError):
    pass


@dataclass
class Metrics:
    hit_rate: Fraction
    false_positive_rate: Fraction
    hand_precision: Fraction
    correct: int
    visible: int
    identified: int
    wrong: int
    hands_correct: int
    hands_visible: int

    def to_dict(self) -> dict:
        return {
            "hit_rate": float(self.hit_rate),
            "false_positive_rate": float(self.false_positive_rate),
            "hand_precision": float(self.hand_precision),
            "correct": self.correct,
            "visible": self.visible,
            "identified": self.identified,
            "wrong": self.wrong,
            "hands_correct": self.hands_correct,
            "hands_visible": self.hands_visible,
        }


def load_truth(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if not {"width", "height", "frames"} <= doc.keys():
        raise EvaluationError(f"{path}: not a ground-truth file")
    return doc


def _frame_detections(record: dict, width: int, height: int):
    """Cursor positions (pixels) and cluster membership from one log record."""
    positions = {}
    cluster_of = {}
    for msg in record["messages"]:
        args = msg["args"]
        if msg["addr"] == "/tuio/2Dcur" and args[0] == "set":
            sid = args[1]
            positions[sid] = (args[2] * width, args[3] * height)
        elif msg["addr"] == "/custom/_hand" and args[0] == "set":
            hand_sid = args[1]
            n = (len(args) - 7) // 2
            for sid in args[7 : 7 + n]:
                cluster_of[sid] = hand_sid
    return positions, cluster_of


def _greedy_match(truth_pts, det_pts, radius):
    """One-to-one nearest matching; returns {truth_index: detection_key}."""
    pairs = []
    for ti, tp in enumerate(truth_pts):
        for key, dp in det_pts.items():
            d = math.hypot(tp[0] - dp[0], tp[1] - dp[1])
            if d <= radius:
                pairs.append((d, ti, key))
    pairs.sort()
    matched_t: dict = {}
    used_d: set = set()
    for d, ti, key in pairs:
        if ti in matched_t or key in used_d:
            continue
        matched_t[ti] = key
        used_d.add(key)
    return matched_t


def evaluate(log_records: list, truth: dict, radius: float = DEFAULT_MATCH_RADIUS) -> Metrics:
    """Score an event log against its ground truth."""
    frames = truth["frames"]
    if len(log_records) != len(frames):
        raise EvaluationError(
            f"log has {len(log_records)} frames, truth has {len(frames)}"
        )
    width, height = truth["width"], truth["height"]

    correct = 0
    visible = 0
    identified = 0
    hands_correct = 0
    hands_visible = 0

    # a cursor keeps its position between set messages; carry state across frames
    carried: dict = {}
    for record, frame_truth in zip(log_records, frames):
        positions, cluster_of = _frame_detections(record, width, height)
        alive = set()
        for msg in record["messages"]:
            if msg["addr"] == "/tuio/2Dcur" and msg["args"][0] == "alive":
                alive = set(msg["args"][1:])
        carried = {sid: positions.get(sid, carried.get(sid)) for sid in alive}
        det = {sid: p for sid, p in carried.items() if p is not None}

        tips = frame_truth["fingertips"]
        truth_pts = [(t["x"], t["y"]) for t in tips]
        matched = _greedy_match(truth_pts, det, radius)

        visible += len(truth_pts)
        identified += len(det)
        correct += len(matched)

        by_hand: dict = {}
        for ti, tip in enumerate(tips):
            by_hand.setdefault(tip["hand"], []).append(ti)
        hands_visible += len(by_hand)
        # cluster of each matched detection, from the hand profile
        det_hand_cluster = {}
        for hand_id, tis in by_hand.items():
            det_hand_cluster[hand_id] = {
                cluster_of.get(matched[ti]) for ti in tis if ti in matched
            }
        for hand_id, tis in by_hand.items():
            clusters = det_hand_cluster[hand_id]
            if not clusters or None in clusters or len(clusters) > 1:
                continue
            cluster = next(iter(clusters))
            shared = any(
                other != hand_id and cluster in det_hand_cluster[other]
                for other in by_hand
            )
            if not shared:
                hands_correct += 1

    wrong = identified - correct
    return Metrics(
        hit_rate=Fraction(correct, visible) if visible else Fraction(0),
        false_positive_rate=Fraction(wrong, identified) if identified else Fraction(0),
        hand_precision=Fraction(hands_correct, hands_visible) if hands_visible else Fraction(0),
        correct=correct,
        visible=visible,
        identified=identified,
        wrong=wrong,
        hands_correct=hands_correct,
        hands_visible=hands_visible,
    )


def evaluate_files(log_path, truth_path, radius: float = DEFAULT_MATCH_RADIUS) -> Metrics:
    return evaluate(read_event_log(log_path), load_truth(truth_path), radius)
