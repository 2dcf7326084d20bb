"""Fingertip detection on component-tree leaves.

Only leaves can be fingertip candidates: a touching fingertip is the
brightest spot of its finger. Each candidate gets an 8-slot feature vector
built from its leaf, the enclosing sibling-free "finger" region and the
image neighborhood, scored by a weighted sum and classified against two
confidence thresholds. Confirmation additionally requires a 3-frame
history: at least one high-confidence frame and no no-confidence frame.
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .descriptors import bounding_ellipse, hu_invariants, normalized_moments, central_moments
from .image import Image
from .mser import ComponentTree, ExtremalRegion

FEATURE_NAMES = (
    "candidate_ellipse_area",
    "finger_ellipse_area",
    "chain_depth",
    "max_link_growth",
    "finger_growth",
    "intensity_range_ratio",
    "max_phi1_below_finger",
    "dark_pixel_count",
)


class Confidence(enum.IntEnum):
    NO = 0
    LOW = 1
    HIGH = 2


@dataclass
class DetectorConfig:
    """Weights, thresholds and window parameters of the candidate scorer.

    Defaults were tuned once against the bundled synthetic corpus (see
    tools/tune_detector.py) and are committed in default-config.json.
    """

    weights: tuple = (-0.002, -0.0002, 0.06, 0.02, 0.003, -0.25, 40.0, 0.004)
    t_low: float = 0.9
    t_high: float = 1.4
    max_finger_size: int = 1200
    dark_radius: int = 12
    dark_fraction: float = 0.10
    match_radius: float = 15.0  # candidate association distance between frames

    def __post_init__(self):
        self.weights = tuple(float(w) for w in self.weights)
        if len(self.weights) != 8:
            raise ValueError(f"expected 8 feature weights, got {len(self.weights)}")
        if not all(np.isfinite(self.weights)):
            raise ValueError("feature weights must be finite")
        if not self.t_low < self.t_high:
            raise ValueError("confidence thresholds must satisfy t_low < t_high")

    @classmethod
    def from_dict(cls, doc: dict) -> "DetectorConfig":
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "DetectorConfig":
        return cls.from_dict(json.loads(Path(path).read_text())["detector"])

    def to_dict(self) -> dict:
        return {
            "weights": list(self.weights),
            "t_low": self.t_low,
            "t_high": self.t_high,
            "max_finger_size": self.max_finger_size,
            "dark_radius": self.dark_radius,
            "dark_fraction": self.dark_fraction,
            "match_radius": self.match_radius,
        }


@dataclass
class FingertipCandidate:
    """A scored tree leaf."""

    id: int
    leaf: ExtremalRegion
    finger: ExtremalRegion
    features: np.ndarray
    confidence: float
    confidence_class: Confidence
    position: tuple[float, float]  # leaf centroid in surface pixels


class CandidateHistory:
    """Trailing confidence classes of one candidate across frames."""

    __slots__ = ("classes", "confirmed", "position")

    def __init__(self, position):
        self.classes = deque(maxlen=3)
        self.confirmed = False
        self.position = position


def temporal_update(history: CandidateHistory, cls: Confidence) -> bool:
    """Record this frame's class; confirmed needs a full window with >= 1
    high-confidence entry and no no-confidence entry."""
    history.classes.append(cls)
    history.confirmed = (
        len(history.classes) == 3
        and Confidence.HIGH in history.classes
        and Confidence.NO not in history.classes
    )
    return history.confirmed


def find_finger_region(
    tree: ComponentTree, leaf: ExtremalRegion, max_finger_size: int
) -> ExtremalRegion:
    """Largest ancestor that contains only this leaf and stays under the cap."""
    leaf_count = tree.aggregates[1]
    finger = leaf.index
    p = int(tree.parents[finger])
    while p >= 0 and tree.sizes[p] <= max_finger_size and leaf_count[p] == 1:
        finger = p
        p = int(tree.parents[finger])
    return tree.node(finger)


def _phi1(region: ExtremalRegion) -> float:
    nu = normalized_moments(central_moments(region.accumulator))
    return hu_invariants(nu)[0]


def compute_features(
    tree: ComponentTree, img: Image, leaf: ExtremalRegion, cfg: DetectorConfig
) -> np.ndarray:
    """Reference (single-candidate) feature computation; see FEATURE_NAMES.

    The pipeline uses the batched kernel, which must agree with this.
    """
    finger = find_finger_region(tree, leaf, cfg.max_finger_size)
    ell_l = bounding_ellipse(leaf.accumulator)
    ell_f = bounding_ellipse(finger.accumulator)

    depth = 0
    max_growth = 0.0
    max_phi1 = _phi1(leaf)
    node = leaf
    while node.index != finger.index:
        parent = node.parent
        depth += 1
        max_growth = max(max_growth, (parent.size - node.size) / node.size)
        if node.index != leaf.index:
            max_phi1 = max(max_phi1, _phi1(node))
        node = parent

    min_level_sub = tree.aggregates[2]
    span_l = leaf.inverted_level - int(min_level_sub[leaf.index]) + 1
    span_f = finger.inverted_level - int(min_level_sub[finger.index]) + 1

    cx, cy = leaf.accumulator.centroid
    mean = leaf.accumulator.s1 / leaf.accumulator.n
    limit = cfg.dark_fraction * mean
    icx, icy = int(cx + 0.5), int(cy + 0.5)
    xa = max(icx - cfg.dark_radius, 0)
    xb = min(icx + cfg.dark_radius, img.width - 1)
    ya = max(icy - cfg.dark_radius, 0)
    yb = min(icy + cfg.dark_radius, img.height - 1)
    window = img.pixels[ya : yb + 1, xa : xb + 1]
    dark = int((window < limit).sum())

    return np.array(
        [
            ell_l.w * ell_l.h,
            ell_f.w * ell_f.h,
            float(depth),
            max_growth,
            (finger.size - leaf.size) / leaf.size,
            span_l / span_f,
            max_phi1,
            float(dark),
        ]
    )


def score(features, cfg: DetectorConfig) -> float:
    """Confidence score: weighted sum over the 8 feature slots."""
    return float(np.dot(np.asarray(features, dtype=np.float64), cfg.weights))


def classify(confidence: float, cfg: DetectorConfig) -> Confidence:
    """Thresholds are lower-inclusive: a score equal to t_high is HIGH."""
    if confidence >= cfg.t_high:
        return Confidence.HIGH
    if confidence >= cfg.t_low:
        return Confidence.LOW
    return Confidence.NO


def evaluate_tree(
    tree: ComponentTree, img: Image, cfg: DetectorConfig, first_id: int = 0
) -> list[FingertipCandidate]:
    """Score every leaf of a tree in one batched kernel call.

    Candidates are ordered (and numbered from first_id) by leaf node id,
    which is deterministic for a given frame.
    """
    leaves = tree.leaf_indices
    if leaves.size == 0:
        return []
    _, leaf_count, min_level_sub, phi1 = tree.aggregates
    feats, fingers, scores, positions = _kernels.candidate_features(
        tree.inverted_levels,
        tree.sizes,
        tree.parents,
        tree.accs,
        leaves,
        leaf_count,
        min_level_sub,
        phi1,
        img.pixels,
        tree.origin[0],
        tree.origin[1],
        cfg.max_finger_size,
        cfg.dark_radius,
        cfg.dark_fraction,
        np.asarray(cfg.weights, dtype=np.float64),
    )
    out = []
    for k, leaf_idx in enumerate(leaves):
        conf = float(scores[k])
        out.append(
            FingertipCandidate(
                id=first_id + k,
                leaf=tree.node(int(leaf_idx)),
                finger=tree.node(int(fingers[k])),
                features=feats[k],
                confidence=conf,
                confidence_class=classify(conf, cfg),
                position=(float(positions[k, 0]), float(positions[k, 1])),
            )
        )
    return out
