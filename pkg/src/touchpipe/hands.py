"""Hand distinction and registration.

Fingertips are grouped into hands by walking the component tree in postfix
order and, at each node, greedily merging child clusters under a
complete-link criterion whose allowed distance depends on the merged size.
Five-finger clusters are then registered: fingertips are ordered along the
hand contour by joining closest pairs, the thumb is the contour endpoint
farther from the centroid, and handedness follows the sign of a cross
product over the labeled finger vectors.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .fingertip import FingertipCandidate
from .image import Rect
from .mser import ComponentTree

DEFAULT_D_MAX = {2: 120.0, 3: 160.0, 4: 200.0, 5: 260.0}
MAX_CLUSTER_SIZE = 5


class Handedness(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class FingerName(enum.Enum):
    THUMB = "t"
    INDEX = "i"
    MIDDLE = "m"
    RING = "r"
    LITTLE = "l"

FINGER_ORDER = (
    FingerName.THUMB,
    FingerName.INDEX,
    FingerName.MIDDLE,
    FingerName.RING,
    FingerName.LITTLE,
)


class RegistrationError(ValueError):
    pass


class DuplicatePositions(RegistrationError):
    pass


class NonPathContour(RegistrationError):
    """The closest-pair spanning tree has a node of degree three or more."""


class AmbiguousThumb(RegistrationError):
    """Both contour endpoints are equally far from the centroid."""


class AmbiguousHandedness(RegistrationError):
    """The five fingertips are collinear; the cross product vanishes."""


@dataclass
class ClusterConfig:
    """Maximum complete-link distance allowed per merged cluster size."""

    d_max: dict = field(default_factory=lambda: dict(DEFAULT_D_MAX))

    def __post_init__(self):
        self.d_max = {int(k): float(v) for k, v in self.d_max.items()}
        if sorted(self.d_max) != [2, 3, 4, 5]:
            raise ValueError("d_max must define sizes 2..5")
        vals = [self.d_max[k] for k in (2, 3, 4, 5)]
        if any(a > b for a, b in zip(vals, vals[1:])):
            raise ValueError("d_max must be non-decreasing in cluster size")

    @classmethod
    def from_dict(cls, doc: dict) -> "ClusterConfig":
        return cls(d_max={int(k): v for k, v in doc.get("d_max", DEFAULT_D_MAX).items()})

    def to_dict(self) -> dict:
        return {"d_max": {str(k): v for k, v in sorted(self.d_max.items())}}


@dataclass
class HandRegistration:
    handedness: Handedness
    labels: dict  # candidate id -> FingerName, a bijection onto the five names
    contour: list  # candidate ids ordered thumb -> little


@dataclass
class HandCluster:
    members: list  # FingertipCandidate, ordered by id
    registration: HandRegistration | None = None
    registration_failure: str | None = None

    @property
    def bbox(self) -> Rect:
        return Rect.around_points([m.position for m in self.members])

    @property
    def signature(self) -> tuple:
        return tuple(m.id for m in self.members)


@dataclass(frozen=True)
class MergeRecord:
    """One accepted merge, for criterion replay in tests."""

    first: tuple
    second: tuple
    distance: float
    merged_size: int
    allowed: float


def _dist(a, b) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def complete_link(c1: HandCluster, c2: HandCluster) -> float:
    """Furthest-neighbor distance between two clusters."""
    return max(_dist(u.position, v.position) for u in c1.members for v in c2.members)


def _merge_pass(clusters: list, cfg: ClusterConfig, log: list) -> list:
    """Greedy complete-link merging until no pair satisfies the criterion.

    Ties on distance break on the lexicographically smallest pair of member
    id signatures, so results do not depend on input order.
    """
    clusters = sorted(clusters, key=lambda c: c.signature)
    while len(clusters) > 1:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                k = len(clusters[i].members) + len(clusters[j].members)
                if k > MAX_CLUSTER_SIZE:
                    continue
                d = complete_link(clusters[i], clusters[j])
                if d > cfg.d_max[k]:
                    continue
                s1, s2 = sorted((clusters[i].signature, clusters[j].signature))
                key = (d, s1, s2)
                if best is None or key < best[0]:
                    best = (key, i, j)
        if best is None:
            break
        (d, s1, s2), i, j = best
        merged = HandCluster(
            sorted(clusters[i].members + clusters[j].members, key=lambda m: m.id)
        )
        log.append(
            MergeRecord(s1, s2, d, len(merged.members), cfg.d_max[len(merged.members)])
        )
        clusters = [c for k_, c in enumerate(clusters) if k_ not in (i, j)]
        clusters.append(merged)
        clusters.sort(key=lambda c: c.signature)
    return clusters


def cluster_fingertips(
    tree: ComponentTree,
    fingertips: list,
    cfg: ClusterConfig,
    merge_log: list | None = None,
) -> list[HandCluster]:
    """Group fingertip candidates of one tree into per-hand clusters.

    Walks the tree bottom-up; every candidate leaf opens a singleton cluster
    and clusters meet (and may merge) at their common ancestors. Only nodes
    on candidate-to-root paths matter, so the walk is restricted to them;
    at chain nodes the cluster set is unchanged and re-merging is a no-op.
    """
    log = merge_log if merge_log is not None else []
    if not fingertips:
        return []
    by_leaf: dict[int, list] = {}
    for f in fingertips:
        by_leaf.setdefault(f.leaf.index, []).append(f)

    marked: set[int] = set()
    for leaf_idx in by_leaf:
        node = leaf_idx
        while node >= 0 and node not in marked:
            marked.add(node)
            node = int(tree.parents[node])

    pending: dict[int, list] = {}
    for node in sorted(marked):  # node ids are child-before-parent
        clusters = pending.pop(node, [])
        for f in by_leaf.get(node, []):
            clusters.append(HandCluster([f]))
        clusters = _merge_pass(clusters, cfg, log)
        parent = int(tree.parents[node])
        if parent < 0:
            return clusters
        pending.setdefault(parent, []).extend(clusters)
    raise AssertionError("tree has no root on a candidate path")


def order_contour(positions: list) -> list[int]:
    """Order five fingertips along the hand contour.

    Joins index pairs by increasing distance, skipping pairs already
    connected, until four edges exist; the resulting spanning tree must be a
    path, whose endpoints are the thumb and the little finger.
    """
    if len(positions) != 5:
        raise ValueError(f"contour ordering needs exactly 5 fingertips, got {len(positions)}")
    for i in range(5):
        for j in range(i + 1, 5):
            if positions[i] == positions[j]:
                raise DuplicatePositions(f"fingertips {i} and {j} coincide")

    pairs = sorted(
        ((_dist(positions[i], positions[j]), i, j) for i in range(5) for j in range(i + 1, 5))
    )
    label = list(range(5))
    edges = []
    for d, i, j in pairs:
        if label[i] != label[j]:
            old, new = label[j], label[i]
            for k in range(5):
                if label[k] == old:
                    label[k] = new
            edges.append((i, j))
            if len(edges) == 4:
                break

    degree = [0] * 5
    adj: dict[int, list] = {i: [] for i in range(5)}
    for i, j in edges:
        degree[i] += 1
        degree[j] += 1
        adj[i].append(j)
        adj[j].append(i)
    if max(degree) > 2:
        raise NonPathContour("closest-pair spanning tree is not a path")

    start = min(i for i in range(5) if degree[i] == 1)
    path = [start]
    prev = -1
    while len(path) < 5:
        nxt = [k for k in adj[path[-1]] if k != prev]
        prev = path[-1]
        path.append(nxt[0])
    return path


def identify_thumb(path: list[int], positions: list) -> list[int]:
    """Orient the contour to start at the thumb.

    The thumb is the endpoint farther from the centroid of all five
    fingertips; an exact tie is refused rather than guessed.
    """
    cx = sum(p[0] for p in positions) / 5.0
    cy = sum(p[1] for p in positions) / 5.0
    d_first = _dist(positions[path[0]], (cx, cy))
    d_last = _dist(positions[path[-1]], (cx, cy))
    if d_first == d_last:
        raise AmbiguousThumb("contour endpoints are equidistant from the centroid")
    return list(path) if d_first > d_last else list(reversed(path))


def classify_handedness(positions_by_finger: dict) -> Handedness:
    """Left/right from the cross product of the thumb->little vector with the
    summed thumb->index/middle/ring vector, in image coordinates (y down).

    The sign convention is pinned by the synthetic-hand oracle: a physical
    right hand, palm down, imaged from below the surface, yields RIGHT.
    """
    t = positions_by_finger[FingerName.THUMB]
    v1x = positions_by_finger[FingerName.LITTLE][0] - t[0]
    v1y = positions_by_finger[FingerName.LITTLE][1] - t[1]
    v2x = 0.0
    v2y = 0.0
    for name in (FingerName.INDEX, FingerName.MIDDLE, FingerName.RING):
        v2x += positions_by_finger[name][0] - t[0]
        v2y += positions_by_finger[name][1] - t[1]
    z = v1x * v2y - v1y * v2x
    if z == 0:
        raise AmbiguousHandedness("fingertips are collinear")
    return Handedness.LEFT if z < 0 else Handedness.RIGHT


def register(cluster: HandCluster) -> HandRegistration | None:
    """Attempt full registration of a five-member cluster.

    Anything other than five members, or any geometric ambiguity, leaves the
    cluster unregistered (with the reason recorded) instead of guessing.
    """
    if len(cluster.members) != MAX_CLUSTER_SIZE:
        return None
    positions = [m.position for m in cluster.members]
    try:
        path = order_contour(positions)
        path = identify_thumb(path, positions)
        labels = {
            cluster.members[idx].id: FINGER_ORDER[k] for k, idx in enumerate(path)
        }
        by_finger = {
            FINGER_ORDER[k]: positions[idx] for k, idx in enumerate(path)
        }
        handedness = classify_handedness(by_finger)
    except RegistrationError as exc:
        cluster.registration_failure = f"{type(exc).__name__}: {exc}"
        return None
    reg = HandRegistration(
        handedness=handedness,
        labels=labels,
        contour=[cluster.members[idx].id for idx in path],
    )
    cluster.registration = reg
    return reg
