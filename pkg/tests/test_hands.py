import math

import numpy as np
import pytest

from oracles import complete_link_clustering
from touchpipe.fingertip import Confidence, DetectorConfig, evaluate_tree
from touchpipe.hands import (
    AmbiguousHandedness,
    AmbiguousThumb,
    ClusterConfig,
    DuplicatePositions,
    FingerName,
    HandCluster,
    Handedness,
    NonPathContour,
    classify_handedness,
    cluster_fingertips,
    identify_thumb,
    order_contour,
    register,
)
from touchpipe.image import Image
from touchpipe.mser import build_tree
from touchpipe.roi import detect_rois
from touchpipe.synth import hand_layout, jittered_hand_layout


class FakeLeaf:
    def __init__(self, index):
        self.index = index


class FakeCandidate:
    """Minimal stand-in carrying just what clustering needs."""

    def __init__(self, cid, leaf_index, position):
        self.id = cid
        self.leaf = FakeLeaf(leaf_index)
        self.position = position


class FlatTree:
    """Root node 0... wait: ids are child-before-parent, so root is last."""

    def __init__(self, n_leaves):
        # leaves 0..n-1, root n
        self.parents = np.array([n_leaves] * n_leaves + [-1], dtype=np.int32)

    def children_of(self, index):
        return [i for i, p in enumerate(self.parents) if p == index]


def flat_candidates(points):
    return [FakeCandidate(i, i, tuple(p)) for i, p in enumerate(points)]


DEFAULT = ClusterConfig()


class TestClusterConfig:
    def test_non_decreasing_required(self):
        with pytest.raises(ValueError):
            ClusterConfig(d_max={2: 200, 3: 160, 4: 200, 5: 260})

    def test_all_sizes_required(self):
        with pytest.raises(ValueError):
            ClusterConfig(d_max={2: 100, 3: 120})


class TestClusterFingertips:
    def test_single_fingertip_singleton(self):
        tree = FlatTree(1)
        clusters = cluster_fingertips(tree, flat_candidates([(10.0, 10.0)]), DEFAULT)
        assert len(clusters) == 1
        assert clusters[0].signature == (0,)

    def test_five_in_arc_form_one_cluster(self):
        pts = [
            (100 + 75 * math.cos(a), 100 + 75 * math.sin(a))
            for a in np.linspace(0.2, 2.2, 5)
        ]
        tree = FlatTree(5)
        clusters = cluster_fingertips(tree, flat_candidates(pts), DEFAULT)
        assert len(clusters) == 1
        assert len(clusters[0].members) == 5

    def test_two_distant_groups_never_merge(self):
        near = [(50.0 + 10 * k, 60.0) for k in range(5)]
        far = [(950.0 + 10 * k, 60.0) for k in range(5)]
        tree = FlatTree(10)
        clusters = cluster_fingertips(tree, flat_candidates(near + far), DEFAULT)
        assert sorted(len(c.members) for c in clusters) == [5, 5]

    def test_size_cap_at_five(self):
        pts = [(100.0 + 8 * k, 100.0) for k in range(12)]
        tree = FlatTree(12)
        clusters = cluster_fingertips(tree, flat_candidates(pts), DEFAULT)
        assert max(len(c.members) for c in clusters) <= 5
        assert sum(len(c.members) for c in clusters) == 12

    def test_partition_property(self, rng):
        for _ in range(20):
            n = int(rng.integers(1, 14))
            pts = [tuple(p) for p in rng.uniform(0, 500, (n, 2))]
            tree = FlatTree(n)
            clusters = cluster_fingertips(tree, flat_candidates(pts), DEFAULT)
            ids = sorted(m.id for c in clusters for m in c.members)
            assert ids == list(range(n))

    def test_flat_tree_equals_global_complete_link(self, rng):
        # with all leaves directly under the root, tree-guided clustering is
        # plain agglomerative complete-link clustering
        for trial in range(100):
            r = np.random.default_rng(trial)
            n = int(r.integers(1, 16))
            pts = [tuple(p) for p in r.uniform(0, 600, (n, 2))]
            tree = FlatTree(n)
            ours = sorted(
                c.signature for c in cluster_fingertips(tree, flat_candidates(pts), DEFAULT)
            )
            oracle = complete_link_clustering(pts, list(range(n)), DEFAULT.d_max)
            assert ours == oracle

    def test_merge_log_replay(self, rng):
        pts = [tuple(p) for p in rng.uniform(0, 300, (10, 2))]
        tree = FlatTree(10)
        log = []
        cands = flat_candidates(pts)
        cluster_fingertips(tree, cands, DEFAULT, merge_log=log)
        pos = {c.id: c.position for c in cands}
        for rec in log:
            # every accepted merge satisfied the criterion at merge time
            assert rec.merged_size == len(rec.first) + len(rec.second) <= 5
            d = max(
                math.hypot(pos[i][0] - pos[j][0], pos[i][1] - pos[j][1])
                for i in rec.first
                for j in rec.second
            )
            assert d == pytest.approx(rec.distance)
            assert rec.distance <= rec.allowed

    def test_tree_structure_separates_hands(self):
        # two hands in one ROI: a deep tree keeps their leaves under separate
        # subtrees; fingertips cluster per subtree before meeting at the root
        a = np.full((40, 120), 30, np.uint8)
        for k in range(5):
            a[18:22, 6 + 9 * k : 9 + 9 * k] = 120
            a[19:21, 7 + 9 * k, None] = 230
        for k in range(5):
            a[18:22, 76 + 9 * k : 79 + 9 * k] = 120
            a[19:21, 77 + 9 * k, None] = 230
        img = Image(a)
        rois = detect_rois(img, 10, 1)
        assert len(rois) == 1
        tree = build_tree(img, rois[0])
        cfg = DetectorConfig(weights=(0, 0, 1, 0, 0, 0, 0, 0), t_low=0.5, t_high=0.9)
        cands = [c for c in evaluate_tree(tree, img, cfg) if c.confidence_class >= Confidence.LOW]
        assert len(cands) == 10
        clusters = cluster_fingertips(tree, cands, ClusterConfig({2: 40, 3: 40, 4: 40, 5: 40}))
        assert sorted(len(c.members) for c in clusters) == [5, 5]


class TestOrderContour:
    def test_collinear_points_path_order(self):
        pts = [(20.0, 0.0), (0.0, 0.0), (30.0, 0.0), (10.0, 0.0), (40.0, 0.0)]
        path = order_contour(pts)
        xs = [pts[i][0] for i in path]
        assert xs == sorted(xs) or xs == sorted(xs, reverse=True)

    def test_synthetic_hand_anatomical_order(self):
        layout = hand_layout("right", (300.0, 300.0), angle=0.4)
        names = list(layout)
        pts = list(layout.values())
        path = order_contour(pts)
        ordered = [names[i] for i in path]
        assert ordered in (["t", "i", "m", "r", "l"], ["l", "r", "m", "i", "t"])

    def test_plus_sign_fails(self):
        pts = [(0.0, 0.0), (10.0, 0.0), (-10.0, 0.0), (0.0, 10.0), (0.0, -10.0)]
        with pytest.raises(NonPathContour):
            order_contour(pts)

    def test_duplicate_positions_rejected(self):
        pts = [(0.0, 0.0), (0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]
        with pytest.raises(DuplicatePositions):
            order_contour(pts)

    def test_wrong_count_rejected(self):
        with pytest.raises(ValueError):
            order_contour([(0.0, 0.0)] * 4)


class TestIdentifyThumb:
    def test_synthetic_right_hand(self):
        layout = hand_layout("right", (0.0, 0.0))
        names = list(layout)
        pts = list(layout.values())
        path = identify_thumb(order_contour(pts), pts)
        assert names[path[0]] == "t"
        assert names[path[-1]] == "l"

    def test_rotation_invariant(self):
        for angle in np.linspace(0, 2 * math.pi, 17):
            layout = hand_layout("left", (500.0, 400.0), angle=float(angle))
            names = list(layout)
            pts = list(layout.values())
            path = identify_thumb(order_contour(pts), pts)
            assert [names[i] for i in path] == ["t", "i", "m", "r", "l"]

    def test_equidistant_endpoints_ambiguous(self):
        # symmetric layout: both endpoints at the same centroid distance
        pts = [(-20.0, 0.0), (-10.0, 5.0), (0.0, 6.0), (10.0, 5.0), (20.0, 0.0)]
        with pytest.raises(AmbiguousThumb):
            identify_thumb(order_contour(pts), pts)


class TestClassifyHandedness:
    def by_name(self, layout):
        names = {"t": FingerName.THUMB, "i": FingerName.INDEX, "m": FingerName.MIDDLE,
                 "r": FingerName.RING, "l": FingerName.LITTLE}
        return {names[k]: v for k, v in layout.items()}

    def test_right_hand_all_rotations(self):
        for angle in np.linspace(0, 2 * math.pi, 37):
            layout = hand_layout("right", (0.0, 0.0), angle=float(angle))
            assert classify_handedness(self.by_name(layout)) is Handedness.RIGHT

    def test_mirror_flips(self):
        layout = hand_layout("right", (0.0, 0.0), angle=0.7)
        mirrored = {k: (-x, y) for k, (x, y) in layout.items()}
        assert classify_handedness(self.by_name(mirrored)) is Handedness.LEFT

    def test_collinear_ambiguous(self):
        layout = {
            FingerName.THUMB: (0.0, 0.0),
            FingerName.INDEX: (1.0, 1.0),
            FingerName.MIDDLE: (2.0, 2.0),
            FingerName.RING: (3.0, 3.0),
            FingerName.LITTLE: (4.0, 4.0),
        }
        with pytest.raises(AmbiguousHandedness):
            classify_handedness(layout)


class TestRegister:
    def cluster_from_layout(self, layout):
        cands = [
            FakeCandidate(i, i, pos) for i, pos in enumerate(layout.values())
        ]
        return HandCluster(cands), list(layout)

    def test_four_member_cluster_skipped(self):
        layout = hand_layout("right", (0.0, 0.0))
        cluster, _ = self.cluster_from_layout(layout)
        cluster.members = cluster.members[:4]
        assert register(cluster) is None
        assert cluster.registration is None

    def test_left_hand_full_registration(self):
        layout = hand_layout("left", (200.0, 200.0), angle=1.1)
        cluster, names = self.cluster_from_layout(layout)
        reg = register(cluster)
        assert reg is not None
        assert reg.handedness is Handedness.LEFT
        for cid, finger in reg.labels.items():
            assert finger.value == names[cid]
        assert reg.labels[reg.contour[0]] is FingerName.THUMB
        assert reg.labels[reg.contour[-1]] is FingerName.LITTLE

    def test_degenerate_line_skip_with_reason(self):
        pts = [(k * 10.0, 0.0) for k in range(5)]
        cluster = HandCluster([FakeCandidate(i, i, p) for i, p in enumerate(pts)])
        assert register(cluster) is None
        assert cluster.registration_failure is not None
        assert "Ambiguous" in cluster.registration_failure

    def test_registration_rigid_motion_invariant(self, rng):
        base = jittered_hand_layout("right", (0.0, 0.0), 0.0, 1.0, rng, jitter=4.0)
        for _ in range(25):
            angle = rng.uniform(0, 2 * math.pi)
            t = rng.uniform(-100, 100, 2)
            c, s = math.cos(angle), math.sin(angle)
            moved = {
                k: (c * x - s * y + t[0], s * x + c * y + t[1])
                for k, (x, y) in base.items()
            }
            cluster, names = self.cluster_from_layout(moved)
            reg = register(cluster)
            assert reg is not None and reg.handedness is Handedness.RIGHT
            assert [reg.labels[i].value for i in sorted(reg.labels)] == names

    def test_mirror_antisymmetry(self, rng):
        layout = jittered_hand_layout("right", (0.0, 0.0), 0.9, 1.0, rng, jitter=4.0)
        mirrored = {k: (-x, y) for k, (x, y) in layout.items()}
        c1, _ = self.cluster_from_layout(layout)
        c2, _ = self.cluster_from_layout(mirrored)
        r1, r2 = register(c1), register(c2)
        assert r1.handedness is Handedness.RIGHT
        assert r2.handedness is Handedness.LEFT
        # mirroring reverses nothing in the labels: same finger names per id
        assert {i: f.value for i, f in r1.labels.items()} == {
            i: f.value for i, f in r2.labels.items()
        }
