"""Frame pipeline orchestration.

Stage order per frame: undistort, normalize, detect ROIs, then one
independent task per ROI (component tree, candidate scoring, clustering,
registration), then a strictly serial frame commit (temporal confirmation,
tracking, TUIO emission). Preprocessing parallelizes by horizontal row
band, ROI work by region in decreasing pixel count; the commit never starts
before every ROI task of the frame has finished. Results are identical for
any thread count.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import calibration, hands, mser, roi, tuio
from .fingertip import (
    CandidateHistory,
    Confidence,
    DetectorConfig,
    evaluate_tree,
    temporal_update,
)
from .image import Image, frame_paths, read_pgm
from .tracking import TipObservation, Tracker, TrackingConfig

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Bad configuration file or option (CLI exit code 2)."""


class DataError(ValueError):
    """Missing or malformed input data (CLI exit code 3)."""


@dataclass
class PipelineConfig:
    width: int = 640
    height: int = 480
    calibration_map: str | None = None
    illumination_min: str | None = None
    illumination_max: str | None = None
    roi_threshold: int = roi.DEFAULT_THRESHOLD
    roi_min_pixels: int = roi.DEFAULT_MIN_PIXELS
    delta: int = mser.DEFAULT_DELTA
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    hands: hands.ClusterConfig = field(default_factory=hands.ClusterConfig)
    tracking: TrackingConfig = field(default_factory=TrackingConfig)
    tuio_host: str = tuio.DEFAULT_HOST
    tuio_port: int = tuio.DEFAULT_PORT
    tuio_enabled: bool = True
    fps: float = 60.0
    threads: int = 1

    @classmethod
    def from_dict(cls, doc: dict) -> "PipelineConfig":
        doc = dict(doc)
        try:
            frame = doc.pop("frame", {})
            kwargs = {
                "width": frame.get("width", 640),
                "height": frame.get("height", 480),
                "calibration_map": doc.pop("calibration", {}).get("map"),
            }
            illum = doc.pop("illumination", {})
            kwargs["illumination_min"] = illum.get("min")
            kwargs["illumination_max"] = illum.get("max")
            roi_doc = doc.pop("roi", {})
            kwargs["roi_threshold"] = roi_doc.get("threshold", roi.DEFAULT_THRESHOLD)
            kwargs["roi_min_pixels"] = roi_doc.get("min_pixels", roi.DEFAULT_MIN_PIXELS)
            kwargs["delta"] = doc.pop("mser", {}).get("delta", mser.DEFAULT_DELTA)
            kwargs["detector"] = DetectorConfig.from_dict(doc.pop("detector", {}))
            kwargs["hands"] = hands.ClusterConfig.from_dict(doc.pop("hands", {}))
            kwargs["tracking"] = TrackingConfig.from_dict(doc.pop("tracking", {}))
            tuio_doc = doc.pop("tuio", {})
            kwargs["tuio_host"] = tuio_doc.get("host", tuio.DEFAULT_HOST)
            kwargs["tuio_port"] = tuio_doc.get("port", tuio.DEFAULT_PORT)
            kwargs["tuio_enabled"] = tuio_doc.get("enabled", True)
            kwargs["fps"] = doc.pop("fps", 60.0)
            kwargs["threads"] = doc.pop("threads", 1)
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"malformed pipeline config: {exc}") from exc
        if doc:
            raise ConfigError(f"unknown config sections: {sorted(doc)}")
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        cfg = cls.from_dict(doc)
        # relative paths resolve against the config file
        base = Path(path).parent
        for attr in ("calibration_map", "illumination_min", "illumination_max"):
            value = getattr(cfg, attr)
            if value is not None and not Path(value).is_absolute():
                setattr(cfg, attr, str(base / value))
        return cfg

    def to_dict(self) -> dict:
        return {
            "frame": {"width": self.width, "height": self.height},
            "calibration": {"map": self.calibration_map},
            "illumination": {"min": self.illumination_min, "max": self.illumination_max},
            "roi": {"threshold": self.roi_threshold, "min_pixels": self.roi_min_pixels},
            "mser": {"delta": self.delta},
            "detector": self.detector.to_dict(),
            "hands": self.hands.to_dict(),
            "tracking": self.tracking.to_dict(),
            "tuio": {"host": self.tuio_host, "port": self.tuio_port, "enabled": self.tuio_enabled},
            "fps": self.fps,
            "threads": self.threads,
        }


@dataclass
class ReportedFingertip:
    track_id: int
    position: tuple
    confidence_class: Confidence


@dataclass
class FrameResult:
    index: int
    fingertips: list  # ReportedFingertip
    clusters: list  # hands.HandCluster
    timings: dict  # stage -> microseconds
    messages: list  # OscMessage, mirrors the emitted bundle


@dataclass
class _HistoryEntry:
    history: CandidateHistory
    position: tuple


class Pipeline:
    """Stateful frame processor; feed frames in order via process_frame."""

    def __init__(self, config: PipelineConfig, sink=None, event_log=None):
        self.config = config
        self.umap = None
        if config.calibration_map:
            try:
                self.umap = calibration.UndistortionMap.load(config.calibration_map)
            except (OSError, calibration.CalibrationError) as exc:
                raise ConfigError(f"cannot load calibration map: {exc}") from exc
            if (self.umap.out_width, self.umap.out_height) != (config.width, config.height):
                raise ConfigError(
                    f"calibration map outputs {self.umap.out_width}x{self.umap.out_height}, "
                    f"config frame is {config.width}x{config.height}"
                )
        self.illumination = None
        if bool(config.illumination_min) != bool(config.illumination_max):
            raise ConfigError("illumination correction needs both min and max images")
        if config.illumination_min:
            try:
                model = calibration.IlluminationModel(
                    read_pgm(config.illumination_min), read_pgm(config.illumination_max)
                )
            except (OSError, ValueError) as exc:
                raise ConfigError(f"cannot load illumination model: {exc}") from exc
            if (model.width, model.height) != (config.width, config.height):
                raise ConfigError(
                    f"illumination images are {model.width}x{model.height}, "
                    f"config frame is {config.width}x{config.height}"
                )
            self.illumination = model

        self.sink = sink
        if sink is None and config.tuio_enabled:
            self.sink = tuio.TuioSink(config.tuio_host, config.tuio_port)
        self.event_log = event_log

        self.pool = None
        if config.threads > 1:
            self.pool = ThreadPoolExecutor(max_workers=config.threads)

        self.tracker = Tracker(self.config.tracking)
        self.histories: list[_HistoryEntry] = []
        self.fseq = 0
        self.frame_index = 0
        self._cursor_kinematics: dict = {}  # track_id -> normalized position/velocity
        self._sent_args: dict = {}  # track_id -> last wire-format cursor arguments
        self._hand_members: dict = {}  # hand sid -> frozenset of member track ids
        self.trace: list = []  # (event, frame, *detail) scheduling records

        self._pre_buf_a = np.empty((config.height, config.width), np.uint8)
        self._pre_buf_b = np.empty((config.height, config.width), np.uint8)

    # -- stages ------------------------------------------------------------

    def _row_bands(self):
        n = max(self.config.threads, 1)
        h = self.config.height
        edges = [h * i // n for i in range(n + 1)]
        return [(a, b) for a, b in zip(edges, edges[1:]) if b > a]

    def _preprocess(self, img: Image) -> Image:
        if self.umap is None and self.illumination is None:
            return img
        if self.umap is not None:
            expected = (self.umap.source_width, self.umap.source_height)
        else:
            expected = (self.config.width, self.config.height)
        if (img.width, img.height) != expected:
            raise DataError(
                f"frame is {img.width}x{img.height}, expected {expected[0]}x{expected[1]}"
            )

        def band(rows):
            src = img
            if self.umap is not None:
                calibration.undistort(img, self.umap, out=self._pre_buf_a, rows=rows)
                src = Image(self._pre_buf_a)
            if self.illumination is not None:
                calibration.normalize(src, self.illumination, out=self._pre_buf_b, rows=rows)

        bands = self._row_bands()
        if self.pool is not None and len(bands) > 1:
            list(self.pool.map(band, bands))
        else:
            band((0, self.config.height))
        return Image(self._pre_buf_b if self.illumination is not None else self._pre_buf_a)

    def _process_roi(self, img: Image, region: roi.RegionOfInterest):
        """Per-ROI stage: tree, candidates, clusters, registrations."""
        try:
            tree = mser.build_tree(img, region)
            candidates = evaluate_tree(tree, img, self.config.detector)
            clusterable = [
                c for c in candidates if c.confidence_class >= Confidence.LOW
            ]
            clusters = hands.cluster_fingertips(tree, clusterable, self.config.hands)
            for cluster in clusters:
                hands.register(cluster)
            return tree, candidates, clusters
        except Exception:
            log.warning("dropping ROI %d of frame %d", region.label, self.frame_index, exc_info=True)
            return None

    # -- frame commit helpers ----------------------------------------------

    def _update_histories(self, all_candidates, positions_all):
        """Associate candidates with per-candidate class histories.

        Greedy nearest-centroid matching within the detector's match radius;
        a history whose candidate fell below LOW this frame still records the
        class of the nearest leaf so a no-confidence frame breaks the window.
        Returns the list of confirmed candidates.
        """
        radius = self.config.detector.match_radius
        scored = [c for c in all_candidates if c.confidence_class >= Confidence.LOW]

        pairs = []
        for hi, entry in enumerate(self.histories):
            for c in scored:
                d = math.hypot(
                    entry.position[0] - c.position[0], entry.position[1] - c.position[1]
                )
                if d <= radius:
                    pairs.append((d, hi, c.id))
        pairs.sort()
        by_id = {c.id: c for c in all_candidates}
        matched_h: dict = {}
        used_c: set = set()
        for d, hi, cid in pairs:
            if hi in matched_h or cid in used_c:
                continue
            matched_h[hi] = cid
            used_c.add(cid)

        confirmed = []
        next_entries = []
        for hi, entry in enumerate(self.histories):
            if hi in matched_h:
                cand = by_id[matched_h[hi]]
                ok = temporal_update(entry.history, cand.confidence_class)
                entry.position = cand.position
                next_entries.append(entry)
                if ok:
                    confirmed.append(cand)
            else:
                # fall back to the nearest leaf of any class (usually NO):
                # the candidate chain survives but cannot confirm this frame
                cid = self._nearest_leaf(entry.position, positions_all, radius, used_c)
                if cid is not None:
                    cand = by_id[cid]
                    temporal_update(entry.history, cand.confidence_class)
                    entry.position = cand.position
                    next_entries.append(entry)
                # unmatched histories drop: consecutive-frame identity broke

        for c in scored:
            if c.id not in used_c:
                entry = _HistoryEntry(CandidateHistory(c.position), c.position)
                temporal_update(entry.history, c.confidence_class)
                next_entries.append(entry)

        self.histories = next_entries
        return confirmed

    @staticmethod
    def _nearest_leaf(position, positions_all, radius, exclude_ids):
        if positions_all is None or len(positions_all[0]) == 0:
            return None
        ids, pts = positions_all
        d = np.hypot(pts[:, 0] - position[0], pts[:, 1] - position[1])
        order = np.argsort(d, kind="stable")
        for k in order:
            if d[k] > radius:
                return None
            if ids[k] not in exclude_ids:
                return ids[k]
        return None

    def _assign_hand_sids(self, hand_states):
        """Keep hand session ids stable via member-overlap with the last frame."""
        available = dict(self._hand_members)
        assignment = {}
        for key, members in hand_states:
            best = None
            for sid, prev_members in available.items():
                overlap = len(members & prev_members)
                if overlap and (best is None or (overlap, -sid) > (best[0], -best[1])):
                    best = (overlap, sid)
            if best is not None:
                sid = best[1]
                del available[sid]
            else:
                sid = self.tracker.allocate_id()
            assignment[key] = sid
        self._hand_members = {
            assignment[key]: members for key, members in hand_states
        }
        return assignment

    # -- main entry ----------------------------------------------------------

    def process_frame(self, img: Image) -> FrameResult:
        t_start = time.perf_counter_ns()
        timings = {}

        frame = self._preprocess(img)
        t_pre = time.perf_counter_ns()
        timings["preprocess"] = (t_pre - t_start) // 1000

        if frame.width != self.config.width or frame.height != self.config.height:
            raise DataError(
                f"frame is {frame.width}x{frame.height}, expected "
                f"{self.config.width}x{self.config.height}"
            )

        regions = roi.detect_rois(
            frame, self.config.roi_threshold, self.config.roi_min_pixels
        )
        if regions:
            _ = regions[0].raster.resolved  # materialize before the fan-out
        t_roi = time.perf_counter_ns()
        timings["roi"] = (t_roi - t_pre) // 1000

        for region in regions:
            self.trace.append(("roi_submit", self.frame_index, region.label, region.pixel_count))
        if self.pool is not None and len(regions) > 1:
            roi_results = list(
                self.pool.map(lambda r: self._process_roi(frame, r), regions)
            )
        else:
            roi_results = [self._process_roi(frame, r) for r in regions]
        t_trees = time.perf_counter_ns()
        timings["regions"] = (t_trees - t_roi) // 1000
        self.trace.append(("commit", self.frame_index))

        # deterministic renumbering of candidates in ROI order
        all_candidates = []
        all_clusters = []
        next_id = 0
        positions = []
        for result in roi_results:
            if result is None:
                continue
            _, candidates, clusters = result
            offset = next_id
            for c in candidates:
                c.id += offset
                positions.append(c.position)
                all_candidates.append(c)
            next_id += len(candidates)
            all_clusters.extend(clusters)
        positions_all = (
            [c.id for c in all_candidates],
            np.asarray(positions, dtype=np.float64).reshape(-1, 2),
        )

        confirmed = self._update_histories(all_candidates, positions_all)

        cluster_of = {}
        for cluster in all_clusters:
            for member in cluster.members:
                cluster_of[member.id] = cluster

        tips = [
            TipObservation(c.id, c.position, cluster_of[c.id].bbox) for c in confirmed
        ]
        assigned = self.tracker.step(tips)

        result = self._emit(confirmed, assigned, cluster_of, all_clusters)
        t_commit = time.perf_counter_ns()
        timings["commit"] = (t_commit - t_trees) // 1000
        timings["total"] = (t_commit - t_start) // 1000
        result.timings = timings
        result.clusters = all_clusters
        self.frame_index += 1
        return result

    def _emit(self, confirmed, assigned, cluster_of, all_clusters) -> FrameResult:
        self.fseq += 1
        w, h = self.config.width, self.config.height
        fps = self.config.fps

        reported = []
        track_of = {}
        for cand in confirmed:
            track_id = assigned[cand.id]
            track_of[cand.id] = track_id
            reported.append(
                ReportedFingertip(track_id, cand.position, cand.confidence_class)
            )
            nx, ny = cand.position[0] / w, cand.position[1] / h
            prev = self._cursor_kinematics.get(track_id)
            if prev is None:
                state = {"x": nx, "y": ny, "xvel": 0.0, "yvel": 0.0, "maccel": 0.0, "speed": 0.0}
            else:
                xvel = (nx - prev["x"]) * fps
                yvel = (ny - prev["y"]) * fps
                speed = math.hypot(xvel, yvel)
                state = {
                    "x": nx,
                    "y": ny,
                    "xvel": xvel,
                    "yvel": yvel,
                    "maccel": abs(speed - prev["speed"]) * fps,
                    "speed": speed,
                }
            self._cursor_kinematics[track_id] = state

        live = set(self.tracker.tracks.keys())
        self._cursor_kinematics = {
            sid: st for sid, st in self._cursor_kinematics.items() if sid in live
        }
        self._sent_args = {
            sid: args for sid, args in self._sent_args.items() if sid in live
        }

        cursors = []
        updated = set()
        for sid in sorted(live):
            st = self._cursor_kinematics.get(sid)
            if st is None:
                continue
            cur = tuio.CursorState(
                sid, st["x"], st["y"], st["xvel"], st["yvel"], st["maccel"]
            )
            cursors.append(cur)
            now = cur.args()[2:]
            if self._sent_args.get(sid) != now:
                updated.add(sid)
                self._sent_args[sid] = now

        hand_inputs = []
        for cluster in all_clusters:
            member_tracks = frozenset(
                track_of[m.id] for m in cluster.members if m.id in track_of
            )
            if not member_tracks:
                continue
            hand_inputs.append((cluster, member_tracks))
        hand_inputs.sort(key=lambda item: min(item[1]))
        assignment = self._assign_hand_sids(
            [(idx, members) for idx, (cluster, members) in enumerate(hand_inputs)]
        )

        hand_states = []
        for idx, (cluster, members) in enumerate(hand_inputs):
            bbox = cluster.bbox
            reg = cluster.registration
            hand_type = reg.handedness.value if reg else "unknown"
            sids = []
            codes = []
            for member in cluster.members:
                if member.id not in track_of:
                    continue
                sids.append(track_of[member.id])
                if reg is not None:
                    codes.append(reg.labels[member.id].value)
                else:
                    codes.append("u")
            order = np.argsort(sids, kind="stable")
            hand_states.append(
                tuio.HandState(
                    sid=assignment[idx],
                    hand_type=hand_type,
                    posx=(bbox.min_x + bbox.max_x) / 2.0 / w,
                    posy=(bbox.min_y + bbox.max_y) / 2.0 / h,
                    width=(bbox.max_x - bbox.min_x) / w,
                    height=(bbox.max_y - bbox.min_y) / h,
                    member_sids=tuple(sids[k] for k in order),
                    finger_types=tuple(codes[k] for k in order),
                )
            )

        state = tuio.TuioFrameState(self.fseq, cursors, updated, hand_states)
        messages = tuio.frame_messages(state)
        if self.sink is not None:
            self.sink.send(tuio.encode_bundle(messages))
        if self.event_log is not None:
            self.event_log.write_frame(self.frame_index, messages)

        return FrameResult(self.frame_index, reported, [], {}, messages)

    def close(self) -> None:
        if self.pool is not None:
            self.pool.shutdown()
        if self.sink is not None:
            self.sink.close()


@dataclass
class ReplaySummary:
    frames: int
    log_path: str | None


def run_replay(
    frames_dir,
    config: PipelineConfig,
    log_path=None,
    pace_fps: float | None = None,
    dump_tree_dir=None,
) -> ReplaySummary:
    """Process a directory of PGM frames in lexicographic order."""
    paths = frame_paths(frames_dir)
    if not paths:
        raise DataError(f"no PGM frames found in {frames_dir}")

    event_log = tuio.EventLog(log_path) if log_path else None
    pipeline = Pipeline(config, event_log=event_log)
    dump_dir = Path(dump_tree_dir) if dump_tree_dir else None
    if dump_dir:
        dump_dir.mkdir(parents=True, exist_ok=True)
    try:
        for i, path in enumerate(paths):
            started = time.perf_counter()
            try:
                img = read_pgm(path)
            except (OSError, ValueError) as exc:
                raise DataError(f"cannot read frame {path}: {exc}") from exc
            if dump_dir is not None:
                regions = roi.detect_rois(
                    img, config.roi_threshold, config.roi_min_pixels
                )
                for k, region in enumerate(regions):
                    tree = mser.build_tree(img, region)
                    out = dump_dir / f"{path.stem}_roi{k:02d}.txt"
                    out.write_text(mser.dump_tree(tree, config.delta))
            pipeline.process_frame(img)
            if pace_fps:
                remaining = 1.0 / pace_fps - (time.perf_counter() - started)
                if remaining > 0:
                    time.sleep(remaining)
    finally:
        pipeline.close()
        if event_log:
            event_log.close()
    return ReplaySummary(len(paths), str(log_path) if log_path else None)
