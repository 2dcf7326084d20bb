"""Synthetic frame sequences with exact ground truth.

Replaces the hardware prototype for testing: renders hands as palm blobs
with finger ridges and bright fingertip spikes, applies a multiplicative
corner-falloff illumination field plus additive noise, and emits the exact
fingertip labels alongside. The geometric hand model is also the oracle for
the registration tests: layouts are defined in image coordinates as a
diffuse-illumination camera sees them from below the surface, which mirrors
the physical hand, so a right hand appears with the thumb on the right when
its fingers point up the image.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .image import Image, write_pgm

# canonical right hand at scale 1.0, image coordinates (y down):
# fingertip offsets from the hand center, thumb rightmost
RIGHT_HAND_FINGERS = {
    "t": (78.0, 8.0),
    "i": (40.0, -62.0),
    "m": (0.0, -72.0),
    "r": (-38.0, -62.0),
    "l": (-72.0, -30.0),
}
PALM_OFFSET = (0.0, 28.0)
PALM_AXES = (46.0, 40.0)
ARM_OFFSET = (0.0, 120.0)
ARM_AXES = (34.0, 90.0)

FINGER_ORDER = ("t", "i", "m", "r", "l")


class SceneError(ValueError):
    pass


def hand_layout(handedness: str, center, angle: float = 0.0, scale: float = 1.0) -> dict:
    """Fingertip positions of a rigidly posed hand, keyed by finger code."""
    sign = 1.0 if handedness == "right" else -1.0
    ca, sa = math.cos(angle), math.sin(angle)
    out = {}
    for name, (dx, dy) in RIGHT_HAND_FINGERS.items():
        x = sign * dx * scale
        y = dy * scale
        out[name] = (
            center[0] + ca * x - sa * y,
            center[1] + sa * x + ca * y,
        )
    return out


def jittered_hand_layout(handedness, center, angle, scale, rng, jitter: float = 6.0) -> dict:
    """Hand layout with per-fingertip positional jitter (anatomical variation)."""
    base = hand_layout(handedness, center, angle, scale)
    return {
        name: (x + rng.uniform(-jitter, jitter), y + rng.uniform(-jitter, jitter))
        for name, (x, y) in base.items()
    }


@dataclass
class HandSpec:
    handedness: str
    center: tuple
    angle_deg: float = 0.0
    scale: float = 1.0
    fingers_down: tuple = (True, True, True, True, True)
    velocity: tuple = (0.0, 0.0)  # pixels per frame

    def __post_init__(self):
        if self.handedness not in ("left", "right"):
            raise SceneError(f"handedness must be left or right, got {self.handedness!r}")
        if len(self.fingers_down) != 5:
            raise SceneError("fingers_down needs 5 entries (t, i, m, r, l)")


@dataclass
class SyntheticScene:
    """Declarative description of a rendered interaction sequence."""

    width: int = 640
    height: int = 480
    frames: int = 30
    seed: int = 7
    noise_sigma: float = 2.0
    corner_falloff: float = 0.45  # multiplicative illumination loss at the corners
    ambient: int = 6
    fingertip_peak: tuple = (200, 250)
    fingertip_sigma: tuple = (2.5, 4.0)
    palm_peak: tuple = (80, 140)
    arm_peak: tuple = (40, 80)
    ridge_peak: tuple = (55, 95)
    hands: list = field(default_factory=list)

    @classmethod
    def from_json(cls, path) -> "SyntheticScene":
        doc = json.loads(Path(path).read_text())
        hands = [
            HandSpec(
                handedness=h["handedness"],
                center=tuple(h["center"]),
                angle_deg=h.get("angle_deg", 0.0),
                scale=h.get("scale", 1.0),
                fingers_down=tuple(h.get("fingers_down", [True] * 5)),
                velocity=tuple(h.get("velocity", [0.0, 0.0])),
            )
            for h in doc.get("hands", [])
        ]
        keys = (
            "width height frames seed noise_sigma corner_falloff ambient".split()
        )
        kwargs = {k: doc[k] for k in keys if k in doc}
        return cls(hands=hands, **kwargs)

    def validate(self) -> None:
        margin = 130.0
        for i, hand in enumerate(self.hands):
            for t in (0, self.frames - 1):
                cx = hand.center[0] + hand.velocity[0] * t
                cy = hand.center[1] + hand.velocity[1] * t
                if not (
                    margin * hand.scale <= cx <= self.width - margin * hand.scale
                    and margin * hand.scale <= cy <= self.height - margin * hand.scale
                ):
                    raise SceneError(
                        f"hand {i} leaves the renderable area at frame {t} "
                        f"(center {(cx, cy)})"
                    )


def illumination_field(scene: SyntheticScene) -> np.ndarray:
    """Multiplicative shading: 1.0 at the center, 1 - falloff at the corners."""
    y, x = np.mgrid[0 : scene.height, 0 : scene.width].astype(np.float64)
    cx, cy = (scene.width - 1) / 2.0, (scene.height - 1) / 2.0
    r2 = ((x - cx) / cx) ** 2 + ((y - cy) / cy) ** 2
    return 1.0 - scene.corner_falloff * (r2 / 2.0)


def _add_gaussian(canvas, cx, cy, sigma, peak):
    """Additive isotropic Gaussian blob, clipped to a 4-sigma window."""
    h, w = canvas.shape
    r = int(4 * sigma) + 1
    xa, xb = max(int(cx) - r, 0), min(int(cx) + r, w - 1)
    ya, yb = max(int(cy) - r, 0), min(int(cy) + r, h - 1)
    if xa > xb or ya > yb:
        return
    ys, xs = np.mgrid[ya : yb + 1, xa : xb + 1]
    d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    canvas[ya : yb + 1, xa : xb + 1] += peak * np.exp(-d2 / (2.0 * sigma * sigma))


def _add_ellipse_blob(canvas, cx, cy, ax, ay, angle, peak):
    """Smooth elliptical mound: peak at the center, quartic falloff to the rim."""
    h, w = canvas.shape
    r = int(max(ax, ay)) + 2
    xa, xb = max(int(cx) - r, 0), min(int(cx) + r, w - 1)
    ya, yb = max(int(cy) - r, 0), min(int(cy) + r, h - 1)
    if xa > xb or ya > yb:
        return
    ys, xs = np.mgrid[ya : yb + 1, xa : xb + 1]
    ca, sa = math.cos(angle), math.sin(angle)
    dx = xs - cx
    dy = ys - cy
    u = (ca * dx + sa * dy) / ax
    v = (-sa * dx + ca * dy) / ay
    q = u * u + v * v
    inside = q < 1.0
    canvas[ya : yb + 1, xa : xb + 1] += np.where(inside, peak * (1.0 - q) ** 2, 0.0)


def _add_ridge(canvas, p0, p1, width, peak0, peak1):
    """Finger shaft: a soft line from palm edge to fingertip."""
    h, w = canvas.shape
    steps = max(int(math.hypot(p1[0] - p0[0], p1[1] - p0[1])), 1)
    for s in range(steps + 1):
        t = s / steps
        x = p0[0] + t * (p1[0] - p0[0])
        y = p0[1] + t * (p1[1] - p0[1])
        _add_gaussian(canvas, x, y, width, peak0 + t * (peak1 - peak0))


@dataclass
class FrameTruth:
    index: int
    fingertips: list  # dicts: x, y, hand, finger
    hands: list  # dicts: id, handedness


def render_scene_frame(scene: SyntheticScene, index: int):
    """Render frame `index`; returns (Image, FrameTruth).

    Deterministic: all randomness comes from (scene.seed, index).
    """
    rng = np.random.default_rng((scene.seed, index))
    canvas = np.zeros((scene.height, scene.width), dtype=np.float64)
    truth_tips = []
    truth_hands = []

    for hid, hand in enumerate(scene.hands):
        cx = hand.center[0] + hand.velocity[0] * index
        cy = hand.center[1] + hand.velocity[1] * index
        angle = math.radians(hand.angle_deg)
        tips = hand_layout(hand.handedness, (cx, cy), angle, hand.scale)

        ca, sa = math.cos(angle), math.sin(angle)
        sign = 1.0 if hand.handedness == "right" else -1.0

        def to_frame(offset):
            x = sign * offset[0] * hand.scale
            y = offset[1] * hand.scale
            return (cx + ca * x - sa * y, cy + sa * x + ca * y)

        palm = to_frame(PALM_OFFSET)
        palm_peak = rng.uniform(*scene.palm_peak)
        _add_ellipse_blob(
            canvas, palm[0], palm[1],
            PALM_AXES[0] * hand.scale, PALM_AXES[1] * hand.scale, angle, palm_peak,
        )
        arm = to_frame(ARM_OFFSET)
        _add_ellipse_blob(
            canvas, arm[0], arm[1],
            ARM_AXES[0] * hand.scale, ARM_AXES[1] * hand.scale, angle,
            rng.uniform(*scene.arm_peak),
        )

        down_names = []
        for k, name in enumerate(FINGER_ORDER):
            pos = tips[name]
            ridge_peak = rng.uniform(*scene.ridge_peak)
            _add_ridge(canvas, palm, pos, 7.0 * hand.scale, palm_peak * 0.7, ridge_peak)
            if hand.fingers_down[k]:
                peak = rng.uniform(*scene.fingertip_peak)
                sigma = rng.uniform(*scene.fingertip_sigma) * hand.scale
                _add_gaussian(canvas, pos[0], pos[1], sigma, peak)
                down_names.append(name)
                truth_tips.append(
                    {"x": pos[0], "y": pos[1], "hand": hid, "finger": name}
                )
        if down_names:
            truth_hands.append({"id": hid, "handedness": hand.handedness})

    shading = illumination_field(scene)
    out = scene.ambient + canvas * shading
    if scene.noise_sigma > 0:
        out = out + rng.normal(0.0, scene.noise_sigma, out.shape)
    img = Image(np.clip(np.rint(out), 0, 255).astype(np.uint8))
    return img, FrameTruth(index, truth_tips, truth_hands)


def illumination_images(scene: SyntheticScene):
    """The (i_min, i_max) pair a calibration sweep of this scene would record."""
    shading = illumination_field(scene)
    i_min = Image(np.full((scene.height, scene.width), scene.ambient, dtype=np.uint8))
    i_max = Image(np.clip(np.rint(scene.ambient + 255.0 * shading), 0, 255).astype(np.uint8))
    return i_min, i_max


def write_corpus(scene: SyntheticScene, out_dir) -> Path:
    """Render the whole sequence: frames, illumination images, ground truth.

    Returns the truth JSON path. Frame files sort lexicographically in
    playback order.
    """
    scene.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for index in range(scene.frames):
        img, truth = render_scene_frame(scene, index)
        write_pgm(img, out / f"frame_{index:06d}.pgm")
        records.append(
            {"index": truth.index, "fingertips": truth.fingertips, "hands": truth.hands}
        )
    i_min, i_max = illumination_images(scene)
    write_pgm(i_min, out / "i_min.pgm")
    write_pgm(i_max, out / "i_max.pgm")
    truth_path = out / "truth.json"
    truth_path.write_text(
        json.dumps(
            {"width": scene.width, "height": scene.height, "frames": records},
            separators=(",", ":"),
        )
    )
    return truth_path
