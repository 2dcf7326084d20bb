"""Geometric undistortion and illumination correction.

A calibration grid of distorted checkerboard corners defines, via uniform
bicubic B-spline interpolation, where each undistorted output pixel samples
the camera frame; the per-pixel map is computed once and reused at frame
rate. Illumination is corrected by min-max normalization against
prerecorded minimum (background) and maximum (full response) images, which
compensates the additive/multiplicative shading the sensor and optics
introduce across the surface.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .image import Image

MAP_MAGIC = b"TPUMAP01"


class CalibrationError(ValueError):
    pass


def bspline_weights(u: float) -> tuple[float, float, float, float]:
    """Uniform cubic B-spline blending weights (B0..B3) at parameter u in [0, 1].

    The four weights form a partition of unity.
    """
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"parametric coordinate {u} outside [0, 1]")
    omu = 1.0 - u
    b0 = omu * omu * omu / 6.0
    b1 = (3.0 * u**3 - 6.0 * u**2 + 4.0) / 6.0
    b2 = (-3.0 * u**3 + 3.0 * u**2 + 3.0 * u + 1.0) / 6.0
    b3 = u**3 / 6.0
    return b0, b1, b2, b3


@dataclass
class CalibrationGrid:
    """Distorted positions of points known to form a uniform rectangular grid.

    points[r, c] is the sub-pixel source coordinate of grid point (r, c); the
    corresponding undistorted targets are implied by the output dimensions.
    """

    points: np.ndarray  # (rows, cols, 2) float64
    source_width: int
    source_height: int

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 3 or self.points.shape[2] != 2:
            raise CalibrationError(f"grid points must be (rows, cols, 2), got {self.points.shape}")
        if self.rows < 4 or self.cols < 4:
            raise CalibrationError("bicubic interpolation needs at least a 4x4 grid")
        xs = self.points[..., 0]
        ys = self.points[..., 1]
        if (
            xs.min() < 0
            or ys.min() < 0
            or xs.max() > self.source_width - 1
            or ys.max() > self.source_height - 1
        ):
            raise CalibrationError("grid points must lie inside the source image")

    @property
    def rows(self) -> int:
        return self.points.shape[0]

    @property
    def cols(self) -> int:
        return self.points.shape[1]

    @classmethod
    def identity(cls, rows, cols, width, height) -> "CalibrationGrid":
        """Grid whose points already form the uniform output lattice."""
        xs = np.linspace(0, width - 1, cols)
        ys = np.linspace(0, height - 1, rows)
        pts = np.stack(np.meshgrid(xs, ys), axis=-1)
        return cls(pts, width, height)

    @classmethod
    def from_json(cls, path) -> "CalibrationGrid":
        doc = json.loads(Path(path).read_text())
        try:
            rows, cols = int(doc["rows"]), int(doc["cols"])
            flat = np.asarray(doc["points"], dtype=np.float64)
            sw, sh = int(doc["source_width"]), int(doc["source_height"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CalibrationError(f"{path}: malformed grid file ({exc})") from exc
        if flat.size != rows * cols * 2:
            raise CalibrationError(
                f"{path}: expected {rows * cols * 2} coordinates, got {flat.size}"
            )
        return cls(flat.reshape(rows, cols, 2), sw, sh)

    def to_json(self, path) -> None:
        doc = {
            "rows": self.rows,
            "cols": self.cols,
            "source_width": self.source_width,
            "source_height": self.source_height,
            "points": [float(v) for v in self.points.reshape(-1)],
        }
        Path(path).write_text(json.dumps(doc, indent=2))


def _extended_points(points: np.ndarray) -> np.ndarray:
    """Control grid with one extra ring, linearly extrapolated.

    Border cells lack full 4x4 support; extending edge points with
    P(-1) = 2 P(0) - P(1) keeps the spline affine-precise out to the grid
    boundary (plain replication would bend it inward there).
    """
    rows, cols = points.shape[:2]
    ext = np.empty((rows + 2, cols + 2, 2), dtype=np.float64)
    ext[1:-1, 1:-1] = points
    ext[0, 1:-1] = 2.0 * points[0] - points[1]
    ext[-1, 1:-1] = 2.0 * points[-1] - points[-2]
    ext[:, 0] = 2.0 * ext[:, 1] - ext[:, 2]
    ext[:, -1] = 2.0 * ext[:, -2] - ext[:, -3]
    return ext


def eval_spline(grid: CalibrationGrid, m: int, n: int, u: float, v: float):
    """Tensor-product bicubic B-spline evaluation inside lattice cell (m, n).

    u parametrizes the column (x) direction, v the row (y) direction.
    """
    bu = bspline_weights(u)
    bv = bspline_weights(v)
    ext = _extended_points(grid.points)
    x = 0.0
    y = 0.0
    for i in range(-1, 3):
        for j in range(-1, 3):
            w = bv[i + 1] * bu[j + 1]
            x += w * ext[m + i + 1, n + j + 1, 0]
            y += w * ext[m + i + 1, n + j + 1, 1]
    return x, y


@dataclass
class UndistortionMap:
    """Per-output-pixel source coordinates; NaN entries are out of range."""

    coords: np.ndarray  # (out_h, out_w, 2) float32
    source_width: int
    source_height: int

    @property
    def out_width(self) -> int:
        return self.coords.shape[1]

    @property
    def out_height(self) -> int:
        return self.coords.shape[0]

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(MAP_MAGIC)
            fh.write(
                struct.pack(
                    "<4I", self.out_width, self.out_height, self.source_width, self.source_height
                )
            )
            fh.write(self.coords.astype("<f4").tobytes())

    @classmethod
    def load(cls, path) -> "UndistortionMap":
        data = Path(path).read_bytes()
        if data[: len(MAP_MAGIC)] != MAP_MAGIC:
            raise CalibrationError(f"{path}: not an undistortion map")
        ow, oh, sw, sh = struct.unpack_from("<4I", data, len(MAP_MAGIC))
        body = np.frombuffer(data, dtype="<f4", offset=len(MAP_MAGIC) + 16)
        if body.size != ow * oh * 2:
            raise CalibrationError(f"{path}: truncated map data")
        return cls(body.reshape(oh, ow, 2).copy(), sw, sh)


def build_map(grid: CalibrationGrid, out_w: int, out_h: int) -> UndistortionMap:
    """Evaluate the spline for every output pixel; done once per calibration.

    The undistorted grid targets form a uniform lattice spanning the output
    image, so each output pixel's cell and in-cell (u, v) follow directly
    from its coordinates.
    """
    if out_w < 2 or out_h < 2:
        raise CalibrationError("output dimensions must be at least 2x2")
    pts = grid.points
    if any(
        np.allclose(pts[r, c], pts[r2, c2])
        for r in range(grid.rows)
        for c in range(grid.cols)
        for r2, c2 in ((r, c + 1), (r + 1, c))
        if r2 < grid.rows and c2 < grid.cols
    ):
        raise CalibrationError("degenerate grid: coincident neighboring points")

    gx = np.arange(out_w) * ((grid.cols - 1) / (out_w - 1))
    gy = np.arange(out_h) * ((grid.rows - 1) / (out_h - 1))
    nx = np.minimum(gx.astype(np.int64), grid.cols - 2)
    my = np.minimum(gy.astype(np.int64), grid.rows - 2)
    u = gx - nx
    v = gy - my

    bu = np.stack([np.array(bspline_weights(val)) for val in u])  # (out_w, 4)
    bv = np.stack([np.array(bspline_weights(val)) for val in v])  # (out_h, 4)

    padded = _extended_points(pts)
    coords = np.zeros((out_h, out_w, 2), dtype=np.float64)
    for i in range(4):
        rows = padded[my + i]  # (out_h, cols+2, 2)
        for j in range(4):
            ctrl = rows[:, nx + j]  # (out_h, out_w, 2)
            coords += (bv[:, i, None] * bu[None, :, j])[..., None] * ctrl

    # summation dust can land a boundary pixel at -1e-16: clamp, then flag
    # only entries genuinely outside the source
    eps = 1e-6
    sw, sh = grid.source_width, grid.source_height
    oob = (
        (coords[..., 0] < -eps)
        | (coords[..., 0] > sw - 1 + eps)
        | (coords[..., 1] < -eps)
        | (coords[..., 1] > sh - 1 + eps)
        | ~np.isfinite(coords).all(axis=-1)
    )
    coords[..., 0] = np.clip(coords[..., 0], 0.0, sw - 1)
    coords[..., 1] = np.clip(coords[..., 1], 0.0, sh - 1)
    coords[oob] = np.nan
    return UndistortionMap(coords.astype(np.float32), sw, sh)


def undistort(img: Image, umap: UndistortionMap, out=None, rows=None) -> Image:
    """Resample img through the map with bilinear filtering; out-of-range -> 0."""
    if img.width != umap.source_width or img.height != umap.source_height:
        raise CalibrationError(
            f"map built for {umap.source_width}x{umap.source_height} source, "
            f"got {img.width}x{img.height}"
        )
    buf = out if out is not None else np.empty((umap.out_height, umap.out_width), np.uint8)
    y0, y1 = rows if rows is not None else (0, umap.out_height)
    _kernels.undistort_kernel(img.pixels, umap.coords, buf, y0, y1)
    return Image(buf)


@dataclass
class IlluminationModel:
    """Prerecorded per-pixel intensity extremes used for normalization.

    Acquisition does not guarantee i_max > i_min everywhere; degenerate
    pixels are flagged and normalize to 0.
    """

    i_min: Image
    i_max: Image

    def __post_init__(self):
        if (self.i_min.width, self.i_min.height) != (self.i_max.width, self.i_max.height):
            raise CalibrationError("illumination images must share dimensions")

    @property
    def degenerate(self) -> np.ndarray:
        return self.i_max.pixels <= self.i_min.pixels

    @property
    def width(self) -> int:
        return self.i_min.width

    @property
    def height(self) -> int:
        return self.i_min.height


def normalize(img: Image, model: IlluminationModel, out=None, rows=None) -> Image:
    """Min-max normalize intensities to [0, 255]; see normalize_kernel."""
    if (img.width, img.height) != (model.width, model.height):
        raise CalibrationError(
            f"illumination model is {model.width}x{model.height}, "
            f"frame is {img.width}x{img.height}"
        )
    buf = out if out is not None else np.empty_like(img.pixels)
    y0, y1 = rows if rows is not None else (0, img.height)
    _kernels.normalize_kernel(img.pixels, model.i_min.pixels, model.i_max.pixels, buf, y0, y1)
    return Image(buf)
