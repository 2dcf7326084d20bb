"""Core image and geometry types shared by every pipeline stage.

Frames are 8-bit grayscale, stored row-major with y increasing downward.
The 4-neighborhood is the connectivity relation used throughout the
pipeline; the 8-neighborhood exists for completeness but no stage uses it.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

BIT_DEPTH = 8
MAX_INTENSITY = (1 << BIT_DEPTH) - 1


class Pixel(NamedTuple):
    x: int
    y: int


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle with inclusive bounds (min <= max on both axes)."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if self.min_x > self.max_x or self.min_y > self.max_y:
            raise ValueError(f"degenerate rect: {self}")

    @property
    def width(self):
        return self.max_x - self.min_x + 1

    @property
    def height(self):
        return self.max_y - self.min_y + 1

    @property
    def center(self):
        return ((self.min_x + self.max_x) / 2.0, (self.min_y + self.max_y) / 2.0)

    def contains(self, x, y) -> bool:
        return self.min_x <= x <= self.max_x and self.min_y <= y <= self.max_y

    def intersects(self, other: "Rect") -> bool:
        return (
            self.min_x <= other.max_x
            and other.min_x <= self.max_x
            and self.min_y <= other.max_y
            and other.min_y <= self.max_y
        )

    def union(self, other: "Rect") -> "Rect":
        return Rect(
            min(self.min_x, other.min_x),
            min(self.min_y, other.min_y),
            max(self.max_x, other.max_x),
            max(self.max_y, other.max_y),
        )

    def inflate(self, margin) -> "Rect":
        return Rect(
            self.min_x - margin,
            self.min_y - margin,
            self.max_x + margin,
            self.max_y + margin,
        )

    @staticmethod
    def around_points(points) -> "Rect":
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
        return Rect(min(xs), min(ys), max(xs), max(ys))


class Image:
    """8-bit grayscale frame backed by a C-contiguous (height, width) array."""

    __slots__ = ("pixels",)

    def __init__(self, pixels):
        arr = np.asarray(pixels)
        if arr.ndim != 2:
            raise ValueError(f"image must be 2-D, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > MAX_INTENSITY):
                raise ValueError("intensities outside [0, 255]")
            arr = arr.astype(np.uint8)
        self.pixels = np.ascontiguousarray(arr)

    @classmethod
    def zeros(cls, width: int, height: int) -> "Image":
        return cls(np.zeros((height, width), dtype=np.uint8))

    @classmethod
    def from_flat(cls, width: int, height: int, intensities) -> "Image":
        flat = np.asarray(intensities)
        if flat.size != width * height:
            raise ValueError(
                f"expected {width * height} intensities, got {flat.size}"
            )
        return cls(flat.reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def intensities(self) -> np.ndarray:
        """Row-major flat view of the pixel data."""
        return self.pixels.reshape(-1)

    def __getitem__(self, pixel) -> int:
        x, y = pixel
        return int(self.pixels[y, x])

    def __eq__(self, other):
        return isinstance(other, Image) and np.array_equal(self.pixels, other.pixels)

    def __repr__(self):
        return f"Image({self.width}x{self.height})"


class BinaryMask:
    """Per-pixel boolean mask with the dimensions of its source image."""

    __slots__ = ("bits",)

    def __init__(self, bits):
        arr = np.asarray(bits, dtype=bool)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        self.bits = np.ascontiguousarray(arr)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())

    def __getitem__(self, pixel) -> bool:
        x, y = pixel
        return bool(self.bits[y, x])


def neighbors4(p: Pixel, width: int, height: int) -> list[Pixel]:
    """In-bounds pixels at Manhattan distance 1, in up/left/right/down order."""
    x, y = p
    out = []
    if y > 0:
        out.append(Pixel(x, y - 1))
    if x > 0:
        out.append(Pixel(x - 1, y))
    if x < width - 1:
        out.append(Pixel(x + 1, y))
    if y < height - 1:
        out.append(Pixel(x, y + 1))
    return out


def neighbors8(p: Pixel, width: int, height: int) -> list[Pixel]:
    """In-bounds pixels at Chebyshev distance 1, in row-major scan order."""
    x, y = p
    out = []
    for ny in (y - 1, y, y + 1):
        for nx in (x - 1, x, x + 1):
            if (nx, ny) == (x, y):
                continue
            if 0 <= nx < width and 0 <= ny < height:
                out.append(Pixel(nx, ny))
    return out


def threshold(img: Image, t: int) -> BinaryMask:
    """Binary mask with a bit set wherever the intensity is >= t (inclusive)."""
    if not 0 <= t <= MAX_INTENSITY:
        raise ValueError(f"threshold {t} outside [0, {MAX_INTENSITY}]")
    return BinaryMask(img.pixels >= t)


def read_pgm(path) -> Image:
    """Read a binary (P5) PGM file with maxval 255."""
    data = Path(path).read_bytes()
    fields: list[bytes] = []
    pos = 0
    # Header is 4 whitespace-separated tokens; '#' starts a comment to EOL.
    while len(fields) < 4:
        if pos >= len(data):
            raise ValueError(f"{path}: truncated PGM header")
        c = data[pos : pos + 1]
        if c in b" \t\r\n":
            pos += 1
        elif c == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        else:
            end = pos
            while end < len(data) and data[end : end + 1] not in b" \t\r\n":
                end += 1
            fields.append(data[pos:end])
            pos = end
    if fields[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {fields[0]!r})")
    width, height, maxval = (int(f) for f in fields[1:])
    if maxval != MAX_INTENSITY:
        raise ValueError(f"{path}: unsupported maxval {maxval} (need 255)")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos : pos + width * height]
    if len(raw) != width * height:
        raise ValueError(f"{path}: expected {width * height} pixel bytes")
    return Image(np.frombuffer(raw, dtype=np.uint8).reshape(height, width))


def write_pgm(img: Image, path) -> None:
    """Write a binary (P5) PGM file with maxval 255."""
    header = f"P5\n{img.width} {img.height}\n{MAX_INTENSITY}\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.tobytes())


def frame_paths(directory) -> list[Path]:
    """PGM files of a frame sequence in lexicographic (playback) order."""
    return sorted(Path(directory).glob("*.pgm"))
