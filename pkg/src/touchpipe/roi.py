"""Region-of-interest detection.

Thresholding followed by a single sequential connected-components pass
yields the candidate regions the rest of the pipeline analyzes. Instead of
a relabeling pass, equivalent labels keep a reference to their earliest
created root; the raster doubles as the accessibility mask for the
component-tree stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .image import Image, Pixel, Rect

DEFAULT_THRESHOLD = 16
DEFAULT_MIN_PIXELS = 30


class LabelRaster:
    """Per-pixel labels (0 = background) plus the root-reference table."""

    __slots__ = ("labels", "parents", "_resolved")

    def __init__(self, labels: np.ndarray, parents: np.ndarray):
        self.labels = labels
        self.parents = parents
        self._resolved = None

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def resolve_label(self, label: int) -> int:
        """Follow root references to the representative label."""
        r = int(label)
        while self.parents[r] != r:
            r = int(self.parents[r])
        return r

    @property
    def resolved(self) -> np.ndarray:
        """Raster with every cell replaced by its root label (computed on first read)."""
        if self._resolved is None:
            self._resolved = _kernels.resolve_labels(self.labels, self.parents)
        return self._resolved


@dataclass
class RegionOfInterest:
    """A thresholded connected component with its scan-time statistics."""

    label: int
    pixel_count: int
    histogram: np.ndarray  # 256 intensity bins
    brightest: Pixel
    brightest_value: int
    bbox: Rect
    raster: LabelRaster = field(repr=False)


def detect_rois(
    img: Image,
    threshold: int = DEFAULT_THRESHOLD,
    min_pixels: int = DEFAULT_MIN_PIXELS,
) -> list[RegionOfInterest]:
    """Detect candidate regions in one row-by-row pass.

    Regions smaller than min_pixels (after merge resolution) are dropped;
    the survivors are sorted by decreasing pixel count so downstream
    scheduling is deterministic.
    """
    labels, parents, counts, bboxes, bright_pos, bright_val, nlab = _kernels.label_components(
        img.pixels, threshold
    )
    raster = LabelRaster(labels, parents)

    roots = [
        l
        for l in range(1, nlab)
        if parents[l] == l and counts[l] >= min_pixels
    ]
    roots.sort(key=lambda l: (-counts[l], l))

    index_of = np.full(nlab, -1, dtype=np.int64)
    for k, l in enumerate(roots):
        index_of[l] = k
    hists = _kernels.roi_histograms(img.pixels, raster.resolved, index_of, len(roots))

    out = []
    for k, l in enumerate(roots):
        pos = int(bright_pos[l])
        out.append(
            RegionOfInterest(
                label=int(l),
                pixel_count=int(counts[l]),
                histogram=hists[k],
                brightest=Pixel(pos % img.width, pos // img.width),
                brightest_value=int(bright_val[l]),
                bbox=Rect(*(int(v) for v in bboxes[l])),
                raster=raster,
            )
        )
    return out
