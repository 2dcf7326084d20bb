"""Component trees of bright extremal regions.

Each region of interest is flooded once, in linear time, on inverted
intensities so bright blobs become minima. Unlike the classic detector,
every extremal region is kept (one node per gray level at which a
component's pixel set changed) and each node carries incrementally
accumulated descriptors: pixel count, intensity sums, raw geometric
moments up to third order, and the bounding box. The stability measure is
still available per node.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .image import Image, Pixel, Rect
from .roi import RegionOfInterest

DEFAULT_DELTA = 2

_MOMENT_FIELDS = ("m10", "m01", "m11", "m20", "m02", "m30", "m21", "m12", "m03")


@dataclass
class DescriptorAccumulator:
    """Additive region statistics: counts, intensity sums, raw moments, bbox.

    Geometric moments use f == 1 inside the region (so m00 equals the pixel
    count) and are taken relative to `origin` to keep magnitudes small; the
    centroid in frame coordinates is recovered by adding the origin back.
    """

    n: int
    s1: int
    s2: int
    m10: int
    m01: int
    m11: int
    m20: int
    m02: int
    m30: int
    m21: int
    m12: int
    m03: int
    bbox: Rect | None
    origin: tuple[int, int] = (0, 0)

    @property
    def m00(self) -> int:
        return self.n

    @classmethod
    def empty(cls, origin=(0, 0)) -> "DescriptorAccumulator":
        return cls(0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, None, origin)

    @classmethod
    def from_pixels(cls, pixels, intensities, origin=(0, 0)) -> "DescriptorAccumulator":
        """Batch accumulation over (x, y) pixels and their intensities."""
        acc = cls.empty(origin)
        for (x, y), val in zip(pixels, intensities):
            acc.add_pixel(x, y, val)
        return acc

    def add_pixel(self, x: int, y: int, value: int) -> None:
        lx = x - self.origin[0]
        ly = y - self.origin[1]
        self.n += 1
        self.s1 += int(value)
        self.s2 += int(value) ** 2
        self.m10 += lx
        self.m01 += ly
        self.m11 += lx * ly
        self.m20 += lx * lx
        self.m02 += ly * ly
        self.m30 += lx**3
        self.m21 += lx * lx * ly
        self.m12 += lx * ly * ly
        self.m03 += ly**3
        px = Rect(x, y, x, y)
        self.bbox = px if self.bbox is None else self.bbox.union(px)

    @property
    def centroid(self) -> tuple[float, float]:
        if self.n == 0:
            raise ValueError("empty accumulator has no centroid")
        return (self.m10 / self.n + self.origin[0], self.m01 / self.n + self.origin[1])


def merge_accumulators(
    a: DescriptorAccumulator, b: DescriptorAccumulator
) -> DescriptorAccumulator:
    """Combine the statistics of two disjoint pixel sets."""
    if a.n and b.n and a.origin != b.origin:
        raise ValueError(f"accumulator origins differ: {a.origin} vs {b.origin}")
    if a.bbox is None:
        bbox = b.bbox
    elif b.bbox is None:
        bbox = a.bbox
    else:
        bbox = a.bbox.union(b.bbox)
    origin = a.origin if a.n else b.origin
    return DescriptorAccumulator(
        a.n + b.n,
        a.s1 + b.s1,
        a.s2 + b.s2,
        *(getattr(a, f) + getattr(b, f) for f in _MOMENT_FIELDS),
        bbox,
        origin,
    )


class ComponentTree:
    """Arena of extremal regions for one ROI; nodes are child-before-parent."""

    def __init__(self, levels, sizes, seeds, accs, bboxes, parents, origin, roi_width):
        self.inverted_levels = levels  # int32, inverted gray space
        self.sizes = sizes
        self._seeds = seeds  # bbox-local raveled pixel indices
        self.accs = accs  # (n, 12) int64, moments relative to origin
        self.bboxes = bboxes  # (n, 4) int32, frame coordinates
        self.parents = parents
        self.origin = origin
        self._roi_width = roi_width
        self._children = None
        self._aggregates = None

    def __len__(self) -> int:
        return self.inverted_levels.shape[0]

    @property
    def root(self) -> "ExtremalRegion":
        return ExtremalRegion(self, len(self) - 1)

    def node(self, index: int) -> "ExtremalRegion":
        return ExtremalRegion(self, index)

    def __iter__(self):
        return (ExtremalRegion(self, i) for i in range(len(self)))

    @property
    def gray_levels(self) -> np.ndarray:
        """Node gray levels in the original (non-inverted) intensity space."""
        return 255 - self.inverted_levels

    def children_of(self, index: int) -> list[int]:
        if self._children is None:
            kids: list[list[int]] = [[] for _ in range(len(self))]
            for i, p in enumerate(self.parents):
                if p >= 0:
                    kids[p].append(i)
            self._children = kids
        return self._children[index]

    @property
    def aggregates(self):
        """(nchildren, leaf_count, min_level_sub, phi1) per node, cached."""
        if self._aggregates is None:
            self._aggregates = _kernels.subtree_aggregates(
                self.inverted_levels, self.parents, self.accs
            )
        return self._aggregates

    @property
    def leaf_indices(self) -> np.ndarray:
        nchildren = self.aggregates[0]
        return np.flatnonzero(nchildren == 0).astype(np.int32)

    def seed_pixel(self, index: int) -> Pixel:
        local = int(self._seeds[index])
        ox, oy = self.origin
        return Pixel(local % self._roi_width + ox, local // self._roi_width + oy)


class ExtremalRegion:
    """View of one tree node."""

    __slots__ = ("tree", "index")

    def __init__(self, tree: ComponentTree, index: int):
        self.tree = tree
        self.index = index

    @property
    def gray_level(self) -> int:
        """Intensity at which this region exists, original space."""
        return 255 - int(self.tree.inverted_levels[self.index])

    @property
    def inverted_level(self) -> int:
        return int(self.tree.inverted_levels[self.index])

    @property
    def size(self) -> int:
        return int(self.tree.sizes[self.index])

    @property
    def parent(self) -> "ExtremalRegion | None":
        p = int(self.tree.parents[self.index])
        return None if p < 0 else ExtremalRegion(self.tree, p)

    @property
    def children(self) -> list["ExtremalRegion"]:
        return [ExtremalRegion(self.tree, i) for i in self.tree.children_of(self.index)]

    @property
    def is_leaf(self) -> bool:
        return len(self.tree.children_of(self.index)) == 0

    @property
    def seed(self) -> Pixel:
        return self.tree.seed_pixel(self.index)

    @property
    def bbox(self) -> Rect:
        x0, y0, x1, y1 = (int(v) for v in self.tree.bboxes[self.index])
        return Rect(x0, y0, x1, y1)

    @property
    def accumulator(self) -> DescriptorAccumulator:
        row = self.tree.accs[self.index]
        return DescriptorAccumulator(
            *(int(v) for v in row), self.bbox, self.tree.origin
        )

    def stability(self, delta: int = DEFAULT_DELTA) -> float:
        return stability(self.tree, self.index, delta)

    def __eq__(self, other):
        return (
            isinstance(other, ExtremalRegion)
            and other.tree is self.tree
            and other.index == self.index
        )

    def __hash__(self):
        return hash((id(self.tree), self.index))

    def __repr__(self):
        return f"ExtremalRegion(level={self.gray_level}, size={self.size})"


def build_tree(img: Image, roi: RegionOfInterest) -> ComponentTree:
    """Flood one ROI from its brightest pixel and return the full tree.

    Pixels outside the ROI's resolved label are inaccessible (they never act
    as boundary intensities). Raises on an empty ROI.
    """
    if roi.pixel_count <= 0:
        raise ValueError("cannot build a component tree for an empty ROI")
    bbox = roi.bbox
    count, levels, sizes, seeds, accs, bboxes, parents = _kernels.flood_tree(
        img.pixels,
        roi.raster.resolved,
        roi.label,
        int(bbox.min_x),
        int(bbox.min_y),
        int(bbox.max_x),
        int(bbox.max_y),
        roi.brightest.x,
        roi.brightest.y,
    )
    return ComponentTree(
        levels,
        sizes,
        seeds,
        accs,
        bboxes,
        parents,
        (int(bbox.min_x), int(bbox.min_y)),
        int(bbox.max_x) - int(bbox.min_x) + 1,
    )


def _run_end(tree: ComponentTree, index: int) -> int:
    """Exclusive upper inverted level of the node's plateau run."""
    p = tree.parents[index]
    return 256 if p < 0 else int(tree.inverted_levels[p])


def stability(tree: ComponentTree, index: int, delta: int = DEFAULT_DELTA) -> float:
    """Relative growth s_delta = (|R_{i+d}| - |R_{i-d}|) / |R_i| at the node's level.

    Sizes at i +- delta are resolved by walking the node's chain in inverted
    space: upward through ancestors, downward through the child sharing the
    node's seed (the flood's own growth history). Extents past either chain
    end clamp to the last existing region.
    """
    if delta < 1:
        raise ValueError("delta must be >= 1")
    i = int(tree.inverted_levels[index])

    # |R| at i + delta: ascend until the run covers the level
    up = index
    target = i + delta
    while tree.parents[up] >= 0 and _run_end(tree, up) <= target:
        up = int(tree.parents[up])
    size_up = int(tree.sizes[up])

    # |R| at i - delta: descend through same-seed children
    down = index
    target = i - delta
    while int(tree.inverted_levels[down]) > target:
        step = None
        for c in tree.children_of(down):
            if tree._seeds[c] == tree._seeds[down]:
                step = c
                break
        if step is None:
            break
        down = step
    size_down = int(tree.sizes[down])

    return (size_up - size_down) / int(tree.sizes[index])


def dump_tree(tree: ComponentTree, delta: int = DEFAULT_DELTA) -> str:
    """Indented text rendering (level, size, stability, bbox) for golden tests."""
    lines: list[str] = []

    def visit(index: int, depth: int):
        node = tree.node(index)
        b = node.bbox
        lines.append(
            "{}level={} size={} stability={:.6f} bbox=({},{})-({},{})".format(
                "  " * depth,
                node.gray_level,
                node.size,
                stability(tree, index, delta),
                int(b.min_x),
                int(b.min_y),
                int(b.max_x),
                int(b.max_y),
            )
        )
        for c in tree.children_of(index):
            visit(c, depth + 1)

    visit(len(tree) - 1, 0)
    return "\n".join(lines) + "\n"
