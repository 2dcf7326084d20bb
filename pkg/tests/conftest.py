import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from touchpipe.image import Image
from touchpipe.roi import detect_rois


@pytest.fixture
def rng():
    return np.random.default_rng(20120229)


def whole_image_roi(img: Image):
    """Single ROI covering every pixel (threshold 0 keeps the full frame)."""
    rois = detect_rois(img, 0, 1)
    assert len(rois) == 1
    return rois[0]


@pytest.fixture
def make_tree():
    from touchpipe.mser import build_tree

    def _make(array):
        img = Image(np.asarray(array, dtype=np.uint8))
        return build_tree(img, whole_image_roi(img)), img

    return _make
