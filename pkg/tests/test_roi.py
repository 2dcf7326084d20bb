import numpy as np
import pytest

from oracles import flood_fill_components
from touchpipe.image import Image
from touchpipe.roi import detect_rois


def detect(array, t=1, min_pixels=1):
    return detect_rois(Image(np.asarray(array, dtype=np.uint8)), t, min_pixels)


class TestDetectRois:
    def test_single_square(self):
        a = np.zeros((8, 8), np.uint8)
        a[2:5, 3:6] = 77
        rois = detect(a)
        assert len(rois) == 1
        roi = rois[0]
        assert roi.pixel_count == 9
        assert (roi.bbox.min_x, roi.bbox.min_y, roi.bbox.max_x, roi.bbox.max_y) == (3, 2, 5, 4)
        assert roi.brightest_value == 77

    def test_u_shape_merges_into_one(self):
        # two vertical arms joined only at the bottom row: the scan sees two
        # labels first and must merge them
        a = np.zeros((6, 7), np.uint8)
        a[1:5, 1] = 50
        a[1:5, 5] = 50
        a[4, 1:6] = 50
        rois = detect(a)
        assert len(rois) == 1
        assert rois[0].pixel_count == 4 + 4 + 3

    def test_diagonal_pixels_stay_separate(self):
        a = np.zeros((4, 4), np.uint8)
        a[1, 1] = 200
        a[2, 2] = 200
        assert len(detect(a)) == 2

    def test_min_pixels_filter(self):
        a = np.zeros((8, 8), np.uint8)
        a[0, 0] = 9
        a[4:6, 4:6] = 9
        rois = detect(a, min_pixels=2)
        assert [r.pixel_count for r in rois] == [4]

    def test_sorted_by_decreasing_size(self):
        a = np.zeros((10, 10), np.uint8)
        a[0, 0:3] = 5
        a[5:9, 5:9] = 5
        a[9, 0] = 5
        rois = detect(a)
        assert [r.pixel_count for r in rois] == [16, 3, 1]

    def test_brightest_pixel_first_in_scan_order_on_tie(self):
        a = np.zeros((4, 4), np.uint8)
        a[1, 1] = 60
        a[1, 2] = 60
        a[2, 1] = 60
        roi = detect(a)[0]
        assert (roi.brightest.x, roi.brightest.y) == (1, 1)
        assert roi.brightest_value == 60

    def test_histogram_counts_intensities(self):
        a = np.zeros((4, 4), np.uint8)
        a[1, 1] = 10
        a[1, 2] = 20
        a[2, 1] = 20
        roi = detect(a)[0]
        assert roi.histogram[10] == 1
        assert roi.histogram[20] == 2
        assert roi.histogram.sum() == roi.pixel_count

    def test_brightest_matches_histogram_top_bin(self, rng):
        img = Image(rng.integers(0, 256, (32, 32)))
        for roi in detect_rois(img, 40, 1):
            top = max(i for i in range(256) if roi.histogram[i] > 0)
            assert roi.brightest_value == top
            assert img[roi.brightest] == top


class TestPartitionProperty:
    @pytest.mark.parametrize("seed", range(8))
    def test_matches_flood_fill_oracle_dense(self, seed):
        rng = np.random.default_rng(seed)
        img = rng.integers(0, 256, (48, 48)).astype(np.uint8)
        t = int(rng.integers(1, 250))
        ours = {
            (r.pixel_count, (r.bbox.min_x, r.bbox.min_y, r.bbox.max_x, r.bbox.max_y))
            for r in detect(img, t)
        }
        theirs = {(c, b) for c, b in flood_fill_components(img >= t)}
        assert ours == theirs

    def test_many_random_images(self):
        # partition property: multiset of (count, bbox) equals the recursive
        # flood-fill oracle over the same mask
        rng = np.random.default_rng(99)
        for _ in range(200):
            img = (rng.random((48, 48)) < rng.uniform(0.2, 0.8)).astype(np.uint8) * 255
            rois = detect(img, 255)
            ours = sorted(
                (r.pixel_count, (r.bbox.min_x, r.bbox.min_y, r.bbox.max_x, r.bbox.max_y))
                for r in rois
            )
            theirs = sorted(flood_fill_components(img >= 255))
            assert ours == theirs

    def test_histogram_consistency_random(self, rng):
        img = Image(rng.integers(0, 256, (64, 64)))
        for roi in detect_rois(img, 128, 1):
            assert roi.histogram.sum() == roi.pixel_count

    def test_min_pixels_respected_random(self, rng):
        img = Image(rng.integers(0, 256, (64, 64)))
        for roi in detect_rois(img, 100, 12):
            assert roi.pixel_count >= 12


class TestLabelRaster:
    def test_roots_reach_fixed_point(self, rng):
        img = Image(rng.integers(0, 256, (48, 48)))
        rois = detect_rois(img, 120, 1)
        if not rois:
            pytest.skip("no regions at this threshold")
        raster = rois[0].raster
        nlab = raster.parents.shape[0]
        for label in range(nlab):
            r = label
            for _ in range(nlab):
                if raster.parents[r] == r:
                    break
                r = int(raster.parents[r])
            assert raster.parents[r] == r

    def test_resolved_matches_roi_labels(self, rng):
        img = Image(rng.integers(0, 256, (48, 48)))
        rois = detect_rois(img, 100, 5)
        if not rois:
            pytest.skip("no regions at this threshold")
        raster = rois[0].raster
        resolved = raster.resolved
        for roi in rois:
            count = int((resolved == roi.label).sum())
            assert count == roi.pixel_count

    def test_background_is_label_zero(self):
        a = np.zeros((4, 4), np.uint8)
        a[1, 1] = 200
        rois = detect(a)
        resolved = rois[0].raster.resolved
        assert resolved[0, 0] == 0
        assert resolved[1, 1] == rois[0].label
