import math

import numpy as np
import pytest

from oracles import central_moments_direct, hu_direct
from touchpipe.descriptors import (
    bounding_ellipse,
    central_moments,
    describe,
    hu_invariants,
    intensity_stats,
    normalized_moments,
)
from touchpipe.mser import DescriptorAccumulator


def acc_of(pixels, values=None, origin=(0, 0)):
    if values is None:
        values = [128] * len(pixels)
    return DescriptorAccumulator.from_pixels(pixels, values, origin)


def random_blob(rng, n=60, spread=25):
    pts = set()
    x, y = 50, 50
    while len(pts) < n:
        pts.add((x, y))
        x = int(np.clip(x + rng.integers(-2, 3), 50 - spread, 50 + spread))
        y = int(np.clip(y + rng.integers(-2, 3), 50 - spread, 50 + spread))
    return sorted(pts)


def disc(radius, cx=0.0, cy=0.0):
    r = int(radius) + 1
    return [
        (x, y)
        for x in range(int(cx) - r, int(cx) + r + 1)
        for y in range(int(cy) - r, int(cy) + r + 1)
        if (x - cx) ** 2 + (y - cy) ** 2 <= radius**2
    ]


class TestIntensityStats:
    def test_mean_variance_arithmetic(self):
        acc = acc_of([(0, 0), (1, 0), (2, 0)], [10, 20, 30])
        mean, var = intensity_stats(acc)
        assert mean == pytest.approx(20.0)
        assert var == pytest.approx(1400 / 3 - 400)

    def test_constant_region_zero_variance(self):
        acc = acc_of([(i, 0) for i in range(10)], [77] * 10)
        assert intensity_stats(acc)[1] == 0.0

    def test_against_two_pass_oracle(self, rng):
        values = [int(v) for v in rng.integers(0, 256, 1000)]
        pixels = [(i % 40, i // 40) for i in range(1000)]
        mean, var = intensity_stats(acc_of(pixels, values))
        m = sum(values) / len(values)
        v = sum((x - m) ** 2 for x in values) / len(values)
        assert mean == pytest.approx(m, rel=1e-12)
        assert var == pytest.approx(v, rel=1e-9)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            intensity_stats(DescriptorAccumulator.empty())


class TestCentralMoments:
    def test_single_pixel_all_zero(self):
        mu = central_moments(acc_of([(7, 9)]))
        for (p, q), val in mu.items():
            if p + q >= 1:
                assert val == pytest.approx(0.0, abs=1e-12)

    def test_symmetric_square_kills_odd_moments(self):
        pixels = [(x, y) for x in range(5) for y in range(5)]
        mu = central_moments(acc_of(pixels))
        assert mu[(1, 1)] == pytest.approx(0.0, abs=1e-9)
        assert mu[(3, 0)] == pytest.approx(0.0, abs=1e-9)
        assert mu[(0, 3)] == pytest.approx(0.0, abs=1e-9)

    def test_binomial_identity_matches_direct_loop(self, rng):
        pixels = random_blob(rng)
        mu = central_moments(acc_of(pixels))
        direct = central_moments_direct(pixels)
        for pq, val in direct.items():
            assert mu[pq] == pytest.approx(val, rel=1e-9, abs=1e-9)

    def test_origin_invariance(self, rng):
        pixels = random_blob(rng)
        mu_a = central_moments(acc_of(pixels, origin=(0, 0)))
        mu_b = central_moments(acc_of(pixels, origin=(25, 25)))
        for pq in mu_a:
            assert mu_a[pq] == pytest.approx(mu_b[pq], rel=1e-9, abs=1e-9)

    def test_mu00_equals_m00(self, rng):
        pixels = random_blob(rng)
        acc = acc_of(pixels)
        assert central_moments(acc)[(0, 0)] == acc.m00 == len(pixels)


class TestHuInvariants:
    def hu_of(self, pixels):
        return hu_invariants(normalized_moments(central_moments(acc_of(pixels))))

    def test_centered_square_kills_third_order(self):
        pixels = [(x, y) for x in range(5) for y in range(5)]
        hu = self.hu_of(pixels)
        for k in range(2, 7):
            assert hu[k] == pytest.approx(0.0, abs=1e-12)

    def test_translation_invariance_exact(self, rng):
        pixels = random_blob(rng)
        shifted = [(x + 7, y + 13) for x, y in pixels]
        a, b = self.hu_of(pixels), self.hu_of(shifted)
        for va, vb in zip(a, b):
            assert vb == pytest.approx(va, rel=1e-9, abs=1e-15)

    def test_90_degree_rotation_invariance(self, rng):
        pixels = random_blob(rng)
        rotated = [(y, -x) for x, y in pixels]  # 90 degrees on the grid
        a = self.hu_of(pixels)
        b = self.hu_of(rotated)
        for va, vb in zip(a, b):
            assert vb == pytest.approx(va, rel=1e-9, abs=1e-15)

    def test_matches_direct_loop_oracle(self, rng):
        pixels = random_blob(rng)
        ours = self.hu_of(pixels)
        theirs = hu_direct(pixels)
        for va, vb in zip(ours, theirs):
            assert va == pytest.approx(vb, rel=1e-9, abs=1e-15)

    def test_arbitrary_rotation_on_disc(self):
        base = disc(20.0)
        hu_a = self.hu_of(base)
        theta = math.radians(37.0)
        rotated = disc(20.0)  # disc is rotation symmetric: rasterize rotated center
        c, s = math.cos(theta), math.sin(theta)
        rotated = [
            (round(c * x - s * y), round(s * x + c * y)) for x, y in base
        ]
        rotated = sorted(set(rotated))
        hu_b = self.hu_of(rotated)
        assert hu_b[0] == pytest.approx(hu_a[0], rel=1e-3, abs=1e-6)
        for va, vb in zip(hu_a[1:], hu_b[1:]):
            assert vb == pytest.approx(va, rel=1e-3, abs=1e-6)

    def test_phi1_positive(self, rng):
        pixels = random_blob(rng, n=10)
        assert self.hu_of(pixels)[0] > 0


class TestBoundingEllipse:
    def test_isotropic_region_theta_zero(self):
        pixels = [(x, y) for x in range(5) for y in range(5)]
        ell = bounding_ellipse(acc_of(pixels))
        assert ell.theta == 0.0
        assert ell.h == pytest.approx(ell.w)

    def test_disc_radius_20(self):
        ell = bounding_ellipse(acc_of(disc(20.0)))
        assert ell.h == pytest.approx(20.0, rel=0.02)
        assert ell.w == pytest.approx(20.0, rel=0.02)

    def test_horizontal_strip(self):
        pixels = [(x, 0) for x in range(21)]
        ell = bounding_ellipse(acc_of(pixels))
        assert ell.theta == 0.0
        assert ell.w > ell.h
        assert ell.h == pytest.approx(0.0, abs=1e-9)
        # direct moment computation: mu20/n = (21^2 - 1) / 12
        assert ell.w == pytest.approx(2 * math.sqrt((21**2 - 1) / 12), rel=1e-9)

    def test_w_at_least_h_random(self, rng):
        for _ in range(50):
            pixels = random_blob(rng, n=int(rng.integers(2, 80)))
            ell = bounding_ellipse(acc_of(pixels))
            assert ell.w >= ell.h >= 0

    def test_second_moment_roundtrip(self, rng):
        # reconstruct a, b, c from (theta, h, w) and match the inputs
        for _ in range(20):
            pixels = random_blob(rng)
            acc = acc_of(pixels)
            ell = bounding_ellipse(acc)
            if ell.h == pytest.approx(ell.w):
                continue
            # inverse mapping of the closed forms:
            # a + c = (w^2 + h^2) / 4, sqrt(b^2 + (a-c)^2) = (w^2 - h^2) / 4
            s = (ell.w**2 + ell.h**2) / 4.0
            d = (ell.w**2 - ell.h**2) / 4.0
            a = (s + d * math.cos(2 * ell.theta)) / 2.0
            b = d * math.sin(2 * ell.theta)
            c = (s - d * math.cos(2 * ell.theta)) / 2.0
            n = acc.n
            xc, yc = acc.m10 / n, acc.m01 / n
            assert a == pytest.approx(acc.m20 / n - xc * xc, rel=1e-6, abs=1e-9)
            assert b == pytest.approx(2 * (acc.m11 / n - xc * yc), rel=1e-6, abs=1e-9)
            assert c == pytest.approx(acc.m02 / n - yc * yc, rel=1e-6, abs=1e-9)

    def test_angled_strip_orientation(self):
        pixels = [(x, x) for x in range(15)]  # 45-degree line, y down
        ell = bounding_ellipse(acc_of(pixels))
        assert ell.theta == pytest.approx(math.pi / 4, abs=1e-9)

    def test_center_is_centroid_with_origin(self):
        pixels = [(10, 20), (12, 20), (11, 22)]
        ell = bounding_ellipse(acc_of(pixels, origin=(10, 20)))
        assert ell.center == pytest.approx((11.0, 20.666666666), rel=1e-9)


class TestDescribe:
    def test_bundles_everything(self, rng):
        pixels = random_blob(rng)
        values = [int(v) for v in rng.integers(1, 256, len(pixels))]
        d = describe(acc_of(pixels, values))
        assert d.variance >= 0
        assert len(d.hu) == 7
        assert d.ellipse.w >= d.ellipse.h
        assert d.central[(0, 0)] == len(pixels)
