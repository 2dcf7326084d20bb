"""Closed-form region descriptors derived from accumulated statistics.

All shape quantities are geometric (f == 1 inside the region); a pixel at
integer coordinates (x, y) contributes exactly at (x, y), with no half-pixel
offset. Central moments come from raw moments via the binomial identity
rather than a second pass over pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .mser import DescriptorAccumulator

CENTRAL_ORDERS = ((1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3))
SHAPE_ORDERS = ((1, 1), (2, 0), (0, 2), (3, 0), (2, 1), (1, 2), (0, 3))


@dataclass(frozen=True)
class RegionDescriptors:
    mean: float
    variance: float
    centroid: tuple[float, float]
    central: dict
    normalized: dict
    hu: tuple
    ellipse: "BoundingEllipse"


@dataclass(frozen=True)
class BoundingEllipse:
    center: tuple[float, float]
    theta: float  # radians in (-pi/2, pi/2], 0 for isotropic regions
    h: float  # semi-minor axis
    w: float  # semi-major axis


def intensity_stats(acc: DescriptorAccumulator) -> tuple[float, float]:
    """Mean and variance of the region's intensities.

    The variance is the mean of squares minus the square of the mean,
    clamped at zero against rounding dust.
    """
    if acc.n < 1:
        raise ValueError("intensity statistics need at least one pixel")
    mean = acc.s1 / acc.n
    var = acc.s2 / acc.n - mean * mean
    return mean, max(var, 0.0)


def _raw_moment(acc: DescriptorAccumulator, p: int, q: int):
    return getattr(acc, f"m{p}{q}")


def central_moments(acc: DescriptorAccumulator) -> dict:
    """Translation-invariant moments mu_pq for orders up to three.

    Computed from raw moments with the binomial identity
    mu_pq = sum_k sum_j C(p,k) C(q,j) (-xc)^(p-k) (-yc)^(q-j) m_kj.
    """
    if acc.n < 1:
        raise ValueError("central moments need at least one pixel")
    xc = acc.m10 / acc.n
    yc = acc.m01 / acc.n
    out = {(0, 0): float(acc.n)}
    for p, q in CENTRAL_ORDERS:
        total = 0.0
        for k in range(p + 1):
            for j in range(q + 1):
                total += (
                    math.comb(p, k)
                    * math.comb(q, j)
                    * (-xc) ** (p - k)
                    * (-yc) ** (q - j)
                    * _raw_moment(acc, k, j)
                )
        out[(p, q)] = total
    out[(2, 0)] = max(out[(2, 0)], 0.0)
    out[(0, 2)] = max(out[(0, 2)], 0.0)
    return out


def normalized_moments(central: dict) -> dict:
    """Scale-invariant moments nu_pq = mu_pq / mu00^((p+q+2)/2)."""
    mu00 = central[(0, 0)]
    return {
        (p, q): central[(p, q)] / mu00 ** ((p + q + 2) / 2.0)
        for (p, q) in SHAPE_ORDERS
    }


def hu_invariants(nu: dict) -> tuple:
    """The seven translation/scale/rotation-invariant shape descriptors."""
    n20, n02, n11 = nu[(2, 0)], nu[(0, 2)], nu[(1, 1)]
    n30, n03, n21, n12 = nu[(3, 0)], nu[(0, 3)], nu[(2, 1)], nu[(1, 2)]
    a = n30 + n12
    b = n21 + n03
    phi1 = n20 + n02
    phi2 = (n20 - n02) ** 2 + 4.0 * n11**2
    phi3 = (n30 - 3.0 * n12) ** 2 + (3.0 * n21 - n03) ** 2
    phi4 = a**2 + b**2
    phi5 = (n30 - 3.0 * n12) * a * (a**2 - 3.0 * b**2) + (3.0 * n21 - n03) * b * (
        3.0 * a**2 - b**2
    )
    phi6 = (n20 - n02) * (a**2 - b**2) + 4.0 * n11 * a * b
    phi7 = (3.0 * n21 - n03) * a * (a**2 - 3.0 * b**2) - (n30 - 3.0 * n12) * b * (
        3.0 * a**2 - b**2
    )
    return (phi1, phi2, phi3, phi4, phi5, phi6, phi7)


def bounding_ellipse(acc: DescriptorAccumulator) -> BoundingEllipse:
    """Moment-matched oriented ellipse (same moments up to second order).

    theta = atan2(b, a - c) / 2 with a = mu20/m00, b = 2*mu11/m00,
    c = mu02/m00; the two-argument arctangent makes the isotropic case
    (a == c, b == 0) well defined with theta = 0 and h = w.
    """
    if acc.n < 1:
        raise ValueError("bounding ellipse needs at least one pixel")
    n = acc.n
    xc = acc.m10 / n
    yc = acc.m01 / n
    a = acc.m20 / n - xc * xc
    b = 2.0 * (acc.m11 / n - xc * yc)
    c = acc.m02 / n - yc * yc
    root = math.sqrt(b * b + (a - c) * (a - c))
    theta = 0.5 * math.atan2(b, a - c) if root > 0.0 else 0.0
    h = math.sqrt(2.0 * max(a + c - root, 0.0))
    w = math.sqrt(2.0 * (a + c + root))
    return BoundingEllipse(
        (xc + acc.origin[0], yc + acc.origin[1]), theta, h, w
    )


def describe(acc: DescriptorAccumulator) -> RegionDescriptors:
    """All derived descriptors of one region."""
    mean, var = intensity_stats(acc)
    central = central_moments(acc)
    nu = normalized_moments(central)
    return RegionDescriptors(
        mean=mean,
        variance=var,
        centroid=acc.centroid,
        central=central,
        normalized=nu,
        hu=hu_invariants(nu),
        ellipse=bounding_ellipse(acc),
    )
