"""Backward-orbit approximation of the fiber semi-conjugacy.

The conjugating correction moves each fiber point along v_s by
w(P) = -sum_{k=1..K} lambda_s^(k-1) * e(F^-k P), where e is the v_s
displacement the perturbing flow adds during one forward step.  Substituting
into the intertwining equation leaves a remainder of order lambda_s^K, so the
residual test below is the construction's ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine
from .seeding import spawn_rng
from .system import ProductPoint, ShubSystem, map_inverse_with_disp
from .torus import TorusPoint, torus_distance

# Re-exported here because the displacement scalar is the series' kernel.
from .system import displacement_term  # noqa: F401


@dataclass(frozen=True)
class SemiconjApprox:
    """Truncation depth and the geometric remainder bound of the series."""

    depth: int
    displacement_sup: float
    error_bound: float

    @classmethod
    def for_system(cls, sys: ShubSystem, depth: int, samples: int = 10_000, seed: int = 0):
        sup = measure_displacement_sup(sys, samples, seed)
        lam = abs(sys.lambda_s)
        return cls(depth=depth, displacement_sup=sup, error_bound=lam**depth * sup / (1.0 - lam))


def measure_displacement_sup(sys: ShubSystem, samples: int, seed: int) -> float:
    """Measured sup of |displacement| over seeded uniform points."""
    rng = spawn_rng(seed, 3)
    b1, b2, f1, f2 = (rng.random(samples) for _ in range(4))
    _, _, _, _, extras = engine.advance(sys, b1, b2, f1, f2, want_disp=True)
    return float(np.max(np.abs(extras["disp"])))


def h_approx(sys: ShubSystem, pt: ProductPoint, depth: int) -> ProductPoint:
    """Depth-K image of the semi-conjugacy; the base passes through bit-exactly."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    current = pt
    w = 0.0
    coef = 1.0
    for _ in range(depth):
        current, disp = map_inverse_with_disp(sys, current)
        w -= coef * disp
        coef *= sys.lambda_s
    vs = sys.l_data.v_s
    fiber = TorusPoint(pt.fiber.x1 + w * vs[0], pt.fiber.x2 + w * vs[1])
    return ProductPoint(pt.base, fiber)


def _product_map(sys: ShubSystem, b1, b2, f1, f2):
    phi, lm = sys.params.phi, sys.params.l_matrix
    return (
        (phi.a11 * b1 + phi.a12 * b2) % 1.0,
        (phi.a21 * b1 + phi.a22 * b2) % 1.0,
        (lm.a11 * f1 + lm.a12 * f2) % 1.0,
        (lm.a21 * f1 + lm.a22 * f2) % 1.0,
    )


def _wrap_dist(a1, a2, b1, b2):
    d1 = np.abs(a1 - b1) % 1.0
    d2 = np.abs(a2 - b2) % 1.0
    d1 = np.minimum(d1, 1.0 - d1)
    d2 = np.minimum(d2, 1.0 - d2)
    return np.hypot(d1, d2)


def semiconjugacy_residual(sys: ShubSystem, sample_size: int, depth: int, seed: int) -> float:
    """Sup over seeded points of the intertwining defect at truncation depth.

    Compares h(F(P)) against (Phi x L)(h(P)) componentwise; the base parts
    agree identically, so the fiber distance carries the residual.
    """
    if sample_size < 1:
        raise ValueError("sample_size must be >= 1")
    rng = spawn_rng(seed, 5)
    b1, b2, f1, f2 = (rng.random(sample_size) for _ in range(4))

    fb1, fb2, ff1, ff2, _ = engine.advance(sys, b1, b2, f1, f2)
    left1, left2, _ = engine.h_approx_batch(sys, fb1, fb2, ff1, ff2, depth)

    h1, h2, _ = engine.h_approx_batch(sys, b1, b2, f1, f2, depth)
    rb1, rb2, rf1, rf2 = _product_map(sys, b1, b2, h1, h2)

    if not (np.array_equal(fb1, rb1) and np.array_equal(fb2, rb2)):
        raise AssertionError("base coordinates of the two compositions diverged")
    fiber_dist = _wrap_dist(left1, left2, rf1, rf2)
    return float(np.max(fiber_dist))


def pushforward_discrepancy(
    sys: ShubSystem, points: list[ProductPoint], depth: int, boxes_per_axis: int
) -> float:
    """Max box deviation of the h-images from the uniform measure.

    Bins the depth-K images into boxes_per_axis^4 congruent boxes of
    T^2 x T^2 and returns max |empirical mass - Lebesgue mass|.
    """
    if not points:
        raise ValueError("points must be non-empty")
    g = boxes_per_axis
    coords = np.array([p.as_array() for p in points])
    h1, h2, _ = engine.h_approx_batch(
        sys, coords[:, 0].copy(), coords[:, 1].copy(), coords[:, 2].copy(), coords[:, 3].copy(), depth
    )
    stacked = np.column_stack([coords[:, 0], coords[:, 1], h1, h2])
    idx = np.minimum((stacked * g).astype(int), g - 1)
    flat = ((idx[:, 0] * g + idx[:, 1]) * g + idx[:, 2]) * g + idx[:, 3]
    counts = np.bincount(flat, minlength=g**4)
    empirical = counts / len(points)
    return float(np.max(np.abs(empirical - 1.0 / g**4)))


def pushforward_histogram(
    sys: ShubSystem, points: list[ProductPoint], depth: int, boxes_per_axis: int
) -> list[tuple[int, int, float]]:
    """(box index, count, expected count) rows for CSV export."""
    g = boxes_per_axis
    coords = np.array([p.as_array() for p in points])
    h1, h2, _ = engine.h_approx_batch(
        sys, coords[:, 0].copy(), coords[:, 1].copy(), coords[:, 2].copy(), coords[:, 3].copy(), depth
    )
    stacked = np.column_stack([coords[:, 0], coords[:, 1], h1, h2])
    idx = np.minimum((stacked * g).astype(int), g - 1)
    flat = ((idx[:, 0] * g + idx[:, 1]) * g + idx[:, 2]) * g + idx[:, 3]
    counts = np.bincount(flat, minlength=g**4)
    expected = len(points) / g**4
    return [(i, int(c), expected) for i, c in enumerate(counts)]


def class_collapse_error(sys: ShubSystem, census_result, depth: int) -> float:
    """Max distance from h(solution) to its class's model pair.

    Every solution of a periodic class must collapse onto (base, target)
    under the semi-conjugacy; the returned sup is the worst offender.
    """
    worst = 0.0
    for cls in census_result.classes:
        for sol in cls.solutions:
            image = h_approx(sys, ProductPoint(cls.base_point, sol.fiber), depth)
            err = max(
                torus_distance(image.base, cls.base_point),
                torus_distance(image.fiber, cls.target_fiber),
            )
            worst = max(worst, err)
    return worst
