"""Census of periodic points of the skew product.

Every n-periodic point of the product model (base n-periodic under Phi,
fiber n-periodic under L) seeds one fiber fixed-point problem: Newton on the
wrap-aware return displacement of g^n, plus, for classes sitting over the
shared fiber fixed point theta0 whose base orbit visits the bump ball, a 1-D
root sweep along the invariant center leaf {u1 = 0}.  Each class carries its
1..3 solutions with multipliers and stability labels; counts outside [1, 3]
are a hard failure.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import engine
from .errors import CapExceeded, CountOutOfRange, EpsilonTooLarge, NewtonDiverged
from .system import ProductPoint, ShubSystem, fiber_cocycle, map_forward
from .torus import (
    IntMatrix2,
    RationalPoint,
    TorusPoint,
    periodic_count,
    periodic_lattice,
    torus_distance,
    wrap_coordinate,
)

NEWTON_TOL = 1e-11
NEWTON_MAX_ITER = 50
RESIDUAL_TOL = 1e-8
DEDUPE_TOL = 1e-7
HYPERBOLICITY_TOL = 1e-8
SWEEP_GRID = 4096
SWEEP_REFINE_TOL = 1e-12

SADDLE = "saddle-index2"
SOURCE = "source-index3"
WARNING = "nonhyperbolic-warning"


@dataclass(frozen=True, slots=True)
class PeriodicSolution:
    """One fiber fixed point of g^n with its multipliers."""

    fiber: TorusPoint
    mult_u: float
    mult_c: float
    stability: str


@dataclass(frozen=True, slots=True)
class PeriodicClass:
    """All skew-product periodic points sitting over one model pair."""

    n: int
    base_point: TorusPoint
    target_fiber: TorusPoint
    solutions: tuple[PeriodicSolution, ...]
    base_exact: RationalPoint = field(compare=False)
    target_exact: RationalPoint = field(compare=False)


@dataclass(frozen=True)
class PeriodicCensus:
    """Census of Per_n together with the model totals."""

    n: int
    classes: tuple[PeriodicClass, ...]
    total_product_count: int
    total_skew_count: int
    system: ShubSystem

    def solution_points(self) -> list[ProductPoint]:
        return [
            ProductPoint(cls.base_point, sol.fiber)
            for cls in self.classes
            for sol in cls.solutions
        ]


def classify_stability(mult_c: float, tol: float = HYPERBOLICITY_TOL) -> str:
    """Stability label from the center multiplier (base and fiber-unstable
    multipliers always exceed 1 for a hyperbolic pair)."""
    if abs(mult_c - 1.0) <= tol:
        return WARNING
    return SOURCE if mult_c > 1.0 else SADDLE


def _orbit_of(m: IntMatrix2, point: RationalPoint, n: int) -> list[RationalPoint]:
    orbit = [point]
    current = point
    for _ in range(n - 1):
        current = m.apply_fraction(current)
        if current == point:
            break
        orbit.append(current)
    return orbit


def _return_displacement(sys: ShubSystem, base: TorusPoint, fiber: TorusPoint, n: int):
    pt = ProductPoint(base, fiber)
    for _ in range(n):
        pt = map_forward(sys, pt)
    return (
        wrap_coordinate(pt.fiber.x1 - fiber.x1),
        wrap_coordinate(pt.fiber.x2 - fiber.x2),
    )


def _newton(sys: ShubSystem, base: TorusPoint, seed: TorusPoint, n: int, damping: float):
    y1, y2 = seed.x1, seed.x2
    for _ in range(NEWTON_MAX_ITER):
        endpoint, jac_chart = fiber_cocycle(sys, ProductPoint(base, TorusPoint(y1, y2)), n)
        d1 = wrap_coordinate(endpoint.fiber.x1 - y1)
        d2 = wrap_coordinate(endpoint.fiber.x2 - y2)
        if math.hypot(d1, d2) < NEWTON_TOL:
            return TorusPoint(y1, y2), jac_chart
        jac_amb = sys.chart @ jac_chart @ sys.chart_inv
        try:
            step = np.linalg.solve(jac_amb - np.eye(2), [-d1, -d2])
        except np.linalg.LinAlgError as exc:
            raise NewtonDiverged(f"singular return Jacobian at seed ({seed.x1}, {seed.x2})") from exc
        norm = math.hypot(step[0], step[1])
        if norm > 0.25:
            step = step * (0.25 / norm)
        y1 = (y1 + damping * step[0]) % 1.0
        y2 = (y2 + damping * step[1]) % 1.0
    raise NewtonDiverged(
        f"no convergence in {NEWTON_MAX_ITER} iterations from seed ({seed.x1}, {seed.x2})"
    )


def _newton_solve(sys: ShubSystem, base: TorusPoint, seed: TorusPoint, n: int):
    try:
        return _newton(sys, base, seed, n, damping=1.0)
    except NewtonDiverged:
        return _newton(sys, base, seed, n, damping=0.5)


def _orbit_meets_ball(sys: ShubSystem, base_orbit_float: list[TorusPoint]) -> bool:
    q = sys.params.q
    return any(torus_distance(x, q) < sys.rho for x in base_orbit_float)


def _leaf_coordinate(sys: ShubSystem, fiber: TorusPoint) -> tuple[float, float]:
    """(u1, u2) chart coordinates of a fiber point about theta0."""
    th = sys.params.theta0
    w1 = wrap_coordinate(fiber.x1 - th.x1)
    w2 = wrap_coordinate(fiber.x2 - th.x2)
    mi = sys.chart_inv
    return mi[0, 0] * w1 + mi[0, 1] * w2, mi[1, 0] * w1 + mi[1, 1] * w2


def _leaf_point(sys: ShubSystem, s: float) -> TorusPoint:
    th = sys.params.theta0
    vs = sys.l_data.v_s
    return TorusPoint(th.x1 + s * vs[0], th.x2 + s * vs[1])


def _leaf_return(sys: ShubSystem, base: TorusPoint, s: float, n: int) -> float:
    pt = ProductPoint(base, _leaf_point(sys, s))
    for _ in range(n):
        pt = map_forward(sys, pt)
    _, u2 = _leaf_coordinate(sys, pt.fiber)
    return u2 - s


def _leaf_sweep(sys: ShubSystem, base: TorusPoint, n: int) -> list[float]:
    """Roots of the center-leaf return displacement on [-2 rho, 2 rho].

    The leaf {u1 = 0} is invariant because every fiber-step Jacobian is
    lower triangular, so the return map is a scalar function of the leaf
    coordinate; sign changes on a uniform grid are refined by bisection.
    """
    span = 2.0 * sys.rho
    grid = np.linspace(-span, span, SWEEP_GRID)
    vs = sys.l_data.v_s
    th = sys.params.theta0
    f1 = (th.x1 + grid * vs[0]) % 1.0
    f2 = (th.x2 + grid * vs[1]) % 1.0
    b1 = np.full(SWEEP_GRID, base.x1)
    b2 = np.full(SWEEP_GRID, base.x2)
    for _ in range(n):
        b1, b2, f1, f2, _ = engine.advance(sys, b1, b2, f1, f2)
    w1 = (f1 - th.x1 + 0.5) % 1.0 - 0.5
    w2 = (f2 - th.x2 + 0.5) % 1.0 - 0.5
    mi = sys.chart_inv
    u2 = mi[1, 0] * w1 + mi[1, 1] * w2
    disp = u2 - grid
    roots = []
    for i in range(SWEEP_GRID - 1):
        a, b = disp[i], disp[i + 1]
        if a == 0.0:
            roots.append(grid[i])
            continue
        if a * b < 0.0:
            lo, hi = grid[i], grid[i + 1]
            flo = a
            while hi - lo > SWEEP_REFINE_TOL:
                mid = 0.5 * (lo + hi)
                fmid = _leaf_return(sys, base, mid, n)
                if fmid == 0.0:
                    lo = hi = mid
                    break
                if flo * fmid < 0.0:
                    hi = mid
                else:
                    lo, flo = mid, fmid
            roots.append(0.5 * (lo + hi))
    if disp[-1] == 0.0:
        roots.append(grid[-1])
    return roots


def _multipliers(sys: ShubSystem, base: TorusPoint, fiber: TorusPoint, n: int):
    _, jac = fiber_cocycle(sys, ProductPoint(base, fiber), n)
    return jac[0, 0], jac[1, 1]


def solve_fiber_fixed_points(
    sys: ShubSystem,
    base_point: RationalPoint | TorusPoint,
    target_fiber: RationalPoint | TorusPoint,
    n: int,
) -> PeriodicClass:
    """Solve one periodic class: Newton from the model fiber point, plus the
    center-leaf sweep for theta0 classes whose base orbit meets the bump ball.
    """
    base_exact = _as_fraction_point(base_point)
    target_exact = _as_fraction_point(target_fiber)
    if sys.params.phi.power(n).apply_fraction(base_exact) != base_exact:
        raise ValueError(f"base point {base_exact} is not n-periodic (n={n})")
    if sys.params.l_matrix.power(n).apply_fraction(target_exact) != target_exact:
        raise ValueError(f"target fiber {target_exact} is not n-periodic under L (n={n})")

    base = TorusPoint.from_fractions(base_exact)
    target = TorusPoint.from_fractions(target_exact)
    base_orbit = [TorusPoint.from_fractions(x) for x in _orbit_of(sys.params.phi, base_exact, n)]

    candidates: list[TorusPoint] = []
    newton_failure: NewtonDiverged | None = None
    try:
        sol, _ = _newton_solve(sys, base, target, n)
        candidates.append(sol)
    except NewtonDiverged as exc:
        newton_failure = exc

    theta0_exact = _as_fraction_point(sys.params.theta0)
    if target_exact == theta0_exact and sys.bump_enabled and _orbit_meets_ball(sys, base_orbit):
        for s in _leaf_sweep(sys, base, n):
            candidates.append(_leaf_point(sys, s))

    if not candidates and newton_failure is not None:
        raise newton_failure

    solutions = _finalize_solutions(sys, base, candidates, n)
    if not 1 <= len(solutions) <= 3:
        raise CountOutOfRange(
            f"class over base ({base.x1:.6f}, {base.x2:.6f}) target "
            f"({target.x1:.6f}, {target.x2:.6f}) produced {len(solutions)} solutions"
        )
    return PeriodicClass(
        n=n,
        base_point=base,
        target_fiber=target,
        solutions=tuple(solutions),
        base_exact=base_exact,
        target_exact=target_exact,
    )


def _finalize_solutions(
    sys: ShubSystem, base: TorusPoint, candidates: list[TorusPoint], n: int
) -> list[PeriodicSolution]:
    kept: list[TorusPoint] = []
    for cand in candidates:
        d1, d2 = _return_displacement(sys, base, cand, n)
        if math.hypot(d1, d2) >= RESIDUAL_TOL:
            continue
        if any(torus_distance(cand, other) < DEDUPE_TOL for other in kept):
            continue
        kept.append(cand)
    kept.sort(key=lambda t: (t.x1, t.x2))
    out = []
    for fiber in kept:
        mult_u, mult_c = _multipliers(sys, base, fiber, n)
        out.append(
            PeriodicSolution(
                fiber=fiber,
                mult_u=mult_u,
                mult_c=mult_c,
                stability=classify_stability(mult_c),
            )
        )
    return out


def _as_fraction_point(point) -> RationalPoint:
    if isinstance(point, TorusPoint):
        return (Fraction(point.x1) % 1, Fraction(point.x2) % 1)
    return (Fraction(point[0]) % 1, Fraction(point[1]) % 1)


def _pair_orbits(
    phi: IntMatrix2, l_matrix: IntMatrix2, n: int, cap: int
) -> list[list[tuple[RationalPoint, RationalPoint]]]:
    """Group Per_n(Phi) x Per_n(L) into product-map orbits."""
    base_points = periodic_lattice(phi, n, cap)
    fiber_points = periodic_lattice(l_matrix, n, cap)
    visited: set[tuple[RationalPoint, RationalPoint]] = set()
    orbits = []
    for bp in base_points:
        for fp in fiber_points:
            key = (bp, fp)
            if key in visited:
                continue
            orbit = []
            cur = key
            while cur not in visited:
                visited.add(cur)
                orbit.append(cur)
                cur = (phi.apply_fraction(cur[0]), l_matrix.apply_fraction(cur[1]))
            orbits.append(orbit)
    return orbits


def _propagate_class(sys: ShubSystem, cls: PeriodicClass, pair: tuple[RationalPoint, RationalPoint]):
    """Image class of cls under one application of the skew product."""
    new_solutions = []
    base = cls.base_point
    for sol in cls.solutions:
        image = map_forward(sys, ProductPoint(base, sol.fiber))
        d1, d2 = _return_displacement(sys, image.base, image.fiber, cls.n)
        if math.hypot(d1, d2) >= RESIDUAL_TOL:
            raise CountOutOfRange(
                f"propagated solution lost periodicity (residual {math.hypot(d1, d2):.2e})"
            )
        new_solutions.append(
            PeriodicSolution(
                fiber=image.fiber,
                mult_u=sol.mult_u,
                mult_c=sol.mult_c,
                stability=sol.stability,
            )
        )
    new_solutions.sort(key=lambda s: (s.fiber.x1, s.fiber.x2))
    return PeriodicClass(
        n=cls.n,
        base_point=TorusPoint.from_fractions(pair[0]),
        target_fiber=TorusPoint.from_fractions(pair[1]),
        solutions=tuple(new_solutions),
        base_exact=pair[0],
        target_exact=pair[1],
    )


def _solve_orbit(args) -> list[PeriodicClass]:
    sys, orbit, n = args
    rep_base, rep_fiber = orbit[0]
    rep_class = solve_fiber_fixed_points(sys, rep_base, rep_fiber, n)
    classes = [rep_class]
    current = rep_class
    for pair in orbit[1:]:
        current = _propagate_class(sys, current, pair)
        classes.append(current)
    return classes


def census(
    sys: ShubSystem, n: int, cap: int = 2_000_000, threads: int = 1
) -> PeriodicCensus:
    """Solve every periodic class of period n and assemble the totals.

    Work is partitioned by product-map orbit; each orbit is solved once at a
    representative and transported along the orbit by the skew product.  The
    merged class list is sorted by the exact rational (base, fiber) key, so
    the output is deterministic for any thread count.
    """
    total_product = periodic_count(sys.params.phi, n) * periodic_count(sys.params.l_matrix, n)
    if total_product > cap:
        raise CapExceeded(f"product count {total_product} exceeds cap {cap} at n={n}")
    orbits = _pair_orbits(sys.params.phi, sys.params.l_matrix, n, cap)
    tasks = [(sys, orbit, n) for orbit in orbits]
    if threads > 1 and len(tasks) > 1:
        chunk = max(1, len(tasks) // (threads * 8))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_solve_orbit, tasks, chunksize=chunk))
    else:
        results = [_solve_orbit(t) for t in tasks]
    classes = [cls for group in results for cls in group]
    classes.sort(key=lambda c: (c.base_exact, c.target_exact))
    total_skew = sum(len(c.solutions) for c in classes)
    if not total_product <= total_skew <= 3 * total_product:
        raise CountOutOfRange(
            f"census totals violate the sandwich: {total_product} <= {total_skew} "
            f"<= {3 * total_product} fails at n={n}"
        )
    return PeriodicCensus(
        n=n,
        classes=tuple(classes),
        total_product_count=total_product,
        total_skew_count=total_skew,
        system=sys,
    )


def _orbit_window(sys: ShubSystem, points: list[ProductPoint], horizon: int) -> np.ndarray:
    """Array (P, 2*horizon+1, 4) of orbit segments F^i(P), |i| <= horizon."""
    count = len(points)
    coords = np.array([p.as_array() for p in points])
    out = np.empty((count, 2 * horizon + 1, 4))
    out[:, horizon, :] = coords
    b1, b2, f1, f2 = coords[:, 0].copy(), coords[:, 1].copy(), coords[:, 2].copy(), coords[:, 3].copy()
    for i in range(1, horizon + 1):
        b1, b2, f1, f2, _ = engine.advance(sys, b1, b2, f1, f2)
        out[:, horizon + i, 0], out[:, horizon + i, 1] = b1, b2
        out[:, horizon + i, 2], out[:, horizon + i, 3] = f1, f2
    b1, b2, f1, f2 = coords[:, 0].copy(), coords[:, 1].copy(), coords[:, 2].copy(), coords[:, 3].copy()
    for i in range(1, horizon + 1):
        b1, b2, f1, f2, _ = engine.advance_inverse(sys, b1, b2, f1, f2)
        out[:, horizon - i, 0], out[:, horizon - i, 1] = b1, b2
        out[:, horizon - i, 2], out[:, horizon - i, 3] = f1, f2
    return out


def _product_metric_max(windows: np.ndarray, i: int, chunk: np.ndarray) -> np.ndarray:
    """sup over the window of the product metric between point i and a chunk."""
    diff = np.abs(windows[i][None, :, :] - chunk)
    diff = np.minimum(diff % 1.0, 1.0 - diff % 1.0)
    base = np.hypot(diff[..., 0], diff[..., 1])
    fiber = np.hypot(diff[..., 2], diff[..., 3])
    return np.max(np.maximum(base, fiber), axis=1)


def _base_orbit_separation(sys: ShubSystem, n: int, horizon: int, cap: int) -> float:
    """Minimum over distinct base orbits of the windowed sup-distance."""
    base_points = periodic_lattice(sys.params.phi, n, cap)
    orbit_id: dict[RationalPoint, int] = {}
    next_id = 0
    for bp in base_points:
        if bp in orbit_id:
            continue
        for x in _orbit_of(sys.params.phi, bp, n):
            orbit_id[x] = next_id
        next_id += 1
    pts = np.array([[float(b[0]), float(b[1])] for b in base_points])
    ids = np.array([orbit_id[b] for b in base_points])
    phi = sys.params.phi
    window = [pts]
    fwd = pts.copy()
    bwd = pts.copy()
    phi_inv = phi.inverse_unimodular()
    for _ in range(horizon):
        fwd = np.column_stack(
            ((phi.a11 * fwd[:, 0] + phi.a12 * fwd[:, 1]) % 1.0,
             (phi.a21 * fwd[:, 0] + phi.a22 * fwd[:, 1]) % 1.0)
        )
        bwd = np.column_stack(
            ((phi_inv.a11 * bwd[:, 0] + phi_inv.a12 * bwd[:, 1]) % 1.0,
             (phi_inv.a21 * bwd[:, 0] + phi_inv.a22 * bwd[:, 1]) % 1.0)
        )
        window.append(fwd.copy())
        window.append(bwd.copy())
    stack = np.stack(window, axis=1)  # (P, W, 2)
    best = math.inf
    for i in range(len(base_points)):
        other = ids != ids[i]
        if not np.any(other):
            continue
        diff = np.abs(stack[i][None, :, :] - stack[other])
        diff = np.minimum(diff % 1.0, 1.0 - diff % 1.0)
        dist = np.max(np.hypot(diff[..., 0], diff[..., 1]), axis=1)
        best = min(best, float(dist.min()))
    return best


def bowen_clusters(
    census_result: PeriodicCensus, epsilon: float, horizon: int, cap: int = 2_000_000
) -> list[list[int]]:
    """For each census point, the indices whose orbits stay epsilon-close
    over the window |i| <= horizon (product sup metric).

    Requires epsilon below half the windowed separation of distinct base
    orbits so clusters cannot straddle base orbits.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    sys = census_result.system
    sep = _base_orbit_separation(sys, census_result.n, horizon, cap)
    if not epsilon < 0.5 * sep:
        raise EpsilonTooLarge(
            f"epsilon = {epsilon} must be below half the base-orbit separation "
            f"{sep:.6f} at n={census_result.n}"
        )
    points = census_result.solution_points()
    if not points:
        return []
    windows = _orbit_window(sys, points, horizon)
    count = len(points)
    # Cell hash on the time-0 coordinates: members of a cluster are already
    # epsilon-close at i = 0, so only neighbor-cell pairs need the full
    # windowed comparison.
    grid = max(1, int(1.0 / epsilon))
    cells: dict[tuple[int, int, int, int], list[int]] = {}
    coords = windows[:, horizon, :]
    keys = np.floor(coords * grid).astype(int) % grid
    for i in range(count):
        cells.setdefault(tuple(keys[i]), []).append(i)
    offsets = [-1, 0, 1]
    clusters: list[list[int]] = []
    for i in range(count):
        k = keys[i]
        candidates = []
        for o1 in offsets:
            for o2 in offsets:
                for o3 in offsets:
                    for o4 in offsets:
                        cell = (
                            (k[0] + o1) % grid,
                            (k[1] + o2) % grid,
                            (k[2] + o3) % grid,
                            (k[3] + o4) % grid,
                        )
                        candidates.extend(cells.get(cell, ()))
        candidates = sorted(set(candidates))
        dist = _product_metric_max(windows, i, windows[candidates])
        clusters.append([candidates[j] for j in np.nonzero(dist <= epsilon)[0]])
    return clusters


def write_census_csv(census_result: PeriodicCensus, path) -> None:
    """CSV export: one row per solution, classes identified by sorted rank."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["n", "base_x1", "base_x2", "fiber_x1", "fiber_x2", "mult_u", "mult_c", "stability", "class_id"]
        )
        for class_id, cls in enumerate(census_result.classes):
            for sol in cls.solutions:
                writer.writerow(
                    [
                        census_result.n,
                        repr(cls.base_point.x1),
                        repr(cls.base_point.x2),
                        repr(sol.fiber.x1),
                        repr(sol.fiber.x2),
                        repr(sol.mult_u),
                        repr(sol.mult_c),
                        sol.stability,
                        class_id,
                    ]
                )
