"""Bump profile, fiber chart and the time-T fiber flow with its Jacobian.

The fiber vector field is u1' = 0, u2' = u2 * beta * b(|(u1,u2)|) where
beta = b(base distance) is frozen during a step.  The flow is integrated by
classical fixed-step RK4 together with the variational equations for the
lower-triangular Jacobian entries J21 and J22 (J11 = 1 and J12 = 0 hold
exactly because u1 never moves).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OutsideChart, StepTooCoarse
from .torus import HyperbolicAutomorphism, TorusPoint, wrap_coordinate

#: Ambient validity radius of the fiber chart: half the injectivity radius
#: of the unit torus, so shortest representatives are unambiguous.
CHART_RADIUS = 0.25

_T_UNDERFLOW = 1.5e-3  # below this, exp(-1/t) is exactly 0.0 in float64


@dataclass(frozen=True)
class BumpProfile:
    """Radial bump: 1 on [0, rho/2], 0 on [rho, inf), monotone between.

    kind 'smooth_exp' uses the standard C-infinity partition function
    s(t) = f(t) / (f(t) + f(1-t)) with f(t) = exp(-1/t); kind 'quintic' is a
    cheaper C^2 smoothstep accepted behind this switch.
    """

    rho: float
    kind: str = "smooth_exp"

    def __post_init__(self) -> None:
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.kind not in ("smooth_exp", "quintic"):
            raise ValueError(f"unknown bump kind {self.kind!r}")


def bump_value(profile: BumpProfile, r: float) -> float:
    """b(r): exactly 1 for r <= rho/2, exactly 0 for r >= rho."""
    return bump_value_and_slope(profile, r)[0]


def bump_value_and_slope(profile: BumpProfile, r: float) -> tuple[float, float]:
    """(b(r), db/dr) as plain floats; the slope feeds the variational system."""
    if r < 0:
        raise ValueError(f"radius must be >= 0, got {r}")
    rho = profile.rho
    half = 0.5 * rho
    if r <= half:
        return 1.0, 0.0
    if r >= rho:
        return 0.0, 0.0
    t = (rho - r) / half
    if profile.kind == "quintic":
        p = t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
        dp = 30.0 * t * t * (1.0 - t) * (1.0 - t)
        return p, -dp / half
    f = math.exp(-1.0 / t) if t > _T_UNDERFLOW else 0.0
    g = math.exp(-1.0 / (1.0 - t)) if (1.0 - t) > _T_UNDERFLOW else 0.0
    denom = f + g
    b = f / denom
    if f > 0.0 and g > 0.0:
        slope_t = f * g * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / (denom * denom)
    else:
        slope_t = 0.0
    return b, -slope_t / half


def bump_array(profile: BumpProfile, r: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (b(r), db/dr); mirrors bump_value_and_slope elementwise."""
    rho = profile.rho
    half = 0.5 * rho
    r = np.asarray(r, dtype=float)
    b = np.zeros_like(r)
    db = np.zeros_like(r)
    b[r <= half] = 1.0
    trans = (r > half) & (r < rho)
    if not np.any(trans):
        return b, db
    t = (rho - r[trans]) / half
    if profile.kind == "quintic":
        bt = t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
        dbt = 30.0 * t * t * (1.0 - t) * (1.0 - t)
    else:
        f = np.where(t > _T_UNDERFLOW, np.exp(-1.0 / np.maximum(t, _T_UNDERFLOW)), 0.0)
        g1 = 1.0 - t
        g = np.where(g1 > _T_UNDERFLOW, np.exp(-1.0 / np.maximum(g1, _T_UNDERFLOW)), 0.0)
        denom = f + g
        bt = f / denom
        ok = (f > 0.0) & (g > 0.0)
        dbt = np.zeros_like(t)
        ts = np.maximum(t, _T_UNDERFLOW)
        gs = np.maximum(g1, _T_UNDERFLOW)
        dbt[ok] = (f * g * (1.0 / (ts * ts) + 1.0 / (gs * gs)) / (denom * denom))[ok]
    b[trans] = bt
    db[trans] = -dbt / half
    return b, db


@dataclass(frozen=True)
class FiberChart:
    """Fiber point relative to theta0 in the (v_u, v_s) eigenbasis of L."""

    u1: float
    u2: float

    def norm(self) -> float:
        return math.hypot(self.u1, self.u2)


@dataclass(frozen=True)
class FlowResult:
    """Endpoint and variational Jacobian of one fiber-flow integration.

    The Jacobian is lower triangular with (1,1) entry exactly 1; the step
    counter makes the off-support shortcut observable.
    """

    endpoint: FiberChart
    jacobian: np.ndarray
    steps_performed: int = 0


def _identity_result(start: FiberChart) -> FlowResult:
    return FlowResult(endpoint=start, jacobian=np.eye(2), steps_performed=0)


def _rk4_fiber(profile, beta, u1, u2, j21, j22, t, steps):
    """Fixed-step RK4 on (u2, J21, J22) with u1 frozen."""
    h = t / steps

    def derivs(y2, p21, p22):
        r = math.hypot(u1, y2)
        b, db = bump_value_and_slope(profile, r)
        if r > 0.0:
            shear = beta * db * y2 / r
            df21 = shear * u1
            df22 = beta * b + shear * y2
        else:
            df21 = 0.0
            df22 = beta * b
        return beta * y2 * b, df21 + df22 * p21, df22 * p22

    for _ in range(steps):
        k1 = derivs(u2, j21, j22)
        k2 = derivs(u2 + 0.5 * h * k1[0], j21 + 0.5 * h * k1[1], j22 + 0.5 * h * k1[2])
        k3 = derivs(u2 + 0.5 * h * k2[0], j21 + 0.5 * h * k2[1], j22 + 0.5 * h * k2[2])
        k4 = derivs(u2 + h * k3[0], j21 + h * k3[1], j22 + h * k3[2])
        u2 += (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        j21 += (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        j22 += (h / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return u2, j21, j22


def integrate_flow(
    profile: BumpProfile,
    base_dist: float,
    start: FiberChart,
    t: float,
    steps: int,
    check_step: bool = False,
    check_tol: float = 1e-9,
) -> FlowResult:
    """Time-t fiber flow from `start` with base bump factor b(base_dist).

    Returns the start and an identity Jacobian bit-exactly, without touching
    the integrator, when the base factor vanishes or the start lies outside
    the closed fiber bump support (the exterior is invariant because the
    vector field vanishes there).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    beta = bump_value(profile, base_dist)
    if beta == 0.0 or t == 0.0:
        return _identity_result(start)
    if start.norm() >= profile.rho:
        return _identity_result(start)
    u2, j21, j22 = _rk4_fiber(profile, beta, start.u1, start.u2, 0.0, 1.0, t, steps)
    if check_step:
        u2_fine, _, _ = _rk4_fiber(profile, beta, start.u1, start.u2, 0.0, 1.0, t, 2 * steps)
        if abs(u2_fine - u2) > check_tol:
            raise StepTooCoarse(
                f"half-step check moved endpoint by {abs(u2_fine - u2):.3e} "
                f"(> {check_tol:.1e}); increase steps from {steps}"
            )
    jac = np.array([[1.0, 0.0], [j21, j22]])
    return FlowResult(endpoint=FiberChart(start.u1, u2), jacobian=jac, steps_performed=steps)


def chart_basis(l_data: HyperbolicAutomorphism) -> tuple[np.ndarray, np.ndarray]:
    """Column basis M = [v_u | v_s] of the fiber chart and its exact inverse."""
    m = np.column_stack([l_data.v_u, l_data.v_s])
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    m_inv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]]) / det
    return m, m_inv


def chart_from_torus(
    l_data: HyperbolicAutomorphism,
    theta0: TorusPoint,
    y: TorusPoint,
    radius: float = CHART_RADIUS,
) -> FiberChart:
    """Chart coordinates of y about theta0, via the shortest representative."""
    d1 = wrap_coordinate(y.x1 - theta0.x1)
    d2 = wrap_coordinate(y.x2 - theta0.x2)
    if math.hypot(d1, d2) > radius:
        raise OutsideChart(
            f"point at ambient distance {math.hypot(d1, d2):.4f} exceeds "
            f"chart radius {radius}"
        )
    _, m_inv = chart_basis(l_data)
    return FiberChart(
        m_inv[0, 0] * d1 + m_inv[0, 1] * d2,
        m_inv[1, 0] * d1 + m_inv[1, 1] * d2,
    )


def chart_to_torus(
    l_data: HyperbolicAutomorphism, theta0: TorusPoint, chart: FiberChart
) -> TorusPoint:
    """Inverse of chart_from_torus."""
    m, _ = chart_basis(l_data)
    d1 = m[0, 0] * chart.u1 + m[0, 1] * chart.u2
    d2 = m[1, 0] * chart.u1 + m[1, 1] * chart.u2
    return TorusPoint(theta0.x1 + d1, theta0.x2 + d2)
