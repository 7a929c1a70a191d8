"""Assembly and validation of the skew product F = flow_T o (Phi x L).

The fiber map over base x is psi^T indexed by Phi(x) composed with L; its
derivative in the (v_u, v_s) chart basis of L is lower triangular with
(1,1) entry exactly lambda_u, which the cocycle helpers preserve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    BadFlowTime,
    GammaOrderViolated,
    JacobianOverflow,
    NotFixedPoint,
    RhoTooLarge,
    SupportHitsP,
)
from .perturbation import (
    BumpProfile,
    FiberChart,
    bump_value,
    chart_basis,
    integrate_flow,
)
from .torus import (
    HyperbolicAutomorphism,
    IntMatrix2,
    TorusPoint,
    eigen_data,
    torus_distance,
    wrap_coordinate,
)

MAX_CHART_RHO = 0.25  # chart safety: rho must stay below a quarter period


@dataclass(frozen=True)
class ProductPoint:
    """Point of T^2 x T^2 as a (base, fiber) pair."""

    base: TorusPoint
    fiber: TorusPoint

    def as_array(self) -> np.ndarray:
        return np.array([self.base.x1, self.base.x2, self.fiber.x1, self.fiber.x2])


@dataclass(frozen=True)
class ShubParams:
    """Raw parameter bundle; use validate_params to obtain a ShubSystem.

    T = 0 is admitted as the exact homotopy start (perturbation disabled,
    the map is the plain product Phi x L); any positive T must satisfy
    1 < lambda_s * e^T < lambda_u.
    """

    phi: IntMatrix2
    l_matrix: IntMatrix2
    flow_time: float
    q: TorusPoint
    p: TorusPoint
    theta0: TorusPoint
    bump: BumpProfile
    integrator_steps: int = 64


@dataclass(frozen=True)
class ShubSystem:
    """Validated parameters plus cached eigen-data and chart basis."""

    params: ShubParams
    phi_data: HyperbolicAutomorphism
    l_data: HyperbolicAutomorphism
    chart: np.ndarray
    chart_inv: np.ndarray

    @property
    def bump_enabled(self) -> bool:
        return self.params.flow_time != 0.0

    @property
    def flow_time(self) -> float:
        return self.params.flow_time

    @property
    def rho(self) -> float:
        return self.params.bump.rho

    @property
    def lambda_u(self) -> float:
        return self.l_data.lambda_u

    @property
    def lambda_s(self) -> float:
        return self.l_data.lambda_s

    @property
    def beta1(self) -> float:
        """Expanding eigenvalue of the base map."""
        return self.phi_data.lambda_u

    @property
    def beta2(self) -> float:
        """Expanding eigenvalue of the fiber automorphism."""
        return self.l_data.lambda_u

    def gamma_bounds(self) -> tuple[float, float]:
        """(gamma1, gamma2): the center multiplier window of the fiber maps."""
        g1 = abs(self.lambda_s)
        return g1, g1 * math.exp(self.flow_time)


def _is_exact_fixed_point(m: IntMatrix2, pt: TorusPoint) -> bool:
    x = (Fraction(pt.x1), Fraction(pt.x2))
    return m.apply_fraction(x) == (x[0] % 1, x[1] % 1)


def validate_params(params: ShubParams) -> ShubSystem:
    """Check every structural inequality and return a system handle.

    The first violated condition raises, naming the inequality together
    with the numeric values that broke it.
    """
    phi_data = eigen_data(params.phi)
    l_data = eigen_data(params.l_matrix)

    if not _is_exact_fixed_point(params.phi, params.q):
        raise NotFixedPoint(f"q = ({params.q.x1}, {params.q.x2}) is not fixed by the base map")
    if not _is_exact_fixed_point(params.phi, params.p):
        raise NotFixedPoint(f"p = ({params.p.x1}, {params.p.x2}) is not fixed by the base map")
    if not _is_exact_fixed_point(params.l_matrix, params.theta0):
        raise NotFixedPoint(
            f"theta0 = ({params.theta0.x1}, {params.theta0.x2}) is not fixed by the fiber map"
        )

    lam_u = abs(l_data.lambda_u)
    lam_s = abs(l_data.lambda_s)
    t = params.flow_time
    if t < 0:
        raise BadFlowTime(f"flow time T = {t} must be >= 0")
    if t > 0:
        stretched = lam_s * math.exp(t)
        if not (1.0 < stretched):
            raise BadFlowTime(
                f"lambda_s * e^T = {stretched:.6f} <= 1 (T = {t}); center leaves no expansion"
            )
        if not (stretched < lam_u):
            raise BadFlowTime(
                f"lambda_s * e^T = {stretched:.6f} >= lambda_u = {lam_u:.6f} (T = {t})"
            )

    rho = params.bump.rho
    sep = torus_distance(params.p, params.q)
    if not (sep > rho):
        raise SupportHitsP(
            f"torus distance |p - q| = {sep:.6f} must exceed the bump radius rho = {rho}"
        )

    gamma = 1.0 / abs(phi_data.lambda_u)
    if not (gamma < lam_s):
        raise GammaOrderViolated(
            f"base contraction gamma = {gamma:.6f} must be < gamma1 = lambda_s = {lam_s:.6f}"
        )

    if not (rho < MAX_CHART_RHO):
        raise RhoTooLarge(f"rho = {rho} must be < {MAX_CHART_RHO} for chart safety")

    if params.integrator_steps < 1:
        raise ValueError("integrator_steps must be >= 1")

    m, m_inv = chart_basis(l_data)
    return ShubSystem(params=params, phi_data=phi_data, l_data=l_data, chart=m, chart_inv=m_inv)


def _apply_int_matrix(m: IntMatrix2, x1: float, x2: float) -> tuple[float, float]:
    return (m.a11 * x1 + m.a12 * x2) % 1.0, (m.a21 * x1 + m.a22 * x2) % 1.0


def _fiber_step(
    sys: ShubSystem, base_after: tuple[float, float], fiber: TorusPoint
) -> tuple[TorusPoint, float, float, float]:
    """One forward fiber step over an already-advanced base point.

    Returns (fiber image, J21, J22, displacement) where (J21, J22) are the
    flow's variational entries (identity when the flow is inactive) and the
    displacement is the signed v_s shift added on top of L.
    """
    y1, y2 = _apply_int_matrix(sys.params.l_matrix, fiber.x1, fiber.x2)
    if not sys.bump_enabled:
        return TorusPoint(y1, y2), 0.0, 1.0, 0.0
    base_dist = torus_distance(base_after, (sys.params.q.x1, sys.params.q.x2))
    if base_dist >= sys.rho:
        return TorusPoint(y1, y2), 0.0, 1.0, 0.0
    w1 = wrap_coordinate(y1 - sys.params.theta0.x1)
    w2 = wrap_coordinate(y2 - sys.params.theta0.x2)
    mi = sys.chart_inv
    u1 = mi[0, 0] * w1 + mi[0, 1] * w2
    u2 = mi[1, 0] * w1 + mi[1, 1] * w2
    if math.hypot(u1, u2) >= sys.rho:
        return TorusPoint(y1, y2), 0.0, 1.0, 0.0
    res = integrate_flow(
        sys.params.bump, base_dist, FiberChart(u1, u2), sys.flow_time, sys.params.integrator_steps
    )
    m = sys.chart
    d1 = m[0, 0] * res.endpoint.u1 + m[0, 1] * res.endpoint.u2
    d2 = m[1, 0] * res.endpoint.u1 + m[1, 1] * res.endpoint.u2
    out = TorusPoint(sys.params.theta0.x1 + d1, sys.params.theta0.x2 + d2)
    return out, res.jacobian[1, 0], res.jacobian[1, 1], res.endpoint.u2 - u2


def map_forward(sys: ShubSystem, pt: ProductPoint) -> ProductPoint:
    """F(x, y) = (Phi x, psi^T over Phi x applied to L y)."""
    bx = _apply_int_matrix(sys.params.phi, pt.base.x1, pt.base.x2)
    fiber, _, _, _ = _fiber_step(sys, bx, pt.fiber)
    return ProductPoint(TorusPoint(*bx), fiber)


def map_forward_with_jac(
    sys: ShubSystem, pt: ProductPoint
) -> tuple[ProductPoint, np.ndarray]:
    """Forward image plus the fiber-step Jacobian in the chart basis."""
    bx = _apply_int_matrix(sys.params.phi, pt.base.x1, pt.base.x2)
    fiber, j21, j22, _ = _fiber_step(sys, bx, pt.fiber)
    lu, ls = sys.lambda_u, sys.lambda_s
    jac = np.array([[lu, 0.0], [lu * j21, ls * j22]])
    return ProductPoint(TorusPoint(*bx), fiber), jac


def displacement_term(sys: ShubSystem, pt: ProductPoint) -> float:
    """Signed v_s shift of the fiber image relative to plain L; 0 off support."""
    bx = _apply_int_matrix(sys.params.phi, pt.base.x1, pt.base.x2)
    _, _, _, disp = _fiber_step(sys, bx, pt.fiber)
    return disp


def map_inverse(sys: ShubSystem, pt: ProductPoint) -> ProductPoint:
    """Exact inverse composition: undo the flow over the current base, then
    L^-1 on the fiber and Phi^-1 on the base."""
    pt2, _ = map_inverse_with_disp(sys, pt)
    return pt2


def map_inverse_with_disp(
    sys: ShubSystem, pt: ProductPoint
) -> tuple[ProductPoint, float]:
    """Inverse image plus the displacement of the forward step it undoes."""
    y1, y2 = pt.fiber.x1, pt.fiber.x2
    disp = 0.0
    if sys.bump_enabled:
        base_dist = torus_distance(pt.base, sys.params.q)
        if base_dist < sys.rho:
            w1 = wrap_coordinate(y1 - sys.params.theta0.x1)
            w2 = wrap_coordinate(y2 - sys.params.theta0.x2)
            mi = sys.chart_inv
            u1 = mi[0, 0] * w1 + mi[0, 1] * w2
            u2 = mi[1, 0] * w1 + mi[1, 1] * w2
            if math.hypot(u1, u2) < sys.rho:
                res = integrate_flow(
                    sys.params.bump,
                    base_dist,
                    FiberChart(u1, u2),
                    -sys.flow_time,
                    sys.params.integrator_steps,
                )
                m = sys.chart
                d1 = m[0, 0] * res.endpoint.u1 + m[0, 1] * res.endpoint.u2
                d2 = m[1, 0] * res.endpoint.u1 + m[1, 1] * res.endpoint.u2
                y1 = (sys.params.theta0.x1 + d1) % 1.0
                y2 = (sys.params.theta0.x2 + d2) % 1.0
                disp = u2 - res.endpoint.u2
    phi_inv = sys.params.phi.inverse_unimodular()
    l_inv = sys.params.l_matrix.inverse_unimodular()
    bx = _apply_int_matrix(phi_inv, pt.base.x1, pt.base.x2)
    fy = _apply_int_matrix(l_inv, y1, y2)
    return ProductPoint(TorusPoint(*bx), TorusPoint(*fy)), disp


def full_derivative(sys: ShubSystem, pt: ProductPoint, fd_step: float = 1e-6) -> np.ndarray:
    """Block lower-triangular 4x4 derivative at pt.

    Base block is the constant matrix of Phi in ambient coordinates; the
    fiber block is the chart-basis step Jacobian (lower triangular, (1,1)
    exactly lambda_u).  The mixed block, the fiber image's sensitivity to
    the base point, is filled by central differences and expressed with
    chart rows so the whole matrix lives in one consistent frame.
    """
    out = np.zeros((4, 4))
    out[:2, :2] = sys.params.phi.as_array()
    _, jac = map_forward_with_jac(sys, pt)
    out[2:, 2:] = jac

    mixed = np.zeros((2, 2))
    for j in range(2):
        shifts = [fd_step, -fd_step]
        images = []
        for s in shifts:
            if j == 0:
                bpt = TorusPoint(pt.base.x1 + s, pt.base.x2)
            else:
                bpt = TorusPoint(pt.base.x1, pt.base.x2 + s)
            img = map_forward(sys, ProductPoint(bpt, pt.fiber)).fiber
            images.append(img)
        mixed[0, j] = wrap_coordinate(images[0].x1 - images[1].x1) / (2 * fd_step)
        mixed[1, j] = wrap_coordinate(images[0].x2 - images[1].x2) / (2 * fd_step)
    out[2:, :2] = sys.chart_inv @ mixed
    return out


def fiber_cocycle(
    sys: ShubSystem, start: ProductPoint, n: int, overflow_limit: float = 1e300
) -> tuple[ProductPoint, np.ndarray]:
    """Endpoint of n forward steps and the accumulated fiber Jacobian.

    The product of lower-triangular step Jacobians stays lower triangular
    with (1,1) entry lambda_u^n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pt = start
    total = np.eye(2)
    for k in range(n):
        pt, step = map_forward_with_jac(sys, pt)
        total = step @ total
        if np.max(np.abs(total)) > overflow_limit:
            raise JacobianOverflow(f"fiber cocycle entry exceeded {overflow_limit:.1e} at step {k + 1}")
    return pt, total
