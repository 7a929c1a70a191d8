"""Vectorized orbit kernels used by the statistics and sweep machinery.

All kernels operate on parallel 1-D coordinate arrays (one slot per orbit)
and apply the exact same formulas as the scalar maps in system.py; only the
rows whose fiber point actually sits inside the bump support go through the
RK4 integrator, everything else keeps the plain L image bit-exactly.
"""

from __future__ import annotations

import math

import numpy as np

from .perturbation import _rk4_fiber, bump_array
from .system import ShubSystem
from .torus import IntMatrix2

# Below this many active rows the per-row scalar integrator beats the
# vectorized one (numpy call overhead dominates tiny arrays).
_SCALAR_CUTOVER = 8


def _apply_matrix(m: IntMatrix2, x1: np.ndarray, x2: np.ndarray):
    return (m.a11 * x1 + m.a12 * x2) % 1.0, (m.a21 * x1 + m.a22 * x2) % 1.0


def _wrap(d: np.ndarray) -> np.ndarray:
    return (d + 0.5) % 1.0 - 0.5


def _torus_dist(x1, x2, q1, q2):
    d1 = np.abs(x1 - q1) % 1.0
    d2 = np.abs(x2 - q2) % 1.0
    d1 = np.minimum(d1, 1.0 - d1)
    d2 = np.minimum(d2, 1.0 - d2)
    return np.hypot(d1, d2)


def _rk4_dispatch(profile, beta, u1, u2, t, steps):
    """RK4 on parallel rows; falls back to the scalar kernel when the active
    set is small.  The choice depends only on the row count, so results are
    reproducible for a fixed batch regardless of scheduling."""
    if u2.size <= _SCALAR_CUTOVER:
        out2 = np.empty_like(u2)
        o21 = np.empty_like(u2)
        o22 = np.empty_like(u2)
        for i in range(u2.size):
            out2[i], o21[i], o22[i] = _rk4_fiber(
                profile, beta[i], u1[i], u2[i], 0.0, 1.0, t, steps
            )
        return out2, o21, o22
    return _rk4_batch(profile, beta, u1, u2, t, steps)


def _rk4_batch(profile, beta, u1, u2, t, steps):
    """Vectorized RK4 on (u2, J21, J22); u1 and beta are per-row constants."""
    h = t / steps
    j21 = np.zeros_like(u2)
    j22 = np.ones_like(u2)

    def derivs(y2, p21, p22):
        r = np.hypot(u1, y2)
        b, db = bump_array(profile, r)
        shear = np.where(r > 0.0, beta * db * y2 / np.where(r > 0.0, r, 1.0), 0.0)
        df21 = shear * u1
        df22 = beta * b + shear * y2
        return beta * y2 * b, df21 + df22 * p21, df22 * p22

    for _ in range(steps):
        k1 = derivs(u2, j21, j22)
        k2 = derivs(u2 + 0.5 * h * k1[0], j21 + 0.5 * h * k1[1], j22 + 0.5 * h * k1[2])
        k3 = derivs(u2 + 0.5 * h * k2[0], j21 + 0.5 * h * k2[1], j22 + 0.5 * h * k2[2])
        k4 = derivs(u2 + h * k3[0], j21 + h * k3[1], j22 + h * k3[2])
        u2 = u2 + (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        j21 = j21 + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        j22 = j22 + (h / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    return u2, j21, j22


def _flow_rows(sys: ShubSystem, base1, base2, y1, y2):
    """Rows where the flow over (base1, base2) is active, plus chart data.

    Returns (rows, u1, u2, beta) for the subset that must be integrated.
    """
    q = sys.params.q
    dist = _torus_dist(base1, base2, q.x1, q.x2)
    near = dist < sys.rho
    if not np.any(near):
        return None
    idx = np.nonzero(near)[0]
    th = sys.params.theta0
    w1 = _wrap(y1[idx] - th.x1)
    w2 = _wrap(y2[idx] - th.x2)
    mi = sys.chart_inv
    u1 = mi[0, 0] * w1 + mi[0, 1] * w2
    u2 = mi[1, 0] * w1 + mi[1, 1] * w2
    inner = np.hypot(u1, u2) < sys.rho
    if not np.any(inner):
        return None
    idx = idx[inner]
    u1 = u1[inner]
    u2 = u2[inner]
    beta, _ = bump_array(sys.params.bump, dist[idx])
    return idx, u1, u2, beta


def advance(sys: ShubSystem, bx1, bx2, fy1, fy2, want_jac=False, want_disp=False):
    """One forward step of the skew product on parallel orbits.

    Returns (bx1', bx2', fy1', fy2', extras) where extras is a dict holding
    'j21'/'j22' (flow variational entries, identity off support) and 'disp'
    (v_s displacement) when requested.
    """
    nb1, nb2 = _apply_matrix(sys.params.phi, bx1, bx2)
    ny1, ny2 = _apply_matrix(sys.params.l_matrix, fy1, fy2)
    extras = {}
    if want_jac:
        extras["j21"] = np.zeros_like(ny1)
        extras["j22"] = np.ones_like(ny1)
    if want_disp:
        extras["disp"] = np.zeros_like(ny1)
    if sys.bump_enabled:
        hit = _flow_rows(sys, nb1, nb2, ny1, ny2)
        if hit is not None:
            idx, u1, u2, beta = hit
            u2_new, j21, j22 = _rk4_dispatch(
                sys.params.bump, beta, u1, u2, sys.flow_time, sys.params.integrator_steps
            )
            m = sys.chart
            th = sys.params.theta0
            ny1[idx] = (th.x1 + m[0, 0] * u1 + m[0, 1] * u2_new) % 1.0
            ny2[idx] = (th.x2 + m[1, 0] * u1 + m[1, 1] * u2_new) % 1.0
            if want_jac:
                extras["j21"][idx] = j21
                extras["j22"][idx] = j22
            if want_disp:
                extras["disp"][idx] = u2_new - u2
    return nb1, nb2, ny1, ny2, extras


def advance_inverse(sys: ShubSystem, bx1, bx2, fy1, fy2, want_disp=False):
    """One backward step; optionally the displacement of the undone step."""
    extras = {}
    y1 = fy1.copy()
    y2 = fy2.copy()
    if want_disp:
        extras["disp"] = np.zeros_like(y1)
    if sys.bump_enabled:
        hit = _flow_rows(sys, bx1, bx2, y1, y2)
        if hit is not None:
            idx, u1, u2, beta = hit
            u2_new, _, _ = _rk4_dispatch(
                sys.params.bump, beta, u1, u2, -sys.flow_time, sys.params.integrator_steps
            )
            m = sys.chart
            th = sys.params.theta0
            y1[idx] = (th.x1 + m[0, 0] * u1 + m[0, 1] * u2_new) % 1.0
            y2[idx] = (th.x2 + m[1, 0] * u1 + m[1, 1] * u2_new) % 1.0
            if want_disp:
                extras["disp"][idx] = u2 - u2_new
    phi_inv = sys.params.phi.inverse_unimodular()
    l_inv = sys.params.l_matrix.inverse_unimodular()
    nb1, nb2 = _apply_matrix(phi_inv, bx1, bx2)
    ny1, ny2 = _apply_matrix(l_inv, y1, y2)
    return nb1, nb2, ny1, ny2, extras


def h_approx_batch(sys: ShubSystem, bx1, bx2, fy1, fy2, depth: int):
    """Depth-K semi-conjugacy correction for parallel points.

    Returns (fy1_h, fy2_h, w) with the base coordinates untouched; w is the
    accumulated signed v_s shift.
    """
    cx1, cx2 = bx1.copy(), bx2.copy()
    cy1, cy2 = fy1.copy(), fy2.copy()
    w = np.zeros_like(fy1)
    coef = 1.0
    for _ in range(depth):
        cx1, cx2, cy1, cy2, extras = advance_inverse(sys, cx1, cx2, cy1, cy2, want_disp=True)
        w -= coef * extras["disp"]
        coef *= sys.lambda_s
    vs = sys.l_data.v_s
    return (fy1 + w * vs[0]) % 1.0, (fy2 + w * vs[1]) % 1.0, w


def central_log_sums(sys: ShubSystem, bx1, bx2, fy1, fy2, n_steps: int):
    """Sum over the orbit of log |step fiber (2,2) entry| = log(lambda_s * J22).

    Returns (sums, endpoints) where sums[i] / n_steps is the finite-time
    central exponent of orbit i.
    """
    log_ls = math.log(abs(sys.lambda_s))
    acc = np.zeros_like(fy1)
    x1, x2, y1, y2 = bx1.copy(), bx2.copy(), fy1.copy(), fy2.copy()
    for _ in range(n_steps):
        x1, x2, y1, y2, extras = advance(sys, x1, x2, y1, y2, want_jac=True)
        acc += log_ls + np.log(extras["j22"])
    return acc, (x1, x2, y1, y2)
