"""Exact arithmetic for hyperbolic automorphisms of the 2-torus.

Eigen-data comes from the characteristic polynomial in closed form; periodic
points of a matrix power are counted with |det(m^n - I)| and enumerated
exactly through a Smith normal form of m^n - I over the integers, so the
fixed-point sets are produced without any floating-point root search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np

from .errors import CapExceeded, NotHyperbolic, NotUnimodular

IntPair = tuple[int, int]
RationalPoint = tuple[Fraction, Fraction]


@dataclass(frozen=True)
class IntMatrix2:
    """2x2 integer matrix acting on T^2 = R^2 / Z^2."""

    a11: int
    a12: int
    a21: int
    a22: int

    def __post_init__(self) -> None:
        for name in ("a11", "a12", "a21", "a22"):
            value = getattr(self, name)
            if not isinstance(value, int):
                raise TypeError(f"{name} must be an int, got {type(value).__name__}")

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable[int]]) -> "IntMatrix2":
        (a11, a12), (a21, a22) = (tuple(r) for r in rows)
        return cls(int(a11), int(a12), int(a21), int(a22))

    @property
    def det(self) -> int:
        return self.a11 * self.a22 - self.a12 * self.a21

    @property
    def trace(self) -> int:
        return self.a11 + self.a22

    def rows(self) -> tuple[IntPair, IntPair]:
        return (self.a11, self.a12), (self.a21, self.a22)

    def __matmul__(self, other: "IntMatrix2") -> "IntMatrix2":
        return IntMatrix2(
            self.a11 * other.a11 + self.a12 * other.a21,
            self.a11 * other.a12 + self.a12 * other.a22,
            self.a21 * other.a11 + self.a22 * other.a21,
            self.a21 * other.a12 + self.a22 * other.a22,
        )

    def power(self, n: int) -> "IntMatrix2":
        """m^n by repeated squaring; Python ints never overflow silently."""
        if n < 0:
            raise ValueError("power expects n >= 0")
        result = IntMatrix2(1, 0, 0, 1)
        base = self
        k = n
        while k:
            if k & 1:
                result = result @ base
            base = base @ base
            k >>= 1
        return result

    def inverse_unimodular(self) -> "IntMatrix2":
        """Exact integer inverse, valid because |det| = 1."""
        d = self.det
        if abs(d) != 1:
            raise NotUnimodular(f"matrix has det {d}, expected +-1")
        return IntMatrix2(d * self.a22, -d * self.a12, -d * self.a21, d * self.a11)

    def apply_fraction(self, point: RationalPoint) -> RationalPoint:
        """Image of a rational torus point, reduced into [0,1)^2 exactly."""
        x1, x2 = point
        return (
            (self.a11 * x1 + self.a12 * x2) % 1,
            (self.a21 * x1 + self.a22 * x2) % 1,
        )

    def as_array(self) -> np.ndarray:
        return np.array([[self.a11, self.a12], [self.a21, self.a22]], dtype=float)


@dataclass(frozen=True)
class TorusPoint:
    """Point of T^2 with coordinates reduced into [0,1)."""

    x1: float
    x2: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x1", float(self.x1) % 1.0)
        object.__setattr__(self, "x2", float(self.x2) % 1.0)

    @classmethod
    def from_fractions(cls, point: RationalPoint) -> "TorusPoint":
        return cls(float(point[0] % 1), float(point[1] % 1))

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2])


@dataclass(frozen=True)
class HyperbolicAutomorphism:
    """Matrix plus cached eigen-data of a hyperbolic toral automorphism.

    lambda_u is the eigenvalue of modulus > 1, lambda_s its partner, and
    v_u / v_s are unit eigenvectors with the first nonzero coordinate
    positive so downstream charts have a deterministic orientation.
    """

    matrix: IntMatrix2
    lambda_u: float
    lambda_s: float
    v_u: np.ndarray
    v_s: np.ndarray

    @property
    def log_expansion(self) -> float:
        return math.log(abs(self.lambda_u))


def _sign_normalize(v: np.ndarray) -> np.ndarray:
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        return -v
    return v


def _unit_eigenvector(m: IntMatrix2, lam: float) -> np.ndarray:
    # (m - lam I) v = 0; pick the better-conditioned row expression.
    cand1 = np.array([float(m.a12), lam - float(m.a11)])
    cand2 = np.array([lam - float(m.a22), float(m.a21)])
    v = cand1 if np.linalg.norm(cand1) >= np.linalg.norm(cand2) else cand2
    return _sign_normalize(v / np.linalg.norm(v))


def eigen_data(m: IntMatrix2) -> HyperbolicAutomorphism:
    """Closed-form eigenvalues and unit eigenvectors of a hyperbolic matrix.

    Raises NotUnimodular when |det| != 1 and NotHyperbolic when |trace| <= 2.
    """
    d = m.det
    if abs(d) != 1:
        raise NotUnimodular(f"det = {d}, expected +-1")
    t = m.trace
    if abs(t) <= 2:
        raise NotHyperbolic(f"|trace| = {abs(t)} <= 2, matrix is not hyperbolic")
    disc = math.sqrt(float(t * t - 4 * d))
    root_a = (t + disc) / 2.0
    root_b = (t - disc) / 2.0
    lam_u = root_a if abs(root_a) >= abs(root_b) else root_b
    # Derive lam_s from the determinant so lam_u * lam_s reproduces det
    # exactly whenever a float representation allows it.
    lam_s = d / lam_u
    if lam_u * lam_s != d:
        for candidate in (math.nextafter(lam_s, 0.0), math.nextafter(lam_s, 2.0 * lam_s)):
            if lam_u * candidate == d:
                lam_s = candidate
                break
    return HyperbolicAutomorphism(
        matrix=m,
        lambda_u=lam_u,
        lambda_s=lam_s,
        v_u=_unit_eigenvector(m, lam_u),
        v_s=_unit_eigenvector(m, lam_s),
    )


def periodic_count(m: IntMatrix2, n: int) -> int:
    """Number of fixed points of m^n on the torus: |det(m^n - I)|.

    Exact for every n thanks to arbitrary-precision integers; the classical
    fixed-width overflow concern does not apply in this implementation.
    """
    if n < 1:
        raise ValueError("period n must be >= 1")
    if abs(m.det) != 1:
        raise NotUnimodular(f"det = {m.det}, expected +-1")
    if abs(m.trace) <= 2:
        raise NotHyperbolic(f"|trace| = {abs(m.trace)} <= 2")
    p = m.power(n)
    b11, b12, b21, b22 = p.a11 - 1, p.a12, p.a21, p.a22 - 1
    return abs(b11 * b22 - b12 * b21)


class _Snf:
    """Smith normal form of an integer 2x2 matrix: B = U @ D @ V.

    Elementary row operations on D are compensated on U (columns), column
    operations on V (rows), so the invariant B = U D V holds throughout.
    """

    def __init__(self, b: list[list[int]]):
        self.d = [list(b[0]), list(b[1])]
        self.u = [[1, 0], [0, 1]]
        self.v = [[1, 0], [0, 1]]

    def row_add(self, dst: int, src: int, k: int) -> None:
        # row dst of D += k * row src; U gets column src -= k * column dst.
        d, u = self.d, self.u
        d[dst][0] += k * d[src][0]
        d[dst][1] += k * d[src][1]
        u[0][src] -= k * u[0][dst]
        u[1][src] -= k * u[1][dst]

    def col_add(self, dst: int, src: int, k: int) -> None:
        # column dst of D += k * column src; V gets row src -= k * row dst.
        d, v = self.d, self.v
        d[0][dst] += k * d[0][src]
        d[1][dst] += k * d[1][src]
        v[src][0] -= k * v[dst][0]
        v[src][1] -= k * v[dst][1]

    def swap_rows(self) -> None:
        self.d[0], self.d[1] = self.d[1], self.d[0]
        for row in self.u:
            row[0], row[1] = row[1], row[0]

    def swap_cols(self) -> None:
        for row in self.d:
            row[0], row[1] = row[1], row[0]
        self.v[0], self.v[1] = self.v[1], self.v[0]

    def negate_row(self, i: int) -> None:
        self.d[i][0] = -self.d[i][0]
        self.d[i][1] = -self.d[i][1]
        self.u[0][i] = -self.u[0][i]
        self.u[1][i] = -self.u[1][i]

    def reduce(self) -> None:
        d = self.d
        while True:
            if d[0][0] == 0:
                if d[1][0] != 0:
                    self.swap_rows()
                elif d[0][1] != 0:
                    self.swap_cols()
                elif d[1][1] != 0:
                    self.swap_rows()
                    self.swap_cols()
                else:
                    break
                continue
            if d[1][0] != 0:
                self.row_add(1, 0, -(d[1][0] // d[0][0]))
                if d[1][0] != 0:
                    self.swap_rows()
                continue
            if d[0][1] != 0:
                self.col_add(1, 0, -(d[0][1] // d[0][0]))
                if d[0][1] != 0:
                    self.swap_cols()
                continue
            if d[0][0] < 0:
                self.negate_row(0)
            if d[1][1] < 0:
                self.negate_row(1)
            if d[0][0] != 0 and d[1][1] % d[0][0] != 0:
                # Enforce d1 | d2, then run the Euclidean pass again.
                self.col_add(0, 1, 1)
                continue
            break


def smith_normal_form(b: IntMatrix2 | list[list[int]]):
    """SNF over Z: returns (U, D, V) with B = U D V, U and V unimodular,
    D = diag(d1, d2), d1, d2 >= 0 and d1 | d2."""
    rows = b.rows() if isinstance(b, IntMatrix2) else b
    snf = _Snf([list(rows[0]), list(rows[1])])
    snf.reduce()
    u, d, v = snf.u, snf.d, snf.v
    # Safety: verify the factorization and unimodularity exactly.
    prod = _mat_mul_int(_mat_mul_int(u, d), v)
    if prod != [list(rows[0]), list(rows[1])]:
        raise ArithmeticError("SNF bookkeeping failed to reproduce the input")
    if abs(u[0][0] * u[1][1] - u[0][1] * u[1][0]) != 1:
        raise ArithmeticError("SNF left factor is not unimodular")
    if abs(v[0][0] * v[1][1] - v[0][1] * v[1][0]) != 1:
        raise ArithmeticError("SNF right factor is not unimodular")
    return u, d, v


def _mat_mul_int(x: list[list[int]], y: list[list[int]]) -> list[list[int]]:
    return [
        [x[0][0] * y[0][0] + x[0][1] * y[1][0], x[0][0] * y[0][1] + x[0][1] * y[1][1]],
        [x[1][0] * y[0][0] + x[1][1] * y[1][0], x[1][0] * y[0][1] + x[1][1] * y[1][1]],
    ]


def periodic_lattice(m: IntMatrix2, n: int, cap: int = 2_000_000) -> list[RationalPoint]:
    """All fixed points of m^n as exact rationals in [0,1)^2, sorted.

    Solves (m^n - I) y in Z^2 via the Smith normal form of B = m^n - I:
    with B = U D V the solutions are y = V^-1 z for z on the grid
    (i/d1, j/d2), giving exactly |det B| distinct torus points.
    """
    count = periodic_count(m, n)
    if count > cap:
        raise CapExceeded(f"{count} periodic points exceed cap {cap} (n={n})")
    p = m.power(n)
    b = [[p.a11 - 1, p.a12], [p.a21, p.a22 - 1]]
    _, d, v = smith_normal_form(b)
    d1, d2 = d[0][0], d[1][1]
    if d1 * d2 != count:
        raise ArithmeticError(f"SNF diagonal {d1}*{d2} != |det| {count}")
    det_v = v[0][0] * v[1][1] - v[0][1] * v[1][0]
    v_inv = [
        [det_v * v[1][1], -det_v * v[0][1]],
        [-det_v * v[1][0], det_v * v[0][0]],
    ]
    den = d1 * d2
    seen = set()
    points: list[RationalPoint] = []
    for i in range(d1):
        zi1 = i * d2  # numerator of i/d1 over the common denominator den
        for j in range(d2):
            zj2 = j * d1
            n1 = (v_inv[0][0] * zi1 + v_inv[0][1] * zj2) % den
            n2 = (v_inv[1][0] * zi1 + v_inv[1][1] * zj2) % den
            seen.add((n1, n2))
            points.append((Fraction(n1, den), Fraction(n2, den)))
    if len(seen) != count:
        raise ArithmeticError("lattice enumeration produced duplicate points")
    points.sort()
    return points


def enumerate_periodic(m: IntMatrix2, n: int, cap: int = 2_000_000) -> list[TorusPoint]:
    """Fixed points of m^n as TorusPoints (floats), lexicographically sorted."""
    return [TorusPoint.from_fractions(p) for p in periodic_lattice(m, n, cap)]


def wrap_coordinate(delta: float) -> float:
    """Shortest signed representative of delta modulo 1, in [-0.5, 0.5)."""
    return (delta + 0.5) % 1.0 - 0.5


def torus_distance(
    p: TorusPoint | tuple[float, float], q: TorusPoint | tuple[float, float]
) -> float:
    """Euclidean distance on the torus with per-coordinate wrap-around."""
    p1, p2 = (p.x1, p.x2) if isinstance(p, TorusPoint) else (p[0], p[1])
    q1, q2 = (q.x1, q.x2) if isinstance(q, TorusPoint) else (q[0], q[1])
    d1 = abs(p1 - q1) % 1.0
    d2 = abs(p2 - q2) % 1.0
    d1 = min(d1, 1.0 - d1)
    d2 = min(d2, 1.0 - d2)
    return math.hypot(d1, d2)
