"""Geometry of the model minimal surface and its tubular coordinate system.

The surface sits in R^4 = C^2 as the image of

    (s, theta)  |->  (cos(s)/(eps sqrt(sin 2s)) Theta, sin(s)/(eps sqrt(sin 2s)) Theta),

with Theta = (cos theta, sin theta) and s in (0, pi/2); eps > 0 rescales it.
This module provides the parametrization, orthonormal frames, the tubular
coordinate map T and its inverse S (via an exact closest-point solve), the
closed-form induced metric with its inverse expansions, and the curvature
data — everything a chart-based residual computation needs.

Conventions: a complex scalar z acting on Theta denotes the pair
(Re z * Theta, Im z * Theta) in C^2; the tangent frame is
e1 = e^{-is} Theta, e2 = e^{is} Theta_perp and the normal frame is
m = i e^{-is} Theta, n = i e^{is} Theta_perp, realized componentwise below.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import (
    DegeneratePointError,
    InvalidInputError,
    OutsideTubularNeighborhoodError,
    SingularParameterError,
)

__all__ = [
    "Point4",
    "FermiCoords",
    "Frame",
    "ClosestPointResult",
    "SymmetryReport",
    "GeometryExpansions",
    "surface_point_and_frame",
    "map_T",
    "closest_point",
    "map_S",
    "normal_polar_symmetries",
    "metric_matrix",
    "geometry_expansions",
    "detect_two_point_threshold",
]


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class Point4:
    """A point of R^4 in bipolar coordinates (rho1 e^{i theta1}, rho2 e^{i theta2})."""

    rho1: float
    theta1: float
    rho2: float
    theta2: float

    def __post_init__(self):
        if self.rho1 < 0.0 or self.rho2 < 0.0:
            raise InvalidInputError("bipolar radii must be non-negative")

    @classmethod
    def from_cartesian(cls, x1, y1, x2, y2):
        return cls(
            rho1=math.hypot(x1, y1),
            theta1=math.atan2(y1, x1),
            rho2=math.hypot(x2, y2),
            theta2=math.atan2(y2, x2),
        )

    @property
    def cartesian(self):
        return np.array(
            [
                self.rho1 * math.cos(self.theta1),
                self.rho1 * math.sin(self.theta1),
                self.rho2 * math.cos(self.theta2),
                self.rho2 * math.sin(self.theta2),
            ]
        )

    @property
    def norm(self):
        return math.hypot(self.rho1, self.rho2)


@dataclasses.dataclass(frozen=True)
class FermiCoords:
    """Tubular coordinates (s, theta, a, b) at scale epsilon.

    ``valid`` reflects a^2 + b^2 < 1/(eps^2 sin 2s), the region where the
    tubular chart is a diffeomorphism; (r, phi) are the polar form of (a, b).
    """

    s: float
    theta: float
    a: float
    b: float
    epsilon: float

    def __post_init__(self):
        if not (0.0 < self.s < 0.5 * math.pi):
            raise SingularParameterError(
                f"s must lie strictly inside (0, pi/2), got {self.s!r}"
            )
        if not (self.epsilon > 0.0):
            raise InvalidInputError(f"epsilon must be positive, got {self.epsilon!r}")

    @property
    def valid(self):
        limit = 1.0 / (self.epsilon**2 * math.sin(2.0 * self.s))
        return self.a**2 + self.b**2 < limit

    @property
    def r(self):
        return math.hypot(self.a, self.b)

    @property
    def phi(self):
        return math.atan2(self.b, self.a)


@dataclasses.dataclass(frozen=True)
class Frame:
    """Orthonormal tangent (e1, e2) and normal (m, n) vectors, Cartesian."""

    e1: np.ndarray
    e2: np.ndarray
    m: np.ndarray
    n: np.ndarray

    def gram(self):
        basis = np.stack([self.e1, self.e2, self.m, self.n])
        return basis @ basis.T


@dataclasses.dataclass(frozen=True)
class ClosestPointResult:
    """Closest surface parameter(s) for an ambient point.

    ``params`` holds one or two (s, theta) pairs in ascending s; ``distance``
    is the (common) ambient distance to the surface.
    """

    params: tuple
    distance: float

    @property
    def unique(self):
        return len(self.params) == 1


@dataclasses.dataclass(frozen=True)
class SymmetryReport:
    """Signed mismatches of the normal-polar symmetry identities.

    Each field holds the deviation of one identity from zero (None when the
    image point fell outside the chart, with ``partial`` set):

    - phi flips sign when the two angles are exchanged, and under joint
      reflection of both angles;
    - phi is even under exchange of the two factor radii;
    - r is invariant under all three of those operations.
    """

    phi_theta_swap: float | None
    phi_factor_swap: float | None
    phi_reflection: float | None
    r_theta_swap: float | None
    r_factor_swap: float | None
    r_reflection: float | None
    partial: bool

    def max_abs(self):
        vals = [
            v
            for v in (
                self.phi_theta_swap,
                self.phi_factor_swap,
                self.phi_reflection,
                self.r_theta_swap,
                self.r_factor_swap,
                self.r_reflection,
            )
            if v is not None
        ]
        return max(abs(v) for v in vals) if vals else math.nan


# --------------------------------------------------------------------------
# parametrization and frames
# --------------------------------------------------------------------------


def _check_s(s):
    if not (0.0 < s < 0.5 * math.pi):
        raise SingularParameterError(
            f"s must lie strictly inside (0, pi/2), got {s!r}"
        )


def _check_epsilon(epsilon):
    if not (isinstance(epsilon, (int, float)) and epsilon > 0.0):
        raise InvalidInputError(f"epsilon must be positive, got {epsilon!r}")


def surface_point_and_frame(s, theta, epsilon):
    """Surface point at (s, theta) together with its orthonormal frame."""
    _check_s(s)
    _check_epsilon(epsilon)
    sg = math.sqrt(math.sin(2.0 * s))
    cs, sn = math.cos(s), math.sin(s)
    point = Point4(
        rho1=cs / (epsilon * sg), theta1=theta, rho2=sn / (epsilon * sg), theta2=theta
    )
    ct, st = math.cos(theta), math.sin(theta)
    Theta = np.array([ct, st])
    Perp = np.array([-st, ct])
    e1 = np.concatenate([cs * Theta, -sn * Theta])
    e2 = np.concatenate([cs * Perp, sn * Perp])
    m = np.concatenate([sn * Theta, cs * Theta])
    n = np.concatenate([-sn * Perp, cs * Perp])
    return point, Frame(e1=e1, e2=e2, m=m, n=n)


def map_T(coords):
    """Tubular coordinates -> ambient point: surface point + a*m + b*n."""
    q, frame = surface_point_and_frame(coords.s, coords.theta, coords.epsilon)
    xyz = q.cartesian + coords.a * frame.m + coords.b * frame.n
    return Point4.from_cartesian(*xyz)


# --------------------------------------------------------------------------
# closest point
# --------------------------------------------------------------------------
#
# After rescaling P -> eps*P the problem is the unit-scale one.  Writing the
# surface radius pair as (rho/sqrt2, 1/(rho sqrt2)), the theta-minimized
# squared distance to the surface is
#
#   f(rho) = rho1^2 + rho2^2 + (rho^2 + rho^-2)/2 - sqrt2 * D(rho),
#   D(rho) = sqrt(rho1^2 rho^2 + rho2^2 rho^-2 + 2 rho1 rho2 cos(alpha)),
#
# with alpha = theta1 - theta2, minimized over the half-line rho >= 1 when
# rho1 > rho2 (and rho <= 1 when rho1 < rho2); the optimal angle is
# theta* = arg(rho1 rho e^{i theta1} + rho2 rho^{-1} e^{i theta2}).


def _f_pieces(rho, rho1, rho2, cos_alpha):
    D = math.sqrt(rho1**2 * rho**2 + rho2**2 / rho**2 + 2.0 * rho1 * rho2 * cos_alpha)
    f = rho1**2 + rho2**2 + 0.5 * (rho**2 + rho**-2) - math.sqrt(2.0) * D
    return f, D


def _f_prime(rho, rho1, rho2, cos_alpha):
    _, D = _f_pieces(rho, rho1, rho2, cos_alpha)
    N = rho1**2 * rho - rho2**2 * rho**-3
    return rho - rho**-3 - math.sqrt(2.0) * N / D, D, N


def _f_second(rho, rho1, rho2, cos_alpha):
    _, D = _f_pieces(rho, rho1, rho2, cos_alpha)
    N = rho1**2 * rho - rho2**2 * rho**-3
    Np = rho1**2 + 3.0 * rho2**2 * rho**-4
    return 1.0 + 3.0 * rho**-4 - math.sqrt(2.0) * (Np - N**2 / D**2) / D


def _optimal_theta(rho, rho1, theta1, rho2, theta2):
    z = rho1 * rho * complex(math.cos(theta1), math.sin(theta1)) + (
        rho2 / rho
    ) * complex(math.cos(theta2), math.sin(theta2))
    if z == 0:
        # antipodal factors of equal weight; any theta is optimal
        return 0.0
    return math.atan2(z.imag, z.real) % (2.0 * math.pi)


def _s_of_rho(rho):
    # surface radius ratio: rho^2 = cot(s)
    return math.atan2(1.0, rho * rho)


def _newton_root(rho_lo, rho_hi, rho1, rho2, cos_alpha):
    """Safeguarded Newton for f'(rho) = 0 inside a sign-changing bracket."""
    g_lo, _, _ = _f_prime(rho_lo, rho1, rho2, cos_alpha)
    rho = 0.5 * (rho_lo + rho_hi)
    for _ in range(200):
        g, _, _ = _f_prime(rho, rho1, rho2, cos_alpha)
        if g == 0.0:
            break
        if (g > 0.0) == (g_lo > 0.0):
            rho_lo = rho
        else:
            rho_hi = rho
        h = _f_second(rho, rho1, rho2, cos_alpha)
        step = -g / h if h != 0.0 else 0.0
        cand = rho + step
        if not (rho_lo < cand < rho_hi):
            cand = 0.5 * (rho_lo + rho_hi)
        if abs(cand - rho) <= 1e-15 * max(1.0, rho):
            rho = cand
            break
        rho = cand
    return rho


def closest_point(P, epsilon):
    """Closest point(s) on the rescaled surface, with the ambient distance.

    Returns one (s, theta) pair when the closest point is unique and the
    two reciprocal-parameter pairs (ascending s) on the equal-radii locus
    beyond the two-point threshold.
    """
    _check_epsilon(epsilon)
    if P.rho1 == 0.0 and P.rho2 == 0.0:
        raise DegeneratePointError(
            "the origin is equidistant from the whole s = pi/4 circle",
            distance=1.0 / epsilon,
            s=0.25 * math.pi,
            phi_limit=math.pi,
        )
    # rescale to the unit surface
    rho1 = epsilon * P.rho1
    rho2 = epsilon * P.rho2
    theta1, theta2 = P.theta1, P.theta2
    cos_alpha = math.cos(theta1 - theta2)

    if rho1 == rho2:
        q = rho1 * rho1 - cos_alpha
        if q > 1.0:
            x = q + math.sqrt(q * q - 1.0)  # rho^2 of the outer minimizer
            roots = [math.sqrt(x), 1.0 / math.sqrt(x)]
        else:
            roots = [1.0]
    else:
        descending = rho1 > rho2  # minimizer on rho >= 1 iff rho1 > rho2
        lo, hi = 1.0, 2.0
        for _ in range(200):
            g, _, _ = _f_prime(hi if descending else 1.0 / hi, rho1, rho2, cos_alpha)
            if (g > 0.0) if descending else (g < 0.0):
                break
            hi *= 2.0
        if descending:
            roots = [_newton_root(lo, hi, rho1, rho2, cos_alpha)]
        else:
            roots = [_newton_root(1.0 / hi, lo, rho1, rho2, cos_alpha)]

    params = []
    f_vals = []
    for rho in roots:
        theta_star = _optimal_theta(rho, rho1, theta1, rho2, theta2)
        params.append((_s_of_rho(rho), theta_star))
        f_vals.append(_f_pieces(rho, rho1, rho2, cos_alpha)[0])
    params.sort(key=lambda st: st[0])
    distance = math.sqrt(max(min(f_vals), 0.0)) / epsilon
    return ClosestPointResult(params=tuple(params), distance=distance)


def map_S(P, epsilon):
    """Ambient point -> tubular coordinates (inverse of map_T on its range)."""
    res = closest_point(P, epsilon)
    if not res.unique:
        raise OutsideTubularNeighborhoodError(
            "point has two closest surface points; no unique chart"
        )
    s, theta = res.params[0]
    q, frame = surface_point_and_frame(s, theta, epsilon)
    delta = P.cartesian - q.cartesian
    a = float(delta @ frame.m)
    b = float(delta @ frame.n)
    coords = FermiCoords(s=s, theta=theta, a=a, b=b, epsilon=epsilon)
    if not coords.valid:
        raise OutsideTubularNeighborhoodError(
            "normal offset reaches the focal radius; chart not valid there"
        )
    return coords


def normal_polar_symmetries(P, epsilon):
    """Check the (r, phi) symmetry identities at P and its related images.

    phi is odd under exchanging the two angles and under joint angle
    reflection, and even under exchanging the factor radii; r is invariant
    under all three.  Images falling outside the chart are skipped and
    flagged.
    """
    images = {
        "theta_swap": Point4(P.rho1, P.theta2, P.rho2, P.theta1),
        "factor_swap": Point4(P.rho2, P.theta1, P.rho1, P.theta2),
        "reflection": Point4(P.rho1, -P.theta1, P.rho2, -P.theta2),
    }
    base = map_S(P, epsilon)  # raises if P itself is outside
    vals = {}
    partial = False
    for key, Q in images.items():
        try:
            c = map_S(Q, epsilon)
            vals[key] = (c.r, c.phi)
        except (OutsideTubularNeighborhoodError, DegeneratePointError):
            vals[key] = None
            partial = True

    def phi_mismatch(key, sign):
        if vals[key] is None:
            return None
        if base.r < 1e-12 and vals[key][0] < 1e-12:
            return 0.0  # on the surface phi is undefined; the identity is vacuous
        # compare angles on the circle (phi is defined mod 2 pi)
        d = base.phi - sign * vals[key][1]
        return math.atan2(math.sin(d), math.cos(d))

    def r_mismatch(key):
        if vals[key] is None:
            return None
        return base.r - vals[key][0]

    return SymmetryReport(
        phi_theta_swap=phi_mismatch("theta_swap", -1.0),
        phi_factor_swap=phi_mismatch("factor_swap", 1.0),
        phi_reflection=phi_mismatch("reflection", -1.0),
        r_theta_swap=r_mismatch("theta_swap"),
        r_factor_swap=r_mismatch("factor_swap"),
        r_reflection=r_mismatch("reflection"),
        partial=partial,
    )


# --------------------------------------------------------------------------
# metric and expansions
# --------------------------------------------------------------------------


def metric_matrix(coords):
    """Closed-form induced metric in (s, theta, a, b) and its volume factor.

    Returns (g, sqrtG) where g is the symmetric 4x4 matrix and sqrtG the
    square root of its determinant (computed from the exact 2x2 Schur
    factorization, not by numerical elimination).
    """
    s, a, b, eps = coords.s, coords.a, coords.b, coords.epsilon
    sin2s = math.sin(2.0 * s)
    cos2s = math.cos(2.0 * s)
    kappa = 1.0 / (eps * sin2s**1.5)
    g = np.zeros((4, 4))
    g[0, 0] = (a - kappa) ** 2 + b**2
    g[0, 1] = g[1, 0] = -2.0 * b / (eps * math.sqrt(sin2s))
    g[1, 1] = a**2 + b**2 + 1.0 / (eps**2 * sin2s) + 2.0 * a * math.sqrt(sin2s) / eps
    g[1, 2] = g[2, 1] = -b * cos2s
    g[1, 3] = g[3, 1] = a * cos2s
    g[2, 2] = 1.0
    g[3, 3] = 1.0
    # det(g) factorizes through the Schur complement of the identity block:
    c_fac = g[0, 0]
    s22 = g[1, 1] - (a**2 + b**2) * cos2s**2
    e_fac = s22 - g[0, 1] ** 2 / c_fac
    sqrtG = math.sqrt(c_fac * e_fac)
    return g, sqrtG


@dataclasses.dataclass(frozen=True)
class GeometryExpansions:
    """Exact inverse metric next to its small-eps expansions, plus curvature.

    ``g_inv`` is the numerically exact inverse; ``g_inv_series`` and
    ``B_series`` truncate after the eps^3 terms, ``dlog_sqrtG_series``
    (ordered s, a, b) after eps^2.  ``curvatures_m``/``curvatures_n`` are
    the principal curvature pairs of the surface along each unit normal;
    ``curvature_scale`` is their common reference magnitude.
    """

    g_inv: np.ndarray
    g_inv_series: np.ndarray
    B_series: np.ndarray
    dlog_sqrtG_series: np.ndarray
    curvatures_m: np.ndarray
    curvatures_n: np.ndarray
    curvature_scale: float


def _principal_curvatures(s, theta, epsilon):
    """Eigenvalues of the shape operator per normal, assembled numerically.

    First and second parametric derivatives of the surface are analytic
    (plain trigonometric expressions); the shape operator is formed and
    diagonalized numerically.
    """
    sin2s = math.sin(2.0 * s)
    c2 = math.cos(2.0 * s)
    cs, sn = math.cos(s), math.sin(s)
    w = sin2s**-0.5
    s1, s2 = cs * w, sn * w
    d1 = -cs * sin2s**-1.5
    d2 = sn * sin2s**-1.5
    dd1 = sn * sin2s**-1.5 + 3.0 * cs * c2 * sin2s**-2.5
    dd2 = cs * sin2s**-1.5 - 3.0 * sn * c2 * sin2s**-2.5

    _, frame = surface_point_and_frame(s, theta, epsilon)
    ct, st = math.cos(theta), math.sin(theta)
    Theta = np.array([ct, st])
    Perp = np.array([-st, ct])

    X_s = np.concatenate([d1 * Theta, d2 * Theta]) / epsilon
    X_t = np.concatenate([s1 * Perp, s2 * Perp]) / epsilon
    X_ss = np.concatenate([dd1 * Theta, dd2 * Theta]) / epsilon
    X_st = np.concatenate([d1 * Perp, d2 * Perp]) / epsilon
    X_tt = -np.concatenate([s1 * Theta, s2 * Theta]) / epsilon

    first = np.array([[X_s @ X_s, X_s @ X_t], [X_s @ X_t, X_t @ X_t]])
    out = []
    for nu in (frame.m, frame.n):
        second = np.array(
            [[X_ss @ nu, X_st @ nu], [X_st @ nu, X_tt @ nu]]
        )
        shape_op = np.linalg.solve(first, second)
        eig = np.linalg.eigvals(shape_op)
        out.append(np.sort(eig.real)[::-1])
    return out[0], out[1]


def geometry_expansions(coords):
    """Inverse-metric data: exact values, truncated expansions, curvature."""
    s, a, b, eps = coords.s, coords.a, coords.b, coords.epsilon
    g, _ = metric_matrix(coords)
    g_inv = np.linalg.inv(g)

    sin2s = math.sin(2.0 * s)
    c2 = math.cos(2.0 * s)
    # rho here is the surface weight (sin 2s)^(-1/2); powers below are rho^-k
    p = {k: sin2s ** (k / 2.0) for k in (2, 4, 5, 6, 7, 8, 9, 12)}
    r2 = a * a + b * b

    gi = np.zeros((4, 4))
    gi[0, 0] = eps**2 * p[6] + 2.0 * a * eps**3 * p[9] + 3.0 * r2 * eps**4 * p[12]
    gi[0, 1] = 2.0 * b * eps**3 * p[7]
    gi[0, 2] = 2.0 * b * b * c2 * eps**3 * p[7]
    gi[0, 3] = -2.0 * a * b * c2 * eps**3 * p[7]
    gi[1, 1] = eps**2 * p[2] - 2.0 * a * eps**3 * p[5] + 3.0 * r2 * eps**4 * p[8]
    gi[1, 2] = b * c2 * eps**2 * p[2] - 2.0 * a * b * c2 * eps**3 * p[5]
    gi[1, 3] = -a * c2 * eps**2 * p[2] + 2.0 * a * a * c2 * eps**3 * p[5]
    gi[2, 2] = 1.0 + b * b * c2**2 * eps**2 * p[2] - 2.0 * a * b * b * c2**2 * eps**3 * p[5]
    gi[2, 3] = -a * b * c2**2 * eps**2 * p[2] + 2.0 * a * a * b * c2**2 * eps**3 * p[5]
    gi[3, 3] = 1.0 + a * a * c2**2 * eps**2 * p[2] - 2.0 * a**3 * c2**2 * eps**3 * p[5]
    gi = gi + np.triu(gi, 1).T

    B = np.array(
        [
            -2.0 * eps**2 * p[4] * c2 - 8.0 * a * eps**3 * p[7] * c2,
            -4.0 * b * eps**3 * p[5] * c2,
            2.0 * a * eps**2 * p[6]
            + a * c2**2 * eps**2 * p[2]
            - (2.0 * a * a + 4.0 * b * b) * c2**2 * eps**3 * p[5]
            + 4.0 * b * b * eps**3 * p[9],
            2.0 * b * eps**2 * p[6]
            + b * c2**2 * eps**2 * p[2]
            + 2.0 * a * b * c2**2 * eps**3 * p[5]
            - 4.0 * a * b * eps**3 * p[9],
        ]
    )

    dlog = np.array(
        [
            -4.0 * c2 / sin2s - 6.0 * r2 * eps**2 * sin2s**2 * c2,
            -2.0 * a * eps**2 * sin2s**3,
            -2.0 * b * eps**2 * sin2s**3,
        ]
    )

    k_m, k_n = _principal_curvatures(s, coords.theta, eps)
    return GeometryExpansions(
        g_inv=g_inv,
        g_inv_series=gi,
        B_series=B,
        dlog_sqrtG_series=dlog,
        curvatures_m=k_m,
        curvatures_n=k_n,
        curvature_scale=eps * sin2s**1.5,
    )


# --------------------------------------------------------------------------
# two-closest-point threshold
# --------------------------------------------------------------------------


def detect_two_point_threshold(alpha, epsilon, lo=0.05, hi=None, tol=1e-6):
    """Radius at which an equal-radii point acquires two closest points.

    For P with rho1 = rho2 and angle difference alpha, the theta-minimized
    squared-distance profile rho -> f(rho) flattens at rho = 1 exactly at
    the transition.  The detector bisects the sign of a *numerical* second
    difference of f at rho = 1 (step 1e-3), so it does not reuse the
    closed-form threshold it is meant to find.
    """
    _check_epsilon(epsilon)
    if not (-2.0 * math.pi <= alpha <= 2.0 * math.pi):
        raise InvalidInputError("alpha outside a single winding")
    cos_alpha = math.cos(alpha)
    if cos_alpha <= -1.0 + 1e-12:
        raise InvalidInputError(
            "antipodal angles: two closest points at every radius, no threshold"
        )
    h = 1e-3

    def curvature_sign(rho1_amb):
        r1 = epsilon * rho1_amb
        f0, _ = _f_pieces(1.0, r1, r1, cos_alpha)
        fp, _ = _f_pieces(1.0 + h, r1, r1, cos_alpha)
        fm, _ = _f_pieces(1.0 - h, r1, r1, cos_alpha)
        return (fp - 2.0 * f0 + fm) / h**2

    if hi is None:
        hi = 4.0 / epsilon
    flo, fhi = curvature_sign(lo), curvature_sign(hi)
    if not (flo > 0.0 > fhi):
        raise InvalidInputError(
            f"bracket [{lo}, {hi}] does not straddle the transition"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if curvature_sign(mid) > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)
