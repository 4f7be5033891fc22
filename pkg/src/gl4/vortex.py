"""Radial profiles of the unit-winding planar vortex.

Solves the coupled profile ODEs

    U'' + U'/r - (1 - V)^2 U / r^2 - (lam/2) (U^2 - 1) U = 0,
    V'' - V'/r + U^2 (1 - V) = 0,

with U(0) = V(0) = 0 and U(r_max) = V(r_max) = 1, on a uniform grid with
second-order central differences and a damped Newton iteration.  Also fits
the near-origin coefficients (U ~ c r, V ~ d r^2), the exponential tail
rates, and evaluates the radial quadratures that feed the reduction checks.

Internally the unknowns are the complements w = 1 - U and v = 1 - V.  The
substitution is exact and keeps full relative precision in the tail, where
U and V are within a few ulp of 1 and the direct subtraction 1 - U would
quantise the signal the decay fits need.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np
from scipy.linalg import solve_banded

from ._util import atomic_write_text, fmt17, line_fit
from .errors import ConvergenceError, DegenerateFitError, InvalidInputError

__all__ = [
    "VortexProfile",
    "ProfileDiagnostics",
    "FPrimeTerm",
    "ReductionCoefficients",
    "solve_profile",
    "profile_diagnostics",
    "reduction_coefficients",
    "write_profile_csv",
    "ProfileInterpolant",
]


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------


@dataclasses.dataclass(frozen=True)
class VortexProfile:
    """Converged radial profile pair on a uniform grid.

    Immutable after construction; safe to share between threads.
    ``one_minus_U`` and ``one_minus_V`` are the solver's own tail-accurate
    complements; prefer them over computing 1 - U when the tail matters.
    """

    lam: float  # coupling constant, > 0
    r_max: float  # truncation radius
    nodes: int  # grid points including both endpoints
    r: np.ndarray  # radial grid, r[0] = 0
    U: np.ndarray  # order-parameter magnitude profile
    V: np.ndarray  # gauge profile (flux fraction through radius r)
    dU: np.ndarray  # central-difference derivative of U
    dV: np.ndarray  # central-difference derivative of V
    m_lambda: float  # expected tail rate of 1 - U: min(sqrt(lam), 2)
    c_fit: float  # near-origin coefficient of U ~ c r
    d_fit: float  # near-origin coefficient of V ~ d r^2
    one_minus_U: np.ndarray = None  # cancellation-free 1 - U
    one_minus_V: np.ndarray = None  # cancellation-free 1 - V

    def complements(self):
        """Tail-accurate (1 - U, 1 - V), falling back to subtraction."""
        w = self.one_minus_U if self.one_minus_U is not None else 1.0 - self.U
        v = self.one_minus_V if self.one_minus_V is not None else 1.0 - self.V
        return w, v


@dataclasses.dataclass(frozen=True)
class ProfileDiagnostics:
    """Residual and asymptotics report for a converged profile."""

    residual_sup_u: float  # sup |U-equation| on the solver's own stencil
    residual_sup_v: float
    residual_sup_u_ho: float  # same equations, fourth-order stencil
    residual_sup_v_ho: float  # (exposes the O(h^2) discretisation error)
    rate_u: float  # fitted decay rate of 1 - U on the tail window
    rate_v: float  # fitted decay rate of 1 - V
    m_lambda: float  # expected rate of 1 - U
    c_fit: float
    d_fit: float
    fit_window: tuple[float, float]


@dataclasses.dataclass(frozen=True)
class FPrimeTerm:
    """One radial quadrature with its angular prefactor split off.

    The full contribution to the reduced forcing is
    ``radial * (alpha * cos(2s)^2 * sin(2s)^(5/2) + beta * sin(2s)^(9/2))``.
    """

    name: str
    radial: float  # the r-quadrature part only
    alpha: float  # weight of cos(2s)^2 sin(2s)^(5/2)
    beta: float  # weight of sin(2s)^(9/2)
    prefactor: str  # human-readable prefactor


@dataclasses.dataclass(frozen=True)
class ReductionCoefficients:
    """Named quadrature constants entering the reduced equation.

    ``c_lambda`` multiplies the geometric mode operator; the ``fprime``
    terms assemble the profile-induced forcing ``f1_prime(s)``.
    """

    lam: float
    I1: float  # int pi r (U')^2 dr
    I2: float  # pi * limit of V'/r at r -> 0  (= 2 pi d)
    I3: float  # int pi (V')^2 / r dr
    I4: float  # int (-2 pi U U' + pi V U U') dr
    c_lambda: float  # I1 + I2 - 3 I3
    fprime: tuple[FPrimeTerm, ...]

    def f1_prime(self, s):
        """Forcing profile at angular coordinate(s) ``s`` (vectorised)."""
        s = np.asarray(s, dtype=float)
        c2 = np.cos(2.0 * s) ** 2
        sig = np.sin(2.0 * s)
        out = np.zeros_like(s)
        for term in self.fprime:
            out = out + term.radial * (
                term.alpha * c2 * sig ** 2.5 + term.beta * sig ** 4.5
            )
        return out if out.ndim else float(out)

    def linear_drift_rows(self, s, f, g, f_theta, g_theta):
        """Transport part of the linearised projection rows at slice ``s``.

        The volume-element drift of the curved tube pairs with the moved
        profile at first order in the displacement.  After the radial
        identities (3 int U^2 (1-V) V' dr = 3 I3 / pi on the solution)
        the whole contribution collapses to a single constant, 6 I3,
        times sin2s cos2s (cos2s f + g_theta) on the first row and
        sin2s cos2s (cos2s g - f_theta) on the second.
        """
        sig = np.sin(2.0 * np.asarray(s, dtype=float))
        c2 = np.cos(2.0 * np.asarray(s, dtype=float))
        w = 6.0 * self.I3 * sig * c2
        return w * (c2 * f + g_theta), w * (c2 * g - f_theta)


# --------------------------------------------------------------------------
# nonlinear solve (in complement variables w = 1 - U, v = 1 - V)
# --------------------------------------------------------------------------


def _interior_residuals(r, h, lam, w, v):
    """Second-order stencil residuals at nodes 1..n-2.

    These are the exact negatives of the residuals of the (U, V) form of
    the equations, evaluated without any 1 - U subtraction.
    """
    ri = r[1:-1]
    wm, wc, wp = w[:-2], w[1:-1], w[2:]
    vm, vc, vp = v[:-2], v[1:-1], v[2:]
    lap_w = (wp - 2.0 * wc + wm) / h**2
    der_w = (wp - wm) / (2.0 * h)
    res_w = (
        lap_w
        + der_w / ri
        + vc**2 * (1.0 - wc) / ri**2
        - lam * wc * (1.0 - wc) * (1.0 - 0.5 * wc)
    )
    lap_v = (vp - 2.0 * vc + vm) / h**2
    der_v = (vp - vm) / (2.0 * h)
    res_v = lap_v - der_v / ri - (1.0 - wc) ** 2 * vc
    return res_w, res_v


def _interleave(res_w, res_v):
    out = np.empty(2 * res_w.size)
    out[0::2] = res_w
    out[1::2] = res_v
    return out


def _newton_matrix(r, h, lam, w, v):
    """Banded Jacobian (two sub/super diagonals, interleaved unknowns)."""
    ri = r[1:-1]
    wc = w[1:-1]
    vc = v[1:-1]
    n_int = ri.size
    ab = np.zeros((5, 2 * n_int))
    inv_h2 = 1.0 / h**2
    conv = 1.0 / (2.0 * h * ri)

    # main diagonal
    ab[2, 0::2] = -2.0 * inv_h2 - vc**2 / ri**2 - lam * (
        1.0 - 3.0 * wc + 1.5 * wc**2
    )
    ab[2, 1::2] = -2.0 * inv_h2 - (1.0 - wc) ** 2
    # same-node cross couplings
    ab[1, 1::2] = 2.0 * vc * (1.0 - wc) / ri**2  # dF_w / dv
    ab[3, 0::2] = 2.0 * (1.0 - wc) * vc  # dF_v / dw
    # neighbour couplings
    ab[0, 2::2] = (inv_h2 + conv)[:-1]  # dF_w(i) / dw(i+1)
    ab[4, 0:-2:2] = (inv_h2 - conv)[1:]  # dF_w(i) / dw(i-1)
    ab[0, 3::2] = (inv_h2 - conv)[:-1]  # dF_v(i) / dv(i+1)
    ab[4, 1:-2:2] = (inv_h2 + conv)[1:]  # dF_v(i) / dv(i-1)
    return ab


def _relaxation_sweeps(r, h, lam, w, v, sweeps):
    """Diagonal (Jacobi-style) update; used only if Newton's search stalls."""
    ri = r[1:-1]
    inv_h2 = 1.0 / h**2
    conv = 1.0 / (2.0 * h * ri)
    for _ in range(sweeps):
        wm, wc, wp = w[:-2], w[1:-1], w[2:]
        vm, vc, vp = v[:-2], v[1:-1], v[2:]
        num_w = (wp + wm) * inv_h2 + (wp - wm) * conv + vc**2 / ri**2
        den_w = (
            2.0 * inv_h2
            + vc**2 / ri**2
            + lam * (1.0 - wc) * (1.0 - 0.5 * wc)
        )
        num_v = (vp + vm) * inv_h2 - (vp - vm) * conv
        den_v = 2.0 * inv_h2 + (1.0 - wc) ** 2
        w[1:-1] = np.clip(num_w / den_w, 0.0, 1.0)
        v[1:-1] = np.clip(num_v / den_v, 0.0, 1.0)
    return w, v


def _initial_guess(kind, r, r_max):
    if kind == "tanh":
        w = 1.0 - np.tanh(r)
        v = 1.0 - np.tanh(r) ** 2
    elif kind == "ramp":
        ramp = np.clip(r / min(4.0, 0.4 * r_max), 0.0, 1.0)
        w = 1.0 - ramp
        v = 1.0 - ramp**2
    else:
        raise InvalidInputError(f"unknown initialization {kind!r}")
    w[0] = v[0] = 1.0
    w[-1] = v[-1] = 0.0
    return w, v


def _origin_coefficients(r, U, V):
    """Extrapolate U/r and V/r^2 to r = 0 from the three smallest nodes."""
    rs = r[1:4]
    x = (rs / rs[-1]) ** 2  # scaled r^2; the profiles are even/odd in r
    c = float(np.polyval(np.polyfit(x, U[1:4] / rs, 2), 0.0))
    d = float(np.polyval(np.polyfit(x, V[1:4] / rs**2, 2), 0.0))
    return c, d


def solve_profile(lam, r_max=20.0, nodes=4000, init="tanh", tol=1e-10, max_iter=80):
    """Solve the vortex profile system on [0, r_max].

    Parameters
    ----------
    lam : float
        Coupling constant, must be positive.
    r_max : float
        Truncation radius (>= 10); the outer boundary carries the value 1,
        committing an O(exp(-m r_max)) truncation error.
    nodes : int
        Number of grid points including both endpoints (>= 100).
    init : str
        Initial guess family, "tanh" or "ramp".
    tol : float
        Sup-norm residual target for the interior stencil equations.
        Targets below the stencil round-off floor (about 32 eps / h^2,
        from cancellation in the second difference) are clamped to it.
    max_iter : int
        Cap on damped-Newton iterations.

    Returns
    -------
    VortexProfile
    """
    if not (isinstance(lam, (int, float)) and math.isfinite(lam) and lam > 0):
        raise InvalidInputError(f"coupling must be a positive number, got {lam!r}")
    if not (isinstance(r_max, (int, float)) and math.isfinite(r_max) and r_max >= 10):
        raise InvalidInputError(f"r_max must be >= 10, got {r_max!r}")
    if not (isinstance(nodes, (int, np.integer)) and nodes >= 100):
        raise InvalidInputError(f"nodes must be an integer >= 100, got {nodes!r}")

    lam = float(lam)
    r_max = float(r_max)
    nodes = int(nodes)
    r = np.linspace(0.0, r_max, nodes)
    h = r[1] - r[0]
    w, v = _initial_guess(init, r, r_max)
    tol = max(tol, 32.0 * np.finfo(float).eps / h**2)

    history = []
    converged = False
    for _ in range(max_iter):
        res = _interleave(*_interior_residuals(r, h, lam, w, v))
        sup = float(np.max(np.abs(res)))
        history.append(sup)
        if sup < tol:
            converged = True
            break
        ab = _newton_matrix(r, h, lam, w, v)
        step = solve_banded((2, 2), ab, -res)
        dw = step[0::2]
        dv = step[1::2]

        alpha = 1.0
        accepted = False
        while alpha >= 2.0**-6:
            wt = w.copy()
            vt = v.copy()
            wt[1:-1] += alpha * dw
            vt[1:-1] += alpha * dv
            trial = _interleave(*_interior_residuals(r, h, lam, wt, vt))
            sup_t = float(np.max(np.abs(trial)))
            if sup_t < (1.0 - 0.25 * alpha) * sup or sup_t < tol:
                w, v = wt, vt
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # Newton stalled; a few smoothing sweeps reshape the iterate.
            w, v = _relaxation_sweeps(r, h, lam, w, v, 10)
    if not converged:
        raise ConvergenceError(
            f"profile solve did not reach tol={tol:g} in {max_iter} iterations",
            residual_history=history,
        )

    U = 1.0 - w
    V = 1.0 - v
    dU = -np.gradient(w, r, edge_order=2)
    dV = -np.gradient(v, r, edge_order=2)
    c_fit, d_fit = _origin_coefficients(r, U, V)

    if np.min(w) < -1e-12 or np.max(w) > 1.0 + 1e-12:
        raise ConvergenceError(
            "converged iterate leaves the [0, 1] band for U", residual_history=history
        )
    if np.min(v) < -1e-12 or np.max(v) > 1.0 + 1e-12:
        raise ConvergenceError(
            "converged iterate leaves the [0, 1] band for V", residual_history=history
        )
    half = r <= 0.5 * r_max
    if np.any(np.diff(w[half]) >= 0.0):
        raise ConvergenceError(
            "converged U is not strictly increasing on [0, r_max/2]",
            residual_history=history,
        )

    return VortexProfile(
        lam=lam,
        r_max=r_max,
        nodes=nodes,
        r=r,
        U=U,
        V=V,
        dU=dU,
        dV=dV,
        m_lambda=min(math.sqrt(lam), 2.0),
        c_fit=c_fit,
        d_fit=d_fit,
        one_minus_U=w,
        one_minus_V=v,
    )


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------


def _fourth_order_residuals(r, h, lam, w, v):
    """Residuals with five-point fourth-order stencils (nodes 2..n-3).

    The solver drives the second-order stencil to round-off, so this is
    the quantity that exposes the genuine O(h^2) discretisation error and
    must shrink by ~4 when the node count doubles.
    """
    ri = r[2:-2]
    wc = w[2:-2]
    vc = v[2:-2]

    def d2(F):
        return (
            -F[:-4] + 16.0 * F[1:-3] - 30.0 * F[2:-2] + 16.0 * F[3:-1] - F[4:]
        ) / (12.0 * h**2)

    def d1(F):
        return (F[:-4] - 8.0 * F[1:-3] + 8.0 * F[3:-1] - F[4:]) / (12.0 * h)

    res_w = (
        d2(w)
        + d1(w) / ri
        + vc**2 * (1.0 - wc) / ri**2
        - lam * wc * (1.0 - wc) * (1.0 - 0.5 * wc)
    )
    res_v = d2(v) - d1(v) / ri - (1.0 - wc) ** 2 * vc
    return res_w, res_v


def profile_diagnostics(p):
    """Residual sup norms, tail decay rates, and near-origin coefficients.

    The decay rates are least-squares slopes of log(1 - U) and log(1 - V)
    over the window [r_max/2, 0.9 r_max], which avoids both the core and
    the contamination from the truncated boundary.

    The fourth-order residual sup is taken over r >= 1: the 1/r and 1/r^2
    stencil weights at the first few nodes scale with the grid itself, so
    only the fixed region reflects the pure O(h^2) error of the solution.
    """
    h = p.r[1] - p.r[0]
    w, v = p.complements()
    res_u, res_v = _interior_residuals(p.r, h, p.lam, w, v)
    res_u_ho, res_v_ho = _fourth_order_residuals(p.r, h, p.lam, w, v)
    away = p.r[2:-2] >= 1.0
    res_u_ho = res_u_ho[away]
    res_v_ho = res_v_ho[away]

    lo, hi = 0.5 * p.r_max, 0.9 * p.r_max
    window = (p.r >= lo) & (p.r <= hi)
    one_minus_u = w[window]
    one_minus_v = v[window]
    if np.min(one_minus_u) <= 0.0 or np.min(one_minus_v) <= 0.0:
        raise DegenerateFitError(
            "profile touches 1 inside the tail fit window; decay fit impossible"
        )
    slope_u, _ = line_fit(p.r[window], np.log(one_minus_u))
    slope_v, _ = line_fit(p.r[window], np.log(one_minus_v))
    c_fit, d_fit = _origin_coefficients(p.r, p.U, p.V)

    return ProfileDiagnostics(
        residual_sup_u=float(np.max(np.abs(res_u))),
        residual_sup_v=float(np.max(np.abs(res_v))),
        residual_sup_u_ho=float(np.max(np.abs(res_u_ho))),
        residual_sup_v_ho=float(np.max(np.abs(res_v_ho))),
        rate_u=float(-slope_u),
        rate_v=float(-slope_v),
        m_lambda=p.m_lambda,
        c_fit=c_fit,
        d_fit=d_fit,
        fit_window=(lo, hi),
    )


# --------------------------------------------------------------------------
# reduction quadratures
# --------------------------------------------------------------------------


def reduction_coefficients(p):
    """Composite-trapezoid quadratures of the reduction constants.

    Uses the stored central-difference derivatives.  The second derivative
    of V never appears explicitly: the combination (-V'' + V'/r) is
    replaced by U^2 (1 - V), which the converged profile satisfies to
    solver tolerance.
    """
    r = p.r
    U, V, dU, dV = p.U, p.V, p.dU, p.dV
    _, v = p.complements()
    safe_r = np.where(r > 0.0, r, 1.0)

    I1 = float(np.trapezoid(math.pi * r * dU**2, r))
    # V'/r -> 2 d at the origin; extrapolate like the origin fits do.
    rs = r[1:4]
    x = (rs / rs[-1]) ** 2
    I2 = math.pi * float(np.polyval(np.polyfit(x, dV[1:4] / rs, 2), 0.0))
    integrand_3 = np.where(r > 0.0, math.pi * dV**2 / safe_r, 0.0)
    I3 = float(np.trapezoid(integrand_3, r))
    I4 = float(np.trapezoid((-2.0 * math.pi + math.pi * V) * U * dU, r))

    gauge_src = U**2 * v  # equals -V'' + V'/r on the solution
    q_vpsq = float(np.trapezoid(math.pi * r * dV**2, r))
    q_gauge = float(np.trapezoid(4.0 * math.pi * r * V * gauge_src, r))
    q_flux = float(np.trapezoid(4.0 * math.pi * r**2 * V * U * dU, r))
    q_flux2 = float(np.trapezoid(2.0 * math.pi * r**2 * V**2 * U * dU, r))
    # Volume-element drift of the curved tube: the first-order change of
    # sqrt(det g) g^{jk} along the normal directions adds first-derivative
    # transport terms to both residual rows.  Their kernel pairings reduce
    # to two further radial quadratures (integration by parts turns
    # int r^2 U U' into int r (1 - U^2); int r U^2 (1 - V) equals 2 for
    # every coupling because the gauge profile carries unit total flux).
    q_core = float(np.trapezoid(2.0 * math.pi * r * (1.0 - U**2), r))
    q_charge = float(np.trapezoid(4.0 * math.pi * r * U**2 * v, r))

    fprime = (
        FPrimeTerm(
            name="r_vprime_sq",
            radial=q_vpsq,
            alpha=6.0,
            beta=-4.0,
            prefactor="6 cos(2s)^2 sin(2s)^(5/2) - 4 sin(2s)^(9/2)",
        ),
        FPrimeTerm(
            name="v_gauge_source_a",
            radial=q_gauge,
            alpha=1.0,
            beta=0.0,
            prefactor="cos(2s)^2 sin(2s)^(5/2)",
        ),
        FPrimeTerm(
            name="v_gauge_source_b",
            radial=q_gauge,
            alpha=0.0,
            beta=-1.0,
            prefactor="-sin(2s)^(9/2)",
        ),
        FPrimeTerm(
            name="v_u_flux",
            radial=q_flux,
            alpha=1.0,
            beta=0.0,
            prefactor="cos(2s)^2 sin(2s)^(5/2)",
        ),
        FPrimeTerm(
            name="v_sq_u_flux",
            radial=q_flux2,
            alpha=-1.0,
            beta=0.0,
            prefactor="-cos(2s)^2 sin(2s)^(5/2)",
        ),
        FPrimeTerm(
            name="gauge_row_drift",
            radial=q_vpsq,
            alpha=-8.0,
            beta=0.0,
            prefactor="-8 cos(2s)^2 sin(2s)^(5/2)",
        ),
        FPrimeTerm(
            name="order_flux_drift",
            radial=q_core,
            alpha=-1.0,
            beta=0.0,
            prefactor="-cos(2s)^2 sin(2s)^(5/2)",
        ),
        FPrimeTerm(
            name="charge_drift",
            radial=q_charge,
            alpha=-1.0,
            beta=1.0,
            prefactor="sin(2s)^(9/2) - cos(2s)^2 sin(2s)^(5/2)",
        ),
    )
    return ReductionCoefficients(
        lam=p.lam,
        I1=I1,
        I2=I2,
        I3=I3,
        I4=I4,
        c_lambda=I1 + I2 - 3.0 * I3,
        fprime=fprime,
    )


# --------------------------------------------------------------------------
# evaluation helpers and output
# --------------------------------------------------------------------------


class ProfileInterpolant:
    """Quintic-spline evaluation of a profile at arbitrary radii.

    Beyond r_max the profiles are clamped to their limits (1 for values,
    0 for derivatives); the clamp error is of the size of the truncation
    error of the solve itself.
    """

    def __init__(self, p):
        from scipy.interpolate import InterpolatedUnivariateSpline

        self.r_max = p.r_max
        self.lam = p.lam
        self._u = InterpolatedUnivariateSpline(p.r, p.U, k=5)
        self._v = InterpolatedUnivariateSpline(p.r, p.V, k=5)
        self._du = self._u.derivative()
        self._dv = self._v.derivative()
        self._d2u = self._u.derivative(2)
        self._d2v = self._v.derivative(2)

    def _eval(self, spline, r, outside):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        inside = r < self.r_max
        out = np.full(r.shape, outside, dtype=float)
        if np.any(inside):
            out[inside] = spline(r[inside])
        return out

    def U(self, r):
        return self._eval(self._u, r, 1.0).reshape(np.shape(r))

    def V(self, r):
        return self._eval(self._v, r, 1.0).reshape(np.shape(r))

    def dU(self, r):
        return self._eval(self._du, r, 0.0).reshape(np.shape(r))

    def dV(self, r):
        return self._eval(self._dv, r, 0.0).reshape(np.shape(r))

    def d2U(self, r):
        return self._eval(self._d2u, r, 0.0).reshape(np.shape(r))

    def d2V(self, r):
        return self._eval(self._d2v, r, 0.0).reshape(np.shape(r))


def write_profile_csv(p, path):
    """Write `r,U,V,dU,dV` rows, one per node, 17 significant digits."""
    lines = ["r,U,V,dU,dV"]
    for i in range(p.nodes):
        lines.append(
            ",".join(
                fmt17(x) for x in (p.r[i], p.U[i], p.V[i], p.dU[i], p.dV[i])
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")
