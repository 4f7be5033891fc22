"""Approximate-solution workbench on the normal tube of the minimal surface.

The approximate pair u = (A, psi) is assembled from the radial vortex
profiles (U, V) composed with a shifted normal coordinate

    t1 = a - eps f(s, theta),   t2 = b - eps g(s, theta),
    r~ = |(t1, t2)|,            phi~ = arg(t1, t2),

so that psi = W(r~) e^{i phi~} and A = Z(r~) d(phi~), where W and Z blend
the profiles into the constant 1 across a cutoff band in the scaled
squared radius u = (a^2 + b^2) eps^2 sin 2s.  Everything here is measured
against the exact induced metric of the tube (a polynomial in the normal
coordinates), with high-order finite differences supplying the honest
field derivatives:

* ``residual_components`` compares closed-form second-order expansions of
  each operator block against direct finite-difference evaluation;
* ``kernel_projection`` integrates the full residual F(u) against the two
  cutoff translation kernels of the vortex on one normal slice;
* ``reduction_scaling_check`` measures how those projections converge to
  the reduced-operator prediction as eps shrinks, and how the weighted
  residual norm scales;
* ``weighted_norm`` implements the tube ball norms (kinds "*" and "**")
  and the surface band norms (kinds "0kq" and "2kq");
* ``linearized_and_nonlinear`` evaluates the gauge-completed linearization
  and the nonlinear remainder on perturbation pairs w = (B, eta);
* ``omega_winding`` integrates an explicit closed 1-form with 2 pi
  periods around the surface along user loops.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import InterpolatedUnivariateSpline

from . import fermi, jacobi, vortex
from ._util import atomic_write_text, fmt17, loglog_slope, smoothstep5, trapz_weights
from .errors import (
    InvalidChartError,
    InvalidInputError,
    UnsupportedRegionError,
)

__all__ = [
    "ChartSpec",
    "ApproxFieldChart",
    "ResidualTerms",
    "ProjectionResult",
    "ResidualReport",
    "LoopSpec",
    "OmegaResult",
    "build_approximate",
    "residual_components",
    "kernel_projection",
    "kernel_pair_integral",
    "reduction_scaling_check",
    "weighted_norm",
    "linearized_and_nonlinear",
    "omega_winding",
    "omega_form",
    "write_residual_csv",
]


# cutoff thresholds in the scaled squared radius u = (a^2 + b^2) eps^2 sin2s:
# the profile blend transitions over [ZETA_LO, ZETA_HI], the projection
# cutoff over [CHI_LO, CHI_HI]; both are quintic smoothsteps.
ZETA_LO, ZETA_HI = 1.0 / 16.0, 1.0 / 4.0
CHI_LO, CHI_HI = 1.0 / 4.0, 1.0 / 2.0

_TINY = 1e-300


def _cutoff(u, lo, hi):
    """1 below lo, 0 above hi, quintic smoothstep in between."""
    return 1.0 - smoothstep5(np.clip((u - lo) / (hi - lo), 0.0, 1.0))


# --------------------------------------------------------------------------
# chart specification
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ChartSpec:
    """Discretisation and assembly options for an approximate-field chart.

    r_max bounds the normal radius of evaluation grids (None picks the
    projection-cutoff support automatically); dr and nphi set the polar
    quadrature resolution; fd_step the finite-difference step.  far_field
    chooses between the blended pair ("blend") and the raw profile
    composition ("vortex") outside the cutoff band.  gauge, if given, is
    a pair of closures (v, dv) applying the rotation psi -> e^{iv} psi,
    A -> A + dv.
    """

    r_max: float | None = None
    dr: float = 0.05
    nphi: int = 32
    s_min: float = 0.15
    s_max: float = math.pi / 2 - 0.15
    far_field: str = "blend"
    fd_step: float = 0.01
    gauge: tuple | None = None

    def __post_init__(self):
        if self.dr <= 0.0 or self.nphi < 8:
            raise InvalidInputError("need dr > 0 and nphi >= 8")
        if not 0.0 < self.s_min < self.s_max < math.pi / 2:
            raise InvalidInputError("s window must sit inside (0, pi/2)")
        if self.far_field not in ("blend", "vortex"):
            raise InvalidInputError(f"unknown far_field {self.far_field!r}")
        if self.fd_step <= 0.0:
            raise InvalidInputError("fd_step must be positive")
        if self.r_max is not None and self.r_max <= 0.0:
            raise InvalidInputError("r_max must be positive when given")


# --------------------------------------------------------------------------
# normal-field interpolation (spectral in theta, quintic splines in s)
# --------------------------------------------------------------------------


class _FieldInterp:
    """Smooth (s, theta) interpolant of a NormalField pair.

    Each theta mode coefficient is splined in s, so the interpolant is one
    fixed smooth function whose partial derivatives all mean the same
    thing - the property the finite-difference comparisons rely on.
    """

    def __init__(self, field_):
        if field_ is None:
            self.zero = True
            return
        self.zero = False
        if field_.kind != "s":
            raise InvalidInputError("chart normal field must be s-kind")
        s = field_.coord
        n = field_.theta.size
        k_max = min((n - 1) // 2, 8)
        modes = field_.modes(k_max=k_max)
        self.k_max = k_max
        deg = 5 if s.size > 5 else max(1, min(3, s.size - 1))
        self._spl = {}
        for comp in ("f", "g"):
            self._spl[comp + "0"] = InterpolatedUnivariateSpline(
                s, modes[comp + "0"], k=deg
            )
            self._spl[comp + "_cos"] = [
                InterpolatedUnivariateSpline(s, modes[comp + "_cos"][:, j], k=deg)
                for j in range(k_max)
            ]
            self._spl[comp + "_sin"] = [
                InterpolatedUnivariateSpline(s, modes[comp + "_sin"][:, j], k=deg)
                for j in range(k_max)
            ]

    def eval(self, comp, s, theta, ds=0, dth=0):
        """comp in {"f","g"}; ds-th s-derivative, dth-th theta-derivative."""
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(np.broadcast(s, theta).shape)
        if self.zero:
            return out
        if dth == 0:
            out = out + self._spl[comp + "0"](s, nu=ds)
        for j in range(self.k_max):
            k = j + 1
            ck = self._spl[comp + "_cos"][j](s, nu=ds)
            sk = self._spl[comp + "_sin"][j](s, nu=ds)
            ang_c, ang_s = np.cos(k * theta), np.sin(k * theta)
            if dth == 0:
                out = out + ck * ang_c + sk * ang_s
            elif dth == 1:
                out = out + k * (sk * ang_c - ck * ang_s)
            elif dth == 2:
                out = out - k * k * (ck * ang_c + sk * ang_s)
            else:
                raise InvalidInputError("theta derivative order > 2 unsupported")
        return out


# --------------------------------------------------------------------------
# exact tube metric, vectorised, with analytic first derivatives
# --------------------------------------------------------------------------


def _metric_pack(eps, s, a, b):
    """Exact induced metric at points (s, *, a, b), with derivatives.

    Returns (g, gi, dgi, dlog) shaped (N,4,4), (N,4,4), (N,4,4,4), (N,4):
    dgi[:, j] is the j-th coordinate derivative of the inverse metric and
    dlog[:, j] of log sqrt(det g); the theta slots are identically zero
    because the tube metric does not depend on theta.
    """
    s = np.asarray(s, dtype=float).ravel()
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    N = max(s.size, a.size, b.size)
    s, a, b = (np.broadcast_to(x, (N,)) for x in (s, a, b))
    sig = np.sin(2.0 * s)
    c2 = np.cos(2.0 * s)
    rootsig = np.sqrt(sig)
    kap = 1.0 / (eps * sig * rootsig)

    g = np.zeros((N, 4, 4))
    g[:, 0, 0] = (a - kap) ** 2 + b**2
    g[:, 0, 1] = g[:, 1, 0] = -2.0 * b / (eps * rootsig)
    g[:, 1, 1] = a**2 + b**2 + 1.0 / (eps**2 * sig) + 2.0 * a * rootsig / eps
    g[:, 1, 2] = g[:, 2, 1] = -b * c2
    g[:, 1, 3] = g[:, 3, 1] = a * c2
    g[:, 2, 2] = 1.0
    g[:, 3, 3] = 1.0

    # coordinate derivatives of g, order (s, a, b); theta derivative is 0
    dg = np.zeros((N, 3, 4, 4))
    kap_s = -3.0 * c2 / (eps * sig**2 * rootsig)
    dg[:, 0, 0, 0] = -2.0 * (a - kap) * kap_s
    dg[:, 0, 0, 1] = dg[:, 0, 1, 0] = 2.0 * b * c2 / (eps * sig * rootsig)
    dg[:, 0, 1, 1] = -2.0 * c2 / (eps**2 * sig**2) + 2.0 * a * c2 / (eps * rootsig)
    dg[:, 0, 1, 2] = dg[:, 0, 2, 1] = 2.0 * b * sig
    dg[:, 0, 1, 3] = dg[:, 0, 3, 1] = -2.0 * a * sig
    dg[:, 1, 0, 0] = 2.0 * (a - kap)
    dg[:, 1, 1, 1] = 2.0 * a + 2.0 * rootsig / eps
    dg[:, 1, 1, 3] = dg[:, 1, 3, 1] = c2
    dg[:, 2, 0, 0] = 2.0 * b
    dg[:, 2, 0, 1] = dg[:, 2, 1, 0] = -2.0 / (eps * rootsig)
    dg[:, 2, 1, 1] = 2.0 * b
    dg[:, 2, 1, 2] = dg[:, 2, 2, 1] = -c2

    gi = np.linalg.inv(g)
    # d(g^{-1}) = -g^{-1} (dg) g^{-1};  d log sqrt(det g) = tr(g^{-1} dg)/2
    dgi3 = -np.einsum("nij,ndjk,nkl->ndil", gi, dg, gi)
    dlog3 = 0.5 * np.einsum("nij,ndji->nd", gi, dg)

    dgi = np.zeros((N, 4, 4, 4))
    dgi[:, 0] = dgi3[:, 0]
    dgi[:, 2] = dgi3[:, 1]
    dgi[:, 3] = dgi3[:, 2]
    dlog = np.zeros((N, 4))
    dlog[:, 0] = dlog3[:, 0]
    dlog[:, 2] = dlog3[:, 1]
    dlog[:, 3] = dlog3[:, 2]
    return g, gi, dgi, dlog


def _scalar_blocks(gi, dgi, dlog, val, d1, d2):
    """Laplace-Beltrami of a scalar and the drift vector C^k, reusable."""
    Ck = np.einsum("njjk->nk", dgi) + np.einsum("njk,nj->nk", gi, dlog)
    lap = np.einsum("njk,jkn->n", gi, d2) + np.einsum("nk,kn->n", Ck, d1)
    return lap, Ck


def _two_form_divergence(g, gi, dgi, dlog, dA, d2A):
    """Exact (d* dA)_tau from first/second derivatives of the 1-form A.

    Uses the divergence identity for antisymmetric tensors, so the only
    approximation is in the supplied field derivatives.
    """
    curl = dA - np.transpose(dA, (1, 0, 2))          # curl[j,k] = d_j A_k - d_k A_j
    dcurl = d2A - np.transpose(d2A, (0, 2, 1, 3))    # dcurl[i,j,k] = d_i curl[j,k]
    coef = (
        np.einsum("na,nal,nbs->nlsb", dlog, gi, gi)
        + np.einsum("naal,nbs->nlsb", dgi, gi)
        + np.einsum("nal,nabs->nlsb", gi, dgi)
    )
    ddA_up = (
        np.einsum("nlsb,lsn->nb", coef, curl)
        + np.einsum("nal,nbs,alsn->nb", gi, gi, dcurl)
    )
    return -np.einsum("ntb,nb->nt", g, ddA_up).T     # (4, N)


def _assemble_residual(lam, pack, g, gi, dgi, dlog):
    """Exact-metric GL residual rows from a derivative pack."""
    psi, dpsi, d2psi = pack["psi"], pack["dpsi"], pack["d2psi"]
    A, dA, d2A = pack["A"], pack["dA"], pack["d2A"]
    lap_psi, Ck = _scalar_blocks(gi, dgi, dlog, psi, dpsi, d2psi)
    div_A = -(np.einsum("njk,jkn->n", gi, dA) + np.einsum("nk,kn->n", Ck, A))
    A_dpsi = np.einsum("njk,jn,kn->n", gi, A, dpsi)
    A_sq = np.einsum("njk,jn,kn->n", gi, A, A)
    F_psi = (
        -lap_psi
        - 1j * div_A * psi
        + 2j * A_dpsi
        + A_sq * psi
        + 0.5 * lam * (np.abs(psi) ** 2 - 1.0) * psi
    )
    ddA = _two_form_divergence(g, gi, dgi, dlog, dA, d2A)
    current = np.imag((dpsi - 1j * A * psi[None, :]) * np.conj(psi)[None, :])
    F_A = ddA - current
    return F_psi, F_A


# --------------------------------------------------------------------------
# the chart
# --------------------------------------------------------------------------


@dataclass
class ApproxFieldChart:
    """Approximate pair (psi, A) over the normal tube, with evaluators."""

    epsilon: float
    lam: float
    itp: vortex.ProfileInterpolant
    interp: _FieldInterp
    spec: ChartSpec
    coeffs: vortex.ReductionCoefficients | None = dc_field(default=None, repr=False)

    # -- geometry helpers ----------------------------------------------

    def focal_radius(self, s):
        sig = np.sin(2.0 * np.asarray(s, dtype=float))
        return 1.0 / (self.epsilon * sig**1.5)

    def chi_outer_radius(self, s):
        """Outer edge of the projection-cutoff support at position s."""
        sig = np.sin(2.0 * np.asarray(s, dtype=float))
        return 1.0 / (self.epsilon * np.sqrt(2.0 * sig))

    def r_outer(self, s):
        """Radius of the default evaluation grid at angular position s."""
        cap = 0.92 * float(np.min(self.focal_radius(s)))
        if self.spec.r_max is not None:
            if self.spec.r_max > cap:
                raise InvalidChartError(
                    f"grid radius {self.spec.r_max:.3f} exceeds the normal "
                    f"coordinate validity bound {cap:.3f} at s = "
                    f"{float(np.min(s)):.4f}"
                )
            return self.spec.r_max
        return min(float(np.max(self.chi_outer_radius(s))) + 1.0, cap)

    def _check_window(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < self.spec.s_min - 1e-12) or np.any(s > self.spec.s_max + 1e-12):
            raise InvalidInputError(
                f"s = {float(np.min(s)):.4f} outside chart window "
                f"[{self.spec.s_min:.4f}, {self.spec.s_max:.4f}]"
            )

    # -- field closure ----------------------------------------------------

    def _raw(self, s, theta, a, b):
        """All chart fields at coordinate arrays (s, theta, a, b)."""
        eps = self.epsilon
        s = np.asarray(s, dtype=float)
        theta = np.asarray(theta, dtype=float)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        f = self.interp.eval("f", s, theta)
        g_ = self.interp.eval("g", s, theta)
        t1 = a - eps * f
        t2 = b - eps * g_
        rt = np.hypot(t1, t2)
        safe = np.maximum(rt, _TINY)
        cph = np.where(rt > 0.0, t1 / safe, 1.0)
        sph = np.where(rt > 0.0, t2 / safe, 0.0)

        U = self.itp.U(rt)
        V = self.itp.V(rt)
        sig = np.sin(2.0 * s)
        u_cut = (a**2 + b**2) * eps**2 * sig
        if self.spec.far_field == "vortex":
            zeta1 = np.ones_like(u_cut)
        else:
            zeta1 = _cutoff(u_cut, ZETA_LO, ZETA_HI)
        W = zeta1 * U + (1.0 - zeta1)
        Z = zeta1 * V + (1.0 - zeta1)
        chi = _cutoff(u_cut, CHI_LO, CHI_HI)

        psi = W * (cph + 1j * sph)
        Zr = np.where(rt > 0.0, Z / safe, 0.0)
        f_s = self.interp.eval("f", s, theta, ds=1)
        g_s = self.interp.eval("g", s, theta, ds=1)
        f_t = self.interp.eval("f", s, theta, dth=1)
        g_t = self.interp.eval("g", s, theta, dth=1)
        # A_l = Z d_l(phi~) in the coordinate coframe (ds, dtheta, da, db)
        A = np.stack(
            [
                Zr * eps * (f_s * sph - g_s * cph),
                Zr * eps * (f_t * sph - g_t * cph),
                -Zr * sph,
                Zr * cph,
            ]
        )
        if self.spec.gauge is not None:
            v_fn, dv_fn = self.spec.gauge
            v = np.asarray(v_fn(s, theta, a, b), dtype=float)
            psi = psi * np.exp(1j * v)
            dv = dv_fn(s, theta, a, b)
            for j in range(4):
                A[j] = A[j] + np.asarray(dv[j], dtype=float)
        return {
            "psi": psi, "A": A, "rt": rt, "cph": cph, "sph": sph,
            "U": U, "V": V, "W": W, "Z": Z,
            "zeta1": zeta1, "chi": chi, "u_cut": u_cut,
            "f": f, "g": g_, "f_s": f_s, "g_s": g_s, "f_t": f_t, "g_t": g_t,
        }

    def fields(self, s, theta, a, b):
        """Approximate pair at points: returns (psi, A)."""
        self._check_window(s)
        raw = self._raw(s, theta, a, b)
        return raw["psi"], raw["A"]

    # -- finite-difference derivative pack ---------------------------------

    def _fd_pack(self, s, theta, a, b):
        """Values plus first/second coordinate derivatives of (psi, A).

        Fourth-order central stencils in all four coordinates; mixed
        second derivatives from the tensor product of first-derivative
        weights.  Arrays are flattened over the node set.
        """
        h = self.spec.fd_step
        base = np.stack(
            [np.asarray(x, dtype=float).ravel() for x in (s, theta, a, b)]
        )
        n = base.shape[1]
        dpsi = np.zeros((4, n), dtype=complex)
        d2psi = np.zeros((4, 4, n), dtype=complex)
        dA = np.zeros((4, 4, n))
        d2A = np.zeros((4, 4, 4, n))

        w1 = {-2: 1.0, -1: -8.0, 1: 8.0, 2: -1.0}
        w2 = {-2: -1.0, -1: 16.0, 1: 16.0, 2: -1.0}

        def eval_at(shift):
            pts = base.copy()
            for d, m in shift:
                pts[d] = pts[d] + m * h
            raw = self._raw(pts[0], pts[1], pts[2], pts[3])
            return raw["psi"], raw["A"]

        p0, A0 = eval_at(())
        for d in range(4):
            d2psi[d, d] = -30.0 * p0
            d2A[d, d] = -30.0 * A0
        for d in range(4):
            for m in (-2, -1, 1, 2):
                p, Av = eval_at(((d, m),))
                dpsi[d] += w1[m] * p
                d2psi[d, d] += w2[m] * p
                dA[d] += w1[m] * Av
                d2A[d, d] += w2[m] * Av
        for d1 in range(4):
            for d2_ in range(d1 + 1, 4):
                acc_p = np.zeros(n, dtype=complex)
                acc_A = np.zeros((4, n))
                for m1 in (-2, -1, 1, 2):
                    for m2 in (-2, -1, 1, 2):
                        p, Av = eval_at(((d1, m1), (d2_, m2)))
                        acc_p += (w1[m1] * w1[m2]) * p
                        acc_A += (w1[m1] * w1[m2]) * Av
                d2psi[d1, d2_] = d2psi[d2_, d1] = acc_p / 144.0
                d2A[d1, d2_] = d2A[d2_, d1] = acc_A / 144.0
        dpsi /= 12.0 * h
        dA /= 12.0 * h
        for d in range(4):
            d2psi[d, d] /= 12.0 * h * h
            d2A[d, d] /= 12.0 * h * h
        for d1 in range(4):
            for d2_ in range(4):
                if d1 != d2_:
                    d2psi[d1, d2_] /= h * h
                    d2A[d1, d2_] /= h * h
        return {
            "psi": p0, "dpsi": dpsi, "d2psi": d2psi,
            "A": A0, "dA": dA, "d2A": d2A,
        }

    # -- the full residual --------------------------------------------------

    def residual_on_nodes(self, s, theta, a, b):
        """Both residual rows F(u) = (F_psi, F_A) at arbitrary nodes.

        F_psi = -Delta_A psi + (lam/2)(|psi|^2 - 1) psi and
        F_A = d*dA - Im(nabla_A psi . conj(psi)); every metric factor is
        exact and every field derivative a fourth-order difference.
        """
        self._check_window(s)
        S, TH, Aa, Bb = np.broadcast_arrays(
            np.asarray(s, float), np.asarray(theta, float),
            np.asarray(a, float), np.asarray(b, float),
        )
        shp = S.shape
        pack = self._fd_pack(S, TH, Aa, Bb)
        g, gi, dgi, dlog = _metric_pack(
            self.epsilon, S.ravel(), Aa.ravel(), Bb.ravel()
        )
        F_psi, F_A = _assemble_residual(self.lam, pack, g, gi, dgi, dlog)
        return F_psi.reshape(shp), F_A.reshape((4,) + shp)

    # -- slice grids ----------------------------------------------------

    def slice_grid(self, s, theta, dr=None, nphi=None, r_max=None):
        """Tensor polar grid (shifted centre) for one (s, theta) slice."""
        self._check_window(s)
        dr = self.spec.dr if dr is None else dr
        nphi = self.spec.nphi if nphi is None else nphi
        r_out = self.r_outer(s) if r_max is None else r_max
        eps = self.epsilon
        f0 = float(self.interp.eval("f", s, theta))
        g0 = float(self.interp.eval("g", s, theta))
        nr = int(math.ceil(r_out / dr)) + 1
        rt = np.linspace(0.0, r_out, nr)
        ph = 2.0 * math.pi * np.arange(nphi) / nphi
        R, P = np.meshgrid(rt, ph, indexing="ij")
        wr = trapz_weights(rt)
        return {
            "rt": rt, "phi": ph, "R": R, "P": P,
            "a": eps * f0 + R * np.cos(P),
            "b": eps * g0 + R * np.sin(P),
            "w": np.outer(wr, np.full(nphi, 2.0 * math.pi / nphi)) * R,
        }


def build_approximate(f_g, epsilon, profile, spec=None):
    """Assemble the approximate-solution chart for a normal field pair.

    f_g may be None (zero normal shift) or an s-kind NormalField; the pair
    must satisfy the a-priori band-norm bound of the reduced problem.
    profile is a solved vortex profile or its interpolant.  Raises
    InvalidChartError when the requested grid extends past the validity
    of the normal coordinates.
    """
    if not 0.0 < epsilon <= 0.5:
        raise InvalidInputError("epsilon must lie in (0, 0.5]")
    spec = ChartSpec() if spec is None else spec
    if isinstance(profile, vortex.VortexProfile):
        itp = vortex.ProfileInterpolant(profile)
    elif isinstance(profile, vortex.ProfileInterpolant):
        itp = profile
    else:
        raise InvalidInputError("profile must be a VortexProfile or interpolant")
    if f_g is not None:
        bound = weighted_norm(f_g, kind="2kq", k=1, q=1.9)
        if not np.isfinite(bound) or bound > 100.0:
            raise InvalidInputError(
                f"normal field too large for the chart (band norm {bound:.3g})"
            )
    chart = ApproxFieldChart(
        epsilon=float(epsilon),
        lam=itp.lam,
        itp=itp,
        interp=_FieldInterp(f_g),
        spec=spec,
    )
    if spec.r_max is not None:
        for s_probe in (spec.s_min, math.pi / 4, spec.s_max):
            chart.r_outer(s_probe)  # raises InvalidChartError if too large
    return chart


# --------------------------------------------------------------------------
# closed-form expansion blocks (residual_components)
# --------------------------------------------------------------------------


def _vortex_polar(itp, rt, cph, sph):
    """Profile fields and their analytic transverse derivatives."""
    safe = max(rt, 1e-12)
    U = float(itp.U(rt)); dU = float(itp.dU(rt)); d2U = float(itp.d2U(rt))
    V = float(itp.V(rt)); dV = float(itp.dV(rt)); d2V = float(itp.d2V(rt))
    ph = complex(cph, sph)
    out = {"U": U, "dU": dU, "d2U": d2U, "V": V, "dV": dV, "d2V": d2V, "ph": ph}
    out["psi"] = U * ph
    out["d3"] = (dU * cph - 1j * U * sph / safe) * ph
    out["d4"] = (dU * sph + 1j * U * cph / safe) * ph
    out["A3"] = -V * sph / safe
    out["A4"] = V * cph / safe
    out["Lam"] = dV / safe
    out["dLam"] = d2V / safe - dV / safe**2
    cos2p = cph * cph - sph * sph
    out["d3A3"] = sph * cph * (2.0 * V / safe**2 - dV / safe)
    out["d4A3"] = -dV * sph**2 / safe - V * cos2p / safe**2
    out["d3A4"] = dV * cph**2 / safe - V * cos2p / safe**2
    out["d4A4"] = sph * cph * (dV / safe - 2.0 * V / safe**2)
    Fr, Fphi = dU * ph, 1j * U * ph
    Frr, Fpp, Frp = d2U * ph, -U * ph, 1j * dU * ph
    c, s_ = cph, sph
    out["d33"] = (
        Frr * c * c + Fpp * s_ * s_ / safe**2 + Fr * s_ * s_ / safe
        - 2.0 * Frp * s_ * c / safe + 2.0 * Fphi * s_ * c / safe**2
    )
    out["d44"] = (
        Frr * s_ * s_ + Fpp * c * c / safe**2 + Fr * c * c / safe
        + 2.0 * Frp * s_ * c / safe - 2.0 * Fphi * s_ * c / safe**2
    )
    out["d34"] = (
        Frr * s_ * c - Fpp * s_ * c / safe**2 - Fr * s_ * c / safe
        + Frp * (c * c - s_ * s_) / safe + Fphi * (s_ * s_ - c * c) / safe**2
    )
    return out


@dataclass(frozen=True)
class ResidualTerms:
    """Closed-form vs direct values of each operator block at one node.

    Each *_closed entry is the second-order expansion of the block with
    analytic profile derivatives; each *_direct entry is the same block
    from finite differences of the chart fields against the exact tube
    metric.  The laplacian rows carry -Delta psi; the curl rows the
    1-form d*dA; the current rows the supercurrent (exact on both sides).
    """

    node: tuple
    laplacian_closed: complex
    laplacian_direct: complex
    gauge_div_closed: float
    gauge_div_direct: float
    coupling_closed: complex
    coupling_direct: complex
    curl_closed: np.ndarray
    curl_direct: np.ndarray
    current_closed: np.ndarray
    current_direct: np.ndarray
    F_psi: complex
    F_A: np.ndarray


def residual_components(chart, node):
    """Blockwise comparison of closed expansions against honest numerics.

    node = (s, theta, a, b) must lie where the profile blend is inactive;
    inside the blend band the expansions do not apply and
    UnsupportedRegionError is raised.
    """
    s, theta, a, b = (float(x) for x in node)
    chart._check_window(s)
    eps = chart.epsilon
    sig = math.sin(2.0 * s)
    c2 = math.cos(2.0 * s)
    u_cut = (a * a + b * b) * eps * eps * sig
    if chart.spec.far_field != "vortex" and u_cut > ZETA_LO:
        raise UnsupportedRegionError(
            f"node has blend coordinate u = {u_cut:.4f} > {ZETA_LO:.4f}; "
            "closed forms apply only where the profile blend is inactive"
        )
    if chart.spec.gauge is not None:
        raise InvalidInputError("closed forms require an ungauged chart")

    fi = chart.interp
    f = float(fi.eval("f", s, theta)); g_ = float(fi.eval("g", s, theta))
    f_s = float(fi.eval("f", s, theta, ds=1)); g_s = float(fi.eval("g", s, theta, ds=1))
    f_t = float(fi.eval("f", s, theta, dth=1)); g_t = float(fi.eval("g", s, theta, dth=1))
    f_ss = float(fi.eval("f", s, theta, ds=2)); g_ss = float(fi.eval("g", s, theta, ds=2))
    f_tt = float(fi.eval("f", s, theta, dth=2)); g_tt = float(fi.eval("g", s, theta, dth=2))

    t1, t2 = a - eps * f, b - eps * g_
    rt = math.hypot(t1, t2)
    if rt < 1e-9:
        raise InvalidInputError("node sits on the vortex centre line")
    cph, sph = t1 / rt, t2 / rt
    p = _vortex_polar(chart.itp, rt, cph, sph)

    # rho^{-2} = sin 2s and its powers
    r2, r4, r6 = sig, sig**2, sig**3
    r5, r9 = sig**2.5, sig**4.5
    d3, d4, d33, d44, d34 = p["d3"], p["d4"], p["d33"], p["d44"], p["d34"]

    # -- minus the scalar Laplacian --------------------------------------
    lap_closed = (
        2.0 * eps**2 * r4 * c2 * (eps * f_s * d3 + eps * g_s * d4)
        + eps**2 * r6 * (eps * f_ss * d3 + eps * g_ss * d4)
        + eps**2 * r2 * (eps * f_tt * d3 + eps * g_tt * d4)
        + 2.0 * b * eps**2 * r2 * c2 * (eps * f_t * d33 + eps * g_t * d34)
        + 2.0 * a * eps**2 * r2 * c2 * (-eps * f_t * d34 - eps * g_t * d44)
        + 2.0 * a * eps**2 * r6 * d3
        - d33
        - b**2 * eps**2 * r2 * c2**2 * d33
        + a * eps**2 * r2 * c2**2 * d3
        + 2.0 * a * b * eps**2 * r2 * c2**2 * d34
        + b * eps**2 * r2 * c2**2 * d4
        + 2.0 * b * eps**2 * r6 * d4
        - d44
        - a**2 * eps**2 * r2 * c2**2 * d44
        # third-order volume-element drift (same coefficients as the
        # gauge-divergence block) and the matching inverse-metric terms
        + (-(2.0 * a**2 + 4.0 * b**2) * c2**2 * eps**3 * r5
           + 4.0 * b**2 * eps**3 * r9) * d3
        + (2.0 * a * b * c2**2 * eps**3 * r5
           - 4.0 * a * b * eps**3 * r9) * d4
        + 2.0 * a * b**2 * c2**2 * eps**3 * r5 * d33
        - 4.0 * a**2 * b * c2**2 * eps**3 * r5 * d34
        + 2.0 * a**3 * c2**2 * eps**3 * r5 * d44
    )

    # -- gauge-field divergence d*A ---------------------------------------
    A3, A4 = p["A3"], p["A4"]
    d3A3, d4A3, d3A4, d4A4 = p["d3A3"], p["d4A3"], p["d3A4"], p["d4A4"]
    div_closed = (
        eps**2 * r6 * (eps * f_ss * A3 + eps * g_ss * A4)
        + eps**2 * r2 * (eps * f_tt * A3 + eps * g_tt * A4)
        + 2.0 * b * c2 * eps**3 * r2 * f_t * d3A3
        + b * c2 * eps**3 * r2 * g_t * (d4A3 + d3A4)
        - a * c2 * eps**3 * r2 * f_t * (d3A4 + d4A3)
        - 2.0 * a * c2 * eps**3 * r2 * g_t * d4A4
        - (-a * b * c2**2 * eps**2 * r2 + 2.0 * a**2 * b * c2**2 * eps**3 * r5)
        * (d4A3 + d3A4)
        - (1.0 + b**2 * c2**2 * eps**2 * r2 - 2.0 * a * b**2 * c2**2 * eps**3 * r5)
        * d3A3
        - (1.0 + a**2 * c2**2 * eps**2 * r2 - 2.0 * a**3 * c2**2 * eps**3 * r5)
        * d4A4
        + 2.0 * eps**2 * r4 * c2 * (eps * f_s * A3 + eps * g_s * A4)
        + (2.0 * a * eps**2 * r6 + a * c2**2 * eps**2 * r2
           - (2.0 * a**2 + 4.0 * b**2) * c2**2 * eps**3 * r5
           + 4.0 * b**2 * eps**3 * r9) * A3
        + (2.0 * b * eps**2 * r6 + b * c2**2 * eps**2 * r2
           + 2.0 * a * b * c2**2 * eps**3 * r5
           - 4.0 * a * b * eps**3 * r9) * A4
    )

    # -- coupling <A, d psi> ----------------------------------------------
    coup_closed = (
        -2.0 * b * c2 * eps**3 * r2 * f_t * A3 * d3
        - b * c2 * eps**3 * r2 * g_t * (A3 * d4 + A4 * d3)
        + a * c2 * eps**3 * r2 * f_t * (A4 * d3 + A3 * d4)
        + 2.0 * a * c2 * eps**3 * r2 * g_t * A4 * d4
        + (1.0 + b**2 * c2**2 * eps**2 * r2 - 2.0 * a * b**2 * c2**2 * eps**3 * r5)
        * A3 * d3
        + (-a * b * c2**2 * eps**2 * r2 + 2.0 * a**2 * b * c2**2 * eps**3 * r5)
        * (A3 * d4 + A4 * d3)
        + (1.0 + a**2 * c2**2 * eps**2 * r2 - 2.0 * a**3 * c2**2 * eps**3 * r5)
        * A4 * d4
    )

    # -- curl divergence (d*dA)_tau ---------------------------------------
    Lam, dLam = p["Lam"], p["dLam"]
    d3L, d4L = dLam * cph, dLam * sph
    d1L = dLam * (-eps * (f_s * cph + g_s * sph))
    d2L = dLam * (-eps * (f_t * cph + g_t * sph))
    # derivatives of the curl components from the closed-form table
    d1A13 = eps * (g_ss * Lam + g_s * d1L)
    d2A23 = eps * (g_tt * Lam + g_t * d2L)
    d3A23 = eps * g_t * d3L
    d4A23 = eps * g_t * d4L
    d1A14 = -eps * (f_ss * Lam + f_s * d1L)
    d2A24 = -eps * (f_tt * Lam + f_t * d2L)
    d3A24 = -eps * f_t * d3L
    d4A24 = -eps * f_t * d4L
    A13, A14 = eps * g_s * Lam, -eps * f_s * Lam
    # the first two rows carry the geometric volume-drift terms of the
    # curved tube alongside the (f, g)-transport terms; both are O(eps)
    # except for the theta row's order-one 2 cos(2s) Lambda part.
    sq = math.sqrt(sig)
    curl_closed = np.array(
        [
            cph * eps * g_s * dLam - sph * eps * f_s * dLam
            + 2.0 * b * c2 * sq * Lam * eps,
            cph * eps * g_t * dLam - sph * eps * f_t * dLam
            + 2.0 * c2 * Lam - 2.0 * a * c2 * sig * sq * Lam * eps,
            (
                -eps**2 * r6 * d1A13
                - eps**2 * r2 * d2A23
                - b * c2 * eps**2 * r2 * d3A23
                + a * c2 * eps**2 * r2 * d4A23
                + a * c2 * eps**2 * r2 * (-d2L)
                - (-a * b * c2**2 * eps**2 * r2 + 2.0 * a**2 * b * c2**2 * eps**3 * r5)
                * (-d3L)
                - (1.0 + a**2 * c2**2 * eps**2 * r2 - 2.0 * a**3 * c2**2 * eps**3 * r5)
                * (-d4L)
                - 2.0 * eps**2 * r4 * c2 * A13
                + (2.0 * b * eps**2 * r6 + b * c2**2 * eps**2 * r2
                   + 2.0 * a * b * c2**2 * eps**3 * r5
                   - 4.0 * a * b * eps**3 * r9) * (-Lam)
                + b * c2**2 * eps**2 * r2 * Lam
                - 2.0 * a * b * c2**2 * eps**3 * r5 * Lam
            ),
            (
                -eps**2 * r6 * d1A14
                - eps**2 * r2 * d2A24
                - b * c2 * eps**2 * r2 * d3A24
                + a * c2 * eps**2 * r2 * d4A24
                - b * c2 * eps**2 * r2 * d2L
                - (1.0 + b**2 * c2**2 * eps**2 * r2 - 2.0 * a * b**2 * c2**2 * eps**3 * r5)
                * d3L
                - (-a * b * c2**2 * eps**2 * r2 + 2.0 * a**2 * b * c2**2 * eps**3 * r5)
                * d4L
                - 2.0 * eps**2 * r4 * c2 * A14
                + (2.0 * a * eps**2 * r6 + a * c2**2 * eps**2 * r2
                   - (2.0 * a**2 + 4.0 * b**2) * c2**2 * eps**3 * r5
                   + 4.0 * b**2 * eps**3 * r9) * Lam
                - a * c2**2 * eps**2 * r2 * Lam
                + 2.0 * a**2 * c2**2 * eps**3 * r5 * Lam
            ),
        ]
    )

    # -- supercurrent (exact closed form) ----------------------------------
    U, V = p["U"], p["V"]
    usq = U * U * (1.0 - V) / rt
    current_closed = np.array(
        [
            eps * f_s * usq * sph - eps * g_s * usq * cph,
            eps * f_t * usq * sph - eps * g_t * usq * cph,
            -U * U * sph / rt - A3 * U * U,
            U * U * cph / rt - A4 * U * U,
        ]
    )

    direct = _direct_blocks(chart, s, theta, a, b)
    F_psi, F_A = chart.residual_on_nodes(s, theta, a, b)
    return ResidualTerms(
        node=(s, theta, a, b),
        laplacian_closed=complex(lap_closed),
        laplacian_direct=complex(-direct["lap"]),
        gauge_div_closed=float(np.real(div_closed)),
        gauge_div_direct=float(direct["div"]),
        coupling_closed=complex(coup_closed),
        coupling_direct=complex(direct["coup"]),
        curl_closed=curl_closed.astype(float),
        curl_direct=np.asarray(direct["ddA"], dtype=float),
        current_closed=current_closed.astype(float),
        current_direct=np.asarray(direct["current"], dtype=float),
        F_psi=complex(F_psi),
        F_A=np.asarray(F_A, dtype=float).reshape(4),
    )


def _direct_blocks(chart, s, theta, a, b):
    """Finite-difference values of each operator block at one node."""
    S = np.asarray([s]); TH = np.asarray([theta])
    Aa = np.asarray([a]); Bb = np.asarray([b])
    pack = chart._fd_pack(S, TH, Aa, Bb)
    g, gi, dgi, dlog = _metric_pack(chart.epsilon, S, Aa, Bb)
    psi, dpsi, d2psi = pack["psi"], pack["dpsi"], pack["d2psi"]
    A, dA, d2A = pack["A"], pack["dA"], pack["d2A"]
    lap, Ck = _scalar_blocks(gi, dgi, dlog, psi, dpsi, d2psi)
    div = -(np.einsum("njk,jkn->n", gi, dA) + np.einsum("nk,kn->n", Ck, A))
    coup = np.einsum("njk,jn,kn->n", gi, A, dpsi)
    ddA = _two_form_divergence(g, gi, dgi, dlog, dA, d2A)
    current = np.imag((dpsi - 1j * A * psi[None, :]) * np.conj(psi)[None, :])
    return {
        "lap": complex(lap[0]),
        "div": float(np.real(div[0])),
        "coup": complex(coup[0]),
        "ddA": ddA[:, 0],
        "current": current[:, 0],
    }


# --------------------------------------------------------------------------
# kernel projections on a slice
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ProjectionResult:
    """Projections of F(u) on the two cutoff translation kernels."""

    s: float
    theta: float
    values: np.ndarray           # (proj_1, proj_2)
    coarse: np.ndarray           # same on the halved grid (when checked)
    est_error: float
    warning: bool


def _slice_kernels(chart, raw, S, TH, Aa, Bb):
    """Analytic translation kernels of the profile composition on a slice.

    K_j psi = d_{j+2} psi - i A_{j+2} psi and (K_j A)_l = d_{j+2} A_l -
    d_l A_{j+2}, evaluated in closed form for the unblended pair (they are
    exact for any normal shift f, g).
    """
    eps = chart.epsilon
    rt = raw["rt"]
    safe = np.maximum(rt, 1e-12)
    cph, sph = raw["cph"], raw["sph"]
    U, dU = raw["U"], chart.itp.dU(rt)
    V, dV = raw["V"], chart.itp.dV(rt)
    ph = cph + 1j * sph
    K1psi = (dU * cph - 1j * (1.0 - V) * U * sph / safe) * ph
    K2psi = (dU * sph + 1j * (1.0 - V) * U * cph / safe) * ph
    Lam = dV / safe
    zero = np.zeros_like(rt)
    K1A = np.stack([-eps * raw["g_s"] * Lam, -eps * raw["g_t"] * Lam, zero, Lam])
    K2A = np.stack([eps * raw["f_s"] * Lam, eps * raw["f_t"] * Lam, -Lam, zero])
    if chart.spec.gauge is not None:
        v_fn, _ = chart.spec.gauge
        v = np.asarray(v_fn(S, TH, Aa, Bb), dtype=float)
        K1psi = K1psi * np.exp(1j * v)
        K2psi = K2psi * np.exp(1j * v)
    return K1psi, K2psi, K1A, K2A


def _projection_on_grid(chart, s, theta, dr, nphi, F_fields=None):
    grid = chart.slice_grid(s, theta, dr=dr, nphi=nphi)
    Aa, Bb = grid["a"], grid["b"]
    shp = Aa.shape
    S = np.full(shp, float(s)); TH = np.full(shp, float(theta))
    if F_fields is None:
        F_psi, F_A = chart.residual_on_nodes(S, TH, Aa, Bb)
    else:
        F_psi, F_A = F_fields
        if np.shape(F_psi) != shp or np.shape(F_A) != (4,) + shp:
            raise InvalidInputError("injected residual arrays do not match grid")
    raw = chart._raw(S, TH, Aa, Bb)
    K1psi, K2psi, K1A, K2A = _slice_kernels(chart, raw, S, TH, Aa, Bb)
    _, gi, _, _ = _metric_pack(chart.epsilon, S.ravel(), Aa.ravel(), Bb.ravel())
    gi = gi.reshape(shp + (4, 4))
    w = grid["w"] * raw["chi"]
    vals = []
    for Kpsi, KA in ((K1psi, K1A), (K2psi, K2A)):
        pair_psi = np.real(F_psi * np.conj(Kpsi))
        pair_A = np.einsum("...kl,k...,l...->...", gi, F_A, KA)
        vals.append(float(np.sum((pair_psi - pair_A) * w)))
    return np.asarray(vals)


def kernel_projection(chart, s, theta, dr=None, nphi=None, check=True,
                      rel_tol=5e-3, F_fields=None):
    """Project the residual on the two translation kernels at (s, theta).

    The quadrature is a tensor trapezoid in the shifted polar coordinates,
    weighted by the projection cutoff.  With check=True the computation is
    repeated on a coarsened grid and a warning flag raised when the two
    disagree beyond rel_tol (relative to the fine values).  F_fields may
    inject precomputed residual arrays on the default grid, in which case
    the projection is a fixed linear functional of them.
    """
    dr = chart.spec.dr if dr is None else dr
    nphi = chart.spec.nphi if nphi is None else nphi
    fine = _projection_on_grid(chart, s, theta, dr, nphi, F_fields=F_fields)
    coarse = fine.copy()
    warn = False
    err = 0.0
    if check and F_fields is None:
        coarse = _projection_on_grid(chart, s, theta, 2.0 * dr, max(8, nphi // 2))
        scale = max(float(np.max(np.abs(fine))), 1e-14)
        err = float(np.max(np.abs(fine - coarse))) / scale
        warn = bool(err > rel_tol)
        if warn:
            warnings.warn(
                f"slice projection at (s={s:.4f}, theta={theta:.4f}) moved by "
                f"{err:.2e} under grid coarsening; refine dr/nphi",
                stacklevel=2,
            )
    return ProjectionResult(
        s=float(s), theta=float(theta), values=fine,
        coarse=coarse, est_error=float(err), warning=warn,
    )


def kernel_pair_integral(chart, s, theta, dr=None, nphi=None):
    """Slice integral <T_1, T_2> of the blend-weighted kernel pairs.

    T_j = zeta_1 (d_{j+2} A - grad A_{j+2}, d_{j+2} psi - i A_{j+2} psi)
    computed by finite differences of the chart closures, so the blend
    region contributes its exact derivative terms.
    """
    grid = chart.slice_grid(s, theta, dr=dr, nphi=nphi)
    Aa, Bb = grid["a"], grid["b"]
    shp = Aa.shape
    S = np.full(shp, float(s)); TH = np.full(shp, float(theta))
    pack = chart._fd_pack(S, TH, Aa, Bb)
    psi = pack["psi"].reshape(shp)
    A = pack["A"].reshape((4,) + shp)
    dpsi = pack["dpsi"].reshape((4,) + shp)
    dA = pack["dA"].reshape((4, 4) + shp)
    raw = chart._raw(S, TH, Aa, Bb)
    T1psi = dpsi[2] - 1j * A[2] * psi
    T2psi = dpsi[3] - 1j * A[3] * psi
    T1A = dA[2] - dA[:, 2]
    T2A = dA[3] - dA[:, 3]
    _, gi, _, _ = _metric_pack(chart.epsilon, S.ravel(), Aa.ravel(), Bb.ravel())
    gi = gi.reshape(shp + (4, 4))
    pair = (
        np.real(T1psi * np.conj(T2psi))
        + np.einsum("...kl,k...,l...->...", gi, T1A, T2A)
    )
    return float(np.sum(pair * raw["zeta1"] ** 2 * grid["w"]))


# --------------------------------------------------------------------------
# the scaling report
# --------------------------------------------------------------------------


@dataclass
class ResidualReport:
    """Scaling data for the projected-residual identity across eps."""

    lam: float
    epsilon: list
    samples: list                 # (s, theta) sample slices
    F_norm: list                  # weighted residual norm per eps
    projections: list             # per eps: array (n_samples, 2)
    predicted: list               # per eps: array (n_samples, 2)
    mismatch: list                # per eps: max abs mismatch over samples
    slopes: dict                  # fitted log-log slopes
    warnings: list

    def as_dict(self):
        return {
            "epsilon": [float(e) for e in self.epsilon],
            "F_norm": [float(x) for x in self.F_norm],
            "projections": [np.asarray(p).tolist() for p in self.projections],
            "mismatch": [float(m) for m in self.mismatch],
            "slopes": {k: float(v) for k, v in self.slopes.items()},
        }


def _reduced_prediction(f_g, coeffs, samples):
    """eps-free factor of the reduced-operator prediction at the samples.

    Row j of the prediction is C_lam (L_H(f,g))_j plus the first-order
    transport rows of the displaced profile (see
    ``ReductionCoefficients.linear_drift_rows``) plus F'_j, with F'_2 = 0
    by the odd symmetry of the second-kernel pairing.
    """
    out = np.zeros((len(samples), 2))
    if f_g is None:
        for i, (s, _) in enumerate(samples):
            out[i, 0] = coeffs.f1_prime(s)
        return out, list(samples)
    lh = jacobi.apply_LH(f_g)
    n_th = f_g.theta.size
    freq = 1j * np.fft.rfftfreq(n_th, d=1.0 / n_th)
    f_t = np.fft.irfft(freq * np.fft.rfft(f_g.f, axis=1), n=n_th, axis=1)
    g_t = np.fft.irfft(freq * np.fft.rfft(f_g.g, axis=1), n=n_th, axis=1)
    snapped = []
    for i, (s, th) in enumerate(samples):
        ks = int(np.argmin(np.abs(lh.coord - s)))
        kt = int(np.argmin(np.abs((lh.theta - th + math.pi) % (2 * math.pi) - math.pi)))
        s_eff, th_eff = float(lh.coord[ks]), float(lh.theta[kt])
        snapped.append((s_eff, th_eff))
        kf = ks + 1  # apply_LH trims one boundary row at each end
        drift1, drift2 = coeffs.linear_drift_rows(
            s_eff, f_g.f[kf, kt], f_g.g[kf, kt], f_t[kf, kt], g_t[kf, kt]
        )
        out[i, 0] = coeffs.c_lambda * lh.f[ks, kt] + drift1 + coeffs.f1_prime(s_eff)
        out[i, 1] = coeffs.c_lambda * lh.g[ks, kt] + drift2
    return out, snapped


def reduction_scaling_check(
    f_g,
    lam,
    eps_list,
    samples=((math.pi / 4, 0.0), (math.pi / 8, 0.0)),
    profile=None,
    dr=0.05,
    nphi=32,
    norm_delta=0.45,
    norm_q=1.9,
    norm_s_samples=None,
):
    """Convergence experiment for the projected-residual identity.

    For each eps, the projections of F(u) on the translation kernels are
    compared with eps^3 (C_lam L_H(f,g) + F') at the sample slices, and
    the weighted residual norm of the blended chart is recorded.  Needs at
    least three eps values, strictly decreasing with ratio >= sqrt(2), so
    the log-log fits are meaningful.  When f_g is given the samples are
    snapped to its grid nodes (where L_H is available).
    """
    eps_arr = [float(e) for e in eps_list]
    if len(eps_arr) < 3:
        raise InvalidInputError("need at least three eps values")
    for e0, e1 in zip(eps_arr, eps_arr[1:]):
        if e1 >= e0:
            raise InvalidInputError("eps values must be strictly decreasing")
        if e0 / e1 < math.sqrt(2.0) - 1e-9:
            raise InvalidInputError("consecutive eps must shrink by >= sqrt(2)")
    if profile is None:
        profile = vortex.solve_profile(lam, r_max=32.0, nodes=6400)
    itp = vortex.ProfileInterpolant(profile)
    coeffs = vortex.reduction_coefficients(profile)
    pred0, samples_eff = _reduced_prediction(f_g, coeffs, samples)

    F_norms, projs, preds, mms, warns = [], [], [], [], []
    for eps in eps_arr:
        spec_pure = ChartSpec(dr=dr, nphi=nphi, far_field="vortex")
        chart = build_approximate(f_g, eps, itp, spec_pure)
        chart.coeffs = coeffs
        rows = np.zeros((len(samples_eff), 2))
        for i, (s, th) in enumerate(samples_eff):
            res = kernel_projection(chart, s, th, check=(i == 0))
            rows[i] = res.values
            if res.warning:
                warns.append(
                    f"eps={eps:g} slice (s={s:.4f}, theta={th:.4f}): "
                    f"grid-coarsening drift {res.est_error:.2e}"
                )
        projs.append(rows)
        preds.append(eps**3 * pred0)
        mms.append(float(np.max(np.abs(rows - eps**3 * pred0))))

        spec_blend = ChartSpec(dr=dr, nphi=nphi, far_field="blend")
        chart_b = build_approximate(f_g, eps, itp, spec_blend)
        F_norms.append(
            weighted_norm("residual", kind="**", chart=chart_b,
                          delta=norm_delta, q=norm_q,
                          s_samples=norm_s_samples)
        )

    slopes = {
        "mismatch": loglog_slope(eps_arr, np.maximum(mms, 1e-300)),
        "F_norm": loglog_slope(eps_arr, np.maximum(F_norms, 1e-300)),
    }
    return ResidualReport(
        lam=float(lam),
        epsilon=eps_arr,
        samples=[(float(s), float(t)) for (s, t) in samples_eff],
        F_norm=[float(x) for x in F_norms],
        projections=projs,
        predicted=preds,
        mismatch=mms,
        slopes=slopes,
        warnings=warns,
    )


def write_residual_csv(report, path):
    """Write the per-eps scaling table as CSV (first sample slice)."""
    lines = ["eps,Fnorm,proj1,proj2,mismatch"]
    for i, eps in enumerate(report.epsilon):
        row = np.asarray(report.projections[i])
        lines.append(
            ",".join(
                fmt17(x)
                for x in (
                    eps,
                    report.F_norm[i],
                    float(row[0, 0]),
                    float(row[0, 1]),
                    report.mismatch[i],
                )
            )
        )
    atomic_write_text(path, "\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# weighted norms
# --------------------------------------------------------------------------


def _tube_ball_norm(chart, field_fn, kind, delta, q, s_samples, theta_samples):
    """Sampled supremum of rho(P)^2 e^{delta r} ||h||_{L^q or W^{2,q}(B_1(P))}.

    Ball centres run along the phi~ = 0 ray of each sampled slice with
    unit spacing; the four-dimensional ball integral reduces to the slice
    disk with transverse thickness weight pi (1 - d^2), which is exact for
    fields that are constant across the (small) surface directions of the
    ball.
    """
    eps = chart.epsilon
    best = 0.0
    for s in s_samples:
        rho_sq = 1.0 / math.sin(2.0 * float(s))
        for th in theta_samples:
            grid = chart.slice_grid(s, th)
            Aa, Bb = grid["a"], grid["b"]
            shp = Aa.shape
            S = np.full(shp, float(s)); TH = np.full(shp, float(th))
            if field_fn == "residual":
                F_psi, F_A = chart.residual_on_nodes(S, TH, Aa, Bb)
                _, gi, _, _ = _metric_pack(eps, S.ravel(), Aa.ravel(), Bb.ravel())
                gi = gi.reshape(shp + (4, 4))
                Amag = np.sqrt(np.abs(
                    np.einsum("...kl,k...,l...->...", gi, F_A, F_A)
                ))
                hvals = [np.abs(F_psi), Amag]
            elif kind == "*":
                hvals = _w2q_fields(chart, S, TH, Aa, Bb, field_fn)
            else:
                vals = np.asarray(field_fn(S, TH, Aa, Bb), dtype=complex)
                hvals = [np.abs(vals)]
            cell = grid["w"]
            f0 = float(chart.interp.eval("f", s, th))
            g0 = float(chart.interp.eval("g", s, th))
            r_out = chart.r_outer(s)
            for rc in np.arange(0.0, r_out - 1.0 + 1e-9, 1.0):
                ac, bc = eps * f0 + rc, eps * g0
                d2 = (Aa - ac) ** 2 + (Bb - bc) ** 2
                mask = d2 <= 1.0
                if not np.any(mask):
                    continue
                thick = math.pi * (1.0 - d2[mask])
                acc = 0.0
                for h in hvals:
                    acc += float(np.sum((np.abs(h[mask]) ** q) * thick * cell[mask]))
                weight = rho_sq * math.exp(delta * math.hypot(ac, bc))
                best = max(best, weight * acc ** (1.0 / q))
    return best


def _w2q_fields(chart, S, TH, Aa, Bb, field_fn):
    """|h|, |grad h|_g, |Hess h|_g for a scalar closure.

    The Hessian is the coordinate second-derivative array contracted with
    the inverse metric (connection corrections are not subtracted).
    """
    h = chart.spec.fd_step
    shp = S.shape
    base = np.stack([S.ravel(), TH.ravel(), Aa.ravel(), Bb.ravel()])
    n = base.shape[1]

    def ev(shift):
        pts = base.copy()
        for d, m in shift:
            pts[d] = pts[d] + m * h
        return np.asarray(
            field_fn(*(pts[i].reshape(shp) for i in range(4))), dtype=complex
        ).ravel()

    val = ev(())
    d1 = np.zeros((4, n), dtype=complex)
    d2 = np.zeros((4, 4, n), dtype=complex)
    for d in range(4):
        vp, vm = ev(((d, 1),)), ev(((d, -1),))
        d1[d] = (vp - vm) / (2.0 * h)
        d2[d, d] = (vp - 2.0 * val + vm) / (h * h)
    for da in range(4):
        for db in range(da + 1, 4):
            vpp = ev(((da, 1), (db, 1))); vpm = ev(((da, 1), (db, -1)))
            vmp = ev(((da, -1), (db, 1))); vmm = ev(((da, -1), (db, -1)))
            d2[da, db] = d2[db, da] = (vpp - vpm - vmp + vmm) / (4.0 * h * h)
    _, gi, _, _ = _metric_pack(chart.epsilon, base[0], base[2], base[3])
    grad = np.sqrt(np.abs(np.einsum("njk,jn,kn->n", gi, d1, d1.conj())))
    hess = np.sqrt(np.abs(
        np.einsum("njk,nlm,jln,kmn->n", gi, gi, d2, d2.conj())
    ))
    return [np.abs(val).reshape(shp), grad.reshape(shp), hess.reshape(shp)]


def _nonuniform_d(vals, x):
    """First and second derivative on a possibly graded 1-D grid (axis 0)."""
    d1 = np.gradient(vals, x, axis=0, edge_order=2)
    d2 = np.gradient(d1, x, axis=0, edge_order=2)
    return d1, d2


def _surface_band_norm(field_, kind, k, q):
    """Band norms on the conjugated cylinder for a NormalField pair."""
    if field_.kind == "t":
        t = field_.coord
    else:
        t = jacobi.t_of_s(field_.coord)
    theta = field_.theta
    dth = 2.0 * math.pi / theta.size
    rho = np.sqrt(np.cosh(2.0 * t))
    wt = trapz_weights(t)

    def one(comp):
        comp = np.asarray(comp, dtype=float)
        d_t, d_tt = _nonuniform_d(comp, t)
        d_th = _periodic_d1(comp, dth)
        d_thth = _periodic_d1(d_th, dth)
        d_tth = _periodic_d1(d_t, dth)
        grad = np.sqrt(d_t**2 + d_th**2)
        hess = np.sqrt(d_tt**2 + 2.0 * d_tth**2 + d_thth**2)
        best = 0.0
        for rp in rho:
            band = (rho >= rp) & (rho <= rp + 1.0)
            if not np.any(band):
                continue
            w = wt[band][:, None] * dth
            val = rp**k * float(np.sum(np.abs(comp[band]) ** q * w)) ** (1.0 / q)
            if kind == "2kq":
                g1 = float(np.sum(grad[band] ** q * w)) ** (1.0 / q)
                g2 = float(np.sum(hess[band] ** q * w)) ** (1.0 / q)
                val += rp ** (k + 1) * g1 + rp ** (k + 2) * g2
            best = max(best, val)
        return best

    return one(field_.f) + one(field_.g)


def _periodic_d1(arr, step):
    return (np.roll(arr, -1, axis=1) - np.roll(arr, 1, axis=1)) / (2.0 * step)


def weighted_norm(
    field,
    kind,
    chart=None,
    delta=0.45,
    q=1.9,
    k=1,
    s_samples=None,
    theta_samples=(0.0,),
):
    """Weighted norms of tube fields and surface pairs.

    kind "**": sampled sup of rho(P)^2 e^{delta r} L^q(B_1(P)) over tube
    balls; kind "*": same with the W^{2,q} ball norm; kinds "0kq"/"2kq":
    band norms on the conjugated surface cylinder with weight rho^k (plus
    rho^{k+1}, rho^{k+2} on first and second derivatives for "2kq").
    field is "residual" (measure the chart's own residual), a closure
    (s, theta, a, b) -> values, or a NormalField for the surface kinds.
    """
    if not 1.0 < q < 2.0:
        raise InvalidInputError("q must lie in (1, 2)")
    if kind in ("0kq", "2kq"):
        if not isinstance(field, jacobi.NormalField):
            raise InvalidInputError("surface norms need a NormalField")
        return _surface_band_norm(field, kind, k, q)
    if kind not in ("*", "**"):
        raise InvalidInputError(f"unknown norm kind {kind!r}")
    if chart is None:
        raise InvalidInputError("tube norms need a chart")
    m_lam = min(math.sqrt(chart.lam), 2.0)
    if not 0.0 < delta < min(m_lam, 1.0):
        raise InvalidInputError("delta must lie in (0, min(m_lambda, 1))")
    if s_samples is None:
        s_samples = np.linspace(chart.spec.s_min, chart.spec.s_max, 7)
    return _tube_ball_norm(chart, field, kind, delta, q, s_samples, theta_samples)


# --------------------------------------------------------------------------
# linearized operator and nonlinear remainder
# --------------------------------------------------------------------------


def _closure_pack(chart, S, TH, Aa, Bb, fn, vector):
    """Values and two derivative levels of a perturbation closure.

    Second-order central differences (the perturbations in the algebraic
    identities below are smooth test fields, so this is ample).  For
    vector=True the closure returns the four 1-form components; indexing
    of the results matches the field pack: d1[j, k] = d_j B_k and
    d2[i, j, k] = d_i d_j B_k.
    """
    h = chart.spec.fd_step
    base = np.stack([S.ravel(), TH.ravel(), Aa.ravel(), Bb.ravel()])
    n = base.shape[1]

    def ev(shift):
        pts = base.copy()
        for d, m in shift:
            pts[d] = pts[d] + m * h
        out = fn(pts[0], pts[1], pts[2], pts[3])
        if vector:
            return np.asarray(out, dtype=complex).reshape(4, n)
        return np.asarray(out, dtype=complex).reshape(n)

    v0 = ev(())
    lead = (4,) if vector else ()
    d1 = np.zeros((4,) + lead + (n,), dtype=complex)
    d2 = np.zeros((4, 4) + lead + (n,), dtype=complex)
    for d in range(4):
        vp, vm = ev(((d, 1),)), ev(((d, -1),))
        d1[d] = (vp - vm) / (2.0 * h)
        d2[d, d] = (vp - 2.0 * v0 + vm) / (h * h)
    for da in range(4):
        for db in range(da + 1, 4):
            vpp = ev(((da, 1), (db, 1))); vpm = ev(((da, 1), (db, -1)))
            vmp = ev(((da, -1), (db, 1))); vmm = ev(((da, -1), (db, -1)))
            d2[da, db] = d2[db, da] = (vpp - vpm - vmp + vmm) / (4.0 * h * h)
    return {"v": v0, "d1": d1, "d2": d2}


def _drift_derivatives(eps, S, Aa, Bb):
    """Coordinate derivatives of the drift C^k by differencing exact fields."""
    h = 1e-3
    n = S.size
    out = np.zeros((n, 4, 4))

    def Ck_at(s, a, b):
        _, gi, dgi, dlog = _metric_pack(eps, s, a, b)
        return np.einsum("njjk->nk", dgi) + np.einsum("njk,nj->nk", gi, dlog)

    steps = {0: (1.0, 0.0, 0.0), 2: (0.0, 1.0, 0.0), 3: (0.0, 0.0, 1.0)}
    for d, (ds, da, db) in steps.items():
        cp = Ck_at(S + h * ds, Aa + h * da, Bb + h * db)
        cm = Ck_at(S - h * ds, Aa - h * da, Bb - h * db)
        out[:, d] = (cp - cm) / (2.0 * h)
    return out


def linearized_and_nonlinear(chart, w, nodes, part="all"):
    """Gauge-completed linearization and nonlinear remainder at nodes.

    w = (B_fn, eta_fn): closures mapping (s, theta, a, b) arrays to the
    four real 1-form components and the complex scalar.  nodes is a tuple
    (s, theta, a, b) of sample arrays.  Returns ((LB, Leta), (NB, Neta));
    part in {"all", "quadratic", "cubic"} selects the homogeneous degree
    of the remainder.
    """
    if part not in ("all", "quadratic", "cubic"):
        raise InvalidInputError(f"unknown part {part!r}")
    B_fn, eta_fn = w
    S, TH, Aa, Bb = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in nodes)
    )
    shp = S.shape
    chart._check_window(S)

    pack_u = chart._fd_pack(S, TH, Aa, Bb)
    psi, A = pack_u["psi"], pack_u["A"]
    dpsi, dA = pack_u["dpsi"], pack_u["dA"]
    g, gi, dgi, dlog = _metric_pack(chart.epsilon, S.ravel(), Aa.ravel(), Bb.ravel())
    Ck = np.einsum("njjk->nk", dgi) + np.einsum("njk,nj->nk", gi, dlog)
    nab_psi = dpsi - 1j * A * psi[None, :]

    packB = _closure_pack(chart, S, TH, Aa, Bb, B_fn, vector=True)
    packE = _closure_pack(chart, S, TH, Aa, Bb, eta_fn, vector=False)
    B = np.real(packB["v"])
    dB = np.real(packB["d1"])
    d2B = np.real(packB["d2"])
    eta, deta, d2eta = packE["v"], packE["d1"], packE["d2"]

    # Hodge Laplacian: -Delta B = d(d*B) + d*(dB)
    divB = -(np.einsum("njk,jkn->n", gi, dB) + np.einsum("nk,kn->n", Ck, B))
    dCk = _drift_derivatives(chart.epsilon, S.ravel(), Aa.ravel(), Bb.ravel())
    d_divB = -(
        np.einsum("ntjk,jkn->tn", dgi, dB)
        + np.einsum("njk,tjkn->tn", gi, d2B)
        + np.einsum("ntk,kn->tn", dCk, B)
        + np.einsum("nk,tkn->tn", Ck, dB)
    )
    dstar_dB = _two_form_divergence(g, gi, dgi, dlog, dB, d2B)
    minus_lap_B = d_divB + dstar_dB

    LB = (
        minus_lap_B
        + 2.0 * np.imag(np.conj(nab_psi) * eta[None, :])
        + B * (np.abs(psi) ** 2)[None, :]
    )

    lap_eta, _ = _scalar_blocks(gi, dgi, dlog, eta, deta, d2eta)
    divA = -(np.einsum("njk,jkn->n", gi, dA) + np.einsum("nk,kn->n", Ck, A))
    A_deta = np.einsum("njk,jn,kn->n", gi, A, deta)
    A_sq = np.einsum("njk,jn,kn->n", gi, A, A)
    lapA_eta = lap_eta + 1j * divA * eta - 2j * A_deta - A_sq * eta
    B_nabpsi = np.einsum("njk,jn,kn->n", gi, B, nab_psi)
    lam = chart.lam
    Leta = (
        -lapA_eta
        + 2j * B_nabpsi
        + 0.5 * (lam - 1.0) * psi**2 * np.conj(eta)
        + (lam + 0.5) * np.abs(psi) ** 2 * eta
        - 0.5 * lam * eta
    )

    nab_eta = deta - 1j * A * eta[None, :]
    B_nabeta = np.einsum("njk,jn,kn->n", gi, B, nab_eta)
    B_sq = np.einsum("njk,jn,kn->n", gi, B, B)
    NB_quad = (
        -np.imag(np.conj(eta)[None, :] * nab_eta)
        + B * (2.0 * np.real(np.conj(psi) * eta))[None, :]
    )
    NB_cub = B * (np.abs(eta) ** 2)[None, :]
    Ne_quad = (
        lam * (2.0 * psi * np.conj(eta) + np.conj(psi) * eta) * eta
        + B_sq * psi
        + 1j * (-eta * np.imag(np.conj(eta) * psi) + 2.0 * B_nabeta)
    )
    Ne_cub = lam * np.abs(eta) ** 2 * eta + B_sq * eta
    if part == "all":
        NB, Ne = NB_quad + NB_cub, Ne_quad + Ne_cub
    elif part == "quadratic":
        NB, Ne = NB_quad, Ne_quad
    else:
        NB, Ne = NB_cub, Ne_cub
    return (
        (LB.reshape((4,) + shp), Leta.reshape(shp)),
        (NB.reshape((4,) + shp), Ne.reshape(shp)),
    )


# --------------------------------------------------------------------------
# the explicit 1-form with 2 pi periods around the surface
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LoopSpec:
    """Closed loop for period integrals of the explicit 1-form.

    kind "normal_circle": circle of given radius in the normal plane at
    surface position (s, theta) of the unit-scale model; kind "far":
    planar circle of given radius in the first coordinate plane, offset
    along the second plane (non-linking); kind "custom": closure
    fn(t) -> point for t in [0, 2 pi).
    """

    kind: str = "normal_circle"
    s: float = math.pi / 4
    theta: float = 0.0
    radius: float = 0.1
    offset: float = 3.0
    fn: object = None
    n_nodes: int = 256


@dataclass(frozen=True)
class OmegaResult:
    period: float
    winding: float
    tail_bound: float
    min_surface_distance: float


def _omega_sources(rho_cut, n_rho, n_theta):
    lr = np.linspace(-math.log(rho_cut), math.log(rho_cut), n_rho)
    rho = np.exp(lr)
    w_r = trapz_weights(lr) * rho            # d rho = rho d(log rho)
    th = 2.0 * math.pi * np.arange(n_theta) / n_theta
    R, T = np.meshgrid(rho, th, indexing="ij")
    W = np.outer(w_r, np.full(n_theta, 2.0 * math.pi / n_theta))
    return R.ravel(), T.ravel(), W.ravel()


def omega_form(points, rho_cut=50.0, n_rho=480, n_theta=256):
    """The explicit 1-form at points of R^4 = C^2 (Cartesian components).

    points: array (N, 4) of coordinates (x1, y1, x2, y2).  Returns (N, 4)
    coefficients of (dx1, dy1, dx2, dy2).  The generating surface is the
    unit-scale model rho_1 rho_2 = 1/2, theta_1 = theta_2; the source
    integral runs over rho in [1/rho_cut, rho_cut] with an O(rho_cut^-2)
    truncation tail.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    R, T, W = _omega_sources(rho_cut, n_rho, n_theta)
    out = np.zeros((pts.shape[0], 4))
    sq2 = math.sqrt(2.0)
    pref = 1.0 / (4.0 * math.pi)
    for i in range(pts.shape[0]):
        x1, y1, x2, y2 = pts[i]
        r1 = math.hypot(x1, y1); r2 = math.hypot(x2, y2)
        t1 = math.atan2(y1, x1); t2 = math.atan2(y2, x2)
        dist2 = (
            r1 * r1 + r2 * r2 + R * R / 2.0 + 0.5 / (R * R)
            - sq2 * r1 * R * np.cos(T - t1)
            - sq2 * r2 * np.cos(T - t2) / R
        )
        ker = W / (dist2 * dist2)
        mixed = np.sin(2.0 * T - t1 - t2)
        mixed_c = np.cos(2.0 * T - t1 - t2)
        I_r1 = float(np.sum(ker * (
            -2.0 * sq2 * np.sin(T - t1) / R**2 + 2.0 * r2 * mixed / R
        )))
        I_r2 = float(np.sum(ker * (
            2.0 * sq2 * np.sin(T - t2) - 2.0 * r1 * mixed / R
        )))
        I_t1 = float(np.sum(ker * (
            -2.0 * r1 * r1 / R**3 + 2.0 * sq2 * r1 * np.cos(T - t1) / R**2
            - 2.0 * r1 * r2 * mixed_c / R
        )))
        I_t2 = float(np.sum(ker * (
            2.0 * r2 * r2 * R - 2.0 * sq2 * r2 * np.cos(T - t2)
            + 2.0 * r1 * r2 * mixed_c / R
        )))
        s1, c1 = math.sin(t1), math.cos(t1)
        s2, c2 = math.sin(t2), math.cos(t2)
        safe1, safe2 = max(r1, 1e-12), max(r2, 1e-12)
        out[i, 0] = pref * (I_r1 * c1 - I_t1 * s1 / safe1)
        out[i, 1] = pref * (I_r1 * s1 + I_t1 * c1 / safe1)
        out[i, 2] = pref * (I_r2 * c2 - I_t2 * s2 / safe2)
        out[i, 3] = pref * (I_r2 * s2 + I_t2 * c2 / safe2)
    return out


def _loop_points(loop):
    t = 2.0 * math.pi * np.arange(loop.n_nodes) / loop.n_nodes
    if loop.kind == "normal_circle":
        base, frame = fermi.surface_point_and_frame(loop.s, loop.theta, 1.0)
        p = np.asarray(base.cartesian, dtype=float)
        m = np.asarray(frame.m, dtype=float)
        n_ = np.asarray(frame.n, dtype=float)
        pts = (
            p[None, :]
            + loop.radius * np.cos(t)[:, None] * m[None, :]
            + loop.radius * np.sin(t)[:, None] * n_[None, :]
        )
        return pts, t
    if loop.kind == "far":
        pts = np.zeros((t.size, 4))
        pts[:, 0] = loop.radius * np.cos(t)
        pts[:, 1] = loop.radius * np.sin(t)
        pts[:, 2] = loop.offset
        return pts, t
    if loop.kind == "custom":
        if loop.fn is None:
            raise InvalidInputError("custom loop needs fn")
        pts = np.asarray([loop.fn(tt) for tt in t], dtype=float)
        if pts.shape != (t.size, 4):
            raise InvalidInputError("custom loop fn must return points of R^4")
        return pts, t
    raise InvalidInputError(f"unknown loop kind {loop.kind!r}")


def _min_surface_distance(pts):
    """Distance from points to the unit-scale model surface (dense scan)."""
    rho = np.exp(np.linspace(-3.0, 3.0, 241))
    th = 2.0 * math.pi * np.arange(128) / 128.0
    R, T = np.meshgrid(rho, th, indexing="ij")
    sq2o2 = math.sqrt(2.0) / 2.0
    surf = np.stack(
        [
            sq2o2 * R * np.cos(T),
            sq2o2 * R * np.sin(T),
            sq2o2 * np.cos(T) / R,
            sq2o2 * np.sin(T) / R,
        ],
        axis=-1,
    ).reshape(-1, 4)
    dmin = np.inf
    for i0 in range(0, pts.shape[0], 32):
        chunk = pts[i0 : i0 + 32]
        d2 = np.sum((chunk[:, None, :] - surf[None, :, :]) ** 2, axis=-1)
        dmin = min(dmin, float(np.sqrt(np.min(d2))))
    return dmin


def omega_winding(loop, rho_cut=50.0, n_rho=480, n_theta=256, min_distance=0.05):
    """Period of the explicit 1-form along a closed loop.

    Returns the raw period, the winding estimate period / 2 pi, a
    conservative truncation tail bound O(rho_cut^-2), and the least
    distance from the loop to the surface.  Loops closer to the surface
    than min_distance, or reaching into the truncated far shells, are
    rejected as invalid input.
    """
    pts, t = _loop_points(loop)
    dmin = _min_surface_distance(pts)
    if dmin < min_distance:
        raise InvalidInputError(
            f"loop approaches the surface to {dmin:.4f} < {min_distance:.4f}"
        )
    r1 = np.hypot(pts[:, 0], pts[:, 1])
    r2 = np.hypot(pts[:, 2], pts[:, 3])
    if float(np.max(np.maximum(r1, r2))) > rho_cut / 4.0:
        raise InvalidInputError("loop runs into the truncated far shells")
    vals = omega_form(pts, rho_cut=rho_cut, n_rho=n_rho, n_theta=n_theta)
    dt = 2.0 * math.pi / t.size
    dx = (np.roll(pts, -1, axis=0) - np.roll(pts, 1, axis=0)) / (2.0 * dt)
    period = float(np.sum(np.einsum("nj,nj->n", vals, dx)) * dt)
    M = float(np.max(np.maximum(r1, r2)))
    tail = 32.0 * (M + 1.0) ** 2 / rho_cut**2
    return OmegaResult(
        period=period,
        winding=period / (2.0 * math.pi),
        tail_bound=tail,
        min_surface_distance=dmin,
    )
