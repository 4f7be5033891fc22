"""Tests for the normal-variation operator, its kernel families, and mode solves."""

import math

import numpy as np
import pytest

from gl4 import jacobi
from gl4.errors import ConvergenceError, InvalidInputError
from gl4.jacobi import NormalField


def theta_grid(n):
    return np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)


def fit_slope(hs, errs):
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def sup_field(fld):
    return max(np.max(np.abs(fld.f)), np.max(np.abs(fld.g)))


# --------------------------------------------------------------------------
# grid container and mode transforms
# --------------------------------------------------------------------------


class TestNormalField:
    def test_mode_round_trip(self):
        """Random coefficients -> grid values -> coefficients is the identity."""
        rng = np.random.default_rng(7)
        t = np.linspace(-2.0, 2.0, 33)
        th = theta_grid(24)
        k_max = 5
        coeffs = {
            "f0": rng.normal(size=t.size),
            "g0": rng.normal(size=t.size),
            "f_cos": rng.normal(size=(t.size, k_max)),
            "f_sin": rng.normal(size=(t.size, k_max)),
            "g_cos": rng.normal(size=(t.size, k_max)),
            "g_sin": rng.normal(size=(t.size, k_max)),
        }
        fld = NormalField.from_modes("t", t, th, coeffs)
        back = fld.modes(k_max)
        for key, want in coeffs.items():
            assert np.max(np.abs(back[key] - want)) < 1e-12

    def test_mode_synthesis_matches_direct_sum(self):
        t = np.linspace(0.3, 1.2, 9)
        th = theta_grid(16)
        f = np.cos(th)[None, :] * t[:, None]
        g = 0.5 + np.sin(3 * th)[None, :] * np.exp(-t)[:, None]
        fld = NormalField(kind="t", coord=t, theta=th, f=f, g=g)
        m = fld.modes(4)
        assert np.max(np.abs(m["f_cos"][:, 0] - t)) < 1e-13
        assert np.max(np.abs(m["g0"] - 0.5)) < 1e-13
        assert np.max(np.abs(m["g_sin"][:, 2] - np.exp(-t))) < 1e-13
        assert np.max(np.abs(m["f0"])) < 1e-13
        assert np.max(np.abs(m["f_sin"])) < 1e-13

    def test_rejects_bad_kind(self):
        t = np.linspace(0.0, 1.0, 8)
        th = theta_grid(8)
        z = np.zeros((8, 8))
        with pytest.raises(InvalidInputError):
            NormalField(kind="r", coord=t, theta=th, f=z, g=z)

    def test_rejects_decreasing_coord(self):
        th = theta_grid(8)
        z = np.zeros((3, 8))
        with pytest.raises(InvalidInputError):
            NormalField(kind="t", coord=np.array([0.0, 1.0, 0.5]), theta=th, f=z, g=z)

    def test_rejects_s_outside_quarter_turn(self):
        th = theta_grid(8)
        z = np.zeros((3, 8))
        s = np.array([0.5, 1.0, 1.6])
        with pytest.raises(InvalidInputError):
            NormalField(kind="s", coord=s, theta=th, f=z, g=z)

    def test_rejects_nonuniform_theta(self):
        t = np.linspace(0.0, 1.0, 4)
        th = np.array([0.0, 1.0, 3.0, 5.0])
        z = np.zeros((4, 4))
        with pytest.raises(InvalidInputError):
            NormalField(kind="t", coord=t, theta=th, f=z, g=z)

    def test_rejects_shape_mismatch(self):
        t = np.linspace(0.0, 1.0, 4)
        th = theta_grid(8)
        with pytest.raises(InvalidInputError):
            NormalField(
                kind="t", coord=t, theta=th, f=np.zeros((4, 8)), g=np.zeros((8, 4))
            )

    def test_modes_rejects_excessive_k_max(self):
        t = np.linspace(0.0, 1.0, 4)
        th = theta_grid(8)
        z = np.zeros((4, 8))
        fld = NormalField(kind="t", coord=t, theta=th, f=z, g=z)
        with pytest.raises(InvalidInputError):
            fld.modes(k_max=5)

    def test_coordinate_change_round_trip(self):
        s = np.linspace(0.1, math.pi / 2 - 0.1, 41)
        assert np.max(np.abs(jacobi.s_of_t(jacobi.t_of_s(s)) - s)) < 1e-13
        # the two trig evaluations agree across the change of variable
        t = jacobi.t_of_s(s)
        sin_a, cos_a = np.sin(2 * s), np.cos(2 * s)
        sin_b = 1.0 / np.cosh(2 * t)
        cos_b = -np.tanh(2 * t)
        assert np.max(np.abs(sin_a - sin_b)) < 1e-13
        assert np.max(np.abs(cos_a - cos_b)) < 1e-13


# --------------------------------------------------------------------------
# the operator itself
# --------------------------------------------------------------------------


class TestApplyOperator:
    def test_zero_in_zero_out(self):
        s = np.linspace(0.2, math.pi / 2 - 0.2, 50)
        th = theta_grid(8)
        z = np.zeros((50, 8))
        out = jacobi.apply_LH(NormalField(kind="s", coord=s, theta=th, f=z, g=z))
        assert sup_field(out) == 0.0
        assert out.coord.size == 48

    def test_linearity(self):
        rng = np.random.default_rng(3)
        s = np.linspace(0.2, math.pi / 2 - 0.2, 40)
        th = theta_grid(12)
        shape = (40, 12)
        a = NormalField(
            kind="s", coord=s, theta=th,
            f=rng.normal(size=shape), g=rng.normal(size=shape),
        )
        b = NormalField(
            kind="s", coord=s, theta=th,
            f=rng.normal(size=shape), g=rng.normal(size=shape),
        )
        comb = NormalField(
            kind="s", coord=s, theta=th,
            f=2.0 * a.f - 3.0 * b.f, g=2.0 * a.g - 3.0 * b.g,
        )
        la, lb, lc = jacobi.apply_LH(a), jacobi.apply_LH(b), jacobi.apply_LH(comb)
        scale = max(sup_field(la), sup_field(lb))
        assert np.max(np.abs(lc.f - (2 * la.f - 3 * lb.f))) < 1e-11 * scale
        assert np.max(np.abs(lc.g - (2 * la.g - 3 * lb.g))) < 1e-11 * scale

    def test_rejects_tiny_grid(self):
        s = np.linspace(0.3, 1.0, 5)
        th = theta_grid(8)
        z = np.zeros((5, 8))
        with pytest.raises(InvalidInputError):
            jacobi.apply_LH(NormalField(kind="s", coord=s, theta=th, f=z, g=z))

    def test_rejects_wrong_kind(self):
        t = np.linspace(-1.0, 1.0, 20)
        th = theta_grid(8)
        z = np.zeros((20, 8))
        fld_t = NormalField(kind="t", coord=t, theta=th, f=z, g=z)
        with pytest.raises(InvalidInputError):
            jacobi.apply_LH(fld_t)
        s = np.linspace(0.2, 1.2, 20)
        fld_s = NormalField(kind="s", coord=s, theta=th, f=z, g=z)
        with pytest.raises(InvalidInputError):
            jacobi.apply_conjugate_LH(fld_s)

    def test_central_theta_matches_spectral_on_low_modes(self):
        s = np.linspace(0.3, 1.2, 30)
        th = theta_grid(256)
        f = np.outer(np.sin(2 * s), np.cos(th))
        g = np.outer(np.cos(s), np.sin(2 * th))
        fld = NormalField(kind="s", coord=s, theta=th, f=f, g=g)
        a = jacobi.apply_LH(fld, theta_method="spectral")
        b = jacobi.apply_LH(fld, theta_method="central")
        assert np.max(np.abs(a.f - b.f)) < 2e-3
        assert np.max(np.abs(a.g - b.g)) < 2e-3


# --------------------------------------------------------------------------
# closed-form kernel families are annihilated at second order
# --------------------------------------------------------------------------


FAMILY_CASES = [
    ("translation", dict(a=(1.0, 0.0), alpha=0.0)),
    ("translation", dict(a=(0.3, -1.2), alpha=0.7)),
    ("dilation", dict()),
    ("su2", dict(A=np.array([[0.8, 0.3], [0.3, -0.5]]))),
    ("o4", dict(A=np.array([[0.0, 1.0], [-1.0, 0.0]]), branch="+")),
    ("o4", dict(A=np.array([[0.0, 1.0], [-1.0, 0.0]]), branch="-")),
]


class TestKernelFamilies:
    @pytest.mark.parametrize("family,kw", FAMILY_CASES)
    def test_annihilated_at_second_order(self, family, kw):
        """Residual of each closed-form field decays like h^2 under refinement."""
        th = theta_grid(16)
        hs, errs = [], []
        for n in (101, 201, 401):
            s = np.linspace(0.15, math.pi / 2 - 0.15, n)
            fld = jacobi.explicit_jacobi_field(family, s, th, **kw)
            out = jacobi.apply_LH(fld)
            hs.append(s[1] - s[0])
            errs.append(sup_field(out) + 1e-300)
        slope = fit_slope(hs, errs)
        assert 1.8 <= slope <= 2.2, (family, kw, slope, errs)

    def test_dilation_profile(self):
        s = np.array([0.3, math.pi / 4])
        fld = jacobi.explicit_jacobi_field("dilation", s, theta_grid(4))
        assert abs(fld.f[1, 0] - 1.0) < 1e-15  # sqrt(sin 2s) = 1 at the waist
        assert np.max(np.abs(fld.g)) == 0.0

    def test_su2_identity_matrix_has_no_tangential_rotation(self):
        s = np.linspace(0.2, 1.2, 11)
        th = theta_grid(8)
        fld = jacobi.explicit_jacobi_field("su2", s, th, A=np.eye(2))
        want_f = (np.sin(2 * s) ** -0.5 * np.cos(2 * s))[:, None]
        assert np.max(np.abs(fld.f - want_f)) < 1e-14
        assert np.max(np.abs(fld.g)) == 0.0

    def test_o4_fields_are_purely_rotational(self):
        s = np.linspace(0.2, 1.2, 11)
        th = theta_grid(8)
        A = np.array([[0.0, -2.0], [2.0, 0.0]])
        for branch in ("+", "-"):
            fld = jacobi.explicit_jacobi_field("o4", s, th, A=A, branch=branch)
            assert np.max(np.abs(fld.f)) == 0.0
            assert np.max(np.abs(fld.g)) > 0.0

    def test_symmetry_class_is_enforced(self):
        s = np.linspace(0.2, 1.2, 11)
        th = theta_grid(8)
        skew = np.array([[0.0, 1.0], [-1.0, 0.0]])
        sym = np.array([[1.0, 0.5], [0.5, 2.0]])
        with pytest.raises(InvalidInputError):
            jacobi.explicit_jacobi_field("su2", s, th, A=skew)
        with pytest.raises(InvalidInputError):
            jacobi.explicit_jacobi_field("o4", s, th, A=sym)
        with pytest.raises(InvalidInputError):
            jacobi.explicit_jacobi_field("translation", s, th)
        with pytest.raises(InvalidInputError):
            jacobi.explicit_jacobi_field("o4", s, th, A=skew, branch="x")
        with pytest.raises(InvalidInputError):
            jacobi.explicit_jacobi_field("helical", s, th)


# --------------------------------------------------------------------------
# the cylinder conjugation
# --------------------------------------------------------------------------


class TestConjugation:
    def make_field(self, kind, coord, th):
        # smooth, generic data expressed intrinsically in t so the same
        # function can be sampled on either grid
        t = coord if kind == "t" else jacobi.t_of_s(coord)
        tt = t[:, None]
        f = np.exp(-0.4 * tt**2) * (np.cos(th) + 0.3 * np.sin(2 * th))[None, :]
        g = np.tanh(tt) * np.exp(-0.3 * tt**2) * (0.2 + np.sin(th))[None, :]
        return NormalField(kind=kind, coord=coord, theta=th, f=f, g=g)

    def test_conjugation_identity_second_order(self):
        """sin2s * (cylinder form) equals the s-variable operator, to O(h^2)."""
        th = theta_grid(16)
        hs, errs = [], []
        for n in (201, 401, 801):
            t = np.linspace(-3.0, 3.0, n)
            s = jacobi.s_of_t(t)
            out_t = jacobi.apply_conjugate_LH(self.make_field("t", t, th))
            out_s = jacobi.apply_LH(self.make_field("s", s, th))
            sin2s = (1.0 / np.cosh(2.0 * out_t.coord))[:, None]
            df = np.max(np.abs(out_s.f - sin2s * out_t.f))
            dg = np.max(np.abs(out_s.g - sin2s * out_t.g))
            hs.append(t[1] - t[0])
            errs.append(max(df, dg))
        slope = fit_slope(hs, errs)
        assert 1.8 <= slope <= 2.2, (slope, errs)

    def test_mode_decoupling_under_sum_difference(self):
        """On a single k mode, h = f_cos + g_sin rides the scalar + branch."""
        k = 2
        t = np.linspace(-3.0, 3.0, 1201)
        th = theta_grid(16)
        prof = np.exp(-0.6 * t**2)
        f = np.outer(prof, np.cos(k * th))
        g = np.outer(prof, np.sin(k * th))
        out = jacobi.apply_conjugate_LH(
            NormalField(kind="t", coord=t, theta=th, f=f, g=g)
        )
        m = out.modes(k)
        h_sum = m["f_cos"][:, k - 1] + m["g_sin"][:, k - 1]
        ti = out.coord
        dt = t[1] - t[0]
        hh = 2.0 * prof
        d2 = (hh[:-2] - 2 * hh[1:-1] + hh[2:]) / dt**2
        want = d2 + jacobi._mode_potential(k, 1.0, ti) * hh[1:-1]
        assert np.max(np.abs(h_sum - want)) < 1e-9 * np.max(np.abs(want))
        # and the difference channel vanishes identically for this data
        h_diff = m["f_cos"][:, k - 1] - m["g_sin"][:, k - 1]
        assert np.max(np.abs(h_diff)) < 1e-11


# --------------------------------------------------------------------------
# scalar mode problems: exponents and two-point solves
# --------------------------------------------------------------------------


class TestModeExponents:
    def test_theta_constant_mode_has_unit_rates(self):
        for branch in ("+", "-"):
            ex = jacobi.homogeneous_mode_exponents(0, branch)
            for end in ("left", "right"):
                grow, decay = ex[end]
                sign = +1.0 if end == "right" else -1.0
                assert abs(grow - sign * 1.0) < 0.02
                assert abs(decay + sign * 1.0) < 0.02

    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_oscillatory_exponent_pairs(self, k):
        """Fitted rates land within 2% of +-(k-1) and +-(k+1) across branches."""
        seen = set()
        for branch, sigma in (("+", 1.0), ("-", -1.0)):
            ex = jacobi.homogeneous_mode_exponents(k, branch)
            m_right = abs(k - sigma)
            m_left = abs(k + sigma)
            grow, decay = ex["right"]
            tol_r = 0.02 * max(1.0, m_right)
            assert abs(grow - m_right) < tol_r, (k, branch, grow)
            assert abs(decay + m_right) < tol_r, (k, branch, decay)
            grow_l, decay_l = ex["left"]
            tol_l = 0.02 * max(1.0, m_left)
            assert abs(grow_l + m_left) < tol_l, (k, branch, grow_l)
            assert abs(decay_l - m_left) < tol_l, (k, branch, decay_l)
            seen.update({m_right, m_left})
        assert seen == {abs(k - 1), k + 1}

    def test_theta_constant_bounded_solution_is_analytic(self):
        """(cosh 2t)^{-1/2} solves the k=0 scalar equation exactly."""
        t = np.linspace(-5.0, 5.0, 4001)
        h = np.cosh(2.0 * t) ** -0.5
        hpp = np.cosh(2 * t) ** -0.5 * (3.0 * np.tanh(2 * t) ** 2 - 2.0)
        resid = hpp + jacobi._mode_potential(0, 1.0, t) * h
        assert np.max(np.abs(resid)) < 1e-13


class TestModeBVP:
    def rhs(self, t):
        return np.exp(-((t - 1.0) ** 2))

    def test_zero_data_gives_zero(self):
        sol = jacobi.mode_bvp_solve(2, "-", np.zeros(2001), n=2001)
        assert np.max(np.abs(sol.h)) == 0.0
        assert not sol.flagged

    def test_refined_grid_oracle(self):
        """k=1 difference branch converges against a 4x-refined solve."""
        coarse = jacobi.mode_bvp_solve(1, "-", self.rhs, n=32001)
        fine = jacobi.mode_bvp_solve(1, "-", self.rhs, n=128001)
        diff = np.max(np.abs(coarse.h - fine.h[::4]))
        assert diff < 1e-6
        assert coarse.residual_sup < 1e-8
        assert not coarse.flagged
        assert coarse.norm_ratio < 50.0
        # the solution decays toward the right at the admissible rate
        assert coarse.decay_exponent_right < -1.5

    def test_sum_branch_near_kernel_is_flagged(self):
        """k=1 sum branch meets a bounded kernel shape and reports it."""
        sol = jacobi.mode_bvp_solve(1, "+", self.rhs)
        assert sol.flagged

    def test_delta_preconditions(self):
        with pytest.raises(InvalidInputError):
            jacobi.mode_bvp_solve(0, "+", self.rhs, delta=0.2)
        with pytest.raises(InvalidInputError):
            jacobi.mode_bvp_solve(2, "+", self.rhs, delta=0.5)
        with pytest.raises(InvalidInputError):
            jacobi.mode_bvp_solve(-1, "+", self.rhs)
        with pytest.raises(InvalidInputError):
            jacobi.mode_bvp_solve(2, "+", self.rhs, t0=3.0, T=1.0)
        with pytest.raises(InvalidInputError):
            jacobi.mode_bvp_solve(2, "q", self.rhs)

    def test_theta_constant_solve_with_interior_cut(self):
        """k=0 data solved on a window whose left cut sits inside the core."""
        sol = jacobi.mode_bvp_solve(0, "+", self.rhs, t0=-1.5, T=7.0, delta=1.2)
        assert sol.residual_sup < 1e-8
        assert not sol.flagged
        assert sol.decay_exponent_right < -0.9


# --------------------------------------------------------------------------
# the assembled solve: theta modes in, normal field out
# --------------------------------------------------------------------------


def manufactured_pair(t, theta, with_mean):
    """A smooth (f, g) supported well inside [-2, 6], plus its image.

    Returns (f, g, F1, F2) where (F1, F2) is the original-variable data
    whose weighted form the cylinder operator reproduces.
    """
    tt = t[:, None]
    th = theta[None, :]
    phi = np.exp(-4.0 * (tt - 2.0) ** 2)
    psi = np.exp(-3.0 * (tt - 1.5) ** 2)
    phi2 = (64.0 * (tt - 2.0) ** 2 - 8.0) * phi
    psi2 = (36.0 * (tt - 1.5) ** 2 - 6.0) * psi
    mean = 0.3 if with_mean else 0.0
    f = phi * (np.cos(th) + 0.5 * np.sin(2 * th))
    g = psi * (mean + np.sin(th))
    f_tt = phi2 * (np.cos(th) + 0.5 * np.sin(2 * th))
    g_tt = psi2 * (mean + np.sin(th))
    f_hh = phi * (-np.cos(th) - 2.0 * np.sin(2 * th))
    g_hh = psi * (-np.sin(th))
    f_h = phi * (-np.sin(th) + np.cos(2 * th))
    g_h = psi * np.cos(th)
    pot = 3.0 / np.cosh(2.0 * tt) ** 2 - 1.0
    vf = f_tt + f_hh + 2.0 * np.tanh(2.0 * tt) * g_h + pot * f
    vg = g_tt + g_hh - 2.0 * np.tanh(2.0 * tt) * f_h + pot * g
    sech = (1.0 / np.cosh(2.0 * tt))
    return f, g, sech * vf, sech * vg


class TestReducedSolve:
    def test_zero_data_gives_zero_field(self):
        t = np.linspace(-2.0, 6.0, 401)
        th = theta_grid(16)
        z = np.zeros((401, 16))
        sol = jacobi.solve_reduced_system(
            NormalField(kind="t", coord=t, theta=th, f=z, g=z)
        )
        assert sup_field(sol) == 0.0

    def test_manufactured_recovery_second_order(self):
        """Known pair is recovered at O(h^2) on a core-anchored window."""
        th = theta_grid(16)
        hs, errs = [], []
        for n in (401, 801, 1601):
            t = np.linspace(-2.0, 6.0, n)
            f, g, F1, F2 = manufactured_pair(t, th, with_mean=True)
            sol = jacobi.solve_reduced_system(
                NormalField(kind="t", coord=t, theta=th, f=F1, g=F2), k_max=4
            )
            err = max(np.max(np.abs(sol.f - f)), np.max(np.abs(sol.g - g)))
            hs.append(8.0 / (n - 1))
            errs.append(err)
        slope = fit_slope(hs, errs)
        assert 1.8 <= slope <= 2.2, (slope, errs)
        assert errs[-1] < 5e-5

    def test_solution_satisfies_operator_identity(self):
        t = np.linspace(-2.0, 6.0, 1601)
        th = theta_grid(16)
        _, _, F1, F2 = manufactured_pair(t, th, with_mean=True)
        data = NormalField(kind="t", coord=t, theta=th, f=F1, g=F2)
        sol = jacobi.solve_reduced_system(data, k_max=4)
        out = jacobi.apply_conjugate_LH(sol)
        w = np.cosh(2.0 * out.coord)[:, None]
        scale = max(np.max(np.abs(w * F1[1:-1])), 1.0)
        assert np.max(np.abs(out.f - w * F1[1:-1])) < 1e-4 * scale
        assert np.max(np.abs(out.g - w * F2[1:-1])) < 1e-4 * scale

    def test_theta_mean_on_deep_window_is_rejected(self):
        """Data with a theta-mean part on a deep symmetric window must raise."""
        t = np.linspace(-6.0, 6.0, 801)
        th = theta_grid(16)
        _, _, F1, F2 = manufactured_pair(t, th, with_mean=True)
        with pytest.raises(ConvergenceError):
            jacobi.solve_reduced_system(
                NormalField(kind="t", coord=t, theta=th, f=F1, g=F2)
            )

    def test_oscillatory_data_on_deep_window_is_fine(self):
        t = np.linspace(-6.0, 6.0, 801)
        th = theta_grid(16)
        f, g, F1, F2 = manufactured_pair(t, th, with_mean=False)
        sol = jacobi.solve_reduced_system(
            NormalField(kind="t", coord=t, theta=th, f=F1, g=F2), k_max=4
        )
        err = max(np.max(np.abs(sol.f - f)), np.max(np.abs(sol.g - g)))
        assert err < 1e-3

    def test_rejects_nonuniform_grid_and_bad_bc(self):
        th = theta_grid(8)
        t_bad = np.concatenate([np.linspace(0, 1, 5), np.linspace(1.3, 2, 4)])
        z = np.zeros((9, 8))
        with pytest.raises(InvalidInputError):
            jacobi.solve_reduced_system(
                NormalField(kind="t", coord=t_bad, theta=th, f=z, g=z)
            )
        t = np.linspace(-1.0, 5.0, 9)
        fld = NormalField(kind="t", coord=t, theta=th, f=z, g=z)
        with pytest.raises(InvalidInputError):
            jacobi.solve_reduced_system(fld, bc="neumann")

    def test_mode_coefficients_are_attached(self):
        t = np.linspace(-2.0, 6.0, 401)
        th = theta_grid(16)
        _, _, F1, F2 = manufactured_pair(t, th, with_mean=True)
        sol = jacobi.solve_reduced_system(
            NormalField(kind="t", coord=t, theta=th, f=F1, g=F2), k_max=3
        )
        assert sol.mode_coeffs is not None
        assert sol.mode_coeffs["f_cos"].shape == (401, 3)
        back = NormalField.from_modes("t", t, th, sol.mode_coeffs)
        assert np.max(np.abs(back.f - sol.f)) < 1e-10
