"""Tests for the surface geometry: charts, closest points, metric, curvature."""

import math

import numpy as np
import pytest

import oracles
from gl4 import fermi
from gl4.errors import (
    DegeneratePointError,
    InvalidInputError,
    OutsideTubularNeighborhoodError,
    SingularParameterError,
)

SQ2 = math.sqrt(2.0)


def random_coords(rng, epsilon, margin=0.99):
    """Uniform draw from the valid chart region (slightly inside its edge)."""
    s = rng.uniform(0.1, math.pi / 2 - 0.1)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    phi = rng.uniform(0.0, 2.0 * math.pi)
    r_lim = 1.0 / (epsilon * math.sqrt(math.sin(2.0 * s)))
    r = margin * math.sqrt(rng.uniform(0.0, 1.0)) * r_lim
    return fermi.FermiCoords(
        s=s, theta=theta, a=r * math.cos(phi), b=r * math.sin(phi), epsilon=epsilon
    )


def wrap_angle(d):
    return math.atan2(math.sin(d), math.cos(d))


class TestPoint4:
    def test_cartesian_round_trip(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            p = fermi.Point4(
                rho1=rng.uniform(0.05, 5.0),
                theta1=rng.uniform(-math.pi, math.pi),
                rho2=rng.uniform(0.05, 5.0),
                theta2=rng.uniform(-math.pi, math.pi),
            )
            q = fermi.Point4.from_cartesian(*p.cartesian)
            assert abs(q.rho1 - p.rho1) < 1e-14 * max(1.0, p.rho1)
            assert abs(wrap_angle(q.theta1 - p.theta1)) < 1e-14
            assert abs(q.rho2 - p.rho2) < 1e-14 * max(1.0, p.rho2)
            assert abs(wrap_angle(q.theta2 - p.theta2)) < 1e-14

    def test_rejects_negative_radius(self):
        with pytest.raises(InvalidInputError):
            fermi.Point4(-0.1, 0.0, 1.0, 0.0)


class TestSurfaceAndFrame:
    def test_quarter_point(self):
        p, _ = fermi.surface_point_and_frame(math.pi / 4, 0.0, 1.0)
        assert np.max(np.abs(p.cartesian - np.array([SQ2 / 2, 0.0, SQ2 / 2, 0.0]))) < 1e-15

    def test_frame_gram_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            s = rng.uniform(0.05, math.pi / 2 - 0.05)
            theta = rng.uniform(0.0, 2.0 * math.pi)
            _, fr = fermi.surface_point_and_frame(s, theta, 1.0)
            assert np.max(np.abs(fr.gram() - np.eye(4))) < 1e-14

    def test_s_derivative_norm(self):
        # |d/ds of the surface curve| = 1/(eps (sin 2s)^{3/2})
        rng = np.random.default_rng(2)
        h = 1e-6
        for eps in (1.0, 0.5):
            for _ in range(20):
                s = rng.uniform(0.2, math.pi / 2 - 0.2)
                theta = rng.uniform(0.0, 2.0 * math.pi)
                pp, _ = fermi.surface_point_and_frame(s + h, theta, eps)
                pm, _ = fermi.surface_point_and_frame(s - h, theta, eps)
                speed = np.linalg.norm(pp.cartesian - pm.cartesian) / (2.0 * h)
                expected = 1.0 / (eps * math.sin(2.0 * s) ** 1.5)
                assert abs(speed - expected) < 1e-8 * expected

    def test_normals_orthogonal_to_tangents(self):
        rng = np.random.default_rng(3)
        h = 1e-6
        for _ in range(25):
            s = rng.uniform(0.2, math.pi / 2 - 0.2)
            theta = rng.uniform(0.0, 2.0 * math.pi)
            eps = rng.choice([1.0, 0.5, 0.25])
            _, fr = fermi.surface_point_and_frame(s, theta, eps)

            def gam(ss, tt):
                q, _ = fermi.surface_point_and_frame(ss, tt, eps)
                return q.cartesian

            ds = (gam(s + h, theta) - gam(s - h, theta)) / (2.0 * h)
            dt = (gam(s, theta + h) - gam(s, theta - h)) / (2.0 * h)
            for tang in (ds, dt):
                unit = tang / np.linalg.norm(tang)
                assert abs(unit @ fr.m) < 1e-9
                assert abs(unit @ fr.n) < 1e-9

    def test_singular_parameter_rejected(self):
        for bad in (0.0, math.pi / 2, -0.3, 2.0):
            with pytest.raises(SingularParameterError):
                fermi.surface_point_and_frame(bad, 0.0, 1.0)
        with pytest.raises(InvalidInputError):
            fermi.surface_point_and_frame(0.5, 0.0, 0.0)


class TestMapT:
    def test_zero_offset_is_surface_point(self):
        c = fermi.FermiCoords(s=0.9, theta=2.2, a=0.0, b=0.0, epsilon=0.5)
        p = fermi.map_T(c)
        q, _ = fermi.surface_point_and_frame(0.9, 2.2, 0.5)
        assert np.max(np.abs(p.cartesian - q.cartesian)) < 1e-14

    def test_quarter_slice_components(self):
        # at s=pi/4, theta=0, eps=1 the two factors are
        # (sqrt2/2 (1+a), -b sqrt2/2) and (sqrt2/2 (1+a), +b sqrt2/2)
        a, b = 0.3, -0.45
        c = fermi.FermiCoords(s=math.pi / 4, theta=0.0, a=a, b=b, epsilon=1.0)
        x = fermi.map_T(c).cartesian
        expected = np.array(
            [SQ2 / 2 * (1 + a), -b * SQ2 / 2, SQ2 / 2 * (1 + a), b * SQ2 / 2]
        )
        assert np.max(np.abs(x - expected)) < 1e-15

    def test_injective_on_samples(self):
        rng = np.random.default_rng(4)
        pts = []
        for _ in range(100):
            c = random_coords(rng, 1.0)
            pts.append(fermi.map_T(c).cartesian)
        pts = np.array(pts)
        d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        d2[np.diag_indices(len(pts))] = np.inf
        assert np.min(d2) > 0.0


class TestClosestPoint:
    def test_collinear_ray_example(self):
        res = fermi.closest_point(fermi.Point4(1.0, 0.0, 1.0, 0.0), 1.0)
        assert res.unique
        s, theta = res.params[0]
        assert abs(s - math.pi / 4) < 1e-12
        assert abs(theta) < 1e-12
        assert abs(res.distance - (SQ2 - 1.0)) < 1e-12

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(6):
            P = fermi.Point4(
                rng.uniform(0.2, 3.0),
                rng.uniform(0.0, 2.0 * math.pi),
                rng.uniform(0.2, 3.0),
                rng.uniform(0.0, 2.0 * math.pi),
            )
            for eps in (1.0, 0.5):
                d = fermi.closest_point(P, eps).distance
                assert abs(d - oracles.closest_point_dense(P, eps)) < 1e-6

    def test_distance_is_lower_envelope(self):
        rng = np.random.default_rng(6)
        P = fermi.Point4(1.7, 0.6, 0.9, 2.8)
        d = fermi.closest_point(P, 1.0).distance
        for _ in range(1000):
            s = rng.uniform(1e-3, math.pi / 2 - 1e-3)
            theta = rng.uniform(0.0, 2.0 * math.pi)
            q, _ = fermi.surface_point_and_frame(s, theta, 1.0)
            assert d <= np.linalg.norm(P.cartesian - q.cartesian) + 1e-12

    def test_factor_swap_covariance(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            P = fermi.Point4(
                rng.uniform(0.2, 2.0),
                rng.uniform(0.0, 2.0 * math.pi),
                rng.uniform(0.2, 2.0),
                rng.uniform(0.0, 2.0 * math.pi),
            )
            if abs(P.rho1 - P.rho2) < 1e-6:
                continue
            res = fermi.closest_point(P, 1.0)
            s, theta = res.params[0]
            # swapping only the radii sends s to pi/2 - s and keeps the distance
            swapped = fermi.closest_point(
                fermi.Point4(P.rho2, P.theta1, P.rho1, P.theta2), 1.0
            )
            s2, _ = swapped.params[0]
            assert abs(s2 - (math.pi / 2 - s)) < 1e-10
            assert abs(res.distance - swapped.distance) < 1e-12
            # exchanging the two factors outright also keeps theta
            exchanged = fermi.closest_point(
                fermi.Point4(P.rho2, P.theta2, P.rho1, P.theta1), 1.0
            )
            s3, theta3 = exchanged.params[0]
            assert abs(s3 - (math.pi / 2 - s)) < 1e-10
            assert abs(wrap_angle(theta3 - theta)) < 1e-10
            assert abs(res.distance - exchanged.distance) < 1e-12

    def test_two_point_branch(self):
        # equal radii beyond the transition: two reciprocal parameters
        res = fermi.closest_point(fermi.Point4(2.5, 0.7, 2.5, 0.7), 1.0)
        assert len(res.params) == 2
        (s1, t1), (s2, t2) = res.params
        assert s1 < s2
        assert abs(s2 - (math.pi / 2 - s1)) < 1e-12
        assert abs(wrap_angle(t1 - t2)) < 1e-12  # same angle branch here

    def test_two_point_threshold_detected(self):
        # at eps = sqrt2/2 the transition radius is sqrt(2 + 2 cos alpha)
        for alpha in (0.0, math.pi / 3, math.pi / 2, 2.0):
            got = fermi.detect_two_point_threshold(alpha, SQ2 / 2)
            assert abs(got - math.sqrt(2.0 + 2.0 * math.cos(alpha))) < 1e-4

    def test_threshold_epsilon_scaling(self):
        for eps in (1.0, 0.5):
            for alpha in (0.0, 1.2):
                got = fermi.detect_two_point_threshold(alpha, eps)
                expected = math.sqrt(1.0 + math.cos(alpha)) / eps
                assert abs(got - expected) < 1e-4 / eps

    def test_origin_is_degenerate(self):
        with pytest.raises(DegeneratePointError) as err:
            fermi.closest_point(fermi.Point4(0.0, 0.0, 0.0, 0.0), 0.5)
        assert abs(err.value.distance - 2.0) < 1e-15
        assert abs(err.value.s - math.pi / 4) < 1e-15
        assert abs(err.value.phi_limit - math.pi) < 1e-15


class TestMapS:
    def test_round_trip_identity(self):
        rng = np.random.default_rng(8)
        for eps in (1.0, 0.1):
            worst = 0.0
            for _ in range(2000):
                c = random_coords(rng, eps)
                back = fermi.map_S(fermi.map_T(c), eps)
                err = max(
                    abs(back.s - c.s),
                    abs(wrap_angle(back.theta - c.theta)),
                    abs(back.a - c.a),
                    abs(back.b - c.b),
                )
                worst = max(worst, err)
            assert worst < 1e-9

    def test_distance_is_normal_radius(self):
        c = fermi.FermiCoords(s=0.8, theta=1.1, a=0.3, b=0.4, epsilon=1.0)
        assert c.valid
        P = fermi.map_T(c)
        assert abs(fermi.closest_point(P, 1.0).distance - 0.5) < 1e-12
        back = fermi.map_S(P, 1.0)
        assert abs(back.r - 0.5) < 1e-12

    def test_origin_ray_angle_limit(self):
        # along rho1 = rho2 -> 0 the normal angle tends to pi
        for t in (1e-2, 1e-3, 1e-4):
            c = fermi.map_S(fermi.Point4(t, 0.0, t, 0.0), 1.0)
            assert abs(c.phi - math.pi) < 1e-12
            assert abs(c.r - (1.0 - SQ2 * t)) < 1e-12

    def test_cut_locus_rejected(self):
        with pytest.raises(OutsideTubularNeighborhoodError):
            fermi.map_S(fermi.Point4(2.5, 0.7, 2.5, 0.7), 1.0)


class TestSymmetries:
    def test_reflection_and_swap_identities(self):
        rng = np.random.default_rng(9)
        checked = 0
        while checked < 40:
            P = fermi.Point4(
                rng.uniform(0.2, 1.5),
                rng.uniform(0.0, 2.0 * math.pi),
                rng.uniform(0.2, 1.5),
                rng.uniform(0.0, 2.0 * math.pi),
            )
            try:
                rep = fermi.normal_polar_symmetries(P, 1.0)
            except OutsideTubularNeighborhoodError:
                continue
            checked += 1
            assert not rep.partial
            assert abs(rep.phi_reflection) < 1e-9
            assert abs(rep.r_factor_swap) < 1e-9
            assert rep.max_abs() < 1e-9

    def test_on_surface_degenerates_to_zero(self):
        q, _ = fermi.surface_point_and_frame(0.6, 0.4, 1.0)
        rep = fermi.normal_polar_symmetries(q, 1.0)
        back = fermi.map_S(q, 1.0)
        assert back.r < 1e-12
        assert rep.max_abs() < 1e-9


class TestMetric:
    def test_on_surface_block(self):
        c = fermi.FermiCoords(s=math.pi / 4, theta=0.3, a=0.0, b=0.0, epsilon=0.5)
        g, _ = fermi.metric_matrix(c)
        assert abs(g[0, 0] - 4.0) < 1e-14  # 1/(eps^2 sin^3 2s) at s=pi/4, eps=1/2
        assert abs(g[2, 2] - 1.0) < 1e-15
        assert abs(g[3, 3] - 1.0) < 1e-15
        assert abs(g[1, 2]) < 1e-15
        assert abs(g[1, 3]) < 1e-15

    def test_against_fd_jacobian(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            eps = float(rng.choice([1.0, 0.5, 0.1]))
            c = random_coords(rng, eps, margin=0.9)
            g, _ = fermi.metric_matrix(c)
            x0 = np.array([c.s, c.theta, c.a, c.b])
            J = np.zeros((4, 4))
            for j in range(4):
                h = 1e-5 * max(1.0, abs(x0[j]))
                xp, xm = x0.copy(), x0.copy()
                xp[j] += h
                xm[j] -= h
                cp = fermi.FermiCoords(xp[0], xp[1], xp[2], xp[3], eps)
                cm = fermi.FermiCoords(xm[0], xm[1], xm[2], xm[3], eps)
                J[:, j] = (fermi.map_T(cp).cartesian - fermi.map_T(cm).cartesian) / (
                    2.0 * h
                )
            ref = J.T @ J
            assert np.max(np.abs(g - ref)) / np.max(np.abs(ref)) < 1e-6

    def test_cross_terms(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            c = random_coords(rng, 0.5)
            g, _ = fermi.metric_matrix(c)
            cos2s = math.cos(2.0 * c.s)
            assert abs(g[1, 2] - (-c.b * cos2s)) < 1e-14
            assert abs(g[1, 3] - c.a * cos2s) < 1e-14

    def test_volume_factor_matches_determinant(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            c = random_coords(rng, 1.0)
            g, sqrtG = fermi.metric_matrix(c)
            assert abs(sqrtG - math.sqrt(np.linalg.det(g))) < 1e-10 * sqrtG


class TestExpansions:
    def test_inverse_is_exact(self):
        rng = np.random.default_rng(13)
        for _ in range(10):
            c = random_coords(rng, 0.5, margin=0.9)
            ge = fermi.geometry_expansions(c)
            g, _ = fermi.metric_matrix(c)
            assert np.max(np.abs(g @ ge.g_inv - np.eye(4))) < 1e-10

    def test_inverse_series_order(self):
        # remainder of the truncated inverse-metric series is O(eps^4)
        errs = []
        for eps in (0.2, 0.1, 0.05):
            c = fermi.FermiCoords(s=0.7, theta=0.2, a=0.3, b=-0.4, epsilon=eps)
            ge = fermi.geometry_expansions(c)
            errs.append(abs(ge.g_inv[0, 0] - ge.g_inv_series[0, 0]))
        slope = np.polyfit(np.log([0.2, 0.1, 0.05]), np.log(errs), 1)[0]
        assert slope >= 3.5

    def test_divergence_weights_series_order(self):
        # FD divergence-term oracle built from the exact metric:
        # B^j = -d_k g^{kj} - (d_k sqrtG / sqrtG) g^{jk}
        def b_fd(c):
            x0 = np.array([c.s, c.theta, c.a, c.b])
            out = np.zeros(4)
            for k in range(4):
                h = 1e-6 * max(1.0, abs(x0[k]))
                xp, xm = x0.copy(), x0.copy()
                xp[k] += h
                xm[k] -= h
                cp = fermi.FermiCoords(xp[0], xp[1], xp[2], xp[3], c.epsilon)
                cm = fermi.FermiCoords(xm[0], xm[1], xm[2], xm[3], c.epsilon)
                gp, sp = fermi.metric_matrix(cp)
                gm, sm = fermi.metric_matrix(cm)
                dginv = (np.linalg.inv(gp) - np.linalg.inv(gm)) / (2.0 * h)
                dlog = (math.log(sp) - math.log(sm)) / (2.0 * h)
                g, _ = fermi.metric_matrix(c)
                ginv = np.linalg.inv(g)
                out -= dginv[k, :] + dlog * ginv[k, :]
            return out

        errs = []
        for eps in (0.2, 0.1, 0.05):
            c = fermi.FermiCoords(s=0.7, theta=1.0, a=0.25, b=0.35, epsilon=eps)
            ge = fermi.geometry_expansions(c)
            errs.append(np.max(np.abs(b_fd(c) - ge.B_series)))
        slope = np.polyfit(np.log([0.2, 0.1, 0.05]), np.log(errs), 1)[0]
        assert slope >= 3.5

    def test_log_volume_series_order(self):
        def dlog_fd(c):
            x0 = np.array([c.s, c.theta, c.a, c.b])
            out = np.zeros(3)
            for i, k in enumerate((0, 2, 3)):  # s, a, b
                h = 1e-6 * max(1.0, abs(x0[k]))
                xp, xm = x0.copy(), x0.copy()
                xp[k] += h
                xm[k] -= h
                _, sp = fermi.metric_matrix(
                    fermi.FermiCoords(xp[0], xp[1], xp[2], xp[3], c.epsilon)
                )
                _, sm = fermi.metric_matrix(
                    fermi.FermiCoords(xm[0], xm[1], xm[2], xm[3], c.epsilon)
                )
                out[i] = (math.log(sp) - math.log(sm)) / (2.0 * h)
            return out

        errs = []
        for eps in (0.2, 0.1, 0.05):
            c = fermi.FermiCoords(s=0.6, theta=0.0, a=0.2, b=0.3, epsilon=eps)
            ge = fermi.geometry_expansions(c)
            errs.append(np.max(np.abs(dlog_fd(c) - ge.dlog_sqrtG_series)))
        slope = np.polyfit(np.log([0.2, 0.1, 0.05]), np.log(errs), 1)[0]
        assert slope >= 3.5

    def test_divergence_weights_on_surface(self):
        c = fermi.FermiCoords(s=0.55, theta=0.4, a=0.0, b=0.0, epsilon=0.1)
        ge = fermi.geometry_expansions(c)
        sin2s = math.sin(2.0 * c.s)
        cos2s = math.cos(2.0 * c.s)
        b1 = -2.0 * c.epsilon**2 * sin2s**2 * cos2s
        assert abs(ge.B_series[0] - b1) < 1e-15
        assert ge.B_series[1] == 0.0
        assert ge.B_series[2] == 0.0
        assert ge.B_series[3] == 0.0

    def test_principal_curvatures(self):
        c = fermi.FermiCoords(s=math.pi / 4, theta=1.0, a=0.0, b=0.0, epsilon=0.1)
        ge = fermi.geometry_expansions(c)
        assert np.max(np.abs(ge.curvatures_m - np.array([0.1, -0.1]))) < 1e-12
        assert np.max(np.abs(ge.curvatures_n - np.array([0.1, -0.1]))) < 1e-12

    def test_curvature_pair_everywhere(self):
        rng = np.random.default_rng(14)
        for _ in range(50):
            eps = float(rng.choice([1.0, 0.1]))
            c = random_coords(rng, eps)
            ge = fermi.geometry_expansions(c)
            scale = ge.curvature_scale
            for pair in (ge.curvatures_m, ge.curvatures_n):
                assert abs(pair[0] - scale) < 1e-6 * scale
                assert abs(pair[1] + scale) < 1e-6 * scale
                assert abs(pair[0] + pair[1]) < 1e-8
