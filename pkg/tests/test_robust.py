"""Imperfect-CSI machinery tests: Jacobians, ellipsoids, LMIs, certification."""

import numpy as np
import pytest

from pinchsec import numerics
from pinchsec.channel import PinchLayout, Scene, channel_matrices
from pinchsec.robust import (UncertaintySpec, build_ellipsoid, certify_pair,
                             channel_jacobian, interference_cov, lmi_matrix,
                             sample_ellipsoid, worst_case_denominator_oracle)


def make_scene(n=2, m=4, eves=None):
    eves = eves if eves is not None else [[4.0, 3.0, 0.0]]
    return Scene(side=5.0, height=2.0, num_waveguides=n, pas_per_waveguide=m,
                 bob_positions=[[1.0, 0.5, 0.0]], eve_positions=eves,
                 noise_bob=1e-12, noise_eve=1e-12, power_budget=1e-3)


class TestChannelJacobian:
    def test_symmetric_x_component_vanishes(self):
        # single PA directly over the Eve's x: the x-offset is zero, so the
        # x-derivative of the distance (hence the channel) vanishes
        sc = make_scene(n=1, m=1, eves=[[2.0, 1.0, 0.0]])
        lay = PinchLayout(np.array([[2.0]]), sc.waveguide_y, sc.height, sc.side)
        jac = channel_jacobian(lay, sc.eve_positions[0], sc)
        assert abs(jac[0, 0]) < 1e-20
        assert abs(jac[0, 1]) > 0.0

    def test_finite_difference_oracle(self):
        sc = make_scene()
        lay = PinchLayout.uniform(sc)
        eve = sc.eve_positions[0]
        jac = channel_jacobian(lay, eve, sc)
        h = 1e-6
        for axis in range(3):
            up, down = eve.copy(), eve.copy()
            up[axis] += h
            down[axis] -= h
            sc_up = Scene(sc.side, sc.height, 2, 4, sc.bob_positions,
                          [[up[0], up[1], 0.0]], 1e-12, 1e-12)
            sc_dn = Scene(sc.side, sc.height, 2, 4, sc.bob_positions,
                          [[down[0], down[1], 0.0]], 1e-12, 1e-12)
            if axis == 2:
                # z is pinned to the floor by Scene; perturb manually
                sc_up.eve_positions = np.array([[eve[0], eve[1], h]])
                sc_dn.eve_positions = np.array([[eve[0], eve[1], -h]])
            fd = (channel_matrices(sc_up, lay).h_eves[0]
                  - channel_matrices(sc_dn, lay).h_eves[0]) / (2 * h)
            err = np.abs(fd - jac[:, axis]) / np.maximum(np.abs(fd), 1e-12)
            assert np.max(err) < 1e-5

    def test_mirror_geometry_conjugation(self):
        # mirroring the x-geometry flips the sign of the x-derivative and
        # keeps the y/z derivatives (positions mirror within the room)
        sc = make_scene(n=1, m=2, eves=[[3.2, 1.4, 0.0]])
        xs = np.array([[1.1, 2.3]])
        lay = PinchLayout(xs, sc.waveguide_y, sc.height, sc.side)
        jac = channel_jacobian(lay, sc.eve_positions[0], sc)
        mirrored = Scene(sc.side, sc.height, 1, 2, sc.bob_positions,
                         [[sc.side - 3.2, 1.4, 0.0]], 1e-12, 1e-12)
        lay_m = PinchLayout(np.sort(sc.side - xs, axis=1), sc.waveguide_y,
                            sc.height, sc.side,
                            feed_x=sc.side)  # mirror the feed point too
        jac_m = channel_jacobian(lay_m, mirrored.eve_positions[0], mirrored)
        np.testing.assert_allclose(jac_m[:, 0], -jac[:, 0], rtol=1e-9)
        np.testing.assert_allclose(jac_m[:, 1:], jac[:, 1:], rtol=1e-9)


class TestEllipsoid:
    def test_zero_covariance_limit(self):
        rng = np.random.default_rng(0)
        jac = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        phi, phi_inv = build_ellipsoid(jac, np.zeros(3))
        np.testing.assert_allclose(phi, 0.0, atol=1e-30)
        # degenerate certain-CSI limit: the inverse is a huge ridge
        assert np.min(np.real(np.diag(phi_inv))) > 1e15

    def test_rank_one_construction(self):
        jac = np.zeros((3, 3), dtype=complex)
        col = np.array([1.0 + 1j, 2.0, -1j])
        jac[:, 0] = col
        s = 0.3
        phi, _ = build_ellipsoid(jac, np.array([s, 0.0, 0.0]))
        np.testing.assert_allclose(phi, s * np.outer(col, col.conj()), atol=1e-14)
        vals = np.linalg.eigvalsh(phi)
        assert np.sum(vals > 1e-12 * vals.max()) == 1

    def test_pushforward_stays_inside(self):
        rng = np.random.default_rng(1)
        jac = rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3))
        sigma = np.array([0.4, 0.1, 0.05])
        phi, phi_inv = build_ellipsoid(jac, sigma)
        for _ in range(200):
            dp = rng.normal(size=3)
            dp = dp / np.sqrt(dp @ (dp / sigma))   # boundary of position set
            dh = jac @ dp
            quad = np.real(dh.conj() @ phi_inv @ dh)
            assert quad <= 1.0 + 1e-6

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError):
            build_ellipsoid(np.eye(3, dtype=complex), np.array([-0.1, 0, 0]))

    def test_rank_bound_and_degeneracy(self):
        # with two active axes, at most two eigenvalues carry mass
        rng = np.random.default_rng(2)
        for n in (4, 5, 6):
            jac = rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3))
            phi, _ = build_ellipsoid(jac, np.array([0.05, 0.05, 0.0]))
            vals = np.sort(np.linalg.eigvalsh(phi))
            trace = np.real(np.trace(phi))
            assert np.all(vals[: n - 2] <= 1e-9 * trace)

    def test_uncertainty_spec_build(self):
        sc = make_scene()
        lay = PinchLayout.uniform(sc)
        unc = UncertaintySpec.build(sc, lay, np.array([0.05, 0.05, 0.0]))
        assert unc.phi.shape == (1, 2, 2)
        herm_gap = np.max(np.abs(unc.phi[0] - unc.phi[0].conj().T))
        assert herm_gap < 1e-10
        assert np.min(np.linalg.eigvalsh(unc.phi[0])) >= -1e-10 * np.real(
            np.trace(unc.phi[0]))

    def test_linearization_remainder_reported(self):
        # second-order remainder of h(p + dp) - h(p) - J dp; the constant is
        # informational (the guide wavelength makes it large), only finiteness
        # and quadratic-ish scaling are checked
        sc = make_scene()
        lay = PinchLayout.uniform(sc)
        eve = sc.eve_positions[0]
        jac = channel_jacobian(lay, eve, sc)
        base = channel_matrices(sc, lay).h_eves[0]
        rng = np.random.default_rng(3)
        ratios = []
        for norm in (1e-4, 1e-3, 1e-2):
            worst = 0.0
            for _ in range(10):
                d = rng.normal(size=2)
                d = norm * d / np.linalg.norm(d)
                sc2 = Scene(sc.side, sc.height, 2, 4, sc.bob_positions,
                            [[eve[0] + d[0], eve[1] + d[1], 0.0]], 1e-12, 1e-12)
                h2 = channel_matrices(sc2, lay).h_eves[0]
                rem = np.linalg.norm(h2 - base - jac @ np.array([d[0], d[1], 0]))
                worst = max(worst, rem / norm ** 2)
            ratios.append(worst)
        assert np.all(np.isfinite(ratios))


class TestLmiMatrix:
    def test_zero_multiplier_noise_lambda_is_psd(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        q = a @ a.conj().T
        h = rng.normal(size=3) + 1j * rng.normal(size=3)
        noise = 0.1
        m = lmi_matrix(q, h, np.eye(3, dtype=complex), 0.0, noise, noise)
        lam_min, _ = numerics.min_eig(m)
        assert lam_min >= -1e-12 * np.real(np.trace(m))

    def test_two_by_two_reference_values(self):
        # N=1 scalar instance; with the sound multiplier direction the block
        # is Q + tau/Phi and the corner loses both lambda and tau
        m = lmi_matrix(np.array([[1.0]], dtype=complex), np.array([1.0]),
                       np.array([[1.0]], dtype=complex), tau=0.5, lam=1.0,
                       noise_eve=0.1)
        np.testing.assert_allclose(m, [[1.5, 1.0], [1.0, -0.4]], atol=1e-15)
        lam_min, _ = numerics.min_eig(m)
        expected = (1.1 - np.sqrt((1.5 + 0.4) ** 2 + 4.0)) / 2.0
        assert lam_min == pytest.approx(expected, abs=1e-12)
        assert lam_min == pytest.approx(-0.8293116, abs=1e-7)

    def test_lambda_shifts_corner_linearly(self):
        rng = np.random.default_rng(5)
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        q = a @ a.conj().T
        h = rng.normal(size=2) + 1j * rng.normal(size=2)
        phi_inv = np.eye(2, dtype=complex)
        base = lmi_matrix(q, h, phi_inv, 0.3, 1.0, 0.1)
        shifted = lmi_matrix(q, h, phi_inv, 0.3, 1.0 + 0.25, 0.1)
        np.testing.assert_allclose(shifted[-1, -1], base[-1, -1] - 0.25,
                                   rtol=1e-12)
        np.testing.assert_allclose(shifted[:-1, :-1], base[:-1, :-1])


class TestWorstCaseOracle:
    def test_zero_interference(self):
        phi = np.eye(2, dtype=complex)
        val = worst_case_denominator_oracle(np.zeros((2, 2), dtype=complex),
                                            np.ones(2, dtype=complex), phi,
                                            0.25, samples=500)
        assert val == pytest.approx(0.25, abs=1e-15)

    def test_point_uncertainty_set(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        q = a @ a.conj().T
        h = rng.normal(size=2) + 1j * rng.normal(size=2)
        val = worst_case_denominator_oracle(q, h, np.zeros((2, 2), dtype=complex),
                                            0.1, samples=500)
        assert val == pytest.approx(np.real(h.conj() @ q @ h) + 0.1, rel=1e-12)

    def test_certified_instances_are_sound(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            n = int(rng.integers(2, 4))
            a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            q = a @ a.conj().T / n
            h = rng.normal(size=n) + 1j * rng.normal(size=n)
            jac = rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3))
            phi, phi_inv = build_ellipsoid(jac, np.array([0.2, 0.1, 0.0]))
            tau = float(rng.uniform(0.0, 2.0))
            lam = float(rng.uniform(0.05, 2.0))
            m = lmi_matrix(q, h, phi_inv, tau, lam, 0.1)
            if numerics.min_eig(m)[0] < 0.0:
                continue
            sampled = worst_case_denominator_oracle(q, h, phi, 0.1,
                                                    samples=20_000, seed=trial)
            assert sampled >= lam - 1e-6

    def test_sample_ellipsoid_boundary_and_interior(self):
        rng = np.random.default_rng(8)
        jac = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        phi, phi_inv = build_ellipsoid(jac, np.array([0.3, 0.3, 0.1]))
        dh = sample_ellipsoid(phi, 2000, rng, boundary_fraction=0.5)
        quad = np.real(np.einsum("sn,nm,sm->s", dh.conj(), phi_inv, dh))
        assert np.max(quad) <= 1.0 + 1e-6
        # boundary half sits at the shell, interior half strictly inside
        assert np.quantile(quad, 0.25) > 0.9
        assert np.quantile(quad, 0.8) < 1.0 + 1e-6


class TestCertification:
    def test_certified_lambda_below_sampled_minimum(self):
        rng = np.random.default_rng(9)
        for trial in range(10):
            n = 2
            a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            q = a @ a.conj().T
            h = rng.normal(size=n) + 1j * rng.normal(size=n)
            jac = 0.3 * (rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3)))
            phi, phi_inv = build_ellipsoid(jac, np.array([0.1, 0.1, 0.0]))
            lam, tau = certify_pair(q, h, phi, phi_inv, 0.1)
            m = lmi_matrix(q, h, phi_inv, tau, lam, 0.1)
            assert numerics.min_eig(m)[0] >= 0.0
            sampled = worst_case_denominator_oracle(q, h, phi, 0.1,
                                                    samples=30_000, seed=trial)
            assert lam <= sampled + 1e-9

    def test_certificate_not_vacuous_for_small_ellipsoids(self):
        # a tiny ellipsoid leaves most of the nominal denominator certifiable
        rng = np.random.default_rng(10)
        a = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        q = a @ a.conj().T
        h = rng.normal(size=2) + 1j * rng.normal(size=2)
        jac = 1e-3 * (rng.normal(size=(2, 3)) + 1j * rng.normal(size=(2, 3)))
        phi, phi_inv = build_ellipsoid(jac, np.array([0.1, 0.1, 0.0]))
        nominal = np.real(h.conj() @ q @ h) + 0.1
        lam, _ = certify_pair(q, h, phi, phi_inv, 0.1)
        assert lam > 0.5 * nominal

    def test_interference_cov_excludes_own_beam(self):
        rng = np.random.default_rng(11)
        beams = rng.normal(size=(3, 2)) + 1j * rng.normal(size=(3, 2))
        an = np.eye(3, dtype=complex) * 0.2
        q0 = interference_cov(beams, an, 0)
        expected = an + np.outer(beams[:, 1], beams[:, 1].conj())
        np.testing.assert_allclose(q0, expected, atol=1e-14)
