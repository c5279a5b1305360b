"""Rate/secrecy metric tests with trace-form and sampling oracles."""

import numpy as np
import pytest

from pinchsec.channel import ChannelSet, PinchLayout, Scene, channel_matrices
from pinchsec.metrics import (NumeratorMode, Solution, rate_bob, rate_eve,
                              robust_secrecy_rate, secrecy_rate,
                              worst_case_eve_numerator)
from pinchsec.robust import UncertaintySpec, build_ellipsoid


def make_scene(n=2, bobs=None, eves=None, noise=1e-12, power=1e-3):
    bobs = bobs if bobs is not None else [[1.0, 0.5, 0.0]]
    eves = eves if eves is not None else [[4.0, 3.0, 0.0]]
    return Scene(side=5.0, height=2.0, num_waveguides=n, pas_per_waveguide=4,
                 bob_positions=bobs, eve_positions=eves,
                 noise_bob=noise, noise_eve=noise, power_budget=power)


def layout_for(scene):
    return PinchLayout.uniform(scene)


def manual_channels(h_bobs, h_eves):
    return ChannelSet(np.atleast_2d(h_bobs), np.atleast_2d(h_eves))


def make_solution(scene, beams, an_cov=None, lam=None, tau=None):
    n = scene.num_waveguides
    an_cov = an_cov if an_cov is not None else np.zeros((n, n), dtype=complex)
    return Solution(np.asarray(beams, dtype=complex), an_cov, layout_for(scene),
                    lam, tau)


def trace_form_rate(h, beams, an_cov, i, noise):
    """Independent oracle: Tr(H W_i) over the trace-form denominator."""
    big_h = np.outer(h, h.conj())
    sig = np.real(np.trace(big_h @ np.outer(beams[:, i], beams[:, i].conj())))
    den = noise + np.real(np.trace(big_h @ an_cov))
    for m in range(beams.shape[1]):
        if m != i:
            den += np.real(np.trace(big_h @ np.outer(beams[:, m],
                                                     beams[:, m].conj())))
    return np.log2(1.0 + sig / den)


class TestRates:
    def test_zero_beam_zero_rate(self):
        sc = make_scene()
        sol = make_solution(sc, np.zeros((2, 1)))
        cs = channel_matrices(sc, sol.layout)
        assert rate_bob(cs, sol, 0, sc.noise_bob) == 0.0

    def test_matched_filter_single_user(self):
        sc = make_scene()
        h = np.array([0.3 - 0.1j, 0.05 + 0.2j])
        power = 2.5e-3
        w = np.sqrt(power) * h / np.linalg.norm(h)
        cs = manual_channels(h, h)
        sol = make_solution(sc, w[:, None])
        expected = np.log2(1.0 + power * np.linalg.norm(h) ** 2 / sc.noise_bob)
        assert rate_bob(cs, sol, 0, sc.noise_bob) == pytest.approx(expected,
                                                                   rel=1e-12)

    def test_trace_form_oracle(self):
        rng = np.random.default_rng(0)
        sc = make_scene(bobs=[[1.0, 0.5, 0.0], [3.0, 4.0, 0.0]])
        h_b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        h_e = rng.normal(size=(1, 2)) + 1j * rng.normal(size=(1, 2))
        beams = 0.01 * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        g = 0.01 * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        an = g @ g.conj().T
        cs = manual_channels(h_b, h_e)
        sol = Solution(beams, an, layout_for(sc))
        for i in range(2):
            mine = rate_bob(cs, sol, i, sc.noise_bob)
            oracle = trace_form_rate(h_b[i], beams, an, i, sc.noise_bob)
            assert mine == pytest.approx(oracle, rel=1e-10)
            mine_e = rate_eve(cs, sol, 0, i, sc.noise_eve)
            oracle_e = trace_form_rate(h_e[0], beams, an, i, sc.noise_eve)
            assert mine_e == pytest.approx(oracle_e, rel=1e-10)

    def test_an_invisible_in_null_space(self):
        sc = make_scene()
        h_e = np.array([1.0 + 0.0j, 0.5j])
        null = np.array([-np.conj(h_e[1]), np.conj(h_e[0])])
        an = 5e-4 * np.outer(null, null.conj())
        w = np.array([[0.01], [0.02j]])
        cs = manual_channels(h_e, h_e)
        with_an = make_solution(sc, w, an)
        without = make_solution(sc, w)
        assert rate_eve(cs, with_an, 0, 0, sc.noise_eve) == pytest.approx(
            rate_eve(cs, without, 0, 0, sc.noise_eve), rel=1e-12)

    def test_colocated_symmetry(self):
        pos = [[2.0, 2.0, 0.0]]
        sc = make_scene(bobs=pos, eves=pos)
        cs = channel_matrices(sc, layout_for(sc))
        rng = np.random.default_rng(1)
        beams = 0.01 * (rng.normal(size=(2, 1)) + 1j * rng.normal(size=(2, 1)))
        sol = make_solution(sc, beams)
        assert rate_eve(cs, sol, 0, 0, sc.noise_eve) == pytest.approx(
            rate_bob(cs, sol, 0, sc.noise_bob), rel=1e-12)


class TestSecrecyRate:
    def test_colocated_pair_zero(self):
        pos = [[2.0, 2.0, 0.0]]
        sc = make_scene(bobs=pos, eves=pos)
        cs = channel_matrices(sc, layout_for(sc))
        rng = np.random.default_rng(2)
        beams = 0.01 * (rng.normal(size=(2, 1)) + 1j * rng.normal(size=(2, 1)))
        g = 0.005 * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        sol = make_solution(sc, beams, g @ g.conj().T)
        assert secrecy_rate(cs, sol, sc) == 0.0

    def test_constructed_three_minus_one(self):
        # channels built so R_B = 3 and R_E = 1 exactly
        sc = make_scene(noise=1.0, power=100.0)
        w = np.array([[1.0], [0.0]], dtype=complex)
        h_b = np.array([np.sqrt(7.0), 0.0], dtype=complex)   # SNR 7 -> 3 bits
        h_e = np.array([1.0, 0.0], dtype=complex)            # SNR 1 -> 1 bit
        cs = manual_channels(h_b, h_e)
        sol = make_solution(sc, w)
        assert secrecy_rate(cs, sol, sc) == pytest.approx(2.0, rel=1e-12)

    def test_pair_enumeration_oracle(self):
        rng = np.random.default_rng(3)
        sc = make_scene(bobs=[[1.0, 1.0, 0.0], [4.0, 4.0, 0.0]],
                        eves=[[2.0, 3.0, 0.0], [3.0, 1.0, 0.0]])
        h_b = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        h_e = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        beams = 0.02 * (rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        cs = manual_channels(h_b, h_e)
        sol = Solution(beams, np.zeros((2, 2), dtype=complex), layout_for(sc))
        expected = min(max(rate_bob(cs, sol, i, sc.noise_bob)
                           - rate_eve(cs, sol, k, i, sc.noise_eve), 0.0)
                       for i in range(2) for k in range(2))
        assert secrecy_rate(cs, sol, sc) == pytest.approx(expected, rel=1e-12)

    def test_phase_rotation_invariance(self):
        sc = make_scene()
        cs = channel_matrices(sc, layout_for(sc))
        rng = np.random.default_rng(4)
        beams = 0.01 * (rng.normal(size=(2, 1)) + 1j * rng.normal(size=(2, 1)))
        sol = make_solution(sc, beams)
        rotated = make_solution(sc, beams * np.exp(1j * 1.234))
        assert secrecy_rate(cs, rotated, sc) == pytest.approx(
            secrecy_rate(cs, sol, sc), rel=1e-12)

    def test_noise_monotonicity(self):
        sc = make_scene()
        cs = channel_matrices(sc, layout_for(sc))
        rng = np.random.default_rng(5)
        beams = 0.01 * (rng.normal(size=(2, 1)) + 1j * rng.normal(size=(2, 1)))
        sol = make_solution(sc, beams)
        rates = [rate_bob(cs, sol, 0, noise) for noise in (1e-12, 1e-11, 1e-10)]
        assert rates[0] > rates[1] > rates[2]


class TestRobustObjective:
    def setup_instance(self, seed=0, n=2):
        rng = np.random.default_rng(seed)
        sc = make_scene(n=n)
        h_b = rng.normal(size=(1, n)) + 1j * rng.normal(size=(1, n))
        h_e = rng.normal(size=(1, n)) + 1j * rng.normal(size=(1, n))
        beams = 0.02 * (rng.normal(size=(n, 1)) + 1j * rng.normal(size=(n, 1)))
        jac = rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3))
        phi, phi_inv = build_ellipsoid(jac, np.array([0.1, 0.2, 0.0]))
        unc = UncertaintySpec(np.array([0.1, 0.2, 0.0]), sc.eve_positions,
                              jac[None], phi[None], phi_inv[None])
        return sc, manual_channels(h_b, h_e), beams, unc

    def test_zero_uncertainty_matches_perfect_pair(self):
        sc, cs, beams, unc = self.setup_instance()
        unc.phi[0] = np.zeros((2, 2))
        h_e = cs.h_eves[0]
        den = sc.noise_eve  # no AN, single user: denominator is the noise
        lam = np.array([[den]])
        sol = Solution(beams, np.zeros((2, 2), dtype=complex), None, lam,
                       np.zeros((1, 1)))
        for mode in NumeratorMode:
            got = robust_secrecy_rate(cs, sol, sc, unc, mode)
            expected = (rate_bob(cs, sol, 0, sc.noise_bob)
                        - rate_eve(cs, sol, 0, 0, sc.noise_eve))
            assert got == pytest.approx(expected, rel=1e-10)

    def test_orthogonal_beam_leaves_spread_only(self):
        sc = make_scene()
        h_e = np.array([1.0, 1.0j], dtype=complex)
        w = np.array([1.0j, 1.0], dtype=complex) * 0.03  # orthogonal to h_e
        assert abs(np.vdot(h_e, w)) < 1e-15
        phi = 0.7 * np.eye(2)
        num = worst_case_eve_numerator(h_e, w, phi, NumeratorMode.CONSERVATIVE)
        assert num == pytest.approx(np.real(np.vdot(w, phi @ w)), rel=1e-12)
        assert worst_case_eve_numerator(h_e, w, phi,
                                        NumeratorMode.NOMINAL) < 1e-30

    def test_conservative_bounds_boundary_samples(self):
        sc, cs, beams, unc = self.setup_instance(seed=7)
        h_e = cs.h_eves[0]
        w = beams[:, 0]
        num = worst_case_eve_numerator(h_e, w, unc.phi[0],
                                       NumeratorMode.CONSERVATIVE)
        rng = np.random.default_rng(8)
        from pinchsec.robust import sample_ellipsoid
        dh = sample_ellipsoid(unc.phi[0], 100_000, rng, boundary_fraction=1.0)
        sampled = np.abs((h_e[None, :] + dh) @ w.conj()) ** 2
        assert num >= sampled.max() - 1e-12

    def test_conservative_below_nominal(self):
        sc, cs, beams, unc = self.setup_instance(seed=9)
        lam = np.array([[3.0 * sc.noise_eve]])
        sol = Solution(beams, np.zeros((2, 2), dtype=complex), None, lam,
                       np.zeros((1, 1)))
        cons = robust_secrecy_rate(cs, sol, sc, unc, NumeratorMode.CONSERVATIVE)
        nom = robust_secrecy_rate(cs, sol, sc, unc, NumeratorMode.NOMINAL)
        assert cons <= nom + 1e-12

    def test_requires_positive_lambda(self):
        sc, cs, beams, unc = self.setup_instance()
        sol = Solution(beams, np.zeros((2, 2), dtype=complex), None,
                       np.array([[0.0]]), np.zeros((1, 1)))
        with pytest.raises(ValueError):
            robust_secrecy_rate(cs, sol, sc, unc)
        sol_none = Solution(beams, np.zeros((2, 2), dtype=complex), None)
        with pytest.raises(ValueError):
            robust_secrecy_rate(cs, sol_none, sc, unc)

    def test_clamp_flag(self):
        sc, cs, beams, unc = self.setup_instance(seed=11)
        # a tiny lambda makes the worst-case Eve rate dominate
        sol = Solution(beams, np.zeros((2, 2), dtype=complex), None,
                       np.array([[sc.noise_eve]]), np.zeros((1, 1)))
        raw = robust_secrecy_rate(cs, sol, sc, unc, clamp=False)
        clamped = robust_secrecy_rate(cs, sol, sc, unc, clamp=True)
        assert clamped == max(raw, 0.0)


class TestSolutionValidation:
    def test_power_budget_enforced(self):
        sc = make_scene()
        beams = np.sqrt(sc.power_budget) * np.array([[1.1], [0.0]])
        sol = make_solution(sc, beams)
        with pytest.raises(ValueError):
            sol.validate(sc)

    def test_psd_enforced(self):
        sc = make_scene()
        sol = make_solution(sc, np.zeros((2, 1)),
                            an_cov=np.diag([1e-4, -1e-5]).astype(complex))
        with pytest.raises(ValueError):
            sol.validate(sc)

    def test_valid_solution_passes(self):
        sc = make_scene()
        g = 0.005 * np.eye(2, dtype=complex)
        sol = make_solution(sc, np.full((2, 1), 0.005 + 0.005j), g @ g.conj().T)
        sol.validate(sc)
