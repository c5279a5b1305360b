"""Rates, secrecy rate, and the worst-case (robust) secrecy objective.

A Solution bundles the beamforming matrix W (columns are per-Bob beams),
the artificial-noise covariance R_m, the PA layout it was computed for, and
-- in robust mode -- the per-(Eve, Bob) auxiliaries lambda (denominator
bounds) and tau (S-procedure multipliers).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .channel import ChannelSet, PinchLayout, Scene
from . import numerics


class NumeratorMode(Enum):
    """How the worst-case Eve SINR numerator treats the channel perturbation.

    CONSERVATIVE maximizes |(h_hat + dh)^H w| over the uncertainty ellipsoid,
    giving (|h_hat^H w| + sqrt(w^H Phi w))^2 -- a certified upper bound.
    NOMINAL keeps the estimated channel only, |h_hat^H w|^2.
    """

    CONSERVATIVE = "conservative"
    NOMINAL = "nominal"


@dataclass
class Solution:
    """Beamformers, AN covariance, layout, and (robust) auxiliaries."""

    beams: np.ndarray                      # W, (N, I) complex, columns w_i
    an_cov: np.ndarray                     # R_m, (N, N) Hermitian PSD
    layout: PinchLayout
    aux_lambda: Optional[np.ndarray] = None  # (K, I), > 0, robust mode
    aux_tau: Optional[np.ndarray] = None     # (K, I), >= 0, robust mode

    def total_power(self) -> float:
        """Tr(sum_i w_i w_i^H + R_m) = ||W||_F^2 + tr(R_m)."""
        return float(np.sum(np.abs(self.beams) ** 2) + np.real(np.trace(self.an_cov)))

    def validate(self, scene: Scene) -> None:
        """Check the PSD, power-budget, and auxiliary-sign invariants."""
        lam_min, _ = numerics.min_eig(self.an_cov)
        trace = float(np.real(np.trace(self.an_cov)))
        if lam_min < -1e-9 * max(trace, 0.0) - 1e-20:
            raise ValueError("AN covariance is not PSD")
        if self.total_power() > scene.power_budget * (1.0 + 1e-6):
            raise ValueError("solution exceeds the transmit power budget")
        if self.aux_lambda is not None and np.any(self.aux_lambda <= 0.0):
            raise ValueError("denominator bounds lambda must be positive")
        if self.aux_tau is not None and np.any(self.aux_tau < 0.0):
            raise ValueError("S-procedure multipliers tau must be nonnegative")


def _sinr(h: np.ndarray, beams: np.ndarray, an_cov: np.ndarray, i: int,
          noise: float) -> float:
    signal = np.abs(np.vdot(h, beams[:, i])) ** 2
    interference = 0.0
    for m in range(beams.shape[1]):
        if m != i:
            interference += np.abs(np.vdot(h, beams[:, m])) ** 2
    an = float(np.real(np.vdot(h, an_cov @ h)))
    return signal / (interference + an + noise)


def rate_bob(channels: ChannelSet, sol: Solution, i: int, noise_bob: float) -> float:
    """Achievable rate of Bob i (bps/Hz), treating other streams + AN as noise."""
    return float(np.log2(1.0 + _sinr(channels.bob_row(i), sol.beams, sol.an_cov,
                                     i, noise_bob)))


def rate_eve(channels: ChannelSet, sol: Solution, k: int, i: int,
             noise_eve: float) -> float:
    """Rate at which Eve k can decode Bob i's stream (bps/Hz)."""
    return float(np.log2(1.0 + _sinr(channels.eve_row(k), sol.beams, sol.an_cov,
                                     i, noise_eve)))


def secrecy_rate(channels: ChannelSet, sol: Solution, scene: Scene) -> float:
    """min over (Bob i, Eve k) pairs of [R_B,i - R_E,k,i]^+, in bps/Hz.

    The clamp applies per pair before the min (equivalently after: the min
    of ramps equals the ramp of the min).
    """
    num_bobs = sol.beams.shape[1]
    num_eves = channels.h_eves.shape[0]
    worst = np.inf
    for i in range(num_bobs):
        rb = rate_bob(channels, sol, i, scene.noise_bob)
        for k in range(num_eves):
            gap = rb - rate_eve(channels, sol, k, i, scene.noise_eve)
            worst = min(worst, max(gap, 0.0))
    return float(worst)


def worst_case_eve_numerator(h_hat: np.ndarray, w: np.ndarray, phi: np.ndarray,
                             mode: NumeratorMode) -> float:
    """Numerator of the bounded Eve SINR for one (Eve, Bob) pair."""
    nominal = np.abs(np.vdot(h_hat, w)) ** 2
    if mode is NumeratorMode.NOMINAL:
        return float(nominal)
    spread = np.sqrt(max(float(np.real(np.vdot(w, phi @ w))), 0.0))
    return float((np.sqrt(nominal) + spread) ** 2)


def robust_secrecy_rate(channels_hat: ChannelSet, sol: Solution, scene: Scene,
                        unc, mode: NumeratorMode = NumeratorMode.CONSERVATIVE,
                        clamp: bool = False) -> float:
    """Worst-case secrecy objective min_{k,i} [R_B,i - log2(1 + num/lambda_{k,i})].

    channels_hat holds Eve rows evaluated at the *estimated* Eve positions;
    unc supplies the per-Eve uncertainty ellipsoids Phi_k.  The objective is
    unclamped by default (as optimized); clamp=True ramps it at zero for
    reporting.
    """
    if sol.aux_lambda is None:
        raise ValueError("robust secrecy rate needs the lambda auxiliaries")
    if np.any(sol.aux_lambda <= 0.0):
        raise ValueError("denominator bounds lambda must be positive")
    num_bobs = sol.beams.shape[1]
    num_eves = channels_hat.h_eves.shape[0]
    worst = np.inf
    for i in range(num_bobs):
        rb = rate_bob(channels_hat, sol, i, scene.noise_bob)
        for k in range(num_eves):
            num = worst_case_eve_numerator(channels_hat.eve_row(k), sol.beams[:, i],
                                           unc.phi[k], mode)
            gamma = num / float(sol.aux_lambda[k, i])
            worst = min(worst, rb - np.log2(1.0 + gamma))
    if clamp:
        worst = max(worst, 0.0)
    return float(worst)
