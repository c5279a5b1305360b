"""Geometry and deterministic channel model for a pinching-antenna downlink.

A base station feeds N dielectric waveguides, each carrying M pinching
antennas (PAs) whose x-positions are reconfigurable.  Users ("Bobs") and
eavesdroppers ("Eves") sit on the floor plane of a D x D room; waveguides run
parallel to the x-axis at height d.  The channel from waveguide n to a user
is the coherent sum over that waveguide's PAs of an in-waveguide phase term
and a free-space line-of-sight term.

All quantities are SI: meters, watts, hertz.  Channels are dimensionless
complex gains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

C_LIGHT = 299792458.0  # m/s, exact


class SingularChannelError(ValueError):
    """Receiver coincides with a pinching antenna (zero distance)."""


def free_space_wavelength(fc: float) -> float:
    """Free-space wavelength c/fc for carrier frequency fc > 0 (Hz)."""
    if fc <= 0:
        raise ValueError(f"carrier frequency must be positive, got {fc}")
    return C_LIGHT / fc


def guided_wavelength(fc: float, neff: float) -> float:
    """Wavelength inside a dielectric waveguide: (c/fc) / n_eff.

    n_eff is the effective refractive index of the guide (>= 1); n_eff = 1
    recovers the free-space wavelength.
    """
    if neff < 1.0:
        raise ValueError(f"effective refractive index must be >= 1, got {neff}")
    return free_space_wavelength(fc) / neff


def path_gain_constant(fc: float) -> float:
    """Spherical-spreading constant eta = c^2 / (16 pi^2 fc^2) = (lambda/4pi)^2.

    sqrt(eta)/r is the line-of-sight amplitude at distance r.  Units: m^2.
    """
    lam = free_space_wavelength(fc)
    return (lam / (4.0 * np.pi)) ** 2


@dataclass
class Scene:
    """One complete problem instance: room, radio constants, players, budget.

    Bob/Eve positions are (n, 3) arrays of [x, y, 0] coordinates inside the
    D x D floor square.  Noise powers and the power budget are in watts.
    """

    side: float                 # room side length D (m); waveguides span [0, D]
    height: float               # waveguide mounting height d (m)
    num_waveguides: int         # N
    pas_per_waveguide: int      # M, same for every waveguide
    bob_positions: np.ndarray   # (I, 3)
    eve_positions: np.ndarray   # (K, 3)
    noise_bob: float            # sigma_B^2 (W)
    noise_eve: float            # sigma_E^2 (W)
    carrier_freq: float = 28e9  # f_c (Hz)
    refractive_index: float = 1.4
    power_budget: float = 1e-3  # P (W)
    min_spacing: float = 0.0    # Delta (m), anti-coupling spacing along a guide

    def __post_init__(self):
        self.bob_positions = np.atleast_2d(np.asarray(self.bob_positions, dtype=float))
        self.eve_positions = np.atleast_2d(np.asarray(self.eve_positions, dtype=float))
        if self.side <= 0 or self.height <= 0:
            raise ValueError("room side and waveguide height must be positive")
        if self.num_waveguides < 1 or self.pas_per_waveguide < 1:
            raise ValueError("need at least one waveguide and one PA per waveguide")
        if self.bob_positions.shape[0] < 1 or self.eve_positions.shape[0] < 1:
            raise ValueError("need at least one Bob and one Eve")
        if self.bob_positions.shape[1] != 3 or self.eve_positions.shape[1] != 3:
            raise ValueError("positions must be 3-vectors [x, y, z]")
        for name, pos in (("bob", self.bob_positions), ("eve", self.eve_positions)):
            if np.any(pos[:, 2] != 0.0):
                raise ValueError(f"{name} positions must lie on the floor plane z = 0")
            if np.any(pos[:, :2] < 0.0) or np.any(pos[:, :2] > self.side):
                raise ValueError(f"{name} positions must lie inside the {self.side} m square")
        if self.noise_bob <= 0 or self.noise_eve <= 0 or self.power_budget <= 0:
            raise ValueError("noise powers and power budget must be positive")
        if self.refractive_index < 1.0:
            raise ValueError("effective refractive index must be >= 1")
        if self.min_spacing < 0.0:
            raise ValueError("minimum PA spacing must be nonnegative")

    @property
    def num_bobs(self) -> int:
        return self.bob_positions.shape[0]

    @property
    def num_eves(self) -> int:
        return self.eve_positions.shape[0]

    @property
    def waveguide_y(self) -> np.ndarray:
        """y-coordinate of each waveguide: (n - 1) * D / N for n = 1..N."""
        n = np.arange(self.num_waveguides, dtype=float)
        return n * self.side / self.num_waveguides


@dataclass
class PinchLayout:
    """PA x-positions on the fixed waveguide grid.

    x_positions has shape (N, M); row n holds the x-coordinates of the M PAs
    on waveguide n, sorted ascending.  All PAs of waveguide n share its fixed
    y-coordinate and the common height.  The feed point sits at x = feed_x on
    every waveguide (its exact location only contributes a per-waveguide
    common phase, absorbed by beamforming; 0 is the canonical choice).
    """

    x_positions: np.ndarray      # (N, M)
    waveguide_y: np.ndarray      # (N,)
    height: float
    side: float
    feed_x: float = 0.0

    def __post_init__(self):
        self.x_positions = np.atleast_2d(np.asarray(self.x_positions, dtype=float))
        self.waveguide_y = np.asarray(self.waveguide_y, dtype=float)
        if self.x_positions.shape[0] != self.waveguide_y.shape[0]:
            raise ValueError("one row of PA positions per waveguide required")
        if np.any(self.x_positions < 0.0) or np.any(self.x_positions > self.side):
            raise ValueError("PA positions must lie on the waveguide, within [0, D]")
        if np.any(np.diff(self.x_positions, axis=1) < 0.0):
            raise ValueError("PA positions must be sorted ascending along each waveguide")

    @classmethod
    def uniform(cls, scene: Scene, feed_x: float = 0.0) -> "PinchLayout":
        """Evenly spread M PAs over each waveguide (cell-centered grid)."""
        m = np.arange(scene.pas_per_waveguide, dtype=float)
        xs = (m + 0.5) * scene.side / scene.pas_per_waveguide
        x = np.tile(xs, (scene.num_waveguides, 1))
        return cls(x, scene.waveguide_y, scene.height, scene.side, feed_x)

    def pa_coordinates(self) -> np.ndarray:
        """Full (N, M, 3) array of PA positions [x, y, d]."""
        n, m = self.x_positions.shape
        out = np.empty((n, m, 3))
        out[:, :, 0] = self.x_positions
        out[:, :, 1] = self.waveguide_y[:, None]
        out[:, :, 2] = self.height
        return out


@dataclass
class ChannelSet:
    """Per-waveguide complex channels: H_B is (I, N) for Bobs, H_E is (K, N)."""

    h_bobs: np.ndarray
    h_eves: np.ndarray

    def bob_row(self, i: int) -> np.ndarray:
        return self.h_bobs[i]

    def eve_row(self, k: int) -> np.ndarray:
        return self.h_eves[k]


def inwaveguide_coeff(layout: PinchLayout, n: int, m: int, fc: float,
                      neff: float, num_pas: int) -> complex:
    """Guided-propagation coefficient from the feed point to PA (n, m).

    The power of each waveguide splits evenly over its M PAs, so the
    coefficient is phase-only with magnitude 1/sqrt(M); the phase advances by
    2 pi / lambda_g per meter travelled along the guide from the feed.
    """
    lam_g = guided_wavelength(fc, neff)
    dist = abs(layout.x_positions[n, m] - layout.feed_x)
    return np.exp(-2j * np.pi * dist / lam_g) / np.sqrt(num_pas)


def freespace_coeff(receiver: np.ndarray, pa: np.ndarray, fc: float) -> complex:
    """Line-of-sight coefficient sqrt(eta) e^{-j 2 pi r / lambda} / r.

    r is the PA-to-receiver distance; raises SingularChannelError at r = 0.
    """
    r = float(np.linalg.norm(np.asarray(receiver, dtype=float) - np.asarray(pa, dtype=float)))
    if r == 0.0:
        raise SingularChannelError("receiver coincides with a pinching antenna")
    lam = free_space_wavelength(fc)
    return np.sqrt(path_gain_constant(fc)) * np.exp(-2j * np.pi * r / lam) / r


def _channel_rows(positions: np.ndarray, layout: PinchLayout, fc: float,
                  neff: float) -> np.ndarray:
    """Vectorized per-waveguide channels for a (U, 3) set of receivers -> (U, N)."""
    pa = layout.pa_coordinates()                      # (N, M, 3)
    diff = positions[:, None, None, :] - pa[None]     # (U, N, M, 3)
    r = np.sqrt(np.sum(diff * diff, axis=-1))         # (U, N, M)
    if np.any(r == 0.0):
        raise SingularChannelError("receiver coincides with a pinching antenna")
    lam = free_space_wavelength(fc)
    lam_g = lam / neff
    eta = path_gain_constant(fc)
    num_pas = layout.x_positions.shape[1]
    guide_dist = np.abs(layout.x_positions - layout.feed_x)   # (N, M)
    guided = np.exp(-2j * np.pi * guide_dist / lam_g) / np.sqrt(num_pas)
    radiated = np.sqrt(eta) * np.exp(-2j * np.pi * r / lam) / r
    return np.sum(guided[None] * radiated, axis=-1)


def channel_matrices(scene: Scene, layout: PinchLayout) -> ChannelSet:
    """Stacked per-waveguide channels of every Bob and Eve for a given layout.

    Entry (u, n) sums, over the M PAs of waveguide n, the product of the
    guided coefficient into the PA and the free-space coefficient from the
    PA to the receiver.
    """
    h_b = _channel_rows(scene.bob_positions, layout, scene.carrier_freq,
                        scene.refractive_index)
    h_e = _channel_rows(scene.eve_positions, layout, scene.carrier_freq,
                        scene.refractive_index)
    return ChannelSet(h_b, h_e)
