"""Imperfect-CSI machinery: channel Jacobians, uncertainty ellipsoids, LMIs.

Eavesdropper locations are known only up to a bounded offset.  A first-order
expansion of the channel in the position maps that offset set through the
channel Jacobian J into an ellipsoid {dh : dh^H Phi^-1 dh <= 1} with
Phi = J Sigma J^H.  Bounding Eve's SINR denominator from below by lambda
over the whole ellipsoid is a semi-infinite constraint; the S-procedure
replaces it with positive semidefiniteness of a single (N+1) x (N+1) matrix
carrying a multiplier tau >= 0 (sufficiency direction only).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numerics
from .channel import (PinchLayout, Scene, SingularChannelError,
                      free_space_wavelength, guided_wavelength,
                      path_gain_constant)


@dataclass
class UncertaintySpec:
    """Per-Eve uncertainty data built from a position-error covariance.

    sigma_xyz holds the diagonal of the position-error shape matrix (m^2);
    jacobians/phi/phi_inv are stacked per Eve.  true_offsets exists only for
    post-hoc evaluation by the experiment harness (the optimizer never sees
    it).
    """

    sigma_xyz: np.ndarray            # (3,)
    est_eve_positions: np.ndarray    # (K, 3)
    jacobians: np.ndarray            # (K, N, 3)
    phi: np.ndarray                  # (K, N, N)
    phi_inv: np.ndarray              # (K, N, N)
    true_offsets: Optional[np.ndarray] = None  # (K, 3), harness-only

    @classmethod
    def build(cls, scene: Scene, layout: PinchLayout, sigma_xyz,
              eps_rel: float = 1e-9) -> "UncertaintySpec":
        sigma_xyz = np.asarray(sigma_xyz, dtype=float)
        est = scene.eve_positions
        jac = np.stack([channel_jacobian(layout, est[k], scene)
                        for k in range(est.shape[0])])
        phi = np.empty((jac.shape[0], jac.shape[1], jac.shape[1]), dtype=complex)
        phi_inv = np.empty_like(phi)
        for k in range(jac.shape[0]):
            phi[k], phi_inv[k] = build_ellipsoid(jac[k], sigma_xyz, eps_rel)
        return cls(sigma_xyz, est, jac, phi, phi_inv)


def channel_jacobian(layout: PinchLayout, eve_pos: np.ndarray,
                     scene: Scene) -> np.ndarray:
    """d h_E / d p at an Eve position: (N, 3) complex.

    Differentiates the per-waveguide channel sum analytically: each PA term
    sqrt(eta) e^{-j 2 pi r / lambda} / r contributes
    sqrt(eta) e^{-j 2 pi r / lambda} (-1/r^2 - j 2 pi/(lambda r)) (p - pa)_a / r
    along coordinate a, weighted by the guided coefficient into that PA.
    """
    eve_pos = np.asarray(eve_pos, dtype=float)
    pa = layout.pa_coordinates()                      # (N, M, 3)
    diff = eve_pos[None, None, :] - pa                # (N, M, 3)
    r = np.sqrt(np.sum(diff * diff, axis=-1))         # (N, M)
    if np.any(r == 0.0):
        raise SingularChannelError("Eve coincides with a pinching antenna")
    lam = free_space_wavelength(scene.carrier_freq)
    lam_g = guided_wavelength(scene.carrier_freq, scene.refractive_index)
    eta = path_gain_constant(scene.carrier_freq)
    num_pas = layout.x_positions.shape[1]
    guide_phase = 2.0 * np.pi * np.abs(layout.x_positions - layout.feed_x) / lam_g
    h1 = np.exp(-1j * guide_phase) / np.sqrt(num_pas)          # (N, M)
    radial = np.sqrt(eta) * np.exp(-2j * np.pi * r / lam)
    slope = radial * (-1.0 / r ** 2 - 2j * np.pi / (lam * r))  # d/dr of h2
    dh2 = slope[..., None] * diff / r[..., None]               # (N, M, 3)
    return np.sum(h1[..., None] * dh2, axis=1)                 # (N, 3)


def build_ellipsoid(jacobian: np.ndarray, sigma_xyz, eps_rel: float = 1e-9):
    """Channel-domain ellipsoid matrix Phi = J Sigma J^H and its ridge inverse.

    Sigma is diagonal with the per-axis position variances; Phi has rank at
    most the number of nonzero variances, so the inverse is regularized.
    """
    sigma_xyz = np.asarray(sigma_xyz, dtype=float)
    if np.any(sigma_xyz < 0.0):
        raise ValueError("position variances must be nonnegative")
    phi = (jacobian * sigma_xyz[None, :]) @ jacobian.conj().T
    phi = 0.5 * (phi + phi.conj().T)
    return phi, numerics.regularized_inverse(phi, eps_rel)


def lmi_matrix(q_mat: np.ndarray, h_hat: np.ndarray, phi_inv: np.ndarray,
               tau: float, lam: float, noise_eve: float) -> np.ndarray:
    """S-procedure certificate matrix for one (Eve, Bob) pair.

    q_mat is the interference-plus-AN covariance seen by the Eve.  With
    f(dh) = (h+dh)^H Q (h+dh) + sigma^2 - lam and the ellipsoid constraint
    g(dh) = dh^H Phi^-1 dh - 1 <= 0, "f >= 0 wherever g <= 0" is certified
    by f + tau g >= 0 everywhere (tau >= 0), i.e. PSD of the block matrix

        [[Q + tau Phi^-1,  Q h],
         [h^H Q,           h^H Q h + sigma^2 - lam - tau]].
    """
    h = np.asarray(h_hat, dtype=complex).reshape(-1)
    qh = q_mat @ h
    corner = np.real(np.vdot(h, qh)) + noise_eve - lam - tau
    top = np.hstack([q_mat + tau * phi_inv, qh[:, None]])
    bottom = np.hstack([qh.conj()[None, :], np.array([[corner]], dtype=complex)])
    return np.vstack([top, bottom])


def interference_cov(beams: np.ndarray, an_cov: np.ndarray, i: int) -> np.ndarray:
    """Q_{k,i} = R_m + sum_{m != i} w_m w_m^H (independent of the Eve index)."""
    q = np.array(an_cov, dtype=complex)
    for m in range(beams.shape[1]):
        if m != i:
            q += np.outer(beams[:, m], beams[:, m].conj())
    return 0.5 * (q + q.conj().T)


def sample_ellipsoid(phi: np.ndarray, count: int, rng: np.random.Generator,
                     boundary_fraction: float = 0.5) -> np.ndarray:
    """Draw channel perturbations dh = Phi^{1/2} u with ||u|| <= 1: (count, N).

    A boundary_fraction of the draws sit exactly on the unit sphere (the
    worst cases live there for convex quadratics); the rest fill the ball
    uniformly.
    """
    n = phi.shape[0]
    root = numerics.hermitian_sqrt(phi)
    g = rng.normal(size=(count, n)) + 1j * rng.normal(size=(count, n))
    u = g / np.linalg.norm(g, axis=1, keepdims=True)
    interior = rng.uniform(size=count) ** (1.0 / (2.0 * n))  # complex n-ball
    n_boundary = int(count * boundary_fraction)
    radius = np.ones(count)
    radius[n_boundary:] = interior[n_boundary:]
    return (radius[:, None] * u) @ root.T  # row s becomes root @ u_s


def _best_tau_min_eig(q_mat, h, phi_inv, lam, noise_eve, tau_hi):
    """max over tau in [0, tau_hi] of lambda_min(M(tau)); concave in tau."""
    def val(tau):
        return numerics.min_eig(lmi_matrix(q_mat, h, phi_inv, tau, lam,
                                           noise_eve))[0]
    # coarse grid then golden-section refinement
    taus = np.linspace(0.0, tau_hi, 13)
    vals = [val(t) for t in taus]
    j = int(np.argmax(vals))
    lo = taus[max(j - 1, 0)]
    hi = taus[min(j + 1, len(taus) - 1)]
    ratio = 0.5 * (np.sqrt(5.0) - 1.0)
    a, b = lo, hi
    x1 = b - ratio * (b - a)
    x2 = a + ratio * (b - a)
    f1, f2 = val(x1), val(x2)
    for _ in range(24):
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + ratio * (b - a)
            f2 = val(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - ratio * (b - a)
            f1 = val(x1)
    best = max([(vals[j], taus[j]), (f1, x1), (f2, x2)])
    return best[1], best[0]


def certify_pair(q_mat: np.ndarray, h_hat: np.ndarray, phi: np.ndarray,
                 phi_inv: np.ndarray, noise_eve: float,
                 bisection_steps: int = 40):
    """Largest certified denominator bound for one (Eve, Bob) pair.

    Bisects lambda over [sigma_E^2, nominal denominator + spread bound],
    keeping the largest value for which some tau >= 0 makes the S-procedure
    matrix PSD.  Returns (lambda, tau) with lambda_min(M) >= 0 exactly (the
    kept iterate is always feasible).
    """
    h = np.asarray(h_hat, dtype=complex).reshape(-1)
    nominal = float(np.real(np.vdot(h, q_mat @ h)))
    cross = float(np.real(np.trace(q_mat @ phi)))
    upper = nominal + 2.0 * np.sqrt(max(nominal * cross, 0.0)) + cross + noise_eve
    tau_hi = 2.0 * (upper + float(np.real(np.trace(q_mat))) * _phi_scale(phi))
    # lambda slightly under sigma_E^2 with tau = 0 is feasible for any PSD Q:
    # the certificate matrix is then a Gram quadratic plus a positive corner
    anchor = (noise_eve * (1.0 - 1e-12), 0.0)
    lo, lo_tau = anchor
    hi = upper
    for _ in range(bisection_steps):
        mid = 0.5 * (lo + hi)
        tau, lam_min = _best_tau_min_eig(q_mat, h, phi_inv, mid, noise_eve, tau_hi)
        if lam_min >= 0.0:
            lo, lo_tau = mid, tau
        else:
            hi = mid
    final = numerics.min_eig(lmi_matrix(q_mat, h, phi_inv, lo_tau, lo,
                                        noise_eve))[0]
    if final < 0.0:  # paranoia: never return an uncertified pair
        return anchor
    return lo, lo_tau


def _phi_scale(phi: np.ndarray) -> float:
    n = phi.shape[0]
    return max(float(np.real(np.trace(phi))) / n, 1e-30)


def certify_solution(scene: Scene, beams: np.ndarray, an_cov: np.ndarray,
                     h_eves_hat: np.ndarray, unc: UncertaintySpec):
    """Tightest certified (lambda, tau) arrays for a fixed design.

    h_eves_hat holds the estimated per-waveguide Eve channels (rows).  For
    each (Eve, Bob) pair the denominator bound is maximized subject to an
    exactly PSD certificate; the result replaces whatever auxiliaries
    training produced when reporting worst-case rates.
    """
    num_eves = unc.phi.shape[0]
    num_bobs = beams.shape[1]
    lam = np.empty((num_eves, num_bobs))
    tau = np.empty((num_eves, num_bobs))
    for i in range(num_bobs):
        q = interference_cov(beams, an_cov, i)
        for k in range(num_eves):
            lam[k, i], tau[k, i] = certify_pair(q, h_eves_hat[k], unc.phi[k],
                                                unc.phi_inv[k], scene.noise_eve)
    return lam, tau


def worst_case_denominator_oracle(q_mat: np.ndarray, h_hat: np.ndarray,
                                  phi: np.ndarray, noise_eve: float,
                                  samples: int = 100_000,
                                  seed: int = 0) -> float:
    """Monte-Carlo lower estimate of min over the ellipsoid of the denominator.

    Evaluates (h_hat + dh)^H Q (h_hat + dh) + sigma_E^2 over sampled
    perturbations.  Used only to validate certificates: whenever the LMI is
    PSD, no sample may fall below lambda (up to tolerance).
    """
    rng = np.random.default_rng(seed)
    h = np.asarray(h_hat, dtype=complex).reshape(-1)
    best = np.inf
    chunk = 20_000
    done = 0
    while done < samples:
        take = min(chunk, samples - done)
        dh = sample_ellipsoid(phi, take, rng)
        vecs = h[None, :] + dh
        vals = np.real(np.einsum("sn,nm,sm->s", vecs.conj(), q_mat, vecs))
        best = min(best, float(vals.min()))
        done += take
    return best + noise_eve
