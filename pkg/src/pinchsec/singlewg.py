"""Exact solver for the single-waveguide, single-PA, one-Bob-one-Eve case.

With N = M = 1 the beamformer, the artificial-noise covariance, and the PA
position all reduce to scalars.  For fixed powers the stationary points of
the secrecy rate in the PA position are the real roots of a quartic, solved
in closed form (Ferrari factorization with a Cardano resolvent); for a fixed
position the optimal power split between signal and artificial noise is an
endpoint rule driven by the sign of r_B^2 sigma_B^2 - r_E^2 sigma_E^2.
Alternating the two exact subproblem solutions yields a monotone ascent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Scene, path_gain_constant


class DegenerateQuarticError(ValueError):
    """Leading quartic coefficient vanishes (Bob and Eve share an x-coordinate)."""


@dataclass
class QuarticCoeffs:
    """Coefficients of a4 x^4 + a3 x^3 + a2 x^2 + a1 x - a0 = 0.

    The sign convention keeps a0 on the right-hand side, matching the
    stationarity equation of the scalar secrecy objective.  k1..k3 are the
    geometry/power constants the coefficients are assembled from.
    """

    a4: float
    a3: float
    a2: float
    a1: float
    a0: float
    k1: float
    k2: float
    k3: float


def _single_geometry(scene: Scene):
    if scene.num_waveguides != 1 or scene.pas_per_waveguide != 1:
        raise ValueError("closed-form solver requires exactly one waveguide with one PA")
    if scene.num_bobs != 1 or scene.num_eves != 1:
        raise ValueError("closed-form solver requires exactly one Bob and one Eve")
    xb, yb = scene.bob_positions[0, 0], scene.bob_positions[0, 1]
    xe, ye = scene.eve_positions[0, 0], scene.eve_positions[0, 1]
    # the single waveguide sits at y = 0, height d
    return xb, yb, xe, ye


def secrecy_rate_scalar(scene: Scene, w_power: float, an_power: float,
                        x_pa) -> np.ndarray:
    """Clamped secrecy rate of the scalar system at PA position(s) x_pa.

    Vectorized over x_pa.  The per-waveguide channel magnitude is
    sqrt(eta)/r, so the Bob/Eve SINRs reduce to eta*w / (eta*Rm + r^2 s^2).
    """
    xb, yb, xe, ye = _single_geometry(scene)
    eta = path_gain_constant(scene.carrier_freq)
    x = np.asarray(x_pa, dtype=float)
    rb2 = (x - xb) ** 2 + yb ** 2 + scene.height ** 2
    re2 = (x - xe) ** 2 + ye ** 2 + scene.height ** 2
    rate_b = np.log2(1.0 + eta * w_power / (eta * an_power + rb2 * scene.noise_bob))
    rate_e = np.log2(1.0 + eta * w_power / (eta * an_power + re2 * scene.noise_eve))
    return np.maximum(rate_b - rate_e, 0.0)


def quartic_coefficients(scene: Scene, w_power: float, an_power: float) -> QuarticCoeffs:
    """Stationarity quartic of the secrecy rate in the PA position.

    k1 = |w|^2 eta / sigma_B^2 collects the signal strength, k2/k3 the
    squared Bob/Eve offsets from the feed-line origin plus the AN-loaded
    noise terms.  Setting the position derivative of the secrecy rate to
    zero and clearing denominators yields the quartic below.
    """
    xb, yb, xe, ye = _single_geometry(scene)
    eta = path_gain_constant(scene.carrier_freq)
    d2 = scene.height ** 2
    k1 = w_power * eta / scene.noise_bob
    k2 = xb * xb + yb * yb + d2 + eta * an_power / scene.noise_bob
    k3 = xe * xe + ye * ye + d2 + eta * an_power / scene.noise_eve
    a4 = 3.0 * xe - 3.0 * xb
    a3 = 4.0 * xb ** 2 - 4.0 * xe ** 2 + 2.0 * k2 - 2.0 * k3
    a2 = (k1 * xe - k1 * xb - 4.0 * k2 * xb + 2.0 * k3 * xb
          - 2.0 * k2 * xe + 4.0 * k3 * xe + 4.0 * xe ** 2 * xb - 4.0 * xb ** 2 * xe)
    a1 = (k2 ** 2 - k3 ** 2 + k1 * k2 - k1 * k3
          + 4.0 * k2 * xb * xe - 4.0 * k3 * xb * xe)
    a0 = k2 ** 2 * xe - k3 ** 2 * xb - k1 * k3 * xb + k1 * k2 * xe
    return QuarticCoeffs(a4, a3, a2, a1, a0, k1, k2, k3)


def solve_depressed_cubic(b1p: float, b0p: float) -> float:
    """One real root of z^3 + b1p z + b0p = 0.

    Splits on the discriminant (b0p/2)^2 + (b1p/3)^3: the Cardano radical
    form when it is nonnegative, otherwise the k = 0 trigonometric root of
    the casus irreducibilis (three real roots exist; one suffices here).
    """
    disc = (b0p / 2.0) ** 2 + (b1p / 3.0) ** 3
    if disc >= 0.0:
        s = np.sqrt(disc)
        return float(np.cbrt(-b0p / 2.0 + s) + np.cbrt(-b0p / 2.0 - s))
    theta = np.arccos((-b0p / 2.0) / np.sqrt(-((b1p / 3.0) ** 3)))
    return float(2.0 * np.sqrt(-b1p / 3.0) * np.cos(theta / 3.0))


def _real_quadratic_roots(b: float, c: float) -> list[float]:
    disc = b * b - 4.0 * c
    if disc < 0.0:
        return []
    s = np.sqrt(disc)
    return [(-b + s) / 2.0, (-b - s) / 2.0]


def solve_quartic(coeffs: QuarticCoeffs) -> list[float]:
    """All real roots of the quartic via depression + quadratic factorization.

    The depressed quartic u^4 + p u^2 + q u + r is split into two quadratics
    whose cross term omega satisfies a cubic in omega^2; a single real
    resolvent root recovers the factor pair.  When the linear term q
    (effectively) vanishes the quartic is biquadratic and solved directly.
    """
    if coeffs.a4 == 0.0:
        raise DegenerateQuarticError("leading coefficient is zero")
    b = coeffs.a3 / coeffs.a4
    c = coeffs.a2 / coeffs.a4
    d = coeffs.a1 / coeffs.a4
    e = -coeffs.a0 / coeffs.a4
    shift = b / 4.0
    p = c - 3.0 * b * b / 8.0
    q = d - b * c / 2.0 + b ** 3 / 8.0
    r = e - b * d / 4.0 + b * b * c / 16.0 - 3.0 * b ** 4 / 256.0

    def biquadratic() -> list[float]:
        roots = []
        for y in _real_quadratic_roots(p, r):
            if y >= 0.0:
                s = np.sqrt(y)
                roots.extend([s, -s])
        return [u - shift for u in roots]

    beta2 = 4.0 * r - p * p
    beta1 = -2.0 * p * q * q
    beta0 = -(q ** 4)
    b1p = beta1 - beta2 * beta2 / 3.0
    b0p = 2.0 * beta2 ** 3 / 27.0 - beta2 * beta1 / 3.0 + beta0
    z = solve_depressed_cubic(b1p, b0p)
    omega_sq = z - beta2 / 3.0
    if omega_sq <= 1e-12 * max(1.0, abs(p), abs(r) ** 0.5):
        return biquadratic()
    omega = np.sqrt(omega_sq)
    p1 = q / omega
    p0 = 0.5 * (p + p1 * p1 - omega)
    q0 = p0 + omega
    roots = _real_quadratic_roots(p1, p0) + _real_quadratic_roots(-p1, q0)
    return [u - shift for u in roots]


def quartic_residual(coeffs: QuarticCoeffs, x: float) -> float:
    """|a4 x^4 + a3 x^3 + a2 x^2 + a1 x - a0| at a candidate root."""
    return abs(coeffs.a4 * x ** 4 + coeffs.a3 * x ** 3 + coeffs.a2 * x ** 2
               + coeffs.a1 * x - coeffs.a0)


# grid step (relative to D) for the degenerate fall-back when the quartic
# collapses; 5e-6 * D bounds the position error, and the SR is locally
# quadratic around its maximum so the rate error is far smaller.
_DEGENERATE_GRID_STEP = 5e-6


def optimal_pa_position(scene: Scene, w_power: float, an_power: float):
    """Best PA position for fixed powers: (x_pa, secrecy_rate).

    Evaluates the secrecy rate at every real stationary point (quartic root
    clipped onto the waveguide) plus both endpoints {0, D} and returns the
    argmax, ties broken toward the smaller position.  When Bob and Eve share
    an x-coordinate the quartic degenerates (a4 = 0) and a dense grid is
    used instead.
    """
    coeffs = quartic_coefficients(scene, w_power, an_power)
    if coeffs.a4 == 0.0:
        steps = int(round(1.0 / _DEGENERATE_GRID_STEP))
        candidates = np.linspace(0.0, scene.side, steps + 1)
    else:
        roots = solve_quartic(coeffs)
        clipped = [min(max(root, 0.0), scene.side) for root in roots]
        candidates = np.array(sorted(set(clipped + [0.0, scene.side])))
    values = secrecy_rate_scalar(scene, w_power, an_power, candidates)
    best = int(np.argmax(values))  # first max = smallest x on ties
    return float(candidates[best]), float(values[best])


def optimal_power_split(scene: Scene, x_pa: float):
    """Endpoint power split at a fixed PA position: (w_power, an_power).

    The secrecy rate with the full budget spent (|w|^2 = P - R_m) is
    monotone in R_m; its derivative sign is the sign of
    r_B^2 sigma_B^2 - r_E^2 sigma_E^2, so the optimum sits at an endpoint.
    A flat objective (equality) returns the all-signal endpoint.
    """
    xb, yb, xe, ye = _single_geometry(scene)
    rb2 = (x_pa - xb) ** 2 + yb ** 2 + scene.height ** 2
    re2 = (x_pa - xe) ** 2 + ye ** 2 + scene.height ** 2
    if rb2 * scene.noise_bob > re2 * scene.noise_eve:
        return 0.0, scene.power_budget
    return scene.power_budget, 0.0


@dataclass
class SingleWgState:
    """Converged scalar solution: powers, PA position, achieved secrecy rate."""

    w_power: float
    an_power: float
    x_pa: float
    secrecy_rate: float
    sr_trace: list[float]
    iterations: int


def alternate_optimize(scene: Scene, tol: float = 1e-8,
                       max_iters: int = 50) -> SingleWgState:
    """Alternate exact position and power-split subproblems to convergence.

    Starts from the PA above Bob with no artificial noise.  Each half-step
    maximizes the same objective over its own block, so the secrecy-rate
    trace is nondecreasing; stops when an iteration improves it by < tol.
    """
    xb, _, _, _ = _single_geometry(scene)
    x_pa = min(max(xb, 0.0), scene.side)
    w_power, an_power = scene.power_budget, 0.0
    sr = float(secrecy_rate_scalar(scene, w_power, an_power, x_pa))
    trace = [sr]
    iterations = 0
    for iterations in range(1, max_iters + 1):
        x_pa, _ = optimal_pa_position(scene, w_power, an_power)
        w_power, an_power = optimal_power_split(scene, x_pa)
        new_sr = float(secrecy_rate_scalar(scene, w_power, an_power, x_pa))
        trace.append(new_sr)
        if abs(new_sr - sr) < tol:
            sr = new_sr
            break
        sr = new_sr
    return SingleWgState(w_power, an_power, x_pa, sr, trace, iterations)
