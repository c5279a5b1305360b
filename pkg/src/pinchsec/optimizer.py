"""DNN-aided joint optimizer for beams, AN covariance, and PA positions.

One fully connected network is trained per problem instance (online
learning: the instance is the whole workload, there is no test stage).  The
network maps the normalized Bob/Eve floor coordinates to a raw output vector
that is decoded into the optimization variables:

  raw layout: [per Bob i: Re(w_i), Im(w_i)] | Re(G), Im(G) | position
  logits (N x M) | robust only: tau logits (K x I), lambda logits (K x I)

Beams and the AN factor G are scaled by sqrt(P), positions by D after a
sigmoid, and the robust auxiliaries by a per-scene denominator scale; the
raw network therefore always works at O(1) regardless of the SI magnitudes
of the instance.  R_m = G G^H and the sigmoid keep the PSD and boundary
constraints satisfied by construction; the power and spacing constraints
are enforced by one-sided quadratic penalties, and the robust LMI by a
penalty on the negative part of its smallest eigenvalue.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import ComplexVar, Tape, Var
from .channel import (PinchLayout, Scene, channel_matrices,
                      free_space_wavelength, guided_wavelength,
                      path_gain_constant)
from .metrics import NumeratorMode, Solution, robust_secrecy_rate
from .robust import UncertaintySpec, certify_solution

_REF_POWERS_DBM = np.array([-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0])
_REF_U1 = np.array([15000.0, 15000.0, 9000.0, 3000.0, 300.0, 30.0, 1.0])
_U3_TABLE = {0.05: 2e5, 0.15: 5e5, 0.3: 1e6}


@dataclass
class NetworkConfig:
    """Architecture of the per-instance network."""

    input_dim: int
    output_dim: int
    hidden: tuple = (256, 256, 256, 256)
    seed: int = 0

    @classmethod
    def for_scene(cls, scene: Scene, mode: str, hidden=(256, 256, 256, 256),
                  seed: int = 0) -> "NetworkConfig":
        n, m = scene.num_waveguides, scene.pas_per_waveguide
        i, k = scene.num_bobs, scene.num_eves
        out = 2 * n * i + 2 * n * n + m * n
        if mode == "robust":
            out += 2 * i * k
        return cls(input_dim=2 * (i + k), output_dim=out, hidden=tuple(hidden),
                   seed=seed)


@dataclass
class TrainConfig:
    """Training schedule and mode switches (defaults follow the evaluation setup)."""

    epochs: int = 1500
    lr0: float = 1e-4
    lr_decay: float = 0.2
    lr_step: int = 200
    u1_growth: float = 1.2
    u1_growth_every: int = 10
    u1_cap_factor: float = 100.0
    u2: float = 100.0
    sigma2: float = 0.05            # position-error variance (robust mode)
    an_enabled: bool = True
    numerator_mode: NumeratorMode = NumeratorMode.CONSERVATIVE
    spacing_penalty: str = "within_guide"   # or "cross_guide" (as printed)
    hidden: tuple = (256, 256, 256, 256)
    seed: int = 0
    eps_rel: float = 1e-9
    # robust mode: epochs of perfect-CSI warmup before the worst-case
    # objective engages (capped at a third of the budget), then the LMI
    # penalty weight ramps in linearly over u3_ramp_epochs
    warmup_epochs: int = 400
    u3_ramp_epochs: int = 200
    # global gradient-norm ceiling; penalty spikes at constraint boundaries
    # would otherwise inflate Adam's second moments and stall learning
    grad_clip: Optional[float] = 100.0

    def learning_rate(self, epoch: int) -> float:
        return self.lr0 * self.lr_decay ** (epoch // self.lr_step)


def penalty_schedule(epoch: int, power_dbm: float, sigma2: float):
    """(U1, U2, U3) at a given epoch.

    U1 starts from a table inverse to the power budget (log-interpolated
    between the tabulated powers, clamped outside), inflates by 20% every 10
    epochs up to 100x its start.  U2 is constant.  U3 comes from the nearest
    tabulated uncertainty variance and does not grow.
    """
    log_u1 = np.interp(power_dbm, _REF_POWERS_DBM, np.log10(_REF_U1))
    u1_start = 10.0 ** float(log_u1)
    u1 = min(u1_start * 1.2 ** (epoch // 10), 100.0 * u1_start)
    sig_keys = np.array(sorted(_U3_TABLE))
    nearest = float(sig_keys[np.argmin(np.abs(sig_keys - sigma2))])
    return u1, 100.0, _U3_TABLE[nearest]


def init_params(config: NetworkConfig) -> list[np.ndarray]:
    """Glorot-uniform weights, zero biases, as [W1, b1, ..., Wout, bout]."""
    rng = np.random.default_rng(config.seed)
    sizes = [config.input_dim, *config.hidden, config.output_dim]
    params: list[np.ndarray] = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        params.append(np.zeros(fan_out))
    return params


def scene_coords(scene: Scene) -> np.ndarray:
    """Network input: Bob then Eve floor coordinates, normalized by the side."""
    xy = np.concatenate([scene.bob_positions[:, :2].ravel(),
                         scene.eve_positions[:, :2].ravel()])
    return xy / scene.side


def forward(params: list[np.ndarray], coords: np.ndarray) -> np.ndarray:
    """Plain forward pass: (affine -> ReLU) x hidden, affine output."""
    h = np.asarray(coords, dtype=float)
    n_layers = len(params) // 2
    for layer in range(n_layers):
        w, b = params[2 * layer], params[2 * layer + 1]
        h = w @ h + b
        if layer < n_layers - 1:
            h = np.maximum(h, 0.0)
    return h


def _forward_on_tape(tape: Tape, param_vars: list[Var], coords: np.ndarray) -> Var:
    h: Var = tape.leaf(np.asarray(coords, dtype=float), "input")
    n_layers = len(param_vars) // 2
    for layer in range(n_layers):
        w, b = param_vars[2 * layer], param_vars[2 * layer + 1]
        h = ad.add(ad.matmul(w, h), b)
        if layer < n_layers - 1:
            h = ad.relu(h)
    return h


def lambda_scale(scene: Scene) -> float:
    """Raw-to-SI scale for the denominator bounds lambda.

    The Eve denominator lives between sigma_E^2 and
    sigma_E^2 + P * N * M * eta / d^2 (the channel magnitude bound), so a
    unit raw softplus maps onto that range.
    """
    eta = path_gain_constant(scene.carrier_freq)
    reach = scene.power_budget * scene.num_waveguides * scene.pas_per_waveguide \
        * eta / scene.height ** 2
    return scene.noise_eve + reach


def tau_scale(scene: Scene, sigma2: float) -> float:
    """Raw-to-SI scale for the S-procedure multipliers tau.

    tau trades the interference covariance against the inverse ellipsoid,
    so its natural size is ||Q|| * ||Phi|| ~ P * sigma^2 * ||J||^2 with the
    Jacobian magnitude bounded by the channel bound times the wavenumber.
    """
    eta = path_gain_constant(scene.carrier_freq)
    chan2 = scene.num_waveguides * scene.pas_per_waveguide * eta / scene.height ** 2
    wavenumber = 2.0 * np.pi * scene.carrier_freq / 299792458.0
    return scene.power_budget * max(sigma2, 1e-6) * chan2 * wavenumber ** 2


@dataclass
class TapeSolution:
    """Decoded optimization variables living on a tape."""

    beams: list[ComplexVar]          # I columns, each (N, 1)
    an_factor: Optional[ComplexVar]  # G, (N, N); None when AN is disabled
    positions: Var                   # (N, M), sorted ascending per row
    tau: Optional[Var]               # (K, I)
    lam: Optional[Var]               # (K, I)
    scene: Scene

    def to_solution(self) -> Solution:
        """Materialize numpy arrays for metric evaluation / reporting."""
        n = self.scene.num_waveguides
        beams = np.stack([b.value.reshape(n) for b in self.beams], axis=1)
        if self.an_factor is not None:
            g = self.an_factor.value
            an_cov = g @ g.conj().T
        else:
            an_cov = np.zeros((n, n), dtype=complex)
        layout = PinchLayout(np.asarray(self.positions.value, dtype=float).copy(),
                             self.scene.waveguide_y, self.scene.height,
                             self.scene.side)
        tau = None if self.tau is None else np.asarray(self.tau.value, dtype=float).copy()
        lam = None if self.lam is None else np.asarray(self.lam.value, dtype=float).copy()
        return Solution(beams, 0.5 * (an_cov + an_cov.conj().T), layout, lam, tau)


# raw-to-amplitude gain for beams and the AN factor: decoded entries are
# _RAW_GAIN * sqrt(P) * raw, so Glorot-scale raw outputs start near the power
# budget and the budget is reachable within the fast phase of the lr schedule
# at any P (the penalty keeps the total from settling above it).
_RAW_GAIN = 8.0
_AUX_GAIN = 8.0
_LAMBDA_SHIFT = 12.0
_TAU_SHIFT = 14.0
# internal conditioning of the LMI penalty: violations are measured in noise
# units and the tabulated U3 is attenuated to a soft steer (the reported
# auxiliaries are re-certified exactly after training, so the penalty only
# has to keep lambda/tau near the sound region)
_U3_COND = 1e-5


def decode_on_tape(raw: Var, scene: Scene, mode: str, an_enabled: bool = True,
                   sigma2: float = 0.05) -> TapeSolution:
    """Split and transform the raw output vector into optimization variables.

    sigma2 only affects the decode scale of the robust multipliers tau.
    """
    n, m = scene.num_waveguides, scene.pas_per_waveguide
    i_users, k_eves = scene.num_bobs, scene.num_eves
    w_scale = _RAW_GAIN * np.sqrt(scene.power_budget)
    cursor = 0
    beams = []
    for i in range(i_users):
        re = ad.reshape(ad.narrow(raw, cursor, n), (n, 1))
        im = ad.reshape(ad.narrow(raw, cursor + n, n), (n, 1))
        beams.append(ComplexVar(ad.mul(re, w_scale), ad.mul(im, w_scale)))
        cursor += 2 * n
    g_re = ad.reshape(ad.narrow(raw, cursor, n * n), (n, n))
    g_im = ad.reshape(ad.narrow(raw, cursor + n * n, n * n), (n, n))
    an_factor = ComplexVar(ad.mul(g_re, w_scale), ad.mul(g_im, w_scale)) \
        if an_enabled else None
    cursor += 2 * n * n
    logits = ad.reshape(ad.narrow(raw, cursor, n * m), (n, m))
    cursor += n * m
    positions = ad.mul(ad.sigmoid(logits), scene.side)
    order = np.argsort(np.asarray(positions.value), axis=-1, kind="stable")
    positions = ad.permute_last(positions, order)
    tau = lam = None
    if mode == "robust":
        tau_logits = ad.reshape(ad.narrow(raw, cursor, k_eves * i_users),
                                (k_eves, i_users))
        lam_logits = ad.reshape(ad.narrow(raw, cursor + k_eves * i_users,
                                          k_eves * i_users), (k_eves, i_users))
        # conditioned logits: the gain lets raw outputs traverse the many
        # decades between the feasible start (lambda ~ noise, tau ~ 0, the
        # LMI strictly holds) and the certified optimum near the true
        # denominator; softplus keeps tau >= 0 and lambda > 0
        tau = ad.mul(ad.softplus(ad.sub(ad.mul(tau_logits, _AUX_GAIN),
                                        _TAU_SHIFT)),
                     tau_scale(scene, sigma2))
        lam = ad.add(ad.mul(ad.softplus(ad.sub(ad.mul(lam_logits, _AUX_GAIN),
                                               _LAMBDA_SHIFT)),
                            lambda_scale(scene)), scene.noise_eve)
    return TapeSolution(beams, an_factor, positions, tau, lam, scene)


def decode_outputs(raw: np.ndarray, scene: Scene, mode: str,
                   an_enabled: bool = True, sigma2: float = 0.05) -> Solution:
    """Decode a raw output vector into a Solution (numpy view)."""
    tape = Tape()
    return decode_on_tape(tape.leaf(np.asarray(raw, dtype=float)), scene, mode,
                          an_enabled, sigma2).to_solution()


# ---------------------------------------------------------------------------
# channel and rate graphs


def _channel_row(positions: Var, scene: Scene, user_xy: np.ndarray) -> ComplexVar:
    """Per-waveguide channel of one receiver as a (N, 1) complex node."""
    lam = free_space_wavelength(scene.carrier_freq)
    lam_g = guided_wavelength(scene.carrier_freq, scene.refractive_index)
    eta = path_gain_constant(scene.carrier_freq)
    m = scene.pas_per_waveguide
    dy2 = (scene.waveguide_y - user_xy[1]) ** 2 + scene.height ** 2   # (N,)
    dx = ad.sub(positions, float(user_xy[0]))
    r = ad.sqrt(ad.add(ad.square(dx), dy2[:, None]))
    guide_dist = ad.absval(positions)  # feed at x = 0
    phase = ad.add(ad.mul(guide_dist, 2.0 * np.pi / lam_g),
                   ad.mul(r, 2.0 * np.pi / lam))
    amp = ad.div(np.sqrt(eta / m), r)
    row = ComplexVar(ad.mul(amp, ad.cos(phase)),
                     ad.neg(ad.mul(amp, ad.sin(phase))))
    return ComplexVar(ad.reshape(ad.tsum(row.re, axis=1), (scene.num_waveguides, 1)),
                      ad.reshape(ad.tsum(row.im, axis=1), (scene.num_waveguides, 1)))


def _channel_and_jacobian(positions: Var, scene: Scene, eve_xy: np.ndarray):
    """Estimated Eve channel (N,1) and its position Jacobian (N,3), on tape."""
    lam = free_space_wavelength(scene.carrier_freq)
    lam_g = guided_wavelength(scene.carrier_freq, scene.refractive_index)
    eta = path_gain_constant(scene.carrier_freq)
    n, m = scene.num_waveguides, scene.pas_per_waveguide
    k0 = 2.0 * np.pi / lam
    dy = scene.waveguide_y - eve_xy[1]                       # (N,)
    dx = ad.sub(positions, float(eve_xy[0]))                 # p_x - pa_x, negated below
    r = ad.sqrt(ad.add(ad.square(dx), (dy ** 2 + scene.height ** 2)[:, None]))
    phase = ad.add(ad.mul(ad.absval(positions), 2.0 * np.pi / lam_g),
                   ad.mul(r, k0))
    amp = np.sqrt(eta / m)
    t = ComplexVar(ad.mul(ad.cos(phase), amp),
                   ad.neg(ad.mul(ad.sin(phase), amp)))       # h1 * sqrt(eta) e^{-j phi}
    inv_r = ad.div(1.0, r)
    h_hat = ComplexVar(ad.reshape(ad.tsum(ad.mul(t.re, inv_r), axis=1), (n, 1)),
                       ad.reshape(ad.tsum(ad.mul(t.im, inv_r), axis=1), (n, 1)))
    inv_r2 = ad.square(inv_r)
    inv_r3 = ad.mul(inv_r2, inv_r)
    cols = []
    # delta = p - pa per axis: x uses the on-tape positions, y/z are constants
    deltas = [ad.neg(dx), None, None]
    const_delta = [None, -dy[:, None] * np.ones((n, m)),
                   -scene.height * np.ones((n, m))]
    for axis in range(3):
        if deltas[axis] is not None:
            delta = deltas[axis]
            u = ad.neg(ad.mul(delta, inv_r3))
            v = ad.neg(ad.mul(ad.mul(delta, inv_r2), k0))
        else:
            delta_c = const_delta[axis]
            u = ad.neg(ad.mul(inv_r3, delta_c))
            v = ad.neg(ad.mul(ad.mul(inv_r2, delta_c), k0))
        col = ComplexVar(ad.sub(ad.mul(t.re, u), ad.mul(t.im, v)),
                         ad.add(ad.mul(t.re, v), ad.mul(t.im, u)))
        cols.append(ComplexVar(ad.reshape(ad.tsum(col.re, axis=1), (n, 1)),
                               ad.reshape(ad.tsum(col.im, axis=1), (n, 1))))
    jac = ComplexVar(ad.concat([c.re for c in cols], axis=1),
                     ad.concat([c.im for c in cols], axis=1))
    return h_hat, jac


def _quadratic_forms(h: ComplexVar, sol: TapeSolution):
    """|h^H w_i|^2 for every beam and h^H R_m h, as scalar nodes."""
    h_herm = ad.chermitian(h)
    signal = []
    for beam in sol.beams:
        prod = ad.cmatmul(h_herm, beam)          # (1, 1)
        signal.append(ad.tsum(ad.cabs2(prod)))
    if sol.an_factor is not None:
        mixed = ad.cmatmul(ad.chermitian(sol.an_factor), h)
        an_term = ad.tsum(ad.cabs2(mixed))
    else:
        an_term = None
    return signal, an_term


def _bob_rates(sol: TapeSolution, scene: Scene):
    """Per-Bob rate nodes plus their signal and interference components."""
    rates, signals, interfs = [], [], []
    for i in range(scene.num_bobs):
        h = _channel_row(sol.positions, scene, scene.bob_positions[i])
        signal, an_term = _quadratic_forms(h, sol)
        interference = [s for m, s in enumerate(signal) if m != i]
        acc: Optional[Var] = None
        for term in interference + ([an_term] if an_term is not None else []):
            acc = term if acc is None else ad.add(acc, term)
        den_var = ad.add(acc, scene.noise_bob) if acc is not None else scene.noise_bob
        sinr = ad.div(signal[i], den_var)
        rates.append(ad.log2(ad.add(sinr, 1.0)))
        signals.append(signal[i])
        interfs.append(acc)
    return rates, signals, interfs


def _hard_min(pairs: list[Var]) -> Var:
    """Minimum of scalar nodes; the gradient flows through the argmin only."""
    values = [float(p.value) for p in pairs]
    return pairs[int(np.argmin(values))]


def _power_penalty(sol: TapeSolution, scene: Scene):
    total: Optional[Var] = None
    for beam in sol.beams:
        term = ad.tsum(ad.cabs2(beam))
        total = term if total is None else ad.add(total, term)
    if sol.an_factor is not None:
        total = ad.add(total, ad.tsum(ad.cabs2(sol.an_factor)))
    return ad.square(ad.relu(ad.sub(total, scene.power_budget))), total


def _spacing_penalty(sol: TapeSolution, scene: Scene, form: str) -> Var:
    n, m = scene.num_waveguides, scene.pas_per_waveguide
    delta = scene.min_spacing
    if form == "within_guide":
        # consecutive PAs on the same waveguide (the physical coupling rule)
        if m < 2:
            return sol.positions.tape.leaf(0.0, "zero")
        diff = np.zeros((m, m - 1))
        for j in range(m - 1):
            diff[j, j] = -1.0
            diff[j + 1, j] = 1.0
        gaps = ad.matmul(sol.positions, sol.positions.tape.leaf(diff, "const"))
        norm = 1.0 / (n * (m - 1))
    elif form == "cross_guide":
        # same PA index on adjacent waveguides (the printed alternative)
        if n < 2:
            return sol.positions.tape.leaf(0.0, "zero")
        diff = np.zeros((n - 1, n))
        for j in range(n - 1):
            diff[j, j] = -1.0
            diff[j, j + 1] = 1.0
        gaps = ad.matmul(sol.positions.tape.leaf(diff, "const"), sol.positions)
        norm = 1.0 / ((n - 1) * m)
    else:
        raise ValueError(f"unknown spacing penalty form: {form}")
    violation = ad.relu(ad.sub(delta, gaps))
    return ad.mul(ad.tsum(ad.square(violation)), norm)


@dataclass
class LossParts:
    """Scalar nodes of the loss decomposition (values are read for traces).

    The per-pair component nodes allow re-evaluating the rates under a
    power rescaling w -> c w, G -> c G without another graph pass: every
    signal/interference/numerator term scales by exactly c^2.
    """

    loss: Var
    objective: Var       # min over pairs, unclamped
    pen_power: Var
    pen_spacing: Var
    pen_lmi: Optional[Var] = None
    total_power: Optional[Var] = None
    bob_signal: Optional[list] = None      # S_i = |h_i^H w_i|^2
    bob_interf: Optional[list] = None      # sum_{m!=i} |h_i^H w_m|^2 + h^H R h
    eve_signal: Optional[list] = None      # perfect: per (k, i) pair
    eve_interf: Optional[list] = None
    eve_numerator: Optional[list] = None   # robust: per (k, i) pair
    eve_lambda: Optional[list] = None
    lmi_violation: Optional[list] = None   # per (k, i) relu(-lambda_min)


def loss_perfect(sol: TapeSolution, scene: Scene, u1: float, u2: float,
                 spacing_form: str = "within_guide") -> LossParts:
    """-SR + U1 * power penalty + U2 * spacing penalty (all on tape).

    The secrecy term is the unclamped minimum over (Bob, Eve) pairs so a
    gradient exists even when the clamped secrecy rate sits at zero; the
    reported metric applies the ramp.
    """
    bob_rates, bob_sig, bob_int = _bob_rates(sol, scene)
    pairs, eve_sig, eve_int = [], [], []
    for k in range(scene.num_eves):
        h = _channel_row(sol.positions, scene, scene.eve_positions[k])
        signal, an_term = _quadratic_forms(h, sol)
        for i in range(scene.num_bobs):
            interference = [s for m, s in enumerate(signal) if m != i]
            acc: Optional[Var] = None
            for term in interference + ([an_term] if an_term is not None else []):
                acc = term if acc is None else ad.add(acc, term)
            den = ad.add(acc, scene.noise_eve) if acc is not None else scene.noise_eve
            eve_rate = ad.log2(ad.add(ad.div(signal[i], den), 1.0))
            pairs.append(ad.sub(bob_rates[i], eve_rate))
            eve_sig.append(signal[i])
            eve_int.append(acc)
    objective = _hard_min(pairs)
    pen1, total = _power_penalty(sol, scene)
    pen2 = _spacing_penalty(sol, scene, spacing_form)
    loss = ad.add(ad.add(ad.neg(objective), ad.mul(pen1, u1)), ad.mul(pen2, u2))
    return LossParts(loss, objective, pen1, pen2, total_power=total,
                     bob_signal=bob_sig, bob_interf=bob_int,
                     eve_signal=eve_sig, eve_interf=eve_int)


def _interference_cov_on_tape(sol: TapeSolution, i: int) -> Optional[ComplexVar]:
    q: Optional[ComplexVar] = None
    if sol.an_factor is not None:
        q = ad.cmatmul(sol.an_factor, ad.chermitian(sol.an_factor))
    for m, beam in enumerate(sol.beams):
        if m == i:
            continue
        outer = ad.cmatmul(beam, ad.chermitian(beam))
        q = outer if q is None else ad.cadd(q, outer)
    return q


def loss_robust(sol: TapeSolution, scene: Scene, sigma_xyz: np.ndarray,
                u1: float, u2: float, u3: float,
                numerator_mode: NumeratorMode = NumeratorMode.CONSERVATIVE,
                spacing_form: str = "within_guide",
                eps_rel: float = 1e-9) -> LossParts:
    """Worst-case objective with power, spacing, and LMI penalties, on tape.

    The eavesdropper side uses the estimated positions: the channel, its
    Jacobian, the uncertainty ellipsoid, and the S-procedure matrices are
    all rebuilt on the tape so gradients reach the PA positions through
    them.  pen_lmi is the mean over (Eve, Bob) pairs of relu(-lambda_min).
    """
    if sol.tau is None or sol.lam is None:
        raise ValueError("robust loss requires decoded tau and lambda auxiliaries")
    sigma_xyz = np.asarray(sigma_xyz, dtype=float)
    tape = sol.positions.tape
    n = scene.num_waveguides
    bob_rates, bob_sig, bob_int = _bob_rates(sol, scene)
    eye = np.eye(n)
    pairs = []
    lmi_terms = []
    numerators, lambdas = [], []
    for k in range(scene.num_eves):
        h_hat, jac = _channel_and_jacobian(sol.positions, scene,
                                           scene.eve_positions[k])
        # Phi = J Sigma J^H with its ridge inverse, all differentiable
        jac_herm = ad.chermitian(jac)
        scaled = ComplexVar(ad.mul(jac.re, sigma_xyz[None, :]),
                            ad.mul(jac.im, sigma_xyz[None, :]))
        phi = ad.cmatmul(scaled, jac_herm)
        trace_phi = ad.tsum(ad.mul(ad.cabs2(jac), sigma_xyz[None, :]))
        floor = 1e-18
        eps = ad.mul(ad.add(ad.relu(ad.sub(ad.div(trace_phi, float(n)), floor)),
                            floor), eps_rel)
        phi_reg = ComplexVar(ad.add(phi.re, ad.mul(eps, eye)), phi.im)
        phi_inv = ad.cinverse(phi_reg)
        h_herm = ad.chermitian(h_hat)
        for i in range(scene.num_bobs):
            tau_ki = ad.tsum(ad.narrow(ad.reshape(sol.tau, (-1,)),
                                       k * scene.num_bobs + i, 1))
            lam_ki = ad.tsum(ad.narrow(ad.reshape(sol.lam, (-1,)),
                                       k * scene.num_bobs + i, 1))
            # worst-case SINR numerator
            inner = ad.cmatmul(h_herm, sol.beams[i])        # (1,1)
            nominal = ad.tsum(ad.cabs2(inner))
            if numerator_mode is NumeratorMode.CONSERVATIVE:
                jw = ad.cmatmul(jac_herm, sol.beams[i])     # (3,1)
                spread2 = ad.tsum(ad.mul(ad.cabs2(jw), sigma_xyz[:, None]))
                reach = ad.add(ad.sqrt(nominal), ad.sqrt(spread2))
                numerator = ad.square(reach)
            else:
                numerator = nominal
            gamma = ad.div(numerator, lam_ki)
            eve_rate = ad.log2(ad.add(gamma, 1.0))
            pairs.append(ad.sub(bob_rates[i], eve_rate))
            numerators.append(numerator)
            lambdas.append(lam_ki)
            # S-procedure certificate matrix
            q = _interference_cov_on_tape(sol, i)
            if q is None:
                zero = tape.leaf(np.zeros((n, n)), "zero")
                q = ComplexVar(zero, tape.leaf(np.zeros((n, n)), "zero"))
            qh = ad.cmatmul(q, h_hat)                        # (N,1)
            corner_val = ad.tsum(ad.cmatmul(h_herm, qh).re)  # real by symmetry
            corner = ad.sub(ad.sub(ad.add(corner_val, scene.noise_eve), lam_ki),
                            tau_ki)
            tau_phi = ComplexVar(ad.mul(phi_inv.re, tau_ki),
                                 ad.mul(phi_inv.im, tau_ki))
            block = ad.cadd(q, tau_phi)
            top_re = ad.concat([block.re, qh.re], axis=1)
            top_im = ad.concat([block.im, qh.im], axis=1)
            qh_herm = ad.chermitian(qh)
            bot_re = ad.concat([qh_herm.re, ad.reshape(corner, (1, 1))], axis=1)
            bot_im = ad.concat([qh_herm.im, tape.leaf(np.zeros((1, 1)), "zero")],
                               axis=1)
            lmi = ComplexVar(ad.concat([top_re, bot_re], axis=0),
                             ad.concat([top_im, bot_im], axis=0))
            lmi_terms.append(ad.relu(ad.neg(ad.min_eig_node(lmi))))
    objective = _hard_min(pairs)
    pen1, total = _power_penalty(sol, scene)
    pen2 = _spacing_penalty(sol, scene, spacing_form)
    acc = lmi_terms[0]
    for term in lmi_terms[1:]:
        acc = ad.add(acc, term)
    pen3 = ad.mul(acc, 1.0 / len(lmi_terms))
    loss = ad.add(ad.add(ad.add(ad.neg(objective), ad.mul(pen1, u1)),
                         ad.mul(pen2, u2)), ad.mul(pen3, u3))
    return LossParts(loss, objective, pen1, pen2, pen3, total_power=total,
                     bob_signal=bob_sig, bob_interf=bob_int,
                     eve_numerator=numerators, eve_lambda=lambdas,
                     lmi_violation=lmi_terms)


# ---------------------------------------------------------------------------
# Adam and the training loop


@dataclass
class AdamState:
    """First/second moment accumulators; t counts completed steps."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params])


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: AdamState, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> list[np.ndarray]:
    """One Adam update (bias-corrected); returns new params, advances state."""
    state.t += 1
    out = []
    for j, (p, g) in enumerate(zip(params, grads)):
        state.m[j] = beta1 * state.m[j] + (1.0 - beta1) * g
        state.v[j] = beta2 * state.v[j] + (1.0 - beta2) * g * g
        m_hat = state.m[j] / (1.0 - beta1 ** state.t)
        v_hat = state.v[j] / (1.0 - beta2 ** state.t)
        out.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
    return out


@dataclass
class TrainResult:
    """Returned solution plus the per-epoch traces (aligned arrays).

    best_epoch is the epoch whose (power-projected) candidate was returned;
    best_sr is that candidate's clamped secrecy value.
    """

    solution: Solution
    sr_trace: np.ndarray
    loss_trace: np.ndarray
    pen1_trace: np.ndarray
    pen2_trace: np.ndarray
    pen3_trace: np.ndarray
    lr_trace: np.ndarray
    best_epoch: Optional[int]
    best_sr: float


def _watt_to_dbm(power_w: float) -> float:
    return 10.0 * np.log10(power_w * 1e3)


def _candidate_sr(parts: LossParts, scene: Scene, scale2: float) -> float:
    """Clamped secrecy value of the epoch's solution rescaled by sqrt(scale2).

    Every signal, interference, and worst-case numerator term is quadratic
    in the transmit amplitudes, so the rescaled rates follow from the cached
    component nodes; in robust mode lambda transforms to
    scale2 * (lambda - sigma_E^2) + sigma_E^2, which preserves the
    certificate matrix up to the overall factor scale2.
    """
    num_bobs = scene.num_bobs
    bob_rates = []
    for i in range(num_bobs):
        sig = scale2 * float(parts.bob_signal[i].value)
        interf = parts.bob_interf[i]
        den = scale2 * float(interf.value) if interf is not None else 0.0
        bob_rates.append(np.log2(1.0 + sig / (den + scene.noise_bob)))
    worst = np.inf
    for idx in range(len(parts.eve_signal or parts.eve_numerator)):
        i = idx % num_bobs
        if parts.eve_signal is not None:
            sig = scale2 * float(parts.eve_signal[idx].value)
            interf = parts.eve_interf[idx]
            den = scale2 * float(interf.value) if interf is not None else 0.0
            eve_rate = np.log2(1.0 + sig / (den + scene.noise_eve))
        else:
            num = scale2 * float(parts.eve_numerator[idx].value)
            lam = scale2 * (float(parts.eve_lambda[idx].value)
                            - scene.noise_eve) + scene.noise_eve
            eve_rate = np.log2(1.0 + num / lam)
        worst = min(worst, bob_rates[i] - eve_rate)
    return max(worst, 0.0)


def _scaled_solution(tape_sol: TapeSolution, scene: Scene, scale2: float) -> Solution:
    sol = tape_sol.to_solution()
    c = np.sqrt(scale2)
    beams = c * sol.beams
    an_cov = scale2 * sol.an_cov
    lam = tau = None
    if sol.aux_lambda is not None:
        lam = scale2 * (sol.aux_lambda - scene.noise_eve) + scene.noise_eve
        tau = scale2 * sol.aux_tau
    return Solution(beams, an_cov, sol.layout, lam, tau)


def train_scenario(scene: Scene, mode: str, cfg: TrainConfig) -> TrainResult:
    """Online-train one network on one scene and return the best solution.

    Every epoch runs forward/decode/loss/backward/Adam with the learning
    rate and penalty schedules.  Each epoch also yields a reporting
    candidate: the decoded solution scaled onto the power budget (scaling
    amplitudes by c <= 1 multiplies the whole certificate matrix by c^2, so
    LMI feasibility survives the projection).  The returned solution is the
    highest-secrecy candidate over all epochs, with robust candidates
    admitted only while their scaled LMI violations sit under a small gate;
    the final epoch is the fallback.  Spacing-penalty traces report whether
    the returned layout honors the anti-coupling gap.

    Robust runs warm up on the perfect-CSI loss before switching to the
    worst-case objective (the LMI penalty weight ramps in over the epochs
    that follow); starting from an already-secret solution keeps the
    denominator bounds trainable instead of collapsing the beams.
    """
    if mode not in ("perfect", "robust"):
        raise ValueError(f"unknown mode: {mode}")
    net_cfg = NetworkConfig.for_scene(scene, mode, cfg.hidden, cfg.seed)
    params = init_params(net_cfg)
    coords = scene_coords(scene)
    sigma_xyz = np.array([cfg.sigma2, cfg.sigma2, 0.0])
    power_dbm = _watt_to_dbm(scene.power_budget)
    state = AdamState.for_params(params)
    # LMI violations are penalized in noise units so the tabulated U3 acts at
    # the scale of the secrecy objective regardless of the SI noise power.
    u3_unit = _U3_COND / scene.noise_eve
    warmup = min(cfg.warmup_epochs, cfg.epochs // 3) if mode == "robust" else 0

    traces = {key: np.zeros(cfg.epochs) for key in
              ("sr", "loss", "pen1", "pen2", "pen3", "lr")}
    best_cert: Optional[tuple] = None    # (sr, epoch, scale2, solution)
    last: Optional[tuple] = None

    if cfg.epochs == 0:
        tape = Tape()
        raw = _forward_on_tape(tape, [tape.leaf(p) for p in params], coords)
        sol = decode_on_tape(raw, scene, mode, cfg.an_enabled,
                             cfg.sigma2).to_solution()
        empty = np.zeros(0)
        return TrainResult(sol, empty, empty, empty, empty, empty, empty, None,
                           -np.inf)

    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate(epoch)
        u1, u2, u3 = penalty_schedule(epoch, power_dbm, cfg.sigma2)
        tape = Tape()
        param_vars = [tape.leaf(p) for p in params]
        raw = _forward_on_tape(tape, param_vars, coords)
        tape_sol = decode_on_tape(raw, scene, mode, cfg.an_enabled, cfg.sigma2)
        robust_active = mode == "robust" and epoch >= warmup
        if robust_active:
            ramp = min(1.0, (epoch - warmup + 1) / max(cfg.u3_ramp_epochs, 1))
            parts = loss_robust(tape_sol, scene, sigma_xyz, u1, u2,
                                u3 * u3_unit * ramp, cfg.numerator_mode,
                                cfg.spacing_penalty, cfg.eps_rel)
            pen3_val = float(parts.pen_lmi.value)
        else:
            parts = loss_perfect(tape_sol, scene, u1, u2, cfg.spacing_penalty)
            pen3_val = 0.0
        sr = max(float(parts.objective.value), 0.0)
        pen1_val = float(parts.pen_power.value)
        pen2_val = float(parts.pen_spacing.value)
        traces["sr"][epoch] = sr
        traces["loss"][epoch] = float(parts.loss.value)
        traces["pen1"][epoch] = pen1_val
        traces["pen2"][epoch] = pen2_val
        traces["pen3"][epoch] = pen3_val
        traces["lr"][epoch] = lr

        # reporting candidate: project onto the power budget and re-score
        total = float(parts.total_power.value)
        scale2 = min(1.0, scene.power_budget / total) if total > 0 else 1.0
        if mode == "perfect" or robust_active:
            cand_sr = _candidate_sr(parts, scene, scale2)
            entry = (cand_sr, epoch, scale2)
            if best_cert is None or cand_sr > best_cert[0]:
                best_cert = entry + (_scaled_solution(tape_sol, scene, scale2),)
            if epoch == cfg.epochs - 1:
                last = entry + (_scaled_solution(tape_sol, scene, scale2),)

        grads = tape.backward(parts.loss)
        grad_list = [grads[v] for v in param_vars]
        if cfg.grad_clip is not None:
            norm = np.sqrt(sum(float(np.sum(np.square(g))) for g in grad_list))
            if norm > cfg.grad_clip:
                grad_list = [g * (cfg.grad_clip / norm) for g in grad_list]
        params = adam_step(params, grad_list, state, lr)

    chosen = best_cert or last
    best_sr, best_epoch, _, solution = chosen
    if mode == "robust":
        # replace the learned auxiliaries with exactly certified ones and
        # report the sound worst-case secrecy value of the chosen design
        unc = UncertaintySpec.build(scene, solution.layout, sigma_xyz,
                                    cfg.eps_rel)
        hats = channel_matrices(scene, solution.layout)
        lam, tau = certify_solution(scene, solution.beams, solution.an_cov,
                                    hats.h_eves, unc)
        solution = Solution(solution.beams, solution.an_cov, solution.layout,
                            lam, tau)
        best_sr = robust_secrecy_rate(hats, solution, scene, unc,
                                      cfg.numerator_mode, clamp=True)
    return TrainResult(solution, traces["sr"], traces["loss"],
                       traces["pen1"], traces["pen2"], traces["pen3"],
                       traces["lr"], best_epoch, float(best_sr))
