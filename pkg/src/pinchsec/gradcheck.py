"""Finite-difference verification of the autodiff engine.

Compares backward gradients against central differences for every
operation kind and for the full perfect/robust loss graphs on a small
network.  The check scene uses order-one radio constants (eta = 1) so the
difference oracle is far from the float64 cancellation floor; the math
being verified is scale-free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import optimizer as opt
from .autodiff import Tape
from .channel import C_LIGHT, Scene
from .metrics import NumeratorMode

REL_TOL = 1e-4
ABS_TOL = 1e-8


@dataclass
class CheckResult:
    name: str
    max_err: float
    passed: bool


def _max_rel_err(analytic, numeric) -> float:
    analytic = np.asarray(analytic, dtype=float).ravel()
    numeric = np.asarray(numeric, dtype=float).ravel()
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), ABS_TOL)
    return float(np.max(np.abs(analytic - numeric) / scale))


def _fd_scalar(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of a scalar function of one array."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        up = fn(x)
        flat[j] = orig - h
        down = fn(x)
        flat[j] = orig
        gflat[j] = (up - down) / (2.0 * h)
    return grad


def _check_op(name: str, build, x0: np.ndarray, h: float = 1e-6) -> CheckResult:
    """build(tape, leaf) must return a scalar Var."""
    def value(x):
        tape = Tape()
        return float(build(tape, tape.leaf(x)).value)

    tape = Tape()
    leaf = tape.leaf(np.array(x0, dtype=float))
    out = build(tape, leaf)
    grads = tape.backward(out)
    err = _max_rel_err(grads[leaf], _fd_scalar(value, np.array(x0, dtype=float), h))
    return CheckResult(name, err, err < REL_TOL)


def elementwise_checks(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.3, 2.0, size=(3, 4))
    y = rng.uniform(-1.5, 1.5, size=(3, 4))
    checks = [
        ("add", lambda t, a: ad.tsum(ad.add(a, t.leaf(y)))) ,
        ("sub", lambda t, a: ad.tsum(ad.sub(a, t.leaf(y)))),
        ("mul", lambda t, a: ad.tsum(ad.mul(a, t.leaf(y)))),
        ("div", lambda t, a: ad.tsum(ad.div(t.leaf(y), a))),
        ("neg", lambda t, a: ad.tsum(ad.neg(a))),
        ("exp", lambda t, a: ad.tsum(ad.exp(ad.mul(a, 0.5)))),
        ("log", lambda t, a: ad.tsum(ad.log(a))),
        ("log2", lambda t, a: ad.tsum(ad.log2(a))),
        ("sqrt", lambda t, a: ad.tsum(ad.sqrt(a))),
        ("sin", lambda t, a: ad.tsum(ad.sin(a))),
        ("cos", lambda t, a: ad.tsum(ad.cos(a))),
        ("relu", lambda t, a: ad.tsum(ad.relu(ad.sub(a, 1.0)))),
        ("abs", lambda t, a: ad.tsum(ad.absval(ad.sub(a, 1.0)))),
        ("square", lambda t, a: ad.tsum(ad.square(a))),
        ("sigmoid", lambda t, a: ad.tsum(ad.sigmoid(ad.mul(a, 2.0)))),
        ("softplus", lambda t, a: ad.tsum(ad.softplus(ad.sub(a, 1.0)))),
    ]
    return [_check_op(name, fn, x) for name, fn in checks]


def structural_checks(seed: int = 1) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 3))
    b = rng.normal(size=(3, 3))
    v = rng.normal(size=3)
    results = []
    results.append(_check_op(
        "matmul", lambda t, x: ad.tsum(ad.square(ad.matmul(x, t.leaf(b)))), a))
    results.append(_check_op(
        "matvec", lambda t, x: ad.tsum(ad.square(ad.matmul(x, t.leaf(v)))), a))
    results.append(_check_op(
        "transpose", lambda t, x: ad.tsum(ad.mul(ad.transpose(x), t.leaf(b))), a))
    results.append(_check_op(
        "reshape_narrow",
        lambda t, x: ad.tsum(ad.square(ad.narrow(ad.reshape(x, (9,)), 2, 5))), a))
    results.append(_check_op(
        "concat",
        lambda t, x: ad.tsum(ad.square(ad.concat([x, ad.mul(x, 2.0)], axis=1))), a))
    idx = np.argsort(rng.normal(size=(3, 3)), axis=-1)
    results.append(_check_op(
        "permute_last",
        lambda t, x: ad.tsum(ad.mul(ad.permute_last(x, idx), t.leaf(b))), a))

    # complex product against a constant, |.|^2 readout
    c_re = rng.normal(size=(3, 3))
    c_im = rng.normal(size=(3, 3))

    def cmul_chain(t, x):
        z = ad.ComplexVar(x, t.leaf(c_im))
        w = ad.ComplexVar(t.leaf(c_re), t.leaf(b))
        return ad.tsum(ad.cabs2(ad.cmatmul(z, w)))

    results.append(_check_op("complex_matmul", cmul_chain, a))

    herm = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    herm = herm + herm.conj().T

    def mineig_re(t, x):
        z = ad.ComplexVar(x, t.leaf(herm.imag))
        return ad.min_eig_node(z)

    def mineig_im(t, x):
        z = ad.ComplexVar(t.leaf(herm.real), x)
        return ad.min_eig_node(z)

    results.append(_check_op("min_eig/re", mineig_re, herm.real, h=1e-5))
    results.append(_check_op("min_eig/im", mineig_im, herm.imag, h=1e-5))

    spd = rng.normal(size=(3, 3))
    spd_c = spd @ spd.T + 3.0 * np.eye(3)
    im0 = rng.normal(size=(3, 3)) * 0.1
    im_h = im0 - im0.T  # keep the matrix Hermitian-ish and well conditioned

    def cinv_chain(t, x):
        z = ad.ComplexVar(x, t.leaf(im_h))
        inv = ad.cinverse(z)
        return ad.add(ad.tsum(ad.square(inv.re)), ad.tsum(ad.square(inv.im)))

    results.append(_check_op("complex_inverse", cinv_chain, spd_c, h=1e-6))
    return results


def unit_scale_scene() -> Scene:
    """Order-one check scene: carrier chosen so the path-gain constant is 1."""
    return Scene(side=2.0, height=1.0, num_waveguides=2, pas_per_waveguide=3,
                 bob_positions=[[0.4, 1.1, 0.0]], eve_positions=[[1.6, 0.3, 0.0]],
                 noise_bob=0.5, noise_eve=0.7,
                 carrier_freq=C_LIGHT / (4.0 * np.pi), refractive_index=1.3,
                 power_budget=2.0, min_spacing=0.4)


def full_loss_checks(seed: int = 3, samples_per_tensor: int = 30) -> list[CheckResult]:
    """End-to-end gradients of the perfect and robust losses on a small net."""
    scene = unit_scale_scene()
    sigma_xyz = np.array([0.02, 0.03, 0.0])
    results = []
    for mode, numer in (("perfect", None),
                        ("robust", NumeratorMode.CONSERVATIVE),
                        ("robust", NumeratorMode.NOMINAL)):
        cfg = opt.NetworkConfig.for_scene(scene, mode, hidden=(6, 5), seed=seed)
        params = opt.init_params(cfg)

        def loss_of(ps):
            tape = Tape()
            pv = [tape.leaf(p) for p in ps]
            raw = opt._forward_on_tape(tape, pv, opt.scene_coords(scene))
            tsol = opt.decode_on_tape(raw, scene, mode, True, 0.02)
            if mode == "perfect":
                parts = opt.loss_perfect(tsol, scene, 3.0, 5.0)
            else:
                parts = opt.loss_robust(tsol, scene, sigma_xyz, 3.0, 5.0, 0.005,
                                        numer)
            return tape, pv, parts.loss

        tape, pv, loss = loss_of(params)
        grads = tape.backward(loss)
        rng = np.random.default_rng(seed)
        worst = 0.0
        h = 1e-5
        for j, p in enumerate(params):
            flat = p.ravel()
            count = min(samples_per_tensor, flat.size)
            for idx in rng.choice(flat.size, size=count, replace=False):
                orig = flat[idx]
                flat[idx] = orig + h
                up = float(loss_of(params)[2].value)
                flat[idx] = orig - h
                down = float(loss_of(params)[2].value)
                flat[idx] = orig
                fd = (up - down) / (2.0 * h)
                an = np.asarray(grads[pv[j]]).ravel()[idx]
                worst = max(worst, abs(fd - an) / max(abs(fd), abs(an), ABS_TOL))
        label = mode if numer is None else f"{mode}/{numer.value}"
        results.append(CheckResult(f"loss[{label}]", worst, worst < REL_TOL))
    return results


def run_all(samples_per_tensor: int = 30) -> list[CheckResult]:
    return (elementwise_checks() + structural_checks()
            + full_loss_checks(samples_per_tensor=samples_per_tensor))
