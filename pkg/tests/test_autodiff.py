"""Autodiff engine tests: per-op finite differences, structure, determinism."""

import numpy as np
import pytest

from pinchsec import autodiff as ad
from pinchsec.autodiff import ComplexVar, DomainError, Tape


def fd_gradient(fn, x, h=1e-6):
    """Central-difference gradient of a scalar function of one array."""
    x = np.array(x, dtype=float)
    grad = np.zeros_like(x)
    flat, gflat = x.ravel(), grad.ravel()
    for j in range(flat.size):
        orig = flat[j]
        flat[j] = orig + h
        up = fn(x)
        flat[j] = orig - h
        down = fn(x)
        flat[j] = orig
        gflat[j] = (up - down) / (2.0 * h)
    return grad


def check_scalar_graph(build, x0, h=1e-6, rel=1e-6):
    def value(x):
        tape = Tape()
        return float(build(tape, tape.leaf(np.array(x))).value)

    tape = Tape()
    leaf = tape.leaf(np.array(x0, dtype=float))
    out = build(tape, leaf)
    grads = tape.backward(out)
    analytic = np.asarray(grads[leaf], dtype=float)
    numeric = fd_gradient(value, x0, h)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    assert np.max(np.abs(analytic - numeric) / scale) < rel


class TestElementwise:
    def test_relu_values_and_kink(self):
        tape = Tape()
        x = tape.leaf(np.array([-2.0, 0.0, 3.0]))
        y = ad.relu(x)
        np.testing.assert_allclose(y.value, [0.0, 0.0, 3.0])
        grads = tape.backward(ad.tsum(y))
        np.testing.assert_allclose(grads[x], [0.0, 0.0, 1.0])

    def test_sigmoid_midpoint(self):
        tape = Tape()
        assert ad.sigmoid(tape.leaf(0.0)).value == pytest.approx(0.5)

    def test_softplus_at_zero(self):
        tape = Tape()
        # independent evaluation of ln(1 + e^0)
        assert ad.softplus(tape.leaf(0.0)).value == pytest.approx(np.log(2.0),
                                                                  rel=1e-12)

    def test_softplus_overflow_safe(self):
        tape = Tape()
        out = ad.softplus(tape.leaf(np.array([800.0, -800.0])))
        assert np.isfinite(out.value).all()
        assert out.value[0] == pytest.approx(800.0)

    @pytest.mark.parametrize("name,fn,lo,hi", [
        ("exp", ad.exp, -1.0, 1.0),
        ("log", ad.log, 0.2, 3.0),
        ("log2", ad.log2, 0.2, 3.0),
        ("sqrt", ad.sqrt, 0.3, 4.0),
        ("sin", ad.sin, -2.0, 2.0),
        ("cos", ad.cos, -2.0, 2.0),
        ("sigmoid", ad.sigmoid, -2.0, 2.0),
        ("softplus", ad.softplus, -2.0, 2.0),
        ("square", ad.square, -2.0, 2.0),
        ("abs", ad.absval, 0.5, 2.0),
        ("relu", ad.relu, 0.2, 2.0),
        ("neg", ad.neg, -2.0, 2.0),
    ])
    def test_unary_gradients(self, name, fn, lo, hi):
        rng = np.random.default_rng(hash(name) % 2 ** 31)
        x0 = rng.uniform(lo, hi, size=(2, 3))
        check_scalar_graph(lambda t, a: ad.tsum(fn(a)), x0)

    def test_binary_gradients_and_broadcast(self):
        rng = np.random.default_rng(0)
        y = rng.uniform(0.5, 1.5, size=(2, 3))
        col = rng.uniform(0.5, 1.5, size=(2, 1))
        check_scalar_graph(lambda t, a: ad.tsum(ad.mul(a, t.leaf(y))),
                           rng.uniform(-1, 1, (2, 3)))
        check_scalar_graph(lambda t, a: ad.tsum(ad.div(a, t.leaf(y))),
                           rng.uniform(-1, 1, (2, 3)))
        check_scalar_graph(lambda t, a: ad.tsum(ad.add(a, t.leaf(col))),
                           rng.uniform(-1, 1, (2, 3)))
        # broadcast direction: column parameter against a full matrix
        check_scalar_graph(lambda t, a: ad.tsum(ad.mul(t.leaf(y), a)),
                           col)

    def test_domain_errors(self):
        tape = Tape()
        with pytest.raises(DomainError):
            ad.log(tape.leaf(np.array([1.0, -1.0])))
        with pytest.raises(DomainError):
            ad.log2(tape.leaf(0.0))
        with pytest.raises(DomainError):
            ad.sqrt(tape.leaf(-1.0))
        with pytest.raises(DomainError):
            ad.div(tape.leaf(1.0), tape.leaf(0.0))


class TestStructural:
    def test_matmul_oracle(self):
        rng = np.random.default_rng(1)
        b = rng.normal(size=(3, 2))
        check_scalar_graph(
            lambda t, a: ad.tsum(ad.square(ad.matmul(a, t.leaf(b)))),
            rng.normal(size=(4, 3)))

    def test_concat_narrow_roundtrip(self):
        tape = Tape()
        x = tape.leaf(np.arange(6.0))
        first = ad.narrow(x, 0, 3)
        second = ad.narrow(x, 3, 3)
        back = ad.concat([first, second], axis=0)
        np.testing.assert_array_equal(back.value, x.value)
        grads = tape.backward(ad.tsum(ad.square(back)))
        np.testing.assert_allclose(grads[x], 2.0 * x.value)

    def test_permute_last_is_permutation(self):
        tape = Tape()
        vals = np.array([[3.0, 1.0, 2.0]])
        x = tape.leaf(vals)
        idx = np.argsort(vals, axis=-1)
        y = ad.permute_last(x, idx)
        np.testing.assert_array_equal(y.value, [[1.0, 2.0, 3.0]])
        grads = tape.backward(ad.tsum(ad.mul(y, np.array([[1.0, 10.0, 100.0]]))))
        np.testing.assert_array_equal(grads[x], [[100.0, 1.0, 10.0]])


class TestComplexOps:
    def test_identity_matmul(self):
        tape = Tape()
        eye = ad.complex_leaf(tape, np.eye(3, dtype=complex))
        rng = np.random.default_rng(2)
        b = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        bv = ad.complex_leaf(tape, b)
        out = ad.cmatmul(eye, bv)
        np.testing.assert_allclose(out.value, b, atol=1e-15)

    def test_conjugate_pair_product(self):
        tape = Tape()
        a = ad.complex_leaf(tape, np.array(1.0 + 1.0j))
        b = ad.complex_leaf(tape, np.array(1.0 - 1.0j))
        out = ad.cmul(a, b)
        assert complex(out.value) == pytest.approx(2.0 + 0.0j)

    def test_matmul_termwise_oracle(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        b = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        tape = Tape()
        out = ad.cmatmul(ad.complex_leaf(tape, a), ad.complex_leaf(tape, b))
        expected = np.zeros((3, 3), dtype=complex)
        for i in range(3):
            for j in range(3):
                for k in range(3):
                    expected[i, j] += a[i, k] * b[k, j]
        assert np.max(np.abs(out.value - expected)) <= 1e-12 * np.max(np.abs(expected))

    def test_cabs2_and_hermitian(self):
        tape = Tape()
        z = ad.complex_leaf(tape, np.array([[1.0 + 2.0j, -3.0j]]))
        np.testing.assert_allclose(ad.cabs2(z).value, [[5.0, 9.0]])
        zh = ad.chermitian(z)
        np.testing.assert_allclose(zh.value, np.array([[1.0 - 2.0j], [3.0j]]))


class TestMinEigNode:
    def test_diagonal_gradient(self):
        tape = Tape()
        m = ad.complex_leaf(tape, np.diag([1.0, 3.0]).astype(complex))
        lam = ad.min_eig_node(m)
        assert float(lam.value) == pytest.approx(1.0)
        grads = tape.backward(lam)
        np.testing.assert_allclose(grads[m.re], [[1.0, 0.0], [0.0, 0.0]],
                                   atol=1e-9)

    def test_degenerate_projector_trace(self):
        tape = Tape()
        m = ad.complex_leaf(tape, np.eye(3, dtype=complex))
        lam = ad.min_eig_node(m)
        assert float(lam.value) == pytest.approx(1.0)
        grads = tape.backward(lam)
        assert np.trace(grads[m.re]) == pytest.approx(1.0, abs=1e-9)

    def test_finite_difference_on_embedding(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        herm = a + a.conj().T

        def through_re(t, x):
            return ad.min_eig_node(ComplexVar(x, t.leaf(herm.imag)))

        def through_im(t, x):
            return ad.min_eig_node(ComplexVar(t.leaf(herm.real), x))

        check_scalar_graph(through_re, herm.real, h=1e-5, rel=1e-4)
        check_scalar_graph(through_im, herm.imag, h=1e-5, rel=1e-4)


class TestBackwardSemantics:
    def test_square_at_three(self):
        tape = Tape()
        x = tape.leaf(3.0)
        grads = tape.backward(ad.mul(x, x))
        assert grads[x] == pytest.approx(6.0)

    def test_inactive_ramp(self):
        tape = Tape()
        x = tape.leaf(1.0)
        grads = tape.backward(ad.relu(ad.neg(x)))
        assert grads[x] == 0.0

    def test_second_backward_rejected(self):
        tape = Tape()
        x = tape.leaf(2.0)
        loss = ad.square(x)
        tape.backward(loss)
        with pytest.raises(RuntimeError):
            tape.backward(loss)

    def test_non_scalar_loss_rejected(self):
        tape = Tape()
        x = tape.leaf(np.ones(3))
        with pytest.raises(ValueError):
            tape.backward(ad.square(x))

    def test_linearity_of_backward(self):
        rng = np.random.default_rng(5)
        x0 = rng.normal(size=4)

        def grad_of(a, b):
            tape = Tape()
            x = tape.leaf(x0)
            f = ad.tsum(ad.square(x))
            g = ad.tsum(ad.mul(ad.sin(x), 2.0))
            loss = ad.add(ad.mul(f, a), ad.mul(g, b))
            return np.asarray(tape.backward(loss)[x])

        ga = grad_of(1.0, 0.0)
        gb = grad_of(0.0, 1.0)
        combined = grad_of(0.7, -1.3)
        np.testing.assert_allclose(combined, 0.7 * ga - 1.3 * gb, rtol=1e-12)

    def test_bitwise_determinism(self):
        def run():
            tape = Tape()
            rng = np.random.default_rng(6)
            x = tape.leaf(rng.normal(size=(3, 3)))
            y = ad.tsum(ad.exp(ad.mul(ad.sin(x), 0.3)))
            return np.asarray(tape.backward(y)[x])

        one, two = run(), run()
        assert np.array_equal(one, two)

    def test_unused_subgraph_gets_zero(self):
        tape = Tape()
        x = tape.leaf(1.0)
        y = tape.leaf(2.0)
        _ = ad.square(y)  # dead branch
        grads = tape.backward(ad.square(x))
        assert grads[y] == 0.0
