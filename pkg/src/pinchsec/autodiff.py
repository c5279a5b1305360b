"""Reverse-mode automatic differentiation over real numpy values.

A Tape records an append-only list of nodes in topological order; each node
caches its forward value and the vector-Jacobian callbacks into its parents.
One backward pass from a scalar loss fills a gradient buffer aligned with
the node list.

Complex quantities are carried as (real, imaginary) pairs of real nodes
(ComplexVar); every complex operation decomposes into real arithmetic, so
gradients are plain real-pair derivatives and finite differences apply
directly.  Two matrix primitives close the set: a minimum-eigenvalue node
(gradient v v^H through the unit eigenvector) and a complex matrix inverse.

A tape must be built and differentiated on a single thread; distinct tapes
are fully independent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import numerics


class DomainError(ValueError):
    """Operation evaluated outside its differentiable domain."""


class Node:
    __slots__ = ("idx", "kind", "value", "pulls")

    def __init__(self, idx: int, kind: str, value, pulls):
        self.idx = idx
        self.kind = kind
        self.value = value
        # pulls: sequence of (parent index, vjp callable) pairs
        self.pulls = pulls


class Tape:
    """Append-only operation record plus the backward driver."""

    def __init__(self):
        self.nodes: list[Node] = []
        self._backward_done = False

    def _emit(self, kind: str, value, pulls) -> "Var":
        node = Node(len(self.nodes), kind, value, tuple(pulls))
        self.nodes.append(node)
        return Var(self, node)

    def leaf(self, value, kind: str = "leaf") -> "Var":
        """Register an input (parameter or constant) tensor."""
        return self._emit(kind, _as_value(value), ())

    def backward(self, loss: "Var") -> "GradMap":
        """Reverse accumulation from a scalar loss over all ancestors.

        May be called once per tape; the gradient buffer is returned as a
        GradMap indexable by Var.
        """
        if loss.tape is not self:
            raise ValueError("loss belongs to a different tape")
        if np.shape(loss.value) != ():
            raise ValueError("backward requires a scalar loss node")
        if self._backward_done:
            raise RuntimeError("backward already ran on this tape; build a new tape")
        self._backward_done = True
        grads: list = [None] * len(self.nodes)
        grads[loss.idx] = 1.0
        for node in reversed(self.nodes[: loss.idx + 1]):
            g = grads[node.idx]
            if g is None:
                continue
            for parent_idx, vjp in node.pulls:
                contribution = vjp(g)
                if grads[parent_idx] is None:
                    grads[parent_idx] = contribution
                else:
                    grads[parent_idx] = grads[parent_idx] + contribution
        return GradMap(grads)


class GradMap:
    """Gradient buffer aligned with the tape's node list."""

    def __init__(self, grads: list):
        self._grads = grads

    def __getitem__(self, var: "Var"):
        g = self._grads[var.idx]
        if g is None:
            return np.zeros(np.shape(var.value))
        return np.asarray(g) if np.shape(var.value) != () else float(g)


def _as_value(x):
    arr = np.asarray(x, dtype=float)
    return float(arr) if arr.shape == () else arr


def _unbroadcast(g, shape):
    """Sum a broadcasted gradient back to the parent's shape."""
    g = np.asarray(g, dtype=float)
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return float(g) if shape == () else g.reshape(shape)


class Var:
    """Handle to one real tensor node on a tape."""

    __slots__ = ("tape", "node")

    def __init__(self, tape: Tape, node: Node):
        self.tape = tape
        self.node = node

    @property
    def value(self):
        return self.node.value

    @property
    def idx(self) -> int:
        return self.node.idx

    @property
    def shape(self):
        return np.shape(self.node.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _binary(a, b, kind, fwd, vjp_a: Callable, vjp_b: Callable) -> Var:
    """Emit a binary op; either operand may be a plain constant."""
    a_var = isinstance(a, Var)
    b_var = isinstance(b, Var)
    if not (a_var or b_var):
        raise TypeError("at least one operand must be a Var")
    tape = a.tape if a_var else b.tape
    av = a.value if a_var else _as_value(a)
    bv = b.value if b_var else _as_value(b)
    value = fwd(av, bv)
    pulls = []
    if a_var:
        ashape = np.shape(av)
        pulls.append((a.idx, lambda g, av=av, bv=bv: _unbroadcast(vjp_a(g, av, bv), ashape)))
    if b_var:
        bshape = np.shape(bv)
        pulls.append((b.idx, lambda g, av=av, bv=bv: _unbroadcast(vjp_b(g, av, bv), bshape)))
    return tape._emit(kind, value, pulls)


def add(a, b) -> Var:
    return _binary(a, b, "add", lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b) -> Var:
    return _binary(a, b, "sub", lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -np.asarray(g) if np.shape(g) else -g)


def mul(a, b) -> Var:
    return _binary(a, b, "mul", lambda x, y: x * y,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def div(a, b) -> Var:
    def fwd(x, y):
        if np.any(np.asarray(y) == 0.0):
            raise DomainError("division by zero")
        return x / y

    return _binary(a, b, "div", fwd,
                   lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y))


def _unary(a: Var, kind: str, value, vjp: Callable) -> Var:
    return a.tape._emit(kind, value, [(a.idx, vjp)])


def neg(a: Var) -> Var:
    return _unary(a, "neg", -np.asarray(a.value) if np.shape(a.value) else -a.value,
                  lambda g: -np.asarray(g) if np.shape(g) else -g)


def exp(a: Var) -> Var:
    out = np.exp(a.value)
    return _unary(a, "exp", _as_value(out), lambda g: g * out)


def log(a: Var) -> Var:
    if np.any(np.asarray(a.value) <= 0.0):
        raise DomainError("log of a non-positive value")
    v = a.value
    return _unary(a, "log", _as_value(np.log(v)), lambda g: g / v)


_LN2 = float(np.log(2.0))


def log2(a: Var) -> Var:
    if np.any(np.asarray(a.value) <= 0.0):
        raise DomainError("log2 of a non-positive value")
    v = a.value
    return _unary(a, "log2", _as_value(np.log2(v)), lambda g: g / (v * _LN2))


def sqrt(a: Var) -> Var:
    if np.any(np.asarray(a.value) < 0.0):
        raise DomainError("sqrt of a negative value")
    out = np.sqrt(np.asarray(a.value, dtype=float))
    # subgradient 0 at the origin (keeps norms like sqrt(|z|^2) finite)
    safe = np.where(out > 0.0, out, np.inf)
    return _unary(a, "sqrt", _as_value(out),
                  lambda g: _as_value(np.asarray(g) * 0.5 / safe))


def sin(a: Var) -> Var:
    v = a.value
    return _unary(a, "sin", _as_value(np.sin(v)), lambda g: g * np.cos(v))


def cos(a: Var) -> Var:
    v = a.value
    return _unary(a, "cos", _as_value(np.cos(v)), lambda g: -g * np.sin(v))


def relu(a: Var) -> Var:
    v = np.asarray(a.value)
    mask = (v > 0.0).astype(float)  # derivative at the kink defined as 0
    return _unary(a, "relu", _as_value(v * mask), lambda g: g * mask)


def absval(a: Var) -> Var:
    v = a.value
    sign = np.sign(v)  # 0 at the kink: valid subgradient
    return _unary(a, "abs", _as_value(np.abs(v)), lambda g: g * sign)


def square(a: Var) -> Var:
    v = a.value
    return _unary(a, "square", _as_value(np.asarray(v) ** 2 if np.shape(v) else v * v),
                  lambda g: g * 2.0 * v)


def _sigmoid_value(v):
    flat = np.atleast_1d(np.asarray(v, dtype=float))
    out = np.empty_like(flat)
    pos = flat >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-flat[pos]))
    ez = np.exp(flat[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out.reshape(np.shape(v)) if np.shape(v) else float(out[0])


def sigmoid(a: Var) -> Var:
    out = _sigmoid_value(a.value)
    return _unary(a, "sigmoid", out, lambda g: g * out * (1.0 - np.asarray(out)))


def softplus(a: Var) -> Var:
    v = np.asarray(a.value, dtype=float)
    out = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))  # overflow-safe
    sig = _sigmoid_value(a.value)
    return _unary(a, "softplus", _as_value(out), lambda g: g * sig)


def matmul(a: Var, b: Var) -> Var:
    av, bv = a.value, b.value
    if np.ndim(av) == 2 and np.ndim(bv) == 2:
        value = av @ bv
        pulls = [(a.idx, lambda g: np.asarray(g) @ bv.T),
                 (b.idx, lambda g: av.T @ np.asarray(g))]
    elif np.ndim(av) == 2 and np.ndim(bv) == 1:
        value = av @ bv
        pulls = [(a.idx, lambda g: np.outer(np.asarray(g), bv)),
                 (b.idx, lambda g: av.T @ np.asarray(g))]
    else:
        raise ValueError("matmul supports (2-D @ 2-D) and (2-D @ 1-D) only")
    return a.tape._emit("matmul", value, pulls)


def transpose(a: Var) -> Var:
    v = a.value
    return _unary(a, "transpose", np.asarray(v).T, lambda g: np.asarray(g).T)


def reshape(a: Var, shape) -> Var:
    old = np.shape(a.value)
    return _unary(a, "reshape", np.reshape(a.value, shape),
                  lambda g: np.reshape(np.asarray(g), old))


def narrow(a: Var, start: int, length: int) -> Var:
    """Contiguous slice of a 1-D tensor; backward scatters into zeros."""
    v = np.asarray(a.value)
    if v.ndim != 1:
        raise ValueError("narrow expects a 1-D tensor")
    value = v[start:start + length].copy()

    def vjp(g):
        out = np.zeros_like(v)
        out[start:start + length] = g
        return out

    return _unary(a, "narrow", value, vjp)


def concat(parts: Sequence[Var], axis: int = 0) -> Var:
    values = [np.asarray(p.value) for p in parts]
    value = np.concatenate(values, axis=axis)
    sizes = [v.shape[axis] for v in values]
    offsets = np.cumsum([0] + sizes)
    pulls = []
    for part, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
        slicer = [slice(None)] * value.ndim
        slicer[axis] = slice(int(lo), int(hi))
        pulls.append((part.idx, lambda g, s=tuple(slicer): np.asarray(g)[s]))
    return parts[0].tape._emit("concat", value, pulls)


def permute_last(a: Var, index: np.ndarray) -> Var:
    """Gather along the last axis with a fixed permutation (e.g. argsort)."""
    v = np.asarray(a.value)
    value = np.take_along_axis(v, index, axis=-1)

    def vjp(g):
        out = np.zeros_like(v)
        np.put_along_axis(out, index, np.asarray(g), axis=-1)
        return out

    return _unary(a, "permute_last", value, vjp)


def tsum(a: Var, axis=None) -> Var:
    """Sum over an axis (or all elements)."""
    v = np.asarray(a.value)
    value = v.sum(axis=axis)

    def vjp(g):
        if axis is None:
            return np.broadcast_to(np.asarray(g), v.shape).astype(float)
        g_exp = np.expand_dims(np.asarray(g), axis)
        return np.broadcast_to(g_exp, v.shape).astype(float)

    return _unary(a, "sum", _as_value(value), vjp)


@dataclass
class ComplexVar:
    """A complex tensor as a (real, imaginary) pair of tape nodes."""

    re: Var
    im: Var

    @property
    def value(self) -> np.ndarray:
        return np.asarray(self.re.value) + 1j * np.asarray(self.im.value)

    @property
    def shape(self):
        return np.shape(self.re.value)


def complex_leaf(tape: Tape, value: np.ndarray, kind: str = "leaf") -> ComplexVar:
    value = np.asarray(value, dtype=complex)
    return ComplexVar(tape.leaf(value.real, kind), tape.leaf(value.imag, kind))


def as_complex(re: Var, im: Optional[Var] = None) -> ComplexVar:
    if im is None:
        im = re.tape.leaf(np.zeros(np.shape(re.value)), "zero")
    return ComplexVar(re, im)


def cadd(a: ComplexVar, b: ComplexVar) -> ComplexVar:
    return ComplexVar(add(a.re, b.re), add(a.im, b.im))


def csub(a: ComplexVar, b: ComplexVar) -> ComplexVar:
    return ComplexVar(sub(a.re, b.re), sub(a.im, b.im))


def cmul(a: ComplexVar, b: ComplexVar) -> ComplexVar:
    """Elementwise complex product via the four real products."""
    return ComplexVar(sub(mul(a.re, b.re), mul(a.im, b.im)),
                      add(mul(a.re, b.im), mul(a.im, b.re)))


def cscale(a: ComplexVar, s) -> ComplexVar:
    """Scale by a real Var or constant."""
    return ComplexVar(mul(a.re, s), mul(a.im, s))


def cconj(a: ComplexVar) -> ComplexVar:
    return ComplexVar(a.re, neg(a.im))


def ctranspose(a: ComplexVar) -> ComplexVar:
    return ComplexVar(transpose(a.re), transpose(a.im))


def chermitian(a: ComplexVar) -> ComplexVar:
    return ComplexVar(transpose(a.re), neg(transpose(a.im)))


def cmatmul(a: ComplexVar, b: ComplexVar) -> ComplexVar:
    re = sub(matmul(a.re, b.re), matmul(a.im, b.im))
    im = add(matmul(a.re, b.im), matmul(a.im, b.re))
    return ComplexVar(re, im)


def cabs2(a: ComplexVar) -> Var:
    """|z|^2 elementwise, a real tensor."""
    return add(square(a.re), square(a.im))


def cabs(a: ComplexVar) -> Var:
    return sqrt(cabs2(a))


def csum(a: ComplexVar, axis=None) -> ComplexVar:
    return ComplexVar(tsum(a.re, axis), tsum(a.im, axis))


def min_eig_node(c: ComplexVar) -> Var:
    """Smallest eigenvalue of a Hermitian matrix node.

    The input is symmetrized as (A + A^H)/2 before decomposition; the
    backward rule is d lambda_min / dA = v v^H with v the unit eigenvector
    (a deterministic subgradient branch under degeneracy).
    """
    a = np.asarray(c.re.value) + 1j * np.asarray(c.im.value)
    sym = 0.5 * (a + a.conj().T)
    lam, vec = numerics.min_eig(sym)
    proj = np.outer(vec, vec.conj())
    pulls = [(c.re.idx, lambda g: g * proj.real),
             (c.im.idx, lambda g: g * proj.imag)]
    return c.re.tape._emit("min_eig", float(lam), pulls)


def cinverse(c: ComplexVar) -> ComplexVar:
    """Inverse of a complex square matrix node.

    Backward uses d(A^-1) = -A^-1 dA A^-1, i.e. the pullback
    G_A = -A^-H G A^-H in real-pair convention.
    """
    a = np.asarray(c.re.value) + 1j * np.asarray(c.im.value)
    inv = np.linalg.inv(a)
    inv_h = inv.conj().T
    tape = c.re.tape

    def pull_from(upstream_complex):
        sandwich = -inv_h @ upstream_complex @ inv_h
        return sandwich

    re_pulls = [(c.re.idx, lambda g: pull_from(np.asarray(g)).real),
                (c.im.idx, lambda g: pull_from(np.asarray(g)).imag)]
    im_pulls = [(c.re.idx, lambda g: pull_from(1j * np.asarray(g)).real),
                (c.im.idx, lambda g: pull_from(1j * np.asarray(g)).imag)]
    re_var = tape._emit("cinverse_re", inv.real.copy(), re_pulls)
    im_var = tape._emit("cinverse_im", inv.imag.copy(), im_pulls)
    return ComplexVar(re_var, im_var)
