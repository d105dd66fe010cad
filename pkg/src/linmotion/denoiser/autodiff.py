"""A small reverse-mode tape over numpy arrays.

Only the ops the denoiser needs are provided. Each op records its output
node and a closure that pushes the output gradient to its inputs; the
backward pass replays the records in reverse, once.
"""

from __future__ import annotations

import numpy as np

from ..errors import UsageError

ADAIN_EPS = 1e-6


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Var:
    __slots__ = ("value", "tape", "requires_grad", "grad", "name")
    __array_priority__ = 1000

    def __init__(self, value, tape, requires_grad, name=None):
        self.value = value
        self.tape = tape
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        self.grad = g.copy() if self.grad is None else self.grad + g

    def __add__(self, other):
        return self.tape.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return self.tape.sub(self, other)

    def __rsub__(self, other):
        return self.tape.sub(other, self)

    def __mul__(self, other):
        return self.tape.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.tape.div(self, other)

    def __matmul__(self, other):
        return self.tape.matmul(self, other)

    def __getitem__(self, index):
        return self.tape.getitem(self, index)

    def __repr__(self):
        return f"Var(shape={self.value.shape}, name={self.name!r})"


class Tape:
    """Records one forward pass; ``backward`` may be called exactly once."""

    def __init__(self):
        self._records = []
        self._params = {}
        self._done = False

    # -- leaves ---------------------------------------------------------
    def param(self, name, value) -> Var:
        var = Var(np.asarray(value, dtype=np.float64), self, True, name)
        self._params[name] = var
        return var

    def const(self, value) -> Var:
        return Var(np.asarray(value, dtype=np.float64), self, False)

    def _lift(self, x) -> Var:
        return x if isinstance(x, Var) else self.const(x)

    def _node(self, value, parents, backward) -> Var:
        out = Var(value, self, any(p.requires_grad for p in parents))
        if out.requires_grad:
            self._records.append((out, backward))
        return out

    # -- elementwise ----------------------------------------------------
    def add(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)

        def back(g):
            a._accumulate(_unbroadcast(g, a.shape))
            b._accumulate(_unbroadcast(g, b.shape))

        return self._node(a.value + b.value, (a, b), back)

    def sub(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)

        def back(g):
            a._accumulate(_unbroadcast(g, a.shape))
            b._accumulate(_unbroadcast(-g, b.shape))

        return self._node(a.value - b.value, (a, b), back)

    def mul(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)

        def back(g):
            a._accumulate(_unbroadcast(g * b.value, a.shape))
            b._accumulate(_unbroadcast(g * a.value, b.shape))

        return self._node(a.value * b.value, (a, b), back)

    def div(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)
        out = a.value / b.value

        def back(g):
            a._accumulate(_unbroadcast(g / b.value, a.shape))
            b._accumulate(_unbroadcast(-g * out / b.value, b.shape))

        return self._node(out, (a, b), back)

    def relu(self, x) -> Var:
        mask = x.value > 0

        def back(g):
            x._accumulate(g * mask)

        return self._node(np.where(mask, x.value, 0.0), (x,), back)

    # -- linear algebra and shape ---------------------------------------
    def matmul(self, a, b) -> Var:
        a, b = self._lift(a), self._lift(b)

        def back(g):
            # promote 1-D operands to row/column matrices as np.matmul does
            av = a.value[None, :] if a.value.ndim == 1 else a.value
            bv = b.value[:, None] if b.value.ndim == 1 else b.value
            if a.value.ndim == 1:
                g = np.expand_dims(g, -2)
            if b.value.ndim == 1:
                g = g[..., None]
            if a.requires_grad:
                a._accumulate(_unbroadcast(g @ np.swapaxes(bv, -1, -2), av.shape).reshape(a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(np.swapaxes(av, -1, -2) @ g, bv.shape).reshape(b.shape))

        return self._node(a.value @ b.value, (a, b), back)

    def sum(self, x, axis=None, keepdims=False) -> Var:
        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(g, x.shape))

        return self._node(x.value.sum(axis=axis, keepdims=keepdims), (x,), back)

    def mean(self, x, axis=None, keepdims=False) -> Var:
        count = x.value.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
        return self.mul(self.sum(x, axis, keepdims), 1.0 / count)

    def reshape(self, x, shape) -> Var:
        def back(g):
            x._accumulate(g.reshape(x.shape))

        return self._node(x.value.reshape(shape), (x,), back)

    def transpose(self, x, axes) -> Var:
        inverse = np.argsort(axes)

        def back(g):
            x._accumulate(np.transpose(g, inverse))

        return self._node(np.transpose(x.value, axes), (x,), back)

    def getitem(self, x, index) -> Var:
        def back(g):
            full = np.zeros_like(x.value)
            np.add.at(full, index, g)
            x._accumulate(full)

        return self._node(x.value[index], (x,), back)

    # -- fused ops ------------------------------------------------------
    def unit(self, x, eps=1e-12) -> Var:
        """x / max(|x|, eps) along the last axis."""
        norm = np.linalg.norm(x.value, axis=-1, keepdims=True)
        denom = np.maximum(norm, eps)
        y = x.value / denom
        active = norm > eps

        def back(g):
            proj = np.sum(g * y, axis=-1, keepdims=True)
            x._accumulate(np.where(active, (g - y * proj) / denom, g / denom))

        return self._node(y, (x,), back)

    def rope(self, x, cos, sin) -> Var:
        """Rotate feature pairs by fixed angles; cos/sin broadcast against x[..., ::2]."""
        a, b = x.value[..., 0::2], x.value[..., 1::2]
        y = np.empty_like(x.value)
        y[..., 0::2] = a * cos - b * sin
        y[..., 1::2] = a * sin + b * cos

        def back(g):
            ga, gb = g[..., 0::2], g[..., 1::2]
            gx = np.empty_like(g)
            gx[..., 0::2] = ga * cos + gb * sin
            gx[..., 1::2] = -ga * sin + gb * cos
            x._accumulate(gx)

        return self._node(y, (x,), back)

    def adain(self, x, gamma, beta, axis=-2, eps=ADAIN_EPS) -> Var:
        """Normalize over ``axis`` then scale by (1 + gamma) and shift by beta."""
        mu = x.value.mean(axis=axis, keepdims=True)
        xc = x.value - mu
        var = (xc * xc).mean(axis=axis, keepdims=True)
        inv = 1.0 / np.sqrt(var + eps)
        xn = xc * inv
        scale = 1.0 + gamma.value

        def back(g):
            gamma._accumulate(_unbroadcast(g * xn, gamma.shape))
            beta._accumulate(_unbroadcast(g, beta.shape))
            if x.requires_grad:
                gn = g * scale
                mean_gn = gn.mean(axis=axis, keepdims=True)
                mean_gn_xn = (gn * xn).mean(axis=axis, keepdims=True)
                x._accumulate(inv * (gn - mean_gn - xn * mean_gn_xn))

        return self._node(xn * scale + beta.value, (x, gamma, beta), back)

    # -- reverse pass ---------------------------------------------------
    def backward(self, loss: Var) -> dict[str, np.ndarray]:
        """Gradients of scalar ``loss`` for every registered parameter."""
        if self._done:
            raise UsageError("tape already replayed; record a new forward pass")
        self._done = True
        if loss.value.size != 1:
            raise UsageError("backward needs a scalar loss")
        for var in self._params.values():
            var.grad = None
        loss.grad = np.ones_like(loss.value)
        for out, back in reversed(self._records):
            if out.grad is not None:
                back(out.grad)
        return {
            name: (var.grad if var.grad is not None else np.zeros_like(var.value))
            for name, var in self._params.items()
        }
