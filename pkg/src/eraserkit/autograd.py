"""Minimal reverse-mode autodiff over float64 numpy arrays.

Just enough machinery for the toy denoiser: broadcast-aware add/mul,
matmul, 3x3 convolution in HWC layout, SiLU, row softmax, reshape,
concatenation, nearest 2x upsampling and reductions. Gradients only
flow into leaves created with ``requires_grad=True``; everything else
stays frozen by construction, which is what the trainer relies on to
keep the base model untouched.

All ops are smooth (SiLU rather than ReLU) so central finite
differences converge cleanly against the analytic gradients.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    # -- graph plumbing ----------------------------------------------------

    @staticmethod
    def _result(data, parents, backward):
        out = Tensor(data)
        if any(p.requires_grad or p._parents for p in parents):
            out._parents = parents
            out._backward = backward
        return out

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar loss")
        topo, seen = [], set()

        def visit(node):
            if id(node) in seen:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            topo.append(node)

        visit(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- arithmetic --------------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        out = self._result(
            a.data + b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        )
        return out

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        return self._result(
            a.data - b.data,
            (a, b),
            lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        )

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self, other
        return self._result(
            a.data * b.data,
            (a, b),
            lambda g: (
                _unbroadcast(g * b.data, a.shape),
                _unbroadcast(g * a.data, b.shape),
            ),
        )

    __radd__ = __add__
    __rmul__ = __mul__

    def matmul(self, other):
        a, b = self, other
        return self._result(
            a.data @ b.data,
            (a, b),
            lambda g: (g @ b.data.T, a.data.T @ g),
        )

    def transpose(self):
        a = self
        return self._result(a.data.T, (a,), lambda g: (g.T,))

    def reshape(self, *shape):
        a = self
        old = a.shape
        return self._result(a.data.reshape(*shape), (a,), lambda g: (g.reshape(old),))

    def sum(self):
        a = self
        return self._result(
            np.array(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),)
        )

    def mean(self):
        a = self
        n = a.data.size
        return self._result(
            np.array(a.data.mean()),
            (a,),
            lambda g: (np.broadcast_to(g / n, a.shape).copy(),),
        )

    def mean_axis0(self):
        """Mean over the leading axis (token pooling)."""
        a = self
        n = a.shape[0]
        return self._result(
            a.data.mean(axis=0),
            (a,),
            lambda g: (np.broadcast_to(g / n, a.shape).copy(),),
        )

    def silu(self):
        a = self
        sig = expit(a.data)
        out_data = a.data * sig

        def backward(g):
            return (g * sig * (1.0 + a.data * (1.0 - sig)),)

        return self._result(out_data, (a,), backward)

    def softmax_rows(self):
        """Softmax over the last axis."""
        a = self
        shifted = a.data - a.data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=-1, keepdims=True)

        def backward(g):
            dot = (g * y).sum(axis=-1, keepdims=True)
            return (y * (g - dot),)

        return self._result(y, (a,), backward)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    datas = [t.data for t in tensors]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._result(np.concatenate(datas, axis=axis), tuple(tensors), backward)


def upsample_nearest2x(x: Tensor) -> Tensor:
    """(h, w, c) -> (2h, 2w, c) by pixel duplication."""
    h, w, c = x.shape
    out_data = np.repeat(np.repeat(x.data, 2, axis=0), 2, axis=1)

    def backward(g):
        return (g.reshape(h, 2, w, 2, c).sum(axis=(1, 3)),)

    return Tensor._result(out_data, (x,), backward)


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, pad: int = 1) -> Tensor:
    """2-D convolution, HWC input, weight (kh, kw, cin, cout), bias (cout,)."""
    h, width, cin = x.shape
    kh, kw, cin_w, cout = w.shape
    assert cin == cin_w, f"channel mismatch: {cin} vs {cin_w}"
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (width + 2 * pad - kw) // stride + 1

    xp = np.pad(x.data, ((pad, pad), (pad, pad), (0, 0)))
    out_data = np.broadcast_to(b.data, (oh, ow, cout)).copy()
    for di in range(kh):
        for dj in range(kw):
            sl = xp[di : di + stride * oh : stride, dj : dj + stride * ow : stride]
            out_data += sl @ w.data[di, dj]

    def backward(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for di in range(kh):
            for dj in range(kw):
                sl = xp[di : di + stride * oh : stride, dj : dj + stride * ow : stride]
                gw[di, dj] = np.tensordot(sl, g, axes=([0, 1], [0, 1]))
                gxp[di : di + stride * oh : stride, dj : dj + stride * ow : stride] += (
                    g @ w.data[di, dj].T
                )
        gx = gxp[pad : pad + h, pad : pad + width] if pad else gxp
        gb = g.sum(axis=(0, 1))
        return gx, gw, gb

    return Tensor._result(out_data, (x, w, b), backward)
