"""Minimal reverse-mode automatic differentiation over numpy arrays.

Every operator records its parents and a closure that maps the output
gradient to parent gradients. ``Tensor.backward`` walks the graph in reverse
topological order. The operator set is deliberately small: affine maps,
3D convolution, pointwise nonlinearities, a fused LSTM sequence, embedding
lookup and masked softmax cross-entropy.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, parents=(), backward=None, name=""):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if not node._parents:
                node.grad = g if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                grads[key] = pg if key not in grads else grads[key] + pg


def _needs(*tensors):
    return any(t.requires_grad for t in tensors)


def constant(x):
    return Tensor(np.asarray(x), requires_grad=False)


def parameter(x, name=""):
    return Tensor(np.asarray(x), requires_grad=True, name=name)


def _reduce_to(grad, shape):
    """Sum a broadcast gradient back to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# --------------------------------------------------------------------------- elementary ops


def add(a, b):
    out = a.data + b.data

    def back(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return Tensor(out, _needs(a, b), (a, b), back)


def affine(x, w, b=None):
    """x @ w + b over the last axis of x."""
    out = x.data @ w.data
    if b is not None:
        out = out + b.data
    parents = (x, w) if b is None else (x, w, b)

    def back(g):
        gx = g @ w.data.T if x.requires_grad else None
        x2 = x.data.reshape(-1, x.shape[-1])
        g2 = g.reshape(-1, g.shape[-1])
        gw = x2.T @ g2
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    return Tensor(out, _needs(*parents), parents, back)


def tanh(x):
    out = np.tanh(x.data)
    return Tensor(out, x.requires_grad, (x,), lambda g: (g * (1.0 - out * out),))


def sigmoid(x):
    out = _sigmoid(x.data)
    return Tensor(out, x.requires_grad, (x,), lambda g: (g * out * (1.0 - out),))


def elu(x, alpha=1.0):
    pos = x.data > 0
    neg_part = alpha * np.expm1(np.minimum(x.data, 0.0))
    out = np.where(pos, x.data, neg_part)
    return Tensor(out, x.requires_grad, (x,), lambda g: (g * np.where(pos, 1.0, neg_part + alpha).astype(g.dtype),))


def reshape(x, shape):
    old = x.shape
    return Tensor(x.data.reshape(shape), x.requires_grad, (x,), lambda g: (g.reshape(old),))


def concat(tensors, axis=-1):
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out, _needs(*tensors), tuple(tensors), back)


def embedding(table, ids):
    """Rows of ``table`` selected by the integer array ``ids``."""
    ids = np.asarray(ids)
    out = table.data[ids]

    def back(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.ravel(), g.reshape(-1, table.shape[1]))
        return (gt,)

    return Tensor(out, table.requires_grad, (table,), back)


def _sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


# --------------------------------------------------------------------------- convolution


def _im2col(xp, k, stride, out_size):
    """(B, C, Dp, Dp, Dp) padded input -> (B, o, o, o, C, k, k, k) strided view."""
    b, c = xp.shape[:2]
    s = xp.strides
    shape = (b, out_size, out_size, out_size, c, k, k, k)
    strides = (s[0], s[2] * stride, s[3] * stride, s[4] * stride, s[1], s[2], s[3], s[4])
    return as_strided(xp, shape=shape, strides=strides, writeable=False)


def conv3d(x, w, b, stride=2, pad=1):
    """3D convolution, input (B, C, D, D, D), weight (O, C, k, k, k), cubic inputs only."""
    xb, c, d = x.shape[0], x.shape[1], x.shape[2]
    o, _, k = w.shape[0], w.shape[1], w.shape[2]
    out_size = (d + 2 * pad - k) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad), (pad, pad)))
    cols = _im2col(xp, k, stride, out_size).reshape(xb * out_size ** 3, c * k ** 3)
    wmat = w.data.reshape(o, -1)
    out = cols @ wmat.T + b.data
    out = out.reshape(xb, out_size, out_size, out_size, o).transpose(0, 4, 1, 2, 3)

    def back(g):
        g2 = g.transpose(0, 2, 3, 4, 1).reshape(-1, o)
        gw = (g2.T @ cols).reshape(w.shape)
        gb = g2.sum(axis=0)
        gx = None
        if x.requires_grad:
            gcols = (g2 @ wmat).reshape(xb, out_size, out_size, out_size, c, k, k, k)
            gxp = np.zeros_like(xp)
            span = stride * (out_size - 1) + 1
            for i in range(k):
                for j in range(k):
                    for l in range(k):
                        gxp[:, :, i:i + span:stride, j:j + span:stride, l:l + span:stride] += \
                            gcols[..., i, j, l].transpose(0, 4, 1, 2, 3)
            gx = gxp[:, :, pad:pad + d, pad:pad + d, pad:pad + d]
        return gx, gw, gb

    return Tensor(out, _needs(x, w, b), (x, w, b), back)


# --------------------------------------------------------------------------- recurrent cell


def lstm_step(xg, h, c, u):
    """One LSTM step from precomputed input gates ``xg`` (B, 4H); returns (h, c, cache)."""
    hid = h.shape[1]
    gates = xg + h @ u
    i = _sigmoid(gates[:, :hid])
    f = _sigmoid(gates[:, hid:2 * hid])
    gg = np.tanh(gates[:, 2 * hid:3 * hid])
    o = _sigmoid(gates[:, 3 * hid:])
    c_new = f * c + i * gg
    tc = np.tanh(c_new)
    h_new = o * tc
    return h_new, c_new, (i, f, gg, o, tc)


def lstm_sequence(xg, h0, c0, u):
    """Run an LSTM over time; ``xg`` is (B, T, 4H) input-gate pre-activations.

    Gate order is (input, forget, cell, output). Returns hidden states (B, T, H).
    """
    bsz, steps, _ = xg.shape
    hid = h0.shape[1]
    hs = np.empty((bsz, steps, hid), dtype=xg.data.dtype)
    cs = []
    caches = []
    h, c = h0.data, c0.data
    h_prev = []
    for t in range(steps):
        h_prev.append(h)
        cs.append(c)
        h, c, cache = lstm_step(xg.data[:, t], h, c, u.data)
        caches.append(cache)
        hs[:, t] = h

    def back(g):
        gxg = np.zeros_like(xg.data)
        gu = np.zeros_like(u.data)
        dh = np.zeros((bsz, hid), dtype=g.dtype)
        dc = np.zeros((bsz, hid), dtype=g.dtype)
        for t in range(steps - 1, -1, -1):
            i, f, gg, o, tc = caches[t]
            dh = dh + g[:, t]
            do = dh * tc
            dct = dc + dh * o * (1.0 - tc * tc)
            di = dct * gg
            dgg = dct * i
            df = dct * cs[t]
            dc = dct * f
            dgates = np.concatenate(
                [di * i * (1 - i), df * f * (1 - f), dgg * (1 - gg * gg), do * o * (1 - o)], axis=1
            )
            gxg[:, t] = dgates
            gu += h_prev[t].T @ dgates
            dh = dgates @ u.data.T
        return gxg, dh, dc, gu

    return Tensor(hs, _needs(xg, h0, c0, u), (xg, h0, c0, u), back)


# --------------------------------------------------------------------------- loss


def log_softmax(logits, axis=-1):
    m = np.max(logits, axis=axis, keepdims=True)
    z = logits - m
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def softmax_cross_entropy(logits, targets, mask):
    """Sum over unmasked positions of -log softmax(logits)[target] (max-subtracted)."""
    targets = np.asarray(targets)
    mask = np.asarray(mask, dtype=logits.data.dtype)
    lp = log_softmax(logits.data)
    picked = np.take_along_axis(lp, targets[..., None], axis=-1)[..., 0]
    loss = -np.sum(picked * mask)

    def back(g):
        p = np.exp(lp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
        return ((p - onehot) * mask[..., None] * g,)

    return Tensor(np.asarray(loss, dtype=logits.data.dtype), logits.requires_grad, (logits,), back)
