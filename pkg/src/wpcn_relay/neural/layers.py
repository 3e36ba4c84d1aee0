"""Differentiable layers on NCHW float64 arrays.

Every layer caches what its backward pass needs during ``forward`` and
accumulates nothing: ``backward`` overwrites ``grads`` each call.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    params: list
    grads: list

    def __init__(self):
        self.params = []
        self.grads = []

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def buffers(self) -> list:
        """Non-trainable state saved with the model (e.g. running stats)."""
        return []


def _same_pad(k: int) -> tuple[int, int]:
    before = (k - 1) // 2
    return before, k - 1 - before


class Conv2D(Layer):
    """Unit-stride convolution with zero 'same' padding."""

    def __init__(self, in_ch, out_ch, kernel=(3, 3), rng=None, zero_init=False):
        super().__init__()
        kh, kw = kernel
        self.kernel = (int(kh), int(kw))
        fan_in = in_ch * kh * kw
        bound = 1.0 / np.sqrt(fan_in)
        if zero_init or rng is None:
            w = np.zeros((out_ch, in_ch, kh, kw))
            b = np.zeros(out_ch)
        else:
            w = rng.uniform(-bound, bound, size=(out_ch, in_ch, kh, kw))
            b = rng.uniform(-bound, bound, size=out_ch)
        self.params = [w, b]
        self.grads = [np.zeros_like(w), np.zeros_like(b)]

    def forward(self, x, training=False):
        w, b = self.params
        out_ch, in_ch, kh, kw = w.shape
        bsz, _, h, wd = x.shape
        if (kh, kw) == (1, 1):
            cols = x.transpose(0, 2, 3, 1).reshape(-1, in_ch)
        else:
            ph, pw = _same_pad(kh), _same_pad(kw)
            xp = np.pad(x, ((0, 0), (0, 0), ph, pw))
            win = sliding_window_view(xp, (kh, kw), axis=(2, 3))  # B,C,H,W,kh,kw
            cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(bsz * h * wd, in_ch * kh * kw)
        self._cache = (x.shape, cols)
        y = cols @ w.reshape(out_ch, -1).T + b
        return y.reshape(bsz, h, wd, out_ch).transpose(0, 3, 1, 2)

    def backward(self, dy):
        w, _ = self.params
        out_ch, in_ch, kh, kw = w.shape
        shape, cols = self._cache
        bsz, _, h, wd = shape
        dy2 = dy.transpose(0, 2, 3, 1).reshape(-1, out_ch)
        self.grads[0] = (dy2.T @ cols).reshape(w.shape)
        self.grads[1] = dy2.sum(axis=0)
        dcols = dy2 @ w.reshape(out_ch, -1)
        if (kh, kw) == (1, 1):
            return dcols.reshape(bsz, h, wd, in_ch).transpose(0, 3, 1, 2)
        dcols = dcols.reshape(bsz, h, wd, in_ch, kh, kw)
        (pt, _), (pl, _) = _same_pad(kh), _same_pad(kw)
        dxp = np.zeros((bsz, in_ch, h + kh - 1, wd + kw - 1))
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + h, j : j + wd] += dcols[..., i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, pt : pt + h, pl : pl + wd]


class Dense(Layer):
    def __init__(self, n_in, n_out, rng=None, zero_init=False):
        super().__init__()
        bound = 1.0 / np.sqrt(n_in)
        if zero_init or rng is None:
            w, b = np.zeros((n_in, n_out)), np.zeros(n_out)
        else:
            w = rng.uniform(-bound, bound, size=(n_in, n_out))
            b = rng.uniform(-bound, bound, size=n_out)
        self.params = [w, b]
        self.grads = [np.zeros_like(w), np.zeros_like(b)]

    def forward(self, x, training=False):
        self._x = x
        return x @ self.params[0] + self.params[1]

    def backward(self, dy):
        self.grads[0] = self._x.T @ dy
        self.grads[1] = dy.sum(axis=0)
        return dy @ self.params[0].T


class BatchNorm(Layer):
    """Per-channel batch normalization for ``(B, C)`` or ``(B, C, H, W)`` input."""

    def __init__(self, channels, eps=1e-5, momentum=0.1):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.params = [np.ones(channels), np.zeros(channels)]
        self.grads = [np.zeros(channels), np.zeros(channels)]
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)

    def buffers(self):
        return [self.running_mean, self.running_var]

    @staticmethod
    def _axes(x):
        return (0,) if x.ndim == 2 else (0, 2, 3)

    def _bcast(self, v, ndim):
        return v if ndim == 2 else v[None, :, None, None]

    def forward(self, x, training=False):
        gamma, beta = self.params
        axes = self._axes(x)
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = x.size // x.shape[1]
            unbiased = var * m / max(m - 1, 1)
            self.running_mean *= 1.0 - self.momentum
            self.running_mean += self.momentum * mean
            self.running_var *= 1.0 - self.momentum
            self.running_var += self.momentum * unbiased
        else:
            mean, var = self.running_mean, self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - self._bcast(mean, x.ndim)) * self._bcast(inv_std, x.ndim)
        self._cache = (xhat, inv_std, axes, training)
        return xhat * self._bcast(gamma, x.ndim) + self._bcast(beta, x.ndim)

    def backward(self, dy):
        gamma = self.params[0]
        xhat, inv_std, axes, training = self._cache
        nd = dy.ndim
        self.grads[0] = (dy * xhat).sum(axis=axes)
        self.grads[1] = dy.sum(axis=axes)
        dxhat = dy * self._bcast(gamma, nd)
        if not training:
            return dxhat * self._bcast(inv_std, nd)
        m = dy.size // dy.shape[1]
        mean_d = dxhat.sum(axis=axes, keepdims=True) / m
        mean_dx = (dxhat * xhat).sum(axis=axes, keepdims=True) / m
        return (dxhat - mean_d - xhat * mean_dx) * self._bcast(inv_std, nd)


class ReLU(Layer):
    def forward(self, x, training=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class MaxPool2D(Layer):
    """Unit-stride max pooling with 'same' padding (pads with -inf)."""

    def __init__(self, kernel=(3, 3)):
        super().__init__()
        self.kernel = tuple(kernel)

    def forward(self, x, training=False):
        kh, kw = self.kernel
        bsz, ch, h, w = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), _same_pad(kh), _same_pad(kw)), constant_values=-np.inf)
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3)).reshape(bsz, ch, h, w, kh * kw)
        arg = win.argmax(axis=-1)
        self._cache = (x.shape, arg)
        return np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        kh, kw = self.kernel
        (bsz, ch, h, w), arg = self._cache
        (pt, _), (pl, _) = _same_pad(kh), _same_pad(kw)
        dxp = np.zeros((bsz, ch, h + kh - 1, w + kw - 1))
        di, dj = np.divmod(arg, kw)
        b, c, r, s = np.indices((bsz, ch, h, w))
        np.add.at(dxp, (b, c, r + di, s + dj), dy)
        return dxp[:, :, pt : pt + h, pl : pl + w]


def _adaptive_matrix(n_in: int, n_out: int) -> np.ndarray:
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        start = (i * n_in) // n_out
        end = -((-(i + 1) * n_in) // n_out)  # ceil
        m[i, start:end] = 1.0 / (end - start)
    return m


class AdaptiveAvgPool2D(Layer):
    """Average over the adaptive windows that map ``H x W`` onto ``out``."""

    def __init__(self, out_shape):
        super().__init__()
        self.out_shape = tuple(int(v) for v in out_shape)

    def forward(self, x, training=False):
        ph = _adaptive_matrix(x.shape[2], self.out_shape[0])
        pw = _adaptive_matrix(x.shape[3], self.out_shape[1])
        self._mats = (ph, pw)
        return np.einsum("ih,bchw,jw->bcij", ph, x, pw, optimize=True)

    def backward(self, dy):
        ph, pw = self._mats
        return np.einsum("ih,bcij,jw->bchw", ph, dy, pw, optimize=True)


class Flatten(Layer):
    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(len(x), -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Sequential(Layer):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)
        self.params = [p for layer in self.layers for p in layer.params]

    @property
    def grads(self):
        return [g for layer in self.layers for g in layer.grads]

    @grads.setter
    def grads(self, value):
        pass

    def buffers(self):
        return [b for layer in self.layers for b in layer.buffers()]

    def forward(self, x, training=False):
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


def inception_widths(out_ch: int) -> list[int]:
    """Split ``out_ch`` output channels over the four flows (earlier flows first)."""
    base, extra = divmod(int(out_ch), 4)
    return [base + (1 if i < extra else 0) for i in range(4)]


class InceptionBlock(Layer):
    """Four parallel flows concatenated on channels.

    1) 1x1 conv; 2) 1x1 conv, ReLU, ``k_a`` conv; 3) 1x1 conv, ReLU, ``k_b``
    conv; 4) 3x3 max-pool then 1x1 conv.  Flow widths come from
    :func:`inception_widths`; the 1x1 reductions in flows 2 and 3 use the
    flow's own width.
    """

    def __init__(self, in_ch, out_ch, k_a=(3, 3), k_b=(3, 3), rng=None):
        super().__init__()
        w1, w2, w3, w4 = inception_widths(out_ch)
        flows = []
        if w1:
            flows.append(Sequential([Conv2D(in_ch, w1, (1, 1), rng)]))
        if w2:
            flows.append(Sequential([Conv2D(in_ch, w2, (1, 1), rng), ReLU(), Conv2D(w2, w2, k_a, rng)]))
        if w3:
            flows.append(Sequential([Conv2D(in_ch, w3, (1, 1), rng), ReLU(), Conv2D(w3, w3, k_b, rng)]))
        if w4:
            flows.append(Sequential([MaxPool2D((3, 3)), Conv2D(in_ch, w4, (1, 1), rng)]))
        self.flows = flows
        self.widths = [w for w in (w1, w2, w3, w4) if w]
        self.params = [p for f in flows for p in f.params]

    @property
    def grads(self):
        return [g for f in self.flows for g in f.grads]

    @grads.setter
    def grads(self, value):
        pass

    def forward(self, x, training=False):
        return np.concatenate([f.forward(x, training) for f in self.flows], axis=1)

    def backward(self, dy):
        splits = np.split(dy, np.cumsum(self.widths)[:-1], axis=1)
        return sum(f.backward(d) for f, d in zip(self.flows, splits))
