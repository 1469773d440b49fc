"""Layers with explicit forward/backward passes on (batch, channel, H, W) arrays."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError, InvalidParameterError


class Module:
    """Base class: holds parameters, their gradients, and non-trainable buffers."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.children: dict[str, Module] = {}

    def named_params(self, prefix=""):
        for k, v in self.params.items():
            yield prefix + k, v
        for name, child in self.children.items():
            yield from child.named_params(f"{prefix}{name}.")

    def named_grads(self, prefix=""):
        for k in self.params:
            yield prefix + k, self.grads.get(k)
        for name, child in self.children.items():
            yield from child.named_grads(f"{prefix}{name}.")

    def named_buffers(self, prefix=""):
        for k, v in self.buffers.items():
            yield prefix + k, v
        for name, child in self.children.items():
            yield from child.named_buffers(f"{prefix}{name}.")

    def forward(self, x, train=False, update_stats=True):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError


def _pad(x, p, mode):
    if p == 0:
        return x
    width = ((0, 0), (0, 0), (p, p), (p, p))
    return np.pad(x, width, mode="wrap" if mode == "periodic" else "constant")


def _fold_axis(a, p, axis, periodic):
    a = np.moveaxis(a, axis, -1)
    n = a.shape[-1] - 2 * p
    if periodic and p > n:
        raise DimensionError("periodic padding wider than the image is not supported")
    core = a[..., p:p + n].copy()
    if periodic:
        core[..., n - p:] += a[..., :p]
        core[..., :p] += a[..., p + n:]
    return np.moveaxis(core, -1, axis)


def _fold(dxp, p, mode):
    """Adjoint of :func:`_pad`: map a gradient on the padded grid back to the image."""
    if p == 0:
        return np.ascontiguousarray(dxp)
    periodic = mode == "periodic"
    return np.ascontiguousarray(_fold_axis(_fold_axis(dxp, p, 2, periodic), p, 3, periodic))


class Conv2d(Module):
    """'Same'-size 2-D convolution (cross-correlation) with odd square kernels."""

    def __init__(self, in_ch, out_ch, k, padding="zero", rng=None):
        super().__init__()
        if k < 1 or k % 2 == 0:
            raise InvalidParameterError(f"kernel size must be odd and positive, got {k}")
        if padding not in ("zero", "periodic"):
            raise InvalidParameterError(f"padding must be 'zero' or 'periodic', got {padding!r}")
        self.in_ch, self.out_ch, self.k, self.padding = in_ch, out_ch, k, padding
        rng = np.random.default_rng() if rng is None else rng
        std = np.sqrt(2.0 / (in_ch * k * k))
        self.params["weight"] = std * rng.standard_normal((out_ch, in_ch, k, k))
        self.params["bias"] = np.zeros(out_ch)
        self.need_input_grad = True
        self._cols = None

    def forward(self, x, train=False, update_stats=True):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise DimensionError(f"Conv2d expects (B, {self.in_ch}, H, W), got {x.shape}")
        b, c, h, w = x.shape
        k, p = self.k, self.k // 2
        xp = _pad(x, p, self.padding)
        # im2col: cols[c, u, v, b, i, j] = xp[b, c, i + u, j + v]
        cols = np.empty((c, k, k, b, h, w))
        xt = xp.transpose(1, 0, 2, 3)
        for u in range(k):
            for v in range(k):
                cols[:, u, v] = xt[:, :, u:u + h, v:v + w]
        cols = cols.reshape(c * k * k, b * h * w)
        self._cols, self._shape = cols, x.shape
        out = self.params["weight"].reshape(self.out_ch, -1) @ cols
        out += self.params["bias"][:, None]
        return np.ascontiguousarray(out.reshape(self.out_ch, b, h, w).transpose(1, 0, 2, 3))

    def backward(self, dout):
        b, c, h, w = self._shape
        k, p = self.k, self.k // 2
        d2 = dout.transpose(1, 0, 2, 3).reshape(self.out_ch, -1)
        self.grads["weight"] = (d2 @ self._cols.T).reshape(self.params["weight"].shape)
        self.grads["bias"] = d2.sum(axis=1)
        self._cols = None
        if not self.need_input_grad:
            return None
        dcols = (self.params["weight"].reshape(self.out_ch, -1).T @ d2).reshape(c, k, k, b, h, w)
        # col2im on the padded grid, then fold the padding back
        dxp = np.zeros((c, b, h + 2 * p, w + 2 * p))
        for u in range(k):
            for v in range(k):
                dxp[:, :, u:u + h, v:v + w] += dcols[:, u, v]
        return _fold(dxp.transpose(1, 0, 2, 3), p, self.padding)


class ReLU(Module):
    def forward(self, x, train=False, update_stats=True):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dout):
        return np.where(self._mask, dout, 0.0)


class BatchNorm2d(Module):
    """Per-channel batch normalization.

    Running statistics follow ``r <- momentum*r + (1 - momentum)*batch`` and
    use the biased batch variance.
    """

    def __init__(self, ch, momentum=0.9, eps=1e-5):
        super().__init__()
        if not 0 < momentum < 1:
            raise InvalidParameterError("momentum must lie in (0, 1)")
        self.momentum, self.eps = momentum, eps
        self.params["gamma"] = np.ones(ch)
        self.params["beta"] = np.zeros(ch)
        self.buffers["running_mean"] = np.zeros(ch)
        self.buffers["running_var"] = np.ones(ch)

    def forward(self, x, train=False, update_stats=True):
        g, b = self.params["gamma"], self.params["beta"]
        if train:
            mu = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            if update_stats:
                m = self.momentum
                self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mu
                self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * var
        else:
            mu = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mu[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (xhat, inv_std, train)
        return g[None, :, None, None] * xhat + b[None, :, None, None]

    def backward(self, dout):
        xhat, inv_std, train = self._cache
        g = self.params["gamma"]
        self.grads["gamma"] = np.sum(dout * xhat, axis=(0, 2, 3))
        self.grads["beta"] = dout.sum(axis=(0, 2, 3))
        dxhat = dout * g[None, :, None, None]
        if not train:
            return dxhat * inv_std[None, :, None, None]
        n = dout.shape[0] * dout.shape[2] * dout.shape[3]
        s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        s2 = np.sum(dxhat * xhat, axis=(0, 2, 3))[None, :, None, None]
        return (inv_std[None, :, None, None] / n) * (n * dxhat - s1 - xhat * s2)


class Sequential(Module):
    def __init__(self, *layers):
        super().__init__()
        for i, layer in enumerate(layers):
            self.children[str(i)] = layer

    @property
    def layers(self):
        return list(self.children.values())

    def forward(self, x, train=False, update_stats=True):
        for layer in self.children.values():
            x = layer.forward(x, train, update_stats)
        return x

    def backward(self, dout):
        for layer in reversed(self.children.values()):
            dout = layer.backward(dout)
        return dout


class ResidualBlock(Module):
    """``x + BN(ReLU(conv(x)))``."""

    def __init__(self, ch, padding="zero", rng=None, momentum=0.9, eps=1e-5):
        super().__init__()
        self.children["body"] = Sequential(
            Conv2d(ch, ch, 3, padding, rng), ReLU(), BatchNorm2d(ch, momentum, eps)
        )

    def forward(self, x, train=False, update_stats=True):
        return x + self.children["body"].forward(x, train, update_stats)

    def backward(self, dout):
        return dout + self.children["body"].backward(dout)


def avg_pool2(x):
    b, c, h, w = x.shape
    return x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def avg_pool2_backward(dout):
    return 0.25 * np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3)


def upsample2(x):
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)


def upsample2_backward(dout):
    b, c, h, w = dout.shape
    return dout.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))
