"""Reconstruction networks: the 3-layer single-scale net and a 2-level mini UNet."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError, InvalidParameterError
from .layers import (
    BatchNorm2d,
    Conv2d,
    Module,
    ReLU,
    ResidualBlock,
    Sequential,
    avg_pool2,
    avg_pool2_backward,
    upsample2,
    upsample2_backward,
)

BN_MOMENTUM = 0.9
BN_EPS = 1e-5


def _as_batch(y):
    """Coerce (H, W), (B, H, W) or (B, 1, H, W) to (B, 1, H, W); return the restorer."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 2:
        return y[None, None], lambda z: z[0, 0]
    if y.ndim == 3:
        return y[:, None], lambda z: z[:, 0]
    if y.ndim == 4 and y.shape[1] == 1:
        return y, lambda z: z
    raise DimensionError(f"expected a single-channel image or stack, got shape {y.shape}")


class NetworkModel(Module):
    """Common interface of the reconstructors; subclasses define ``_forward``/``_backward``."""

    architecture = ""

    def __init__(self):
        super().__init__()
        self.config: dict = {}

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for _, p in self.named_params()))

    def state(self):
        """Ordered (name, array) pairs: parameters then buffers."""
        return list(self.named_params()) + list(self.named_buffers())

    def check_input(self, x):
        pass

    def forward(self, x, train=False, update_stats=True):
        self.check_input(x)
        return self._forward(x, train, update_stats)

    def backward(self, dout):
        return self._backward(dout)

    def __call__(self, y, mode="eval", batch_size=16):
        """Apply the network to an image or a stack of images."""
        xb, restore = _as_batch(y)
        train = mode == "train"
        if train or len(xb) <= batch_size:
            return restore(self.forward(xb, train))
        out = [self.forward(xb[i:i + batch_size], False) for i in range(0, len(xb), batch_size)]
        return restore(np.concatenate(out))

    def loss_and_grads(self, y, target, mode="train", update_stats=True):
        """MSE loss (mean over all pixels) and the gradient of every parameter."""
        xb, _ = _as_batch(y)
        tb, _ = _as_batch(target)
        if xb.shape != tb.shape:
            raise DimensionError(f"input {xb.shape} and target {tb.shape} differ")
        out = self.forward(xb, mode == "train", update_stats)
        resid = out - tb
        loss = float(np.mean(resid * resid))
        self.backward(2.0 * resid / resid.size)
        grads = {name: g.copy() for name, g in self.named_grads()}
        return loss, grads


class SSNet3L(NetworkModel):
    """conv(k1)+ReLU+BN -> conv(k2)+ReLU+BN -> conv(k3) to one channel."""

    architecture = "SSNet3L"

    def __init__(self, widths=(16, 16), kernel_sizes=(9, 5, 3), seed=0, skip=False,
                 padding="zero", batchnorm=True):
        super().__init__()
        widths = tuple(int(w) for w in widths)
        kernel_sizes = tuple(int(k) for k in kernel_sizes)
        if len(widths) != 2 or min(widths) < 1:
            raise InvalidParameterError(f"widths must be two positive hidden widths, got {widths}")
        if len(kernel_sizes) != 3 or any(k < 1 or k % 2 == 0 for k in kernel_sizes):
            raise InvalidParameterError(f"kernel sizes must be three odd integers, got {kernel_sizes}")
        rng = np.random.default_rng(seed)
        w1, w2 = widths
        k1, k2, k3 = kernel_sizes
        layers = [Conv2d(1, w1, k1, padding, rng), ReLU()]
        if batchnorm:
            layers.append(BatchNorm2d(w1, BN_MOMENTUM, BN_EPS))
        layers += [Conv2d(w1, w2, k2, padding, rng), ReLU()]
        if batchnorm:
            layers.append(BatchNorm2d(w2, BN_MOMENTUM, BN_EPS))
        layers.append(Conv2d(w2, 1, k3, padding, rng))
        layers[0].need_input_grad = False
        self.children["body"] = Sequential(*layers)
        self.skip = bool(skip)
        self.config = dict(widths=list(widths), kernel_sizes=list(kernel_sizes), seed=int(seed),
                           skip=self.skip, padding=padding, batchnorm=bool(batchnorm))

    def _forward(self, x, train, update_stats):
        out = self.children["body"].forward(x, train, update_stats)
        return out + x if self.skip else out

    def _backward(self, dout):
        self.children["body"].backward(dout)


class MiniUNet(NetworkModel):
    """Two-resolution UNet with residual conv blocks and an input-to-output skip.

    Level 1 works at full resolution with ``c`` channels, level 2 at half
    resolution with ``2c``.  Downsampling is 2x2 average pooling, upsampling is
    nearest neighbour, and the upsampled features are concatenated with the
    level-1 features before decoding.
    """

    architecture = "MiniUNet"

    def __init__(self, base_width=8, seed=0, padding="zero"):
        super().__init__()
        c = int(base_width)
        if c < 1:
            raise InvalidParameterError(f"base_width must be >= 1, got {base_width}")
        rng = np.random.default_rng(seed)

        def stage(cin, cout):
            return Sequential(
                Conv2d(cin, cout, 3, padding, rng), ReLU(), BatchNorm2d(cout, BN_MOMENTUM, BN_EPS),
                ResidualBlock(cout, padding, rng, BN_MOMENTUM, BN_EPS),
            )

        self.children["enc1"] = stage(1, c)
        self.children["enc2"] = stage(c, 2 * c)
        self.children["dec1"] = stage(3 * c, c)
        self.children["head"] = Conv2d(c, 1, 3, padding, rng)
        self.children["enc1"].layers[0].need_input_grad = False
        self.width = c
        self.config = dict(base_width=c, seed=int(seed), padding=padding)

    def check_input(self, x):
        if x.shape[-1] % 2 or x.shape[-2] % 2:
            raise DimensionError(f"MiniUNet needs even spatial dimensions, got {x.shape[-2:]}")

    def _forward(self, x, train, update_stats):
        ch = self.children
        f1 = ch["enc1"].forward(x, train, update_stats)
        f2 = ch["enc2"].forward(avg_pool2(f1), train, update_stats)
        cat = np.concatenate([upsample2(f2), f1], axis=1)
        d1 = ch["dec1"].forward(cat, train, update_stats)
        return x + ch["head"].forward(d1, train, update_stats)

    def _backward(self, dout):
        ch = self.children
        dd1 = ch["head"].backward(dout)
        dcat = ch["dec1"].backward(dd1)
        c2 = 2 * self.width
        df2 = upsample2_backward(dcat[:, :c2])
        df1 = dcat[:, c2:] + avg_pool2_backward(ch["enc2"].backward(df2))
        ch["enc1"].backward(df1)


def build_ssnet3l(widths=(16, 16), kernel_sizes=(9, 5, 3), seed=0, skip=False,
                  padding="zero") -> SSNet3L:
    return SSNet3L(widths, kernel_sizes, seed, skip, padding)


def build_mini_unet(base_width=8, seed=0, padding="zero") -> MiniUNet:
    return MiniUNet(base_width, seed, padding)


def build_model(architecture: str, config: dict) -> NetworkModel:
    """Rebuild a model from its ``architecture`` tag and ``config`` dict."""
    if architecture == SSNet3L.architecture:
        return SSNet3L(**config)
    if architecture == MiniUNet.architecture:
        return MiniUNet(**config)
    raise InvalidParameterError(f"unknown architecture {architecture!r}")


def forward(model: NetworkModel, y, mode="eval"):
    return model(y, mode)


def backward(model: NetworkModel, y, target, mode="train"):
    """Return ``(grads, loss)`` for the MSE loss of ``model(y)`` against ``target``."""
    loss, grads = model.loss_and_grads(y, target, mode)
    return grads, loss
