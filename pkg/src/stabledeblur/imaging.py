"""Forward blur model: Gaussian PSFs, periodic blur operators and additive noise.

Images are plain 2-D ``float64`` arrays.  Operator methods also accept stacks
of images with arbitrary leading dimensions, acting on the last two axes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InvalidParameterError

__all__ = [
    "Psf",
    "BlurOperator",
    "NoiseSpec",
    "as_image",
    "gaussian_psf",
    "identity_psf",
    "blur_apply",
    "blur_adjoint",
    "pseudo_inverse_apply",
    "noise_realization",
    "add_noise",
]


def as_image(a, name="image") -> np.ndarray:
    """Return ``a`` as a finite, non-empty float64 array of ndim >= 2."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim < 2 or arr.shape[-1] == 0 or arr.shape[-2] == 0:
        raise DimensionError(f"{name} must have at least 2 non-empty dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class Psf:
    """Square point spread function of size ``(2*radius+1)**2``."""

    radius: int
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        side = 2 * self.radius + 1
        if self.radius < 0 or w.shape != (side, side):
            raise InvalidParameterError(
                f"PSF weights must be {side}x{side} for radius {self.radius}, got {w.shape}"
            )
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return 2 * self.radius + 1

    def normalized(self) -> "Psf":
        total = self.weights.sum()
        if total == 0:
            raise InvalidParameterError("cannot normalize a PSF with zero total weight")
        return Psf(self.radius, self.weights / total)


def gaussian_psf(radius: int, sigma_g: float) -> Psf:
    """Gaussian kernel exp(-(i^2 + j^2) / (2 sigma_g^2)) on [-radius, radius]^2, summing to 1."""
    if radius < 0 or int(radius) != radius:
        raise InvalidParameterError(f"radius must be a non-negative integer, got {radius!r}")
    if not sigma_g > 0:
        raise InvalidParameterError(f"sigma_g must be positive, got {sigma_g!r}")
    i = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(i[:, None] ** 2 + i[None, :] ** 2) / (2.0 * sigma_g**2))
    return Psf(int(radius), w / w.sum())


def identity_psf() -> Psf:
    return Psf(0, np.ones((1, 1)))


def _embed_psf(psf: Psf, shape) -> np.ndarray:
    """Zero-pad the PSF to ``shape`` with its center moved to index (0, 0)."""
    h, w = shape
    r = psf.radius
    offs = np.arange(-r, r + 1)
    rows = (offs[:, None] % h) * np.ones((1, psf.size), dtype=int)
    cols = np.ones((psf.size, 1), dtype=int) * (offs[None, :] % w)
    out = np.zeros((h, w))
    # np.add.at so kernels larger than the image wrap around correctly
    np.add.at(out, (rows, cols), psf.weights)
    return out


class BlurOperator:
    """Circulant (periodic-boundary) blur operator diagonalized by the 2-D DFT.

    ``transfer`` holds the DFT eigenvalues of the circulant matrix, so the
    forward map, its adjoint and its pseudo-inverse are all pointwise
    operations in the Fourier domain.
    """

    boundary = "periodic"

    def __init__(self, psf: Psf, shape):
        shape = tuple(int(s) for s in shape)
        if len(shape) != 2 or min(shape) <= 0:
            raise InvalidParameterError(f"shape must be (height, width) with positive entries, got {shape}")
        self.psf = psf
        self.shape = shape
        transfer = np.fft.fft2(_embed_psf(psf, shape))
        transfer.setflags(write=False)
        self.transfer = transfer

    def __repr__(self):
        return f"BlurOperator(radius={self.psf.radius}, shape={self.shape}, boundary='periodic')"

    def _check(self, x, name):
        x = as_image(x, name)
        if x.shape[-2:] != self.shape:
            raise DimensionError(f"{name} has spatial shape {x.shape[-2:]}, operator expects {self.shape}")
        return x

    def _spectral(self, x, mult):
        out = np.fft.ifft2(np.fft.fft2(x) * mult)
        return np.ascontiguousarray(out.real)

    @property
    def norm(self) -> float:
        """Spectral norm max|transfer|."""
        return float(np.abs(self.transfer).max())

    def apply(self, x) -> np.ndarray:
        return self._spectral(self._check(x, "x"), self.transfer)

    def adjoint(self, y) -> np.ndarray:
        return self._spectral(self._check(y, "y"), np.conj(self.transfer))

    def retained(self, tau: float = 1e-10) -> np.ndarray:
        """Boolean mask of frequencies kept by the thresholded pseudo-inverse."""
        mag = np.abs(self.transfer)
        return mag > tau * mag.max()

    def pinv(self, y, tau: float = 1e-10) -> np.ndarray:
        if tau < 0:
            raise InvalidParameterError(f"tau must be non-negative, got {tau}")
        y = self._check(y, "y")
        keep = self.retained(tau)
        inv = np.zeros_like(self.transfer)
        inv[keep] = 1.0 / self.transfer[keep]
        return self._spectral(y, inv)

    __call__ = apply


def blur_apply(op: BlurOperator, x) -> np.ndarray:
    return op.apply(x)


def blur_adjoint(op: BlurOperator, y) -> np.ndarray:
    return op.adjoint(y)


def pseudo_inverse_apply(op: BlurOperator, y, tau: float = 1e-10) -> np.ndarray:
    return op.pinv(y, tau)


@dataclass(frozen=True)
class NoiseSpec:
    """I.i.d. Gaussian noise level and the seed of its generator."""

    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise InvalidParameterError(f"sigma must be non-negative, got {self.sigma!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidParameterError(f"seed must fit in 64 unsigned bits, got {self.seed!r}")

    def for_task(self, index: int) -> "NoiseSpec":
        """Independent spec for task ``index`` (one generator per task)."""
        state = np.random.SeedSequence([int(self.seed), int(index)]).generate_state(1, np.uint64)[0]
        return NoiseSpec(self.sigma, int(state))


def noise_realization(shape, spec: NoiseSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    return spec.sigma * rng.standard_normal(shape)


def add_noise(y, spec: NoiseSpec):
    """Return ``(y + e, ||e||_2)`` with ``e ~ N(0, sigma^2 I)`` drawn from ``spec.seed``."""
    y = as_image(y, "y")
    if spec.sigma == 0:
        return y.copy(), 0.0
    e = noise_realization(y.shape, spec)
    return y + e, float(np.linalg.norm(e))
