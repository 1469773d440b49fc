"""Accuracy and noise-stability estimators for image reconstructors.

A *reconstructor* here is any callable mapping a stack of observations of
shape (N, H, W) to a stack of estimates of the same shape.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, InvalidParameterError
from .imaging import BlurOperator, NoiseSpec, noise_realization

__all__ = [
    "TestSet",
    "ImageRecord",
    "StabilityReport",
    "reconstruction_error",
    "empirical_accuracy",
    "empirical_stability",
    "theorem1_bound",
    "white_noise_gain",
    "ssim",
]

SSIM_WINDOW_RADIUS = 5
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class TestSet(NamedTuple):
    """Ground-truth images and their noiseless blurred observations, both (N, H, W)."""

    __test__ = False
    x: np.ndarray
    y: np.ndarray


def _test_set(ts) -> TestSet:
    x, y = ts
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim == 2:
        x, y = x[None], y[None]
    if x.shape != y.shape or x.ndim != 3:
        raise DimensionError(f"test set stacks must share an (N, H, W) shape, got {x.shape} and {y.shape}")
    if len(x) == 0:
        raise InvalidParameterError("test set is empty")
    return TestSet(x, y)


def _norms(a):
    return np.sqrt(np.sum(a * a, axis=(-2, -1)))


def reconstruction_error(psi_output, x_gt):
    """Euclidean norm of ``psi_output - x_gt`` (per image for stacks)."""
    a = np.asarray(psi_output, dtype=np.float64)
    b = np.asarray(x_gt, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    err = _norms(a - b)
    return float(err) if err.ndim == 0 else err


def empirical_accuracy(reconstructor, test_set):
    """``(eta_hat, 1/eta_hat)``: worst noiseless reconstruction error over the test set.

    ``1/eta_hat`` is ``math.inf`` when ``eta_hat == 0``.
    """
    ts = _test_set(test_set)
    errs = reconstruction_error(np.asarray(reconstructor(ts.y)), ts.x)
    eta = float(np.max(errs))
    return eta, (math.inf if eta == 0 else 1.0 / eta)


@dataclass
class ImageRecord:
    id: int
    err_noiseless: float
    err_noisy: float
    noise_norm: float
    ssim: float


@dataclass
class StabilityReport:
    eta_hat: float
    eta_hat_inv: float
    c_hat: float
    per_image: list = field(default_factory=list)
    delta_stable: bool = False
    sigma: float = 0.0
    seed: int = 0
    reconstructor_tag: str = ""
    notes: dict = field(default_factory=dict)

    def ratios(self) -> np.ndarray:
        return np.array([(r.err_noisy - self.eta_hat) / r.noise_norm for r in self.per_image])

    def errors(self) -> np.ndarray:
        return np.array([r.err_noisy for r in self.per_image])

    def summary(self) -> dict:
        ssims = np.array([r.ssim for r in self.per_image])
        out = {
            "reconstructor_tag": self.reconstructor_tag,
            "sigma": self.sigma,
            "seed": self.seed,
            "eta_hat": self.eta_hat,
            "eta_hat_inv": "+inf" if math.isinf(self.eta_hat_inv) else self.eta_hat_inv,
            "c_hat": self.c_hat,
            "delta_stable": self.delta_stable,
            "n_images": len(self.per_image),
            "mean_err_noisy": float(self.errors().mean()),
            "mean_ssim": float(ssims.mean()),
            "median_ssim": float(np.median(ssims)),
        }
        out.update(self.notes)
        return out

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "err_noiseless", "err_noisy", "noise_norm", "ratio", "ssim"])
            for r, ratio in zip(self.per_image, self.ratios()):
                w.writerow([r.id, repr(r.err_noiseless), repr(r.err_noisy), repr(r.noise_norm),
                            repr(float(ratio)), repr(r.ssim)])

    def write_scatter_csv(self, path) -> None:
        """Excess error vs. noise norm per image; ``stable`` marks points under the bisector."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", "eta_hat", "err_noisy", "excess_error", "noise_norm", "ratio", "stable"])
            for r, ratio in zip(self.per_image, self.ratios()):
                w.writerow([r.id, repr(self.eta_hat), repr(r.err_noisy), repr(r.err_noisy - self.eta_hat),
                            repr(r.noise_norm), repr(float(ratio)), int(ratio < 1)])


def noisy_inputs(y, sigma: float, seed: int):
    """Per-image noise fields, one generator per image index; returns (y + e, ||e||)."""
    e = np.stack([noise_realization(y.shape[1:], NoiseSpec(sigma, seed).for_task(i))
                  for i in range(len(y))])
    return y + e, _norms(e)


def empirical_stability(reconstructor, test_set, sigma: float, seed: int = 0, eta_hat=None,
                        tag: str = "", compute_ssim: bool = True) -> StabilityReport:
    """Empirical stability constant: max over images of ``(||psi(Kx+e) - x|| - eta_hat) / ||e||``.

    Each image gets its own noise realization drawn from ``(seed, image index)``,
    so reports built with the same seed are paired across reconstructors.
    """
    if not sigma > 0:
        raise InvalidParameterError("sigma must be positive")
    ts = _test_set(test_set)
    clean_err = reconstruction_error(np.asarray(reconstructor(ts.y)), ts.x)
    if eta_hat is None:
        eta_hat = float(clean_err.max())
    noisy, enorm = noisy_inputs(ts.y, sigma, seed)
    recon = np.asarray(reconstructor(noisy))
    err = reconstruction_error(recon, ts.x)
    scores = ssim(recon, ts.x) if compute_ssim else np.full(len(err), np.nan)
    ratios = (err - eta_hat) / enorm
    c_hat = float(ratios.max())
    records = [ImageRecord(i, float(clean_err[i]), float(err[i]), float(enorm[i]), float(scores[i]))
               for i in range(len(err))]
    return StabilityReport(
        eta_hat=float(eta_hat),
        eta_hat_inv=math.inf if eta_hat == 0 else 1.0 / eta_hat,
        c_hat=c_hat,
        per_image=records,
        delta_stable=bool(0 <= c_hat < 1),
        sigma=float(sigma),
        seed=int(seed),
        reconstructor_tag=tag,
    )


def worst_retained_mode(op: BlurOperator, tau: float = 1e-10):
    """Frequency index with the smallest ``|transfer|`` kept by the pseudo-inverse."""
    mag = np.abs(op.transfer)
    masked = np.where(op.retained(tau), mag, np.inf)
    return np.unravel_index(np.argmin(masked), mag.shape)


def theorem1_bound(op: BlurOperator, eta_hat: float, delta: float, tau: float = 1e-10):
    """Lower bound ``(||K^+ e|| - 2 eta_hat) / ||e||`` on the stability constant.

    ``e`` is the real Fourier mode of norm ``delta`` at the retained frequency
    with the smallest transfer magnitude, the direction the pseudo-inverse
    amplifies most.  Returns ``(bound, e)``.
    """
    if not delta > 0:
        raise InvalidParameterError("delta must be positive")
    k, l = worst_retained_mode(op, tau)
    h, w = op.shape
    i = np.arange(h)[:, None]
    j = np.arange(w)[None, :]
    mode = np.cos(2 * np.pi * (k * i / h + l * j / w))
    e = delta * mode / np.linalg.norm(mode)
    enorm = np.linalg.norm(e)
    bound = (np.linalg.norm(op.pinv(e, tau)) - 2.0 * eta_hat) / enorm
    return float(bound), e


def white_noise_gain(gain_spectrum) -> float:
    """``sqrt(E||A e||^2 / E||e||^2)`` for white ``e`` and a circulant ``A`` with these gains."""
    g = np.abs(np.asarray(gain_spectrum))
    return float(np.sqrt(np.mean(g * g)))


def _gaussian_window():
    i = np.arange(-SSIM_WINDOW_RADIUS, SSIM_WINDOW_RADIUS + 1, dtype=np.float64)
    g = np.exp(-(i * i) / (2 * SSIM_SIGMA**2))
    return g / g.sum()


def _filter_valid(a, g):
    # separable correlation restricted to positions where the window fits
    a = sliding_window_view(a, len(g), axis=-1) @ g
    return np.swapaxes(sliding_window_view(np.swapaxes(a, -1, -2), len(g), axis=-1) @ g, -1, -2)


def ssim(x, y, data_range: float = 1.0):
    """Mean structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Local statistics use population (biased) moments and are evaluated only
    where the window lies fully inside the image.  Stacks return one value
    per image.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    side = 2 * SSIM_WINDOW_RADIUS + 1
    if x.ndim < 2 or min(x.shape[-2:]) < side:
        raise DimensionError(f"SSIM needs images of at least {side}x{side}, got {x.shape}")
    g = _gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    vx = _filter_valid(x * x, g) - mx * mx
    vy = _filter_valid(y * y, g) - my * my
    cxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    out = np.mean(num / den, axis=(-2, -1))
    return float(out) if out.ndim == 0 else out
