"""Datasets of (sharp, blurred) image pairs: synthesis, ingestion and storage."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidParameterError
from ..imageio import read_grayscale, read_raw, write_raw
from ..imaging import BlurOperator, gaussian_psf
from ..metrics import TestSet

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm", ".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp", ".raw")


class IngestError(OSError):
    """No usable patches could be extracted."""


@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    provenance: str = ""
    psf: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.x_train.shape[1:] if len(self.x_train) else self.x_test.shape[1:]

    @property
    def split(self):
        return {"train": len(self.x_train), "test": len(self.x_test)}

    def test_set(self) -> TestSet:
        return TestSet(self.x_test, self.y_test)

    def train_set(self) -> TestSet:
        return TestSet(self.x_train, self.y_train)

    def save(self, directory) -> None:
        d = Path(directory)
        for part in ("train", "test"):
            (d / part).mkdir(parents=True, exist_ok=True)
            xs, ys = getattr(self, f"x_{part}"), getattr(self, f"y_{part}")
            for i, (x, y) in enumerate(zip(xs, ys)):
                write_raw(d / part / f"x_{i:05d}.raw", x)
                write_raw(d / part / f"y_{i:05d}.raw", y)
        manifest = {"provenance": self.provenance, "psf": self.psf, "split": self.split,
                    "shape": list(self.shape)}
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory) -> "Dataset":
        d = Path(directory)
        manifest = json.loads((d / "manifest.json").read_text())
        parts = {}
        shape = tuple(manifest["shape"])
        for part in ("train", "test"):
            n = manifest["split"][part]
            for kind in ("x", "y"):
                imgs = [read_raw(d / part / f"{kind}_{i:05d}.raw") for i in range(n)]
                parts[f"{kind}_{part}"] = np.stack(imgs) if imgs else np.zeros((0,) + shape)
        return cls(provenance=manifest["provenance"], psf=manifest["psf"], **parts)


def image_hash(x) -> str:
    return hashlib.sha256(np.ascontiguousarray(x, dtype="<f8").tobytes()).hexdigest()


def check_disjoint(ds: Dataset) -> bool:
    """True when no ground-truth image occurs in both splits."""
    train = {image_hash(x) for x in ds.x_train}
    return not any(image_hash(x) in train for x in ds.x_test)


def _lowpass_noise(rng, size, corr):
    f = np.fft.fftfreq(size)
    r2 = f[:, None] ** 2 + f[None, :] ** 2
    field_ = np.fft.ifft2(np.fft.fft2(rng.standard_normal((size, size))) * np.exp(-r2 * (corr * np.pi) ** 2 * 2)).real
    return field_ / (field_.std() + 1e-12)


def synth_scene(rng, size: int) -> np.ndarray:
    """Piecewise-smooth grayscale scene: gradient, rectangles, disks and texture."""
    i = np.arange(size)[:, None] / size
    j = np.arange(size)[None, :] / size
    theta = rng.uniform(0, 2 * np.pi)
    img = rng.uniform(0.2, 0.6) + rng.uniform(-0.2, 0.2) * (np.cos(theta) * i + np.sin(theta) * j)
    for _ in range(rng.integers(2, 6)):
        h, w = rng.integers(size // 8, size // 2, size=2)
        r0, c0 = rng.integers(0, size - h), rng.integers(0, size - w)
        img[r0:r0 + h, c0:c0 + w] = rng.uniform(0.0, 1.0)
    for _ in range(rng.integers(2, 5)):
        cr, cc = rng.uniform(0, 1, size=2)
        rad = rng.uniform(0.05, 0.2)
        mask = (i - cr) ** 2 + (j - cc) ** 2 < rad**2
        img[mask] = rng.uniform(0.0, 1.0)
    img = img + rng.uniform(0.02, 0.08) * _lowpass_noise(rng, size, rng.uniform(2.0, 6.0))
    return np.clip(img, 0.0, 1.0)


def _blur_all(x, psf_radius, sigma_g):
    op = BlurOperator(gaussian_psf(psf_radius, sigma_g), x.shape[1:])
    return op.apply(x)


def synthesize(count: int, size: int, seed: int = 0, test_count: int | None = None,
               psf_radius: int = 5, sigma_g: float = 1.3) -> Dataset:
    """Procedural dataset; scene ``i`` depends only on ``(seed, i)``.

    The last ``test_count`` scenes (default 30%) form the test split.
    """
    if count < 2:
        raise InvalidParameterError("count must be >= 2")
    if test_count is None:
        test_count = max(1, int(round(0.3 * count)))
    if not 0 < test_count < count:
        raise InvalidParameterError(f"test_count must be in [1, {count - 1}]")
    x = np.stack([synth_scene(np.random.default_rng([seed, k]), size) for k in range(count)])
    y = _blur_all(x, psf_radius, sigma_g)
    n_train = count - test_count
    return Dataset(x[:n_train], y[:n_train], x[n_train:], y[n_train:],
                   provenance=f"synth(count={count}, size={size}, seed={seed})",
                   psf={"radius": psf_radius, "sigma_g": sigma_g})


def extract_patches(directory, patch_size: int):
    """Non-overlapping ``patch_size`` crops of every readable image, in [0, 1]."""
    patches = []
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    for path in files:
        try:
            img = read_grayscale(path)
        except Exception as exc:  # any decoder failure: skip the file
            log.warning("skipping unreadable image %s: %s", path, exc)
            continue
        img = np.clip(img, 0.0, 1.0)
        rows, cols = img.shape[0] // patch_size, img.shape[1] // patch_size
        for r in range(rows):
            for c in range(cols):
                patches.append(img[r * patch_size:(r + 1) * patch_size, c * patch_size:(c + 1) * patch_size])
    return patches


def ingest(directory, patch_size: int, seed: int = 0, train_fraction: float = 0.7,
           psf_radius: int = 5, sigma_g: float = 1.3) -> Dataset:
    """Patch, deduplicate and split a directory of images (deterministic under ``seed``)."""
    patches = extract_patches(directory, patch_size)
    if not patches:
        raise IngestError(f"no {patch_size}x{patch_size} patches found in {directory}")
    unique, seen = [], set()
    for p in patches:
        h = image_hash(p)
        if h not in seen:
            seen.add(h)
            unique.append(p)
    if len(unique) < len(patches):
        log.info("dropped %d duplicate patches", len(patches) - len(unique))
    x = np.stack(unique)
    order = np.random.default_rng(seed).permutation(len(x))
    n_train = int(round(train_fraction * len(x)))
    if len(x) >= 2:
        n_train = min(max(n_train, 1), len(x) - 1)
    x = x[order]
    y = _blur_all(x, psf_radius, sigma_g)
    return Dataset(x[:n_train], y[:n_train], x[n_train:], y[n_train:],
                   provenance=f"ingest({Path(directory).name}, patch={patch_size}, seed={seed})",
                   psf={"radius": psf_radius, "sigma_g": sigma_g})
