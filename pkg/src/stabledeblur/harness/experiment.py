"""Experiment drivers: train the NN / FiNN / StNN variants, evaluate, sweep and report.

Output layout under ``output.dir``::

    config.ini                    fully resolved configuration
    dataset/                      stored dataset (manifest.json + raw files)
    models/<variant>.ckpt         checkpoints
    models/<variant>_loss.csv     per-epoch loss history
    reports/<variant>_s<sigma>.csv / .json / _scatter.csv
    sweep.csv                     error vs sigma per variant
    gallery/*.pgm                 fixed image subset, 16-bit
    summary.json
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import TrainingDivergedError
from ..imageio import write_pgm
from ..imaging import BlurOperator, gaussian_psf
from ..metrics import StabilityReport, empirical_stability, noisy_inputs, reconstruction_error, ssim
from ..network import NetworkModel, build_model, load_checkpoint, save_checkpoint, train
from ..network import write_loss_history
from ..stabilizers import (
    TIKHONOV_OBJECTIVE,
    FilterStabilizer,
    IdentityStabilizer,
    IterativeStabilizer,
    TikhonovProblem,
)
from .config import ExperimentConfig, dump_config
from .data import Dataset, check_disjoint, ingest, synthesize

log = logging.getLogger(__name__)


def sigma_tag(sigma: float) -> str:
    return f"s{sigma:g}"


def blur_operator(cfg: ExperimentConfig, shape) -> BlurOperator:
    return BlurOperator(gaussian_psf(cfg.psf.radius, cfg.psf.sigma_g), shape)


def build_dataset(cfg: ExperimentConfig) -> Dataset:
    d = cfg.data
    if d.source == "synth":
        return synthesize(d.count, d.patch_size, seed=d.seed, test_count=d.test_count,
                          psf_radius=cfg.psf.radius, sigma_g=cfg.psf.sigma_g)
    return ingest(d.dataset_dir, d.patch_size, seed=d.seed, train_fraction=d.train_fraction,
                  psf_radius=cfg.psf.radius, sigma_g=cfg.psf.sigma_g)


def prepare_dataset(cfg: ExperimentConfig, out_dir=None) -> Dataset:
    """Load ``<out>/dataset`` if present, otherwise build and store it."""
    root = Path(out_dir or cfg.output.dir) / "dataset"
    if (root / "manifest.json").exists():
        return Dataset.load(root)
    ds = build_dataset(cfg)
    if not check_disjoint(ds):
        raise ValueError("train and test splits share an image")
    ds.save(root)
    return ds


def build_stabilizer(cfg: ExperimentConfig, variant: str, shape):
    if variant == "NN":
        return IdentityStabilizer()
    if variant == "FiNN":
        return FilterStabilizer(radius=cfg.filter.radius, sigma_f=cfg.filter.sigma_f)
    problem = TikhonovProblem(blur_operator(cfg, shape), cfg.iterative.lam)
    return IterativeStabilizer(problem, cfg.iterative.method, cfg.iterative.iterations)


def build_network(cfg: ExperimentConfig) -> NetworkModel:
    n = cfg.network
    if n.architecture == "SSNet3L":
        conf = {"widths": list(n.widths), "kernel_sizes": list(n.kernel_sizes), "seed": n.seed,
                "skip": n.skip, "padding": n.padding}
    else:
        conf = {"base_width": n.base_width, "seed": n.seed, "padding": n.padding}
    return build_model(n.architecture, conf)


class Pipeline:
    """``psi(phi(y))``: a trained network behind a stabilizer."""

    def __init__(self, variant: str, phi, model: NetworkModel):
        self.variant = variant
        self.phi = phi
        self.model = model

    def __call__(self, y):
        return self.model(self.phi(y))


def _trained_variant(cfg, variant):
    # under post-hoc placement every variant reuses the plain network
    return variant if cfg.experiment.placement == "train" else "NN"


def train_variants(cfg: ExperimentConfig, ds: Dataset, out_dir=None, histories=None) -> dict:
    """Train one network per variant (or one shared network, post-hoc placement).

    Checkpoints and loss histories go to ``<out>/models``.  ``histories`` (a
    dict) receives the loss history of every network trained, including a
    partial one when training diverges.
    """
    models_dir = Path(out_dir or cfg.output.dir) / "models"
    models_dir.mkdir(parents=True, exist_ok=True)
    histories = {} if histories is None else histories
    shape = ds.shape
    trained = {}
    for variant in cfg.experiment.variants:
        name = _trained_variant(cfg, variant)
        if name in trained:
            continue
        phi = build_stabilizer(cfg, name, shape)
        model = build_network(cfg)
        log.info("training %s network on %d pairs", name, len(ds.x_train))
        try:
            histories[name] = train(model, ds.y_train, ds.x_train, cfg.train, preprocess=phi)
        except TrainingDivergedError as exc:
            histories[name] = exc.history
            write_loss_history(models_dir / f"{name}_loss.csv", exc.history)
            raise
        save_checkpoint(model, models_dir / f"{name}.ckpt")
        write_loss_history(models_dir / f"{name}_loss.csv", histories[name])
        trained[name] = model
    return {v: Pipeline(v, build_stabilizer(cfg, v, shape), trained[_trained_variant(cfg, v)])
            for v in cfg.experiment.variants}


def load_variants(cfg: ExperimentConfig, shape, out_dir=None) -> dict:
    models_dir = Path(out_dir or cfg.output.dir) / "models"
    cache = {}
    pipes = {}
    for v in cfg.experiment.variants:
        name = _trained_variant(cfg, v)
        if name not in cache:
            cache[name] = load_checkpoint(models_dir / f"{name}.ckpt")
        pipes[v] = Pipeline(v, build_stabilizer(cfg, v, shape), cache[name])
    return pipes


def _report_notes(cfg, pipe: Pipeline) -> dict:
    return {
        "objective": TIKHONOV_OBJECTIVE,
        "stabilizer": repr(pipe.phi),
        "architecture": pipe.model.architecture,
        "placement": cfg.experiment.placement,
        "train_sigma": cfg.noise.train_sigma,
        "experiment": cfg.experiment.kind,
    }


def evaluate(cfg: ExperimentConfig, ds: Dataset, pipelines: dict, sigmas=None, out_dir=None) -> dict:
    """Stability reports for every (variant, sigma); written under ``<out>/reports``.

    All variants see the same noise realizations (seed ``noise.eval_seed``).
    """
    reports_dir = Path(out_dir or cfg.output.dir) / "reports"
    reports_dir.mkdir(parents=True, exist_ok=True)
    sigmas = cfg.noise.test_sigmas if sigmas is None else sigmas
    test = ds.test_set()
    reports = {}
    for variant, pipe in pipelines.items():
        for sigma in sigmas:
            rep = empirical_stability(pipe, test, sigma, seed=cfg.noise.eval_seed, tag=variant)
            rep.notes = _report_notes(cfg, pipe)
            stem = f"{variant}_{sigma_tag(sigma)}"
            rep.write_csv(reports_dir / f"{stem}.csv")
            rep.write_json(reports_dir / f"{stem}.json")
            rep.write_scatter_csv(reports_dir / f"{stem}_scatter.csv")
            reports[(variant, sigma)] = rep
    return reports


def sweep(cfg: ExperimentConfig, ds: Dataset, pipelines: dict, sigmas=None, out_dir=None):
    """Reconstruction error against noise level for every variant; writes ``sweep.csv``."""
    sigmas = cfg.noise.sweep_sigmas if sigmas is None else sigmas
    out = Path(out_dir or cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    x, y = ds.x_test, ds.y_test
    g = cfg.output.gallery_indices[0] if cfg.output.gallery_indices else 0
    rows = []
    for variant, pipe in pipelines.items():
        for sigma in sigmas:
            noisy = y if sigma == 0 else noisy_inputs(y, sigma, cfg.noise.eval_seed)[0]
            recon = np.asarray(pipe(noisy))
            err = reconstruction_error(recon, x)
            rows.append({
                "sigma": float(sigma),
                "variant": variant,
                "mean_err": float(err.mean()),
                "median_err": float(np.median(err)),
                "mean_ssim": float(np.mean(ssim(recon, x))),
                "gallery_err": float(err[g]),
            })
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sigma", "variant", "mean_err", "median_err", "mean_ssim", "gallery_err"])
        for r in rows:
            w.writerow([repr(r["sigma"]), r["variant"], repr(r["mean_err"]), repr(r["median_err"]),
                        repr(r["mean_ssim"]), repr(r["gallery_err"])])
    return rows


def report_gallery(ds: Dataset, reconstructors: dict, indices, out_dir, sigma: float = 0.05,
                   seed: int = 0):
    """Write ground truth, blurred, noisy and every reconstruction as 16-bit PGM.

    Returns the list of written paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = len(ds.x_test)
    bad = [i for i in indices if not 0 <= i < n]
    if bad:
        raise IndexError(f"gallery indices {bad} outside test split of {n} images")
    idx = list(indices)
    noisy = noisy_inputs(ds.y_test, sigma, seed)[0][idx] if sigma > 0 else ds.y_test[idx]
    recons = {v: np.asarray(r(noisy)) for v, r in reconstructors.items()}
    tag = sigma_tag(sigma)
    paths = []

    def emit(name, img):
        path = out / name
        try:
            write_pgm(path, img, bits=16)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        paths.append(path)

    for k, i in enumerate(idx):
        emit(f"img{i:04d}_gt.pgm", ds.x_test[i])
        emit(f"img{i:04d}_blurred.pgm", ds.y_test[i])
        emit(f"img{i:04d}_noisy_{tag}.pgm", noisy[k])
        for v, rec in recons.items():
            emit(f"img{i:04d}_{v}_{tag}.pgm", rec[k])
    return paths


@dataclass
class ExperimentResult:
    status: str
    reports: dict = field(default_factory=dict)
    sweep: list = field(default_factory=list)
    histories: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def _write_summary(out: Path, summary: dict):
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Full pipeline: dataset, training, stability reports, sweep, gallery.

    On divergence a partial ``summary.json`` (status ``diverged``) is written
    and :class:`TrainingDivergedError` is re-raised.
    """
    out = Path(cfg.output.dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.ini")
    ds = prepare_dataset(cfg)
    histories = {}
    summary = {
        "experiment": cfg.experiment.kind,
        "dataset": ds.provenance,
        "split": ds.split,
        "objective": TIKHONOV_OBJECTIVE,
    }
    try:
        pipelines = train_variants(cfg, ds, histories=histories)
    except TrainingDivergedError as exc:
        summary.update(status="diverged", error=str(exc), epoch=exc.epoch,
                       final_losses={k: (h[-1] if h else None) for k, h in histories.items()})
        _write_summary(out, summary)
        raise
    reports = evaluate(cfg, ds, pipelines)
    rows = sweep(cfg, ds, pipelines)
    report_gallery(ds, pipelines, cfg.output.gallery_indices, out / "gallery",
                   sigma=cfg.output.gallery_sigma, seed=cfg.noise.eval_seed)
    summary.update(
        status="ok",
        final_losses={k: h[-1] if h else None for k, h in histories.items()},
        c_hat={f"{v}_{sigma_tag(s)}": r.c_hat for (v, s), r in reports.items()},
        eta_hat={f"{v}_{sigma_tag(s)}": r.eta_hat for (v, s), r in reports.items()},
        mean_err_noisy={f"{v}_{sigma_tag(s)}": float(r.errors().mean()) for (v, s), r in reports.items()},
    )
    _write_summary(out, summary)
    return ExperimentResult("ok", reports, rows, histories, summary)


def paired_mean_difference(a: StabilityReport, b: StabilityReport) -> float:
    """Mean over images of ``err_a - err_b`` (reports must share the noise seed)."""
    if a.seed != b.seed or len(a.per_image) != len(b.per_image):
        raise ValueError("reports are not paired")
    return float(np.mean(a.errors() - b.errors()))
