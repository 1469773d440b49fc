"""Command-line entry point: ``stabledeblur <command> [--config FILE] [--section.key VALUE ...]``.

Exit codes: 0 success, 2 configuration error, 3 training divergence, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from ..errors import ConfigError, TrainingDivergedError
from .config import dump_config, load_config
from .data import ingest, synthesize
from .experiment import (
    evaluate,
    load_variants,
    prepare_dataset,
    report_gallery,
    run_experiment,
    sweep,
    train_variants,
)

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4

COMMANDS = {
    "synth": "generate a procedural dataset into <output.dir>/dataset",
    "ingest": "patch a directory of images (data.dataset_dir) into <output.dir>/dataset",
    "train": "train the configured variants and write checkpoints",
    "evaluate": "stability reports for noise.test_sigmas from saved checkpoints",
    "sweep": "error vs noise level (noise.sweep_sigmas) from saved checkpoints",
    "gallery": "write PGM images for output.gallery_indices from saved checkpoints",
    "run": "everything above in one go",
}


def _parser():
    p = argparse.ArgumentParser(
        prog="stabledeblur",
        description="Noise-stability experiments for stabilized deblurring networks.",
        epilog="Any config key can be overridden with --set section.key=value or --section.key VALUE.",
    )
    p.add_argument("command", choices=sorted(COMMANDS), help="; ".join(f"{k}: {v}" for k, v in COMMANDS.items()))
    p.add_argument("--config", "-c", help="INI configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--out", help="shorthand for --set output.dir=OUT")
    p.add_argument("--verbose", "-v", action="store_true")
    return p


def _extra_overrides(extra):
    """Turn leftover ``--section.key VALUE`` / ``--section.key=VALUE`` tokens into overrides."""
    out = []
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or "." not in tok.split("=", 1)[0]:
            raise ConfigError(f"unrecognized argument {tok!r}")
        tok = tok[2:]
        if "=" in tok:
            out.append(tok)
            i += 1
        elif i + 1 < len(extra):
            out.append(f"{tok}={extra[i + 1]}")
            i += 2
        else:
            raise ConfigError(f"missing value for --{tok}")
    return out


def _dispatch(args, cfg):
    out = Path(cfg.output.dir)
    cmd = args.command
    if cmd in ("synth", "ingest"):
        d = cfg.data
        if cmd == "synth":
            ds = synthesize(d.count, d.patch_size, d.seed, d.test_count, cfg.psf.radius, cfg.psf.sigma_g)
        else:
            if not d.dataset_dir:
                raise ConfigError("ingest needs data.dataset_dir")
            ds = ingest(d.dataset_dir, d.patch_size, d.seed, d.train_fraction, cfg.psf.radius, cfg.psf.sigma_g)
        ds.save(out / "dataset")
        print(json.dumps({"dataset": str(out / "dataset"), "split": ds.split, "provenance": ds.provenance}))
        return
    if cmd == "run":
        res = run_experiment(cfg)
        print(json.dumps(res.summary, indent=2, sort_keys=True))
        return
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.ini")
    ds = prepare_dataset(cfg)
    if cmd == "train":
        train_variants(cfg, ds)
        print(f"checkpoints written to {out / 'models'}")
        return
    pipes = load_variants(cfg, ds.shape)
    if cmd == "evaluate":
        reports = evaluate(cfg, ds, pipes)
        for (v, s), r in reports.items():
            print(f"{v:5s} sigma={s:g} eta_hat={r.eta_hat:.6g} c_hat={r.c_hat:.6g} stable={r.delta_stable}")
    elif cmd == "sweep":
        for r in sweep(cfg, ds, pipes):
            print(f"{r['variant']:5s} sigma={r['sigma']:g} mean_err={r['mean_err']:.6g}")
    elif cmd == "gallery":
        paths = report_gallery(ds, pipes, cfg.output.gallery_indices, out / "gallery",
                               sigma=cfg.output.gallery_sigma, seed=cfg.noise.eval_seed)
        print(f"{len(paths)} images written to {out / 'gallery'}")


def main(argv=None) -> int:
    args, extra = _parser().parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = list(args.overrides) + _extra_overrides(extra)
        if args.out:
            overrides.append(f"output.dir={args.out}")
        cfg = load_config(args.config, overrides)
        _dispatch(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingDivergedError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, IndexError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
