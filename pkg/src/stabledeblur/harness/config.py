"""Experiment configuration: typed INI sections mapped onto dataclasses.

Every key can be overridden from the command line with ``section.key=value``.
Lists are comma separated; booleans accept true/false/yes/no/1/0.
"""
from __future__ import annotations

import configparser
import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ConfigError, InvalidParameterError
from ..network.training import TrainConfig

EXPERIMENTS = ("A", "B", "Sweep")
VARIANTS = ("NN", "FiNN", "StNN")


@dataclass
class ExperimentSection:
    kind: str = "A"
    placement: str = "train"
    variants: list = field(default_factory=lambda: list(VARIANTS))


@dataclass
class DataSection:
    source: str = "synth"
    dataset_dir: str = ""
    count: int = 260
    test_count: int = 60
    train_fraction: float = 0.7
    patch_size: int = 64
    seed: int = 0


@dataclass
class PsfSection:
    radius: int = 5
    sigma_g: float = 1.3


@dataclass
class NoiseSection:
    train_sigma: float = 0.0
    test_sigmas: list = field(default_factory=lambda: [0.025, 0.05])
    sweep_sigmas: list = field(default_factory=lambda: [0.0, 0.0125, 0.025, 0.05, 0.075, 0.1])
    eval_seed: int = 1234


@dataclass
class FilterSection:
    radius: int = 3
    sigma_f: float = 1.0


@dataclass
class IterativeSection:
    method: str = "cgls"
    lam: float = 1e-2
    iterations: int = 50


@dataclass
class NetworkSection:
    architecture: str = "SSNet3L"
    widths: list = field(default_factory=lambda: [16, 16])
    kernel_sizes: list = field(default_factory=lambda: [9, 5, 3])
    base_width: int = 8
    skip: bool = False
    padding: str = "zero"
    seed: int = 0


@dataclass
class OutputSection:
    dir: str = "runs/experiment"
    gallery_indices: list = field(default_factory=lambda: [0])
    gallery_sigma: float = 0.05


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    data: DataSection = field(default_factory=DataSection)
    psf: PsfSection = field(default_factory=PsfSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    filter: FilterSection = field(default_factory=FilterSection)
    iterative: IterativeSection = field(default_factory=IterativeSection)
    network: NetworkSection = field(default_factory=NetworkSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    output: OutputSection = field(default_factory=OutputSection)

    def validate(self) -> "ExperimentConfig":
        e = self.experiment
        if e.kind not in EXPERIMENTS:
            raise ConfigError(f"experiment.kind must be one of {EXPERIMENTS}, got {e.kind!r}")
        if e.placement not in ("train", "posthoc"):
            raise ConfigError("experiment.placement must be 'train' or 'posthoc'")
        bad = [v for v in e.variants if v not in VARIANTS]
        if bad or not e.variants:
            raise ConfigError(f"unknown variants {bad}; choose from {VARIANTS}")
        if e.kind == "A" and self.noise.train_sigma != 0:
            raise ConfigError("experiment A trains on noiseless data: noise.train_sigma must be 0")
        if e.kind == "B" and not self.noise.train_sigma > 0:
            raise ConfigError("experiment B needs noise.train_sigma > 0 (noise injection)")
        if self.data.source not in ("synth", "dir"):
            raise ConfigError("data.source must be 'synth' or 'dir'")
        if self.data.source == "dir" and not self.data.dataset_dir:
            raise ConfigError("data.dataset_dir is required when data.source = dir")
        if self.data.patch_size < 11:
            raise ConfigError("data.patch_size must be at least 11 (SSIM window)")
        if self.network.architecture not in ("SSNet3L", "MiniUNet"):
            raise ConfigError("network.architecture must be SSNet3L or MiniUNet")
        if self.network.architecture == "MiniUNet" and self.data.patch_size % 2:
            raise ConfigError("MiniUNet needs an even patch size")
        if any(s <= 0 for s in self.noise.test_sigmas):
            raise ConfigError("noise.test_sigmas must be positive")
        if self.iterative.method not in ("cgls", "landweber"):
            raise ConfigError("iterative.method must be cgls or landweber")
        # folded into the training config so train() sees the injection level
        self.train.injection_sigma = self.noise.train_sigma
        try:
            TrainConfig(**dataclasses.asdict(self.train))
        except InvalidParameterError as exc:
            raise ConfigError(f"[train] {exc}") from None
        return self


def _convert(raw: str, ftype, current):
    kind = ftype if isinstance(ftype, type) else None
    if isinstance(ftype, str):
        kind = {"int": int, "float": float, "str": str, "bool": bool, "list": list}.get(ftype)
    if kind is None:
        kind = type(current)
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is list:
        items = [s.strip() for s in raw.strip("[]").split(",") if s.strip()]
        elem = type(current[0]) if current else str
        return [elem(s) for s in items]
    return kind(raw)


def _set(cfg: ExperimentConfig, section: str, key: str, raw: str):
    sec = getattr(cfg, section, None)
    if sec is None or not dataclasses.is_dataclass(sec):
        raise ConfigError(f"unknown config section [{section}]")
    fields = {f.name: f for f in dataclasses.fields(sec)}
    if key not in fields:
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    hints = typing.get_type_hints(type(sec))
    try:
        setattr(sec, key, _convert(raw, hints.get(key, fields[key].type), getattr(sec, key)))
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Read an INI file (optional) and apply ``section.key=value`` overrides."""
    cfg = ExperimentConfig()
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        for section in parser.sections():
            for key, value in parser.items(section):
                _set(cfg, section, key, value)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        _set(cfg, section, key, value)
    return cfg.validate()


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ExperimentConfig, path) -> None:
    """Write the fully resolved configuration back out as INI."""
    lines = []
    for f in dataclasses.fields(cfg):
        sec = getattr(cfg, f.name)
        lines.append(f"[{f.name}]")
        for sf in dataclasses.fields(sec):
            lines.append(f"{sf.name} = {_format(getattr(sec, sf.name))}")
        lines.append("")
    Path(path).write_text("\n".join(lines))
