"""Run configuration: nested dataclasses, loaded from / dumped to YAML.

Precedence when the CLI builds a config: flag > file > default.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .core import ReveConfig


def _default_layers():
    return [
        {"type": "dense", "units": 64, "activation": "relu"},
        {"type": "dense", "units": 32, "activation": "relu"},
    ]


@dataclass(frozen=True)
class DataSpec:
    kind: str = "blobs"  # "blobs" or "idx"
    # blobs
    n_classes: int = 2
    informative: int = 2
    nuisance: int = 30
    noise: float = 0.6
    separation: float = 1.0
    n_train: int = 2000
    n_test: int = 2000
    seed: int | None = None  # None: derive from the run seed
    # idx
    images: str | None = None
    labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    limit: int | None = None
    # augmentation (image data only)
    augment: bool = False
    pad: int = 4
    hflip_prob: float = 0.5


@dataclass(frozen=True)
class ArchSpec:
    layers: list = field(default_factory=_default_layers)
    dim_y: int = 32


@dataclass(frozen=True)
class OptimSpec:
    lr: float = 0.05
    decay: float = 0.95
    momentum: float = 0.9
    weight_decay: float = 1e-3


@dataclass(frozen=True)
class RunConfig:
    data: DataSpec = field(default_factory=DataSpec)
    arch: ArchSpec = field(default_factory=ArchSpec)
    optim: OptimSpec = field(default_factory=OptimSpec)
    reve: ReveConfig = field(default_factory=ReveConfig)
    batch_size: int = 128
    epochs: int = 30
    seed: int = 0
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    def with_overrides(self, **kw) -> "RunConfig":
        """Dotted keys reach into sections, e.g. ``{"reve.beta": 0.0}``."""
        cfg = self
        for key, value in kw.items():
            if value is None:
                continue
            section, _, name = key.rpartition(".")
            if section:
                sub = getattr(cfg, section)
                cfg = replace(cfg, **{section: replace(sub, **{name: value})})
            else:
                cfg = replace(cfg, **{name: value})
        return cfg


_SECTIONS = {"data": DataSpec, "arch": ArchSpec, "optim": OptimSpec, "reve": ReveConfig}


def _build(cls, values: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown key(s) in {where}: {', '.join(sorted(unknown))}")
    return cls(**values)


def from_dict(d: dict | None) -> RunConfig:
    d = dict(d or {})
    kw = {}
    for name, cls in _SECTIONS.items():
        if name in d:
            kw[name] = _build(cls, d.pop(name) or {}, name)
    return _build(RunConfig, {**d, **kw}, "config")


def load(path) -> RunConfig:
    return from_dict(yaml.safe_load(Path(path).read_text()))


def dumps(config: RunConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def parse_data_spec(text: str, base: DataSpec | None = None) -> DataSpec:
    """``kind[:key=value,...]``, e.g. ``blobs:nuisance=30,seed=3`` or ``idx:images=a,labels=b``."""
    kind, _, rest = text.partition(":")
    base = base or DataSpec()
    types = {f.name: f for f in fields(DataSpec)}
    kw = {"kind": kind}
    for item in filter(None, rest.split(",")):
        key, _, raw = item.partition("=")
        if key not in types:
            raise ValueError(f"unknown data key {key!r}")
        kw[key] = yaml.safe_load(raw) if key not in ("images", "labels", "test_images", "test_labels") else raw
    return replace(base, **kw)
