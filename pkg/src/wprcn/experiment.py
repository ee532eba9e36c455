"""Plain-text experiment files.

One ``key = value`` assignment per line; ``#`` starts a comment; blank lines
are ignored.  Keys are dotted (``awpg.hidden``), lists are comma-separated
and booleans are ``true``/``false``.  Every key may appear at most once.
Relative paths resolve against the directory of the experiment file.  See
``docs/experiment_format.md`` for the full key table.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .aptcn import AptcnConfig
from .awpg import GedConfig
from .branches import CfcnConfig
from .data import SyntheticSpec, TsDataset, normalize_and_pad, parse_ts, synthesize
from .model import WprcnConfig


class ConfigError(ValueError):
    def __init__(self, message: str, line: int = 0, source: str = "<string>"):
        self.line = line
        self.source = source
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {message}")


def _int(v: str) -> int:
    return int(v)


def _float(v: str) -> float:
    return float(v)


def _bool(v: str) -> bool:
    low = v.lower()
    if low not in ("true", "false"):
        raise ValueError(f"expected true or false, got {v!r}")
    return low == "true"


def _str(v: str) -> str:
    if not v:
        raise ValueError("empty value")
    return v


def _list(conv: Callable) -> Callable:
    def parse(v: str):
        items = [s.strip() for s in v.split(",")]
        if not v.strip() or any(not s for s in items):
            raise ValueError(f"malformed list {v!r}")
        return tuple(conv(s) for s in items)

    return parse


# key -> (section, field, converter)
KEYS: dict[str, tuple[str, str, Callable]] = {
    "name": ("experiment", "name", _str),
    "seeds": ("experiment", "seeds", _list(_int)),
    "ablation": ("model", "ablation", _str),
    "data.train": ("experiment", "train_path", _str),
    "data.test": ("experiment", "test_path", _str),
    **{
        f"data.synthetic.{f}": ("synthetic", f, conv)
        for f, conv in [
            ("kind", _str),
            ("classes", _int),
            ("n", _int),
            ("length", _int),
            ("n_train", _int),
            ("n_test", _int),
            ("noise", _float),
            ("seed", _int),
            ("shift", _float),
            ("rate", _float),
            ("drift_start", _float),
        ]
    },
    "awpg.hidden": ("awpg", "hidden", _int),
    "awpg.lambda": ("awpg", "lam", _float),
    "awpg.batch_size": ("awpg", "batch_size", _int),
    "awpg.epochs": ("awpg", "epochs", _int),
    "awpg.lr": ("awpg", "lr", _float),
    "awpg.latent_m": ("awpg", "latent_m", _int),
    "awpg.latent_j0": ("awpg", "latent_j0", _int),
    "awpg.alphas": ("awpg", "alphas", _list(_float)),
    "awpg.train_class": ("awpg", "train_class", _int),
    "awpg.search": ("model", "awpg_search", _list(_int)),
    "awpg.per_class": ("model", "per_class_awpg", _bool),
    "aptcn.c_out": ("aptcn", "c_out", _int),
    "aptcn.eca_kernel": ("aptcn", "eca_kernel", _int),
    "aptcn.kernel": ("aptcn", "kernel", _int),
    "aptcn.depth": ("aptcn", "depth", _int),
    "aptcn.channels": ("aptcn", "channels", _int),
    "aptcn.dropout": ("aptcn", "dropout", _float),
    "cfcn.channels": ("cfcn", "channels", _list(_int)),
    "cfcn.kernels": ("cfcn", "kernels", _list(_int)),
    "cfcn.reduction": ("cfcn", "reduction", _int),
    "lstm.hidden": ("model", "lstm_hidden", _int),
    "lstm.dropout": ("model", "lstm_dropout", _float),
    "train.epochs": ("model", "epochs", _int),
    "train.batch_size": ("model", "batch_size", _int),
    "train.lr_grid": ("model", "lr_grid", _list(_float)),
    "train.patience": ("model", "patience", _int),
    "train.val_fraction": ("model", "val_fraction", _float),
}


@dataclass
class Experiment:
    name: str
    model: WprcnConfig
    seeds: tuple = (0,)
    train_path: Path | None = None
    test_path: Path | None = None
    synthetic: SyntheticSpec | None = None
    source: str = "<string>"
    lines: dict = field(default_factory=dict)

    def load_data(self) -> tuple[TsDataset, TsDataset]:
        """Raw splits, then normalised and padded with training-split bounds."""
        if self.synthetic is not None:
            train, test = synthesize(self.synthetic)
        else:
            train, test = parse_ts(self.train_path), parse_ts(self.test_path)
        return normalize_and_pad(train, test)

    def config_for(self, seed: int, ablation: str | None = None) -> WprcnConfig:
        cfg = replace(self.model, seed=int(seed))
        return cfg if ablation is None else replace(cfg, ablation=ablation)


def parse_experiment(text: str, source: str = "<string>", base: Path | None = None) -> Experiment:
    values: dict[str, dict] = {s: {} for s in ("experiment", "model", "synthetic", "awpg", "aptcn", "cfcn")}
    where: dict[str, int] = {}
    section_line: dict[str, int] = {}
    lineno = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno, source)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno, source)
        if key in where:
            raise ConfigError(f"duplicate key {key!r} (first set on line {where[key]})", lineno, source)
        section, name, conv = KEYS[key]
        try:
            values[section][name] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", lineno, source) from None
        where[key] = lineno
        section_line[section] = lineno
    end = max(lineno, 1)

    def build(section, factory, **extra):
        try:
            return factory(**values[section], **extra)
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), section_line.get(section, end), source) from None

    exp = values["experiment"]
    has_ts = "train_path" in exp or "test_path" in exp
    if has_ts and values["synthetic"]:
        raise ConfigError("give either data.train/data.test or data.synthetic.*, not both", end, source)
    if has_ts and not ("train_path" in exp and "test_path" in exp):
        raise ConfigError("data.train and data.test must be given together", end, source)
    if not has_ts and not values["synthetic"]:
        raise ConfigError("no data source: set data.train/data.test or data.synthetic.kind", end, source)

    awpg = build("awpg", GedConfig)
    aptcn = build("aptcn", AptcnConfig)
    cfcn = build("cfcn", CfcnConfig)
    model = build("model", WprcnConfig, awpg=awpg, aptcn=aptcn, cfcn=cfcn)
    synthetic = build("synthetic", SyntheticSpec) if values["synthetic"] else None

    base = base or Path(".")

    def resolve(p):
        return None if p is None else (Path(p) if os.path.isabs(p) else base / p)

    seeds = exp.get("seeds", (0,))
    if not seeds:
        raise ConfigError("seeds must not be empty", where.get("seeds", end), source)
    return Experiment(
        name=exp.get("name", Path(source).stem if source != "<string>" else "experiment"),
        model=model,
        seeds=seeds,
        train_path=resolve(exp.get("train_path")),
        test_path=resolve(exp.get("test_path")),
        synthetic=synthetic,
        source=source,
        lines=where,
    )


def load_experiment(path: str | os.PathLike) -> Experiment:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read experiment file: {exc.strerror}", 0, str(path)) from None
    exp = parse_experiment(text, source=str(path), base=path.parent)
    for p in (exp.train_path, exp.test_path):
        if p is not None and not p.exists():
            key = "data.train" if p == exp.train_path else "data.test"
            raise ConfigError(f"{key} file not found: {p}", exp.lines.get(key, 0), str(path))
    return exp
