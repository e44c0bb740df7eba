"""Experiment configuration and its ``[section]`` / ``key = value`` file format."""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .featselect import BorutaConfig
from .gbdt import GbdtConfig
from .panelgen import GeneratorProfile
from .preprocess import FeatureConfig

CASES = {
    "A": ("per_group", False),
    "B": ("whole", False),
    "C": ("per_group", True),
    "D": ("whole", True),
}
CASE_TITLES = {
    "A": "Individual Groups",
    "B": "Whole Category",
    "C": "Individual Groups, Imputed Train Data",
    "D": "Whole Category, Imputed Train Data",
}


@dataclass(frozen=True)
class ExperimentConfig:
    panel_path: str | None = None
    profile: GeneratorProfile = field(default_factory=GeneratorProfile)
    cases: tuple[str, ...] = ("A", "B", "C", "D")
    models: tuple[str, ...] = ("gbdt", "naive")
    cutoff_date: str | None = None
    cutoff_fraction: float = 0.8
    min_train_points: int = 0
    require_both_periods: bool = True
    features: FeatureConfig = field(default_factory=FeatureConfig)
    boruta: BorutaConfig = field(default_factory=BorutaConfig)
    run_boruta: bool = True
    boruta_rows: int = 20_000
    gbdt: GbdtConfig = field(default_factory=GbdtConfig)
    tune_budget: int = 0
    tune_fraction: float = 0.1
    bucket_days: int = 7
    pooled_scale: bool = False
    workers: int = 1
    plot: bool = False
    seed: int = 0
    out_dir: str = "out"

    def __post_init__(self):
        bad = [c for c in self.cases if c not in CASES]
        if bad or not self.cases:
            raise ValueError(f"cases must be a non-empty subset of A,B,C,D (got {self.cases})")
        if not self.models:
            raise ValueError("at least one model is required")
        if not 0 < self.tune_fraction <= 1:
            raise ValueError("tune_fraction must lie in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def digest(self) -> str:
        text = json.dumps(to_dict(self), sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def to_dict(cfg) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            v = to_dict(v)
        elif isinstance(v, dict):
            v = {getattr(k, "value", k): x for k, x in v.items()}
        out[f.name] = v
    return out


# ------------------------------------------------------------------ parsing

_SECTIONS = {
    "panel": GeneratorProfile,
    "features": FeatureConfig,
    "boruta": BorutaConfig,
    "gbdt": GbdtConfig,
}
# keys of [experiment] / [split] mapped onto ExperimentConfig fields
_TOP_SECTIONS = {
    "experiment": {"cases", "models", "run_boruta", "boruta_rows", "tune_budget", "tune_fraction",
                   "bucket_days", "pooled_scale", "workers", "plot", "seed", "out_dir"},
    "split": {"cutoff_date", "cutoff_fraction", "min_train_points", "require_both_periods"},
}


def _convert(text: str, tp, where: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    text = text.strip()
    if origin is typing.Union or (origin is not None and type(None) in args):
        inner = [a for a in args if a is not type(None)]
        if text.lower() in ("", "none"):
            return None
        return _convert(text, inner[0], where)
    if origin is tuple:
        item = args[0]
        return tuple(_convert(t, item, where) for t in text.split(",") if t.strip())
    if tp is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{where}: expected a boolean, got {text!r}")
    if tp is int:
        return int(text)
    if tp is float:
        return float(text)
    if tp is str:
        return text
    if origin is dict or tp is dict:
        return json.loads(text)
    raise ValueError(f"{where}: unsupported type {tp}")


def _hints(cls):
    return typing.get_type_hints(cls)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a config file. Unknown sections or keys raise ``ValueError``."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string(text)
    return config_from_parser(parser, overrides)


def config_from_parser(parser: configparser.ConfigParser, overrides: dict | None = None) -> ExperimentConfig:
    top_hints = _hints(ExperimentConfig)
    top: dict = {}
    nested: dict[str, dict] = {k: {} for k in _SECTIONS}
    for section in parser.sections():
        items = dict(parser.items(section))
        if section in _TOP_SECTIONS:
            for k, v in items.items():
                if k not in _TOP_SECTIONS[section]:
                    raise ValueError(f"unknown key [{section}] {k}")
                top[k] = _convert(v, top_hints[k], f"[{section}] {k}")
        elif section in _SECTIONS:
            cls = _SECTIONS[section]
            hints = _hints(cls)
            for k, v in items.items():
                if section == "panel" and k == "path":
                    top["panel_path"] = v.strip()
                    continue
                if k not in hints:
                    raise ValueError(f"unknown key [{section}] {k}")
                nested[section][k] = _convert(v, hints[k], f"[{section}] {k}")
        else:
            raise ValueError(f"unknown section [{section}]")
    overrides = dict(overrides or {})
    top.update({k: v for k, v in overrides.items() if v is not None})
    seed = top.get("seed", 0)
    nested["panel"].setdefault("seed", seed)
    nested["boruta"].setdefault("seed", seed)
    nested["gbdt"].setdefault("seed", seed)
    return ExperimentConfig(
        profile=GeneratorProfile(**nested["panel"]),
        features=FeatureConfig(**nested["features"]),
        boruta=BorutaConfig(**nested["boruta"]),
        gbdt=GbdtConfig(**nested["gbdt"]),
        **top,
    )


def default_config(**overrides) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    return config_from_parser(parser, overrides)
