"""Experiment config files.

One ``key = value`` per line, ``#`` starts a comment, lists are
comma-separated.  Example::

    tree = regular(d=3)@10
    model = standard
    lambda_grid = 0.05, 5
    depth_grid = 8, 10, 12
    horizon_grid = 60
    trials = 2000
    seed = 7
    outputs = runs/phase
    observables = returns, activation
"""
from __future__ import annotations

import hashlib
import math
import platform
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..tree import TreeError, TreeSpec, parse_spec

OBSERVABLES = ("returns", "activation", "level_mass", "V_counts", "conditional_activation")
MODELS = ("standard", "truncated", "brw")
PLACEMENTS = ("all_nonroot", "branch_points")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    tree: str
    model: str
    lambda_grid: tuple[float, ...]
    depth_grid: tuple[int, ...]
    horizon_grid: tuple[int, ...]
    trials: int
    seed: int
    outputs: str
    observables: tuple[str, ...] = ("returns",)
    placement: str = "all_nonroot"
    lambda_o: float | None = None
    level_n: int = 3
    level_margin: int = 10
    conditional_trials: int = 10_000
    max_particles: int = 10**7
    source: str = ""  # normalized text, used for the hash

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise ConfigError(f"model must be one of {', '.join(MODELS)}, got {self.model!r}")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"placement must be one of {', '.join(PLACEMENTS)}")
        for name in ("lambda_grid", "depth_grid", "horizon_grid", "observables"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        if any(not (x >= 0 and math.isfinite(x)) for x in self.lambda_grid):
            raise ConfigError("lambda values must be finite and >= 0")
        if any(d < 1 for d in self.depth_grid) or any(h < 1 for h in self.horizon_grid):
            raise ConfigError("depths and horizons must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        bad = [o for o in self.observables if o not in OBSERVABLES]
        if bad:
            raise ConfigError(f"unknown observables {bad}; choose from {', '.join(OBSERVABLES)}")
        if self.model == "brw" and set(self.observables) - {"returns"}:
            raise ConfigError("the brw model only supports the returns observable")
        if "V_counts" in self.observables and self.model != "truncated":
            raise ConfigError("V_counts needs the truncated model")
        if self.is_file and len(self.depth_grid) > 1:
            raise ConfigError("a tree file has one depth; depth_grid must have a single entry")

    @property
    def is_file(self) -> bool:
        return "(" not in self.tree

    def tree_spec(self, depth: int) -> TreeSpec:
        if self.is_file:
            return TreeSpec("file", depth, (("path", self.tree),))
        return parse_spec(self.tree).with_depth(depth)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()[:16]


_CONVERT = {
    "lambda_grid": lambda s: tuple(float(x) for x in _items(s)),
    "depth_grid": lambda s: tuple(int(x) for x in _items(s)),
    "horizon_grid": lambda s: tuple(int(x) for x in _items(s)),
    "observables": lambda s: tuple(_items(s)),
    "trials": int,
    "seed": int,
    "level_n": int,
    "level_margin": int,
    "conditional_trials": int,
    "max_particles": int,
    "lambda_o": float,
}
_REQUIRED = ("tree", "model", "lambda_grid", "depth_grid", "horizon_grid", "trials", "seed", "outputs")


def _items(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def parse_config(text: str, base_dir: str | Path | None = None) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)} - {"source"}
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not eq or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = val
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")
    values: dict = {}
    for key, val in raw.items():
        try:
            values[key] = _CONVERT.get(key, str)(val)
        except ValueError:
            raise ConfigError(f"bad value for {key}: {val!r}") from None
    if "(" in values["tree"]:
        try:
            parse_spec(values["tree"])
        except TreeError as exc:
            raise ConfigError(str(exc)) from None
    elif base_dir is not None and not Path(values["tree"]).is_absolute():
        values["tree"] = str(Path(base_dir) / values["tree"])
    if base_dir is not None and not Path(values["outputs"]).is_absolute():
        values["outputs"] = str(Path(base_dir) / values["outputs"])
    source = "\n".join(f"{k} = {raw[k]}" for k in sorted(raw))
    return ExperimentConfig(**values, source=source)


def load_config(path: str | Path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    return parse_config(text, base_dir=p.parent)


def module_versions() -> str:
    return (f"froglab={__version__} numpy={np.__version__} scipy={scipy.__version__} "
            f"python={platform.python_version()}")


def header(config_hash: str, seed: int, extra: dict | None = None) -> str:
    """Comment block that opens every output file."""
    lines = [f"# config_hash: {config_hash}", f"# seed: {seed}", f"# versions: {module_versions()}"]
    for k, v in (extra or {}).items():
        lines.append(f"# {k}: {v}")
    return "\n".join(lines) + "\n"


def strip_header(text: str) -> tuple[dict[str, str], str]:
    meta = {}
    body = []
    for line in text.splitlines(keepends=True):
        if line.startswith("#") and not body:
            k, _, v = line[1:].partition(":")
            meta[k.strip()] = v.strip()
        else:
            body.append(line)
    return meta, "".join(body)
