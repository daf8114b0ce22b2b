"""Configuration for a miniplex root.

A config is a flat TOML file (`miniplex.toml` by default) with any of the
keys below.  The `MINIPLEX_ROOT` environment variable overrides `root` only;
command-line flags override everything.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .errors import ConfigError

DEFAULT_BLOCK_SIZE = 128 * 1024 * 1024  # matches the production HDFS default
DEFAULT_REPLICATION = 3

_KEYS = {"root", "nodes", "block_size", "replication", "workers", "report_dir"}


@dataclass
class Config:
    root: Path = field(default_factory=lambda: Path("./miniplex-data"))
    nodes: int = 3
    block_size: int = DEFAULT_BLOCK_SIZE
    replication: int = DEFAULT_REPLICATION
    workers: int = 4
    report_dir: Path | None = None  # defaults to <root>/reports

    def __post_init__(self):
        self.root = Path(self.root)
        if self.nodes < 1:
            raise ConfigError("node count must be >= 1")
        if self.block_size <= 0:
            raise ConfigError("block size must be positive")
        if self.replication < 1:
            raise ConfigError("replication must be >= 1")
        if self.workers < 1:
            raise ConfigError("worker count must be >= 1")
        if self.report_dir is None:
            self.report_dir = self.root / "reports"
        else:
            self.report_dir = Path(self.report_dir)


def load_config(path=None, env=None, **overrides) -> Config:
    """Build a Config from an optional TOML file, the environment and overrides.

    Precedence, lowest to highest: built-in defaults, config file,
    MINIPLEX_ROOT (root only), keyword overrides (CLI flags).
    """
    env = os.environ if env is None else env
    values = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"bad config file {path}: {exc}") from exc
        unknown = set(data) - _KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update(data)
    if env.get("MINIPLEX_ROOT"):
        values["root"] = env["MINIPLEX_ROOT"]
    for key, value in overrides.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown config option: {key}")
        if value is not None:
            values[key] = value
    try:
        return Config(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def clone_for_root(config: Config, root) -> Config:
    """Same settings, different root (report_dir re-derived unless explicit)."""
    return replace(config, root=Path(root), report_dir=None)
