"""Run configuration: key=value file, overridable flag-for-flag on the CLI."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError

MODEL_KINDS = ("ols", "gbdt", "random_forest")
REGIMES = ("with_id", "without_id", "both")
FRAMEWORKS = ("global", "polygon", "both")


@dataclass
class RunConfig:
    apc: str = ""
    weather: str = ""
    stops: str = ""
    facilities: str = ""
    holidays: str = ""
    out_dir: str = "out"
    delta: float = 50.0
    radius_m: float = 200.0
    h1: int = 7
    h2: int = 7
    k_grid: tuple = (5, 10, 15, 20, 25, 30, 35, 40, 45, 50)
    model: str = "gbdt"
    trees: int = 300
    depth: int = 6
    learning_rate: float = 0.1
    min_leaf: int = 20
    subsample: float = 1.0
    feature_frac: float = 1.0
    bootstrap: bool = True
    regime: str = "with_id"
    framework: str = "both"
    seed: int = 0
    jobs: int = 1
    min_region_rows: int = 50
    weather_tol_minutes: int = 30
    rest_days: tuple = ("friday", "saturday")
    importance_repeats: int = 5
    importance_rows: int = 4000
    figures: bool = True
    save_models: bool = False

    def model_params(self) -> dict:
        if self.model == "gbdt":
            return {
                "trees": self.trees, "depth": self.depth,
                "learning_rate": self.learning_rate, "min_leaf": self.min_leaf,
                "subsample": self.subsample,
            }
        if self.model == "random_forest":
            return {
                "trees": self.trees, "depth": self.depth,
                "min_leaf": self.min_leaf, "feature_frac": self.feature_frac,
                "bootstrap": self.bootstrap,
            }
        return {}

    def frameworks(self) -> list:
        return ["global", "polygon"] if self.framework == "both" else [self.framework]

    def regimes(self) -> list:
        return ["with_id", "without_id"] if self.regime == "both" else [self.regime]

    def echo(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (tuple, list)):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        doc = {k: list(v) if isinstance(v, tuple) else v for k, v in doc.items()}
        return hashlib.sha256(
            json.dumps(doc, sort_keys=True).encode()
        ).hexdigest()[:16]


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(name, raw, kind):
    try:
        if kind is bool:
            low = str(raw).strip().lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            parts = [p.strip() for p in str(raw).split(",") if p.strip()]
            if name == "rest_days":
                return tuple(p.lower() for p in parts)
            return tuple(int(p) for p in parts)
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


def _field_types():
    return {f.name: (type(f.default) if f.default is not None else str)
            for f in fields(RunConfig)}


def parse_config_file(path) -> dict:
    """key=value lines; '#' starts a comment; blank lines ignored."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"missing config file: {path}")
    out = {}
    for lineno, line in enumerate(p.read_text().splitlines(), start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in text.split("=", 1))
        out[key] = value
    return out


def build_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    types = _field_types()
    merged = {}
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if value is None:
                continue
            if key not in types:
                raise ConfigError(f"unknown config key: {key}")
            merged[key] = _coerce(key, value, types[key])
    cfg = RunConfig(**merged)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.model not in MODEL_KINDS:
        raise ConfigError(f"model must be one of {MODEL_KINDS}, got {cfg.model!r}")
    if cfg.regime not in REGIMES:
        raise ConfigError(f"regime must be one of {REGIMES}, got {cfg.regime!r}")
    if cfg.framework not in FRAMEWORKS:
        raise ConfigError(f"framework must be one of {FRAMEWORKS}")
    if cfg.delta <= 0:
        raise ConfigError("delta must be positive")
    if cfg.radius_m <= 0:
        raise ConfigError("radius_m must be positive")
    if cfg.h1 < 1 or cfg.h2 < 1:
        raise ConfigError("h1/h2 must be >= 1")
    if not cfg.k_grid:
        raise ConfigError("k_grid must be nonempty")
    if any(k <= 0 for k in cfg.k_grid):
        raise ConfigError("k_grid entries must be positive")
    if cfg.jobs < 1:
        raise ConfigError("jobs must be >= 1")
