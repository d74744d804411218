"""Run configuration: TOML file, validation and command-line overrides."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .classifiers import KINDS
from .gkg import DEFAULT_SCHEMA
from .market import COUNTRIES
from .pls import RESIDUAL_KINDS


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Paths:
    gkg: tuple[str, ...] = ("data/gkg/*.gkg.tsv*",)
    market: str = "data/market.csv"
    taxonomy: str = ""  # empty: bundled rules
    out: str = "run"


@dataclass(frozen=True)
class Parameters:
    k: int = 5
    horizon: int = 1
    components: int = 5
    alpha: float = 0.05
    folds: int = 5
    lag: int = 1
    residual: str = "response"
    min_ecofin_themes: int = 3
    ffill_limit: int = 5


@dataclass(frozen=True)
class SynthSection:
    n_days: int = 600
    signal: float = 0.8
    records_per_day: int = 24
    market_beta: float = 0.7


@dataclass(frozen=True)
class RunConfig:
    countries: tuple[str, ...] = COUNTRIES
    classifiers: tuple[str, ...] = KINDS
    seed: int = 0
    jobs: int = 1
    paths: Paths = field(default_factory=Paths)
    parameters: Parameters = field(default_factory=Parameters)
    schema: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)  # classifier kind -> hyperparameters
    synth: SynthSection = field(default_factory=SynthSection)
    base_dir: str = "."  # directory relative paths are resolved against

    def __post_init__(self):
        validate(self)

    def resolve(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["countries"] = list(self.countries)
        d["classifiers"] = list(self.classifiers)
        d["paths"]["gkg"] = list(self.paths.gkg)
        return d

    def digest(self, keys=None) -> str:
        """SHA-256 of the canonical JSON of the config, or of the dotted ``keys`` only.

        ``jobs`` and the output directory never enter the digest: they do not
        change any result.
        """
        d = self.to_dict()
        d.pop("jobs")
        d["paths"].pop("out")
        if keys is not None:
            sub = {}
            for key in keys:
                head, _, tail = key.partition(".")
                sub[key] = d[head][tail] if tail else d[head]
            d = sub
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# inclusive bounds per numeric parameter
BOUNDS = {
    "k": (1, 60),
    "horizon": (0, 20),
    "components": (1, 20),
    "alpha": (1e-6, 0.5),
    "folds": (2, 50),
    "lag": (1, 10),
    "min_ecofin_themes": (1, 50),
    "ffill_limit": (0, 30),
    "n_days": (50, 100_000),
    "signal": (0.0, 1.0),
    "records_per_day": (2, 10_000),
    "market_beta": (0.0, 5.0),
    "seed": (0, 2**63 - 1),
    "jobs": (1, 256),
}


def _check_bound(name, value):
    lo, hi = BOUNDS[name]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{name} must be a number, got {value!r}")
    if isinstance(lo, int) and isinstance(hi, int) and not isinstance(value, int):
        raise ConfigError(f"{name} must be an integer, got {value!r}")
    if not lo <= value <= hi:
        raise ConfigError(f"{name}={value} outside [{lo}, {hi}]")


def validate(cfg: RunConfig) -> None:
    if not cfg.countries:
        raise ConfigError("countries must not be empty")
    bad = [c for c in cfg.countries if c not in COUNTRIES]
    if bad:
        raise ConfigError(f"unknown countries: {', '.join(bad)}; known: {', '.join(COUNTRIES)}")
    if len(set(cfg.countries)) != len(cfg.countries):
        raise ConfigError("duplicate countries")
    bad = [k for k in cfg.classifiers if k not in KINDS]
    if bad or not cfg.classifiers:
        raise ConfigError(f"classifiers must be a non-empty subset of {', '.join(KINDS)}")
    for name in ("seed", "jobs"):
        _check_bound(name, getattr(cfg, name))
    for section in (cfg.parameters, cfg.synth):
        for f in fields(section):
            if f.name in BOUNDS:
                _check_bound(f.name, getattr(section, f.name))
    if cfg.parameters.residual not in RESIDUAL_KINDS:
        raise ConfigError(f"residual must be one of {', '.join(RESIDUAL_KINDS)}")
    unknown = set(cfg.schema) - set(DEFAULT_SCHEMA)
    if unknown:
        raise ConfigError(f"unknown schema keys: {', '.join(sorted(unknown))}")
    unknown = set(cfg.params) - set(KINDS)
    if unknown:
        raise ConfigError(f"unknown classifier sections in params: {', '.join(sorted(unknown))}")
    if not cfg.paths.gkg:
        raise ConfigError("paths.gkg must list at least one file or glob")


def _section(cls, raw, where: str):
    if not isinstance(raw, Mapping):
        raise ConfigError(f"[{where}] must be a table")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    return dict(raw)


def from_dict(raw: Mapping[str, Any], base_dir=".") -> RunConfig:
    top = {f.name for f in fields(RunConfig)} - {"base_dir"}
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")
    kw: dict[str, Any] = {"base_dir": str(base_dir)}
    for key in ("countries", "classifiers"):
        if key in raw:
            if isinstance(raw[key], str) or not isinstance(raw[key], (list, tuple)):
                raise ConfigError(f"{key} must be a list of strings")
            kw[key] = tuple(raw[key])
    for key in ("seed", "jobs"):
        if key in raw:
            kw[key] = raw[key]
    if "paths" in raw:
        p = _section(Paths, raw["paths"], "paths")
        if "gkg" in p:
            p["gkg"] = (p["gkg"],) if isinstance(p["gkg"], str) else tuple(p["gkg"])
        kw["paths"] = Paths(**p)
    if "parameters" in raw:
        kw["parameters"] = Parameters(**_section(Parameters, raw["parameters"], "parameters"))
    if "synth" in raw:
        kw["synth"] = SynthSection(**_section(SynthSection, raw["synth"], "synth"))
    if "schema" in raw:
        kw["schema"] = dict(raw["schema"])
    if "params" in raw:
        kw["params"] = {k: dict(v) for k, v in raw["params"].items()}
    try:
        return RunConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(raw, base_dir=path.parent)


def with_overrides(cfg: RunConfig, **over) -> RunConfig:
    """Apply command-line flags; ``None`` values leave the config untouched."""
    top, par, paths = {}, {}, {}
    for key, value in over.items():
        if value is None:
            continue
        if key in ("seed", "jobs"):
            top[key] = value
        elif key == "countries":
            top[key] = tuple(value)
        elif key in ("alpha", "components", "folds"):
            par[key] = value
        elif key == "out":
            paths[key] = str(value)
        else:
            raise ConfigError(f"no override for {key!r}")
    if par:
        top["parameters"] = replace(cfg.parameters, **par)
    if paths:
        top["paths"] = replace(cfg.paths, **paths)
    return replace(cfg, **top)


def demo_toml(signal: float = 0.8, seed: int = 0, countries=COUNTRIES) -> str:
    """Config text for the synthetic demo written by ``synth``."""
    cs = ", ".join(f'"{c}"' for c in countries)
    return (
        f"countries = [{cs}]\n"
        f"seed = {seed}\n\n"
        "[paths]\n"
        'gkg = ["data/gkg/*.gkg.tsv*"]\n'
        'market = "data/market.csv"\n'
        'out = "run"\n\n'
        "[parameters]\n"
        "k = 5\nhorizon = 1\ncomponents = 5\nalpha = 0.05\nfolds = 5\nlag = 1\n\n"
        "[synth]\n"
        f"n_days = 600\nsignal = {signal!r}\nrecords_per_day = 24\nmarket_beta = 0.7\n"
    )
