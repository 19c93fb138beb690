"""Run configuration: one JSON document controlling every default."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path

from ..agents.explore import A2CConfig, BCConfig
from ..agents.softq import SoftQConfig
from ..envs import EnvConfig, RewardConfig
from ..grammar import RuleSet, default_rule_set, parse_rule_set
from ..physics import Catalog, load_catalog


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class EvalConfig:
    episodes: int = 500
    greedy: bool = True


@dataclass(frozen=True)
class DatasetConfig:
    min_hidden: int = 2
    max_episodes_per_graph: int = 200


@dataclass(frozen=True)
class RunConfig:
    catalog: str | None = None  # path; None means the shipped 7-object catalog
    extended: bool = False  # shipped 14-object catalog and grammar
    rules: str | None = None  # rule DSL path; None renders the default grammar
    reward: RewardConfig = field(default_factory=RewardConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    softq: SoftQConfig = field(default_factory=SoftQConfig)
    a2c: A2CConfig = field(default_factory=A2CConfig)
    bc: BCConfig = field(default_factory=BCConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def load_catalog(self) -> Catalog:
        return load_catalog(self.catalog, extended=self.extended)

    def load_rules(self, catalog: Catalog) -> RuleSet:
        if self.rules is None:
            return default_rule_set(catalog)
        text = Path(self.rules).read_text()
        return parse_rule_set(text, object_names=catalog.object_names, meta_names=catalog.meta_names)


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name: f for f in fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    defaults = cls()
    for key, value in data.items():
        current = getattr(defaults, key)
        if is_dataclass(current):
            kwargs[key] = _build(type(current), value, f"{where}.{key}")
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "config")


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data)


def override(cfg: RunConfig, section: str, **values) -> RunConfig:
    """Replace fields of one section, ignoring ``None`` values (unset CLI flags)."""
    values = {k: v for k, v in values.items() if v is not None}
    if not values:
        return cfg
    return replace(cfg, **{section: replace(getattr(cfg, section), **values)})
