"""Run configuration: strict schema, range validation, stable hashing."""

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .behavior import BehaviorParams, calibrate_persistence
from .errors import ConfigError

VERSION = "0.1.0"


@dataclass(frozen=True)
class CatalogConfig:
    n_titles: int = 2000
    factor_dim: int = 8
    min_quality: float = 0.3
    policy_ok_prob: float = 0.98


@dataclass(frozen=True)
class PopulationConfig:
    n_users: int = 20000
    sessions_per_user: int = 5
    taste_strength: float = 1.5


@dataclass(frozen=True)
class PageConfig:
    n_rows: int = 30
    row_len: int = 20


@dataclass(frozen=True)
class BehaviorConfig:
    # persistence comes either directly or from a (row, reach) target
    base_continuation: float | None = None
    reach_target_row: int = 20
    reach_target_reach: float = 0.10
    position_bias_decay: float = 0.6
    click_scale: float = 0.25
    watch_scale: float = 1.0
    engagement_noise_sigma: float = 0.3
    novelty_boost: float = 0.3
    mixed_row_click_penalty: float = 0.9

    def persistence(self) -> float:
        if self.base_continuation is not None:
            return self.base_continuation
        return calibrate_persistence(self.reach_target_row,
                                     self.reach_target_reach)

    def params(self) -> BehaviorParams:
        return BehaviorParams(
            base_continuation=self.persistence(),
            position_bias_decay=self.position_bias_decay,
            click_scale=self.click_scale,
            watch_scale=self.watch_scale,
            engagement_noise_sigma=self.engagement_noise_sigma,
            novelty_boost=self.novelty_boost,
            mixed_row_click_penalty=self.mixed_row_click_penalty,
        )


@dataclass(frozen=True)
class PlacementConfig:
    min_reach: float = 0.10
    max_engagement_share: float = 0.015
    target_engagement_share: float = 0.01
    exclude_rows: tuple = ()


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "dedicated"          # control | dedicated | insertion
    slot: int | None = None          # None = derive via placement analysis
    m: int = 20                      # dedicated-row length
    target_impact: float = 0.01      # insertion impact target


@dataclass(frozen=True)
class ExperimentConfig:
    arms: tuple = ("control", "insertion", "dedicated")
    alpha: float = 0.05
    min_lift: float = 0.0
    salt: str = "exp"
    warmup_users: int = 2000
    warmup_sessions: int = 2
    probe_users: int = 4000
    probe_sessions: int = 1


@dataclass(frozen=True)
class RecallerConfig:
    threshold: int = 3
    k: int = 10
    normalization: str = "per_antecedent"
    history_cap: int = 50
    recall_weight: float = 1.0
    max_candidates: int = 40
    eval_sessions_per_user: int = 2
    salt: str = "recaller"


@dataclass(frozen=True)
class PathsConfig:
    workdir: str = "runs/default"


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    catalog: CatalogConfig = field(default_factory=CatalogConfig)
    population: PopulationConfig = field(default_factory=PopulationConfig)
    page: PageConfig = field(default_factory=PageConfig)
    behavior: BehaviorConfig = field(default_factory=BehaviorConfig)
    placement: PlacementConfig = field(default_factory=PlacementConfig)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)
    recaller: RecallerConfig = field(default_factory=RecallerConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)


_SECTIONS = {
    "catalog": CatalogConfig,
    "population": PopulationConfig,
    "page": PageConfig,
    "behavior": BehaviorConfig,
    "placement": PlacementConfig,
    "strategy": StrategyConfig,
    "experiment": ExperimentConfig,
    "recaller": RecallerConfig,
    "paths": PathsConfig,
}

_LIST_FIELDS = {"exclude_rows", "arms"}


def _build_section(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    known = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown key")
    kwargs = {}
    for key, value in data.items():
        if key in _LIST_FIELDS:
            if not isinstance(value, (list, tuple)):
                raise ConfigError(f"{path}.{key}: expected a list")
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _check(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {message}")


def validate_config(cfg: RunConfig) -> None:
    c = cfg.catalog
    _check(c.n_titles >= 1, "catalog.n_titles", "must be >= 1")
    _check(c.factor_dim >= 1, "catalog.factor_dim", "must be >= 1")
    _check(0.0 <= c.min_quality <= 1.0, "catalog.min_quality",
           "must be in [0,1]")
    _check(0.0 <= c.policy_ok_prob <= 1.0, "catalog.policy_ok_prob",
           "must be in [0,1]")
    p = cfg.population
    _check(p.n_users >= 1, "population.n_users", "must be >= 1")
    _check(p.sessions_per_user >= 0, "population.sessions_per_user",
           "must be >= 0")
    _check(p.taste_strength >= 0, "population.taste_strength",
           "must be >= 0")
    g = cfg.page
    _check(g.n_rows >= 1, "page.n_rows", "must be >= 1")
    _check(g.row_len >= 1, "page.row_len", "must be >= 1")
    _check(g.n_rows * g.row_len <= c.n_titles, "page",
           "n_rows * row_len must not exceed catalog.n_titles")
    b = cfg.behavior
    if b.base_continuation is not None:
        _check(0.0 < b.base_continuation < 1.0, "behavior.base_continuation",
               "must be in (0,1)")
    else:
        _check(b.reach_target_row >= 2, "behavior.reach_target_row",
               "must be >= 2")
        _check(0.0 < b.reach_target_reach < 1.0,
               "behavior.reach_target_reach", "must be in (0,1)")
    try:
        b.params()
    except ValueError as exc:
        raise ConfigError(f"behavior: {exc}") from exc
    pl = cfg.placement
    _check(0.0 < pl.min_reach < 1.0, "placement.min_reach",
           "must be in (0,1)")
    _check(0.0 < pl.target_engagement_share <= pl.max_engagement_share < 1.0,
           "placement", "need 0 < target <= max_engagement_share < 1")
    _check(all(isinstance(r, int) and r >= 0 for r in pl.exclude_rows),
           "placement.exclude_rows", "must be nonnegative integers")
    s = cfg.strategy
    _check(s.kind in ("control", "dedicated", "insertion"), "strategy.kind",
           "must be control, dedicated or insertion")
    if s.slot is not None:
        _check(isinstance(s.slot, int) and 0 <= s.slot <= g.n_rows,
               "strategy.slot", f"must be in [0, {g.n_rows}]")
    _check(s.m >= 1, "strategy.m", "must be >= 1")
    _check(0.0 < s.target_impact < 1.0, "strategy.target_impact",
           "must be in (0,1)")
    e = cfg.experiment
    _check(len(e.arms) >= 1 and "control" in e.arms, "experiment.arms",
           "must include control")
    _check(all(a in ("control", "dedicated", "insertion") for a in e.arms),
           "experiment.arms", "arm names must be control/dedicated/insertion")
    _check(len(set(e.arms)) == len(e.arms), "experiment.arms",
           "arm names must be unique")
    _check(0.0 < e.alpha < 1.0, "experiment.alpha", "must be in (0,1)")
    _check(e.warmup_users >= 1, "experiment.warmup_users", "must be >= 1")
    _check(e.warmup_sessions >= 1, "experiment.warmup_sessions",
           "must be >= 1")
    _check(e.probe_users >= 1, "experiment.probe_users", "must be >= 1")
    _check(e.probe_sessions >= 1, "experiment.probe_sessions", "must be >= 1")
    r = cfg.recaller
    _check(r.threshold >= 1, "recaller.threshold", "must be >= 1")
    _check(r.k >= 1, "recaller.k", "must be >= 1")
    _check(r.normalization in ("none", "per_antecedent"),
           "recaller.normalization", "must be none or per_antecedent")
    _check(r.history_cap >= 1, "recaller.history_cap", "must be >= 1")
    _check(r.recall_weight >= 0, "recaller.recall_weight", "must be >= 0")
    _check(r.max_candidates >= 1, "recaller.max_candidates", "must be >= 1")
    _check(r.eval_sessions_per_user >= 1, "recaller.eval_sessions_per_user",
           "must be >= 1")
    _check(isinstance(cfg.paths.workdir, str) and cfg.paths.workdir,
           "paths.workdir", "must be a non-empty path")


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    for key in data:
        if key != "seed" and key not in _SECTIONS:
            raise ConfigError(f"{key}: unknown key")
    seed = data.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("seed: must be an integer")
    sections = {name: _build_section(cls, data.get(name, {}), name)
                for name, cls in _SECTIONS.items()}
    cfg = RunConfig(seed=seed, **sections)
    validate_config(cfg)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(data or {})


def config_to_dict(cfg: RunConfig) -> dict:
    d = dataclasses.asdict(cfg)

    def _plain(obj):
        if isinstance(obj, tuple):
            return [_plain(v) for v in obj]
        if isinstance(obj, dict):
            return {k: _plain(v) for k, v in obj.items()}
        return obj

    return _plain(d)


def config_hash(cfg: RunConfig) -> str:
    payload = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()
