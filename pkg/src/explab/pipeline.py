"""End-to-end orchestration: environment building, policy wiring, and the
experiment pipelines behind the CLI subcommands."""

from dataclasses import dataclass

import numpy as np

from . import behavior, experiment, recaller, strategies
from .behavior import BehaviorParams, SessionLog, UserPopulation
from .catalog import Catalog, QualifiedPool, generate_catalog, qualify_pool
from .config import RunConfig
from .errors import ConfigError
from .kernels import stream_key
from .placement import (PlacementConstraints, RowStatsTable,
                        compute_row_stats, select_placement)

# stream tags under the run seed; session streams use behavior.STREAM_SESSION
_TAG_WARMUP_USERS = 0x71
_TAG_WARMUP_SIM = 0x72
_TAG_PROBE_SIM = 0x73
_TAG_MAIN_SIM = 0x74
_TAG_POLICY = 0x75
_TAG_COLLECT_SIM = 0x76


@dataclass
class Environment:
    """Everything a policy needs, derived deterministically from config."""

    seed: int
    catalog: Catalog
    pool: QualifiedPool
    users: UserPopulation
    estimator: strategies.PopularityScorer
    params: BehaviorParams
    probe_stats: RowStatsTable
    slot: int
    insertion_count: int


def constraints_from_config(cfg: RunConfig) -> PlacementConstraints:
    return PlacementConstraints(
        min_reach=cfg.placement.min_reach,
        max_engagement_share=cfg.placement.max_engagement_share,
        target_engagement_share=cfg.placement.target_engagement_share,
    )


def fit_estimator(cfg: RunConfig, seed: int, catalog: Catalog,
                  workers: int = 1) -> strategies.PopularityScorer:
    """Popularity estimator from a small seeded warmup of random pages."""
    params = cfg.behavior.params()
    warm_users = behavior.generate_users(
        stream_key(seed, _TAG_WARMUP_USERS), cfg.experiment.warmup_users,
        cfg.catalog.factor_dim, taste_strength=cfg.population.taste_strength,
        persistence=params.base_continuation)
    scorer = strategies.SeededScorer(stream_key(seed, _TAG_WARMUP_USERS),
                                     len(catalog))
    policy = strategies.ControlPolicy(catalog, scorer, cfg.page.n_rows,
                                      cfg.page.row_len)
    log = behavior.simulate_population(
        warm_users, policy, params, cfg.experiment.warmup_sessions,
        stream_key(seed, _TAG_WARMUP_SIM), catalog, workers=workers)
    return strategies.PopularityScorer.fit(log, len(catalog))


def probe_control_stats(cfg: RunConfig, seed: int, catalog: Catalog,
                        users: UserPopulation, estimator,
                        workers: int = 1) -> RowStatsTable:
    """Row stats of the pure-exploit experience on a probe subset."""
    params = cfg.behavior.params()
    n_probe = min(cfg.experiment.probe_users, len(users))
    policy = strategies.ControlPolicy(catalog, estimator, cfg.page.n_rows,
                                      cfg.page.row_len)
    log = behavior.simulate_population(
        users, policy, params, cfg.experiment.probe_sessions,
        stream_key(seed, _TAG_PROBE_SIM), catalog,
        user_ids=np.arange(n_probe), workers=workers)
    return compute_row_stats(log,
                             exclude_rows=tuple(cfg.placement.exclude_rows))


def build_environment(cfg: RunConfig, seed: int | None = None,
                      workers: int = 1) -> Environment:
    seed = cfg.seed if seed is None else seed
    catalog = generate_catalog(seed, cfg.catalog.n_titles,
                               cfg.catalog.factor_dim,
                               cfg.catalog.policy_ok_prob)
    pool = qualify_pool(catalog, cfg.catalog.min_quality)
    params = cfg.behavior.params()
    users = behavior.generate_users(
        seed, cfg.population.n_users, cfg.catalog.factor_dim,
        taste_strength=cfg.population.taste_strength,
        persistence=params.base_continuation)
    estimator = fit_estimator(cfg, seed, catalog, workers=workers)
    probe_stats = probe_control_stats(cfg, seed, catalog, users, estimator,
                                      workers=workers)
    if cfg.strategy.slot is not None:
        slot = cfg.strategy.slot
    else:
        slot = select_placement(probe_stats, constraints_from_config(cfg))
    row0_share = probe_stats[0].engagement_share
    insertion_count = strategies.compute_insertion_count(
        row0_share, min(cfg.strategy.target_impact, row0_share),
        cfg.page.row_len)
    return Environment(seed=seed, catalog=catalog, pool=pool, users=users,
                       estimator=estimator, params=params,
                       probe_stats=probe_stats, slot=slot,
                       insertion_count=insertion_count)


def make_policy(kind: str, env: Environment, cfg: RunConfig):
    base = strategies.ControlPolicy(env.catalog, env.estimator,
                                    cfg.page.n_rows, cfg.page.row_len)
    if kind == "control":
        return base
    if kind == "dedicated":
        return strategies.DedicatedRowPolicy(
            base, env.pool, env.slot, cfg.strategy.m,
            seed=stream_key(env.seed, _TAG_POLICY))
    if kind == "insertion":
        return strategies.InsertionPolicy(
            base, env.pool, env.insertion_count,
            seed=stream_key(env.seed, _TAG_POLICY))
    raise ConfigError(f"unknown strategy kind {kind!r}")


def run_collection(cfg: RunConfig, seed: int | None = None,
                   workers: int = 1) -> tuple[Environment, SessionLog]:
    """The cmd-simulate pipeline: one population under cfg.strategy.kind."""
    env = build_environment(cfg, seed, workers=workers)
    policy = make_policy(cfg.strategy.kind, env, cfg)
    log = behavior.simulate_population(
        env.users, policy, env.params, cfg.population.sessions_per_user,
        stream_key(env.seed, _TAG_MAIN_SIM), env.catalog, workers=workers)
    return env, log


def run_arm_experiment(cfg: RunConfig, seed: int | None = None,
                       workers: int = 1) -> experiment.ExperimentReport:
    """Simulate each configured arm on its assigned user share and compare
    per-user engagement against control."""
    env = build_environment(cfg, seed, workers=workers)
    arms = list(cfg.experiment.arms)
    weights = [1.0 / len(arms)] * len(arms)
    salt = f"{cfg.experiment.salt}:{env.seed}"
    assignment = experiment.assign_arms(np.arange(len(env.users)), salt,
                                        weights)
    totals = {}
    for idx, name in enumerate(arms):
        uids = np.flatnonzero(assignment == idx)
        policy = make_policy(name, env, cfg)
        log = behavior.simulate_population(
            env.users, policy, env.params, cfg.population.sessions_per_user,
            stream_key(env.seed, _TAG_MAIN_SIM), env.catalog,
            user_ids=uids, workers=workers)
        totals[name] = behavior.engagement_per_user(log, len(env.users))[uids]
    return experiment.compare_arms("control", totals, env.seed,
                                   min_lift=cfg.experiment.min_lift,
                                   alpha=cfg.experiment.alpha)


def run_recaller_collection(cfg: RunConfig, seed: int | None = None,
                            workers: int = 1
                            ) -> tuple[Environment, SessionLog]:
    """Phase one of the recaller pipeline: exploration-enabled traffic."""
    env = build_environment(cfg, seed, workers=workers)
    policy = make_policy("dedicated", env, cfg)
    log = behavior.simulate_population(
        env.users, policy, env.params, cfg.population.sessions_per_user,
        stream_key(env.seed, _TAG_COLLECT_SIM), env.catalog, workers=workers)
    return env, log


def evaluate_recaller_arms(cfg: RunConfig, env: Environment,
                           histories: dict, tables: dict,
                           workers: int = 1) -> experiment.ExperimentReport:
    """Phase two: control vs one treatment arm per co-occurrence table."""
    return recaller.evaluate_recaller(
        env.seed, env.users, env.catalog, env.estimator, histories, tables,
        n_rows=cfg.page.n_rows, row_len=cfg.page.row_len, params=env.params,
        k=cfg.recaller.k, recall_weight=cfg.recaller.recall_weight,
        max_candidates=cfg.recaller.max_candidates,
        n_sessions_per_user=cfg.recaller.eval_sessions_per_user,
        salt=cfg.recaller.salt, alpha=cfg.experiment.alpha,
        min_lift=cfg.experiment.min_lift, workers=workers)


def run_recaller_experiment(cfg: RunConfig, seed: int | None = None,
                            workers: int = 1, include_biased: bool = False
                            ) -> experiment.ExperimentReport:
    """Full two-phase recaller pipeline: collect, build, evaluate."""
    env, log = run_recaller_collection(cfg, seed, workers=workers)
    histories = recaller.build_histories(log, cap=cfg.recaller.history_cap)
    tables = {
        "recaller": recaller.build_cooccurrence(
            log, histories, threshold=cfg.recaller.threshold,
            normalization=cfg.recaller.normalization,
            consequent_source="exploration"),
    }
    if include_biased:
        tables["recaller_biased"] = recaller.build_cooccurrence(
            log, histories, threshold=cfg.recaller.threshold,
            normalization=cfg.recaller.normalization,
            consequent_source="home")
    return evaluate_recaller_arms(cfg, env, histories, tables,
                                  workers=workers)
