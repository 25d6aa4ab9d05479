"""explab: a desk-scale lab for cost-aware exploration delivery in homepage
recommenders, with an unbiased co-occurrence recaller built from the
collected randomized-exposure data."""

from .behavior import (BehaviorParams, InteractionEvent, SessionLog,
                       UserPopulation, UserProfile, calibrate_persistence,
                       generate_users, simulate_population, simulate_session)
from .bias_metrics import PopularityDistribution, gini, popularity_distribution
from .catalog import (Catalog, QualifiedPool, Title, generate_catalog,
                      qualify_pool)
from .config import RunConfig, config_hash, load_config
from .experiment import (ExperimentReport, assign_arm, guardrail_check,
                         guardrail_verdict, lift_and_pvalue, run_experiment)
from .kernels import backend
from .placement import (PlacementConstraints, RowStats, compute_row_stats,
                        select_placement)
from .recaller import (CandidateSet, CoOccurrenceTable, UserHistory,
                       build_cooccurrence, build_histories, evaluate_recaller,
                       retrieve)
from .strategies import (Homepage, InsertionPlan, Row, compose_control,
                         compute_insertion_count, inject_dedicated_row,
                         insert_into_row)

__version__ = "0.1.0"

__all__ = [
    "BehaviorParams", "CandidateSet", "Catalog", "CoOccurrenceTable",
    "ExperimentReport", "Homepage", "InsertionPlan", "InteractionEvent",
    "PlacementConstraints", "PopularityDistribution", "QualifiedPool",
    "Row", "RowStats", "RunConfig", "SessionLog", "Title", "UserHistory",
    "UserPopulation", "UserProfile", "assign_arm", "backend",
    "build_cooccurrence", "build_histories", "calibrate_persistence",
    "compose_control", "compute_insertion_count", "compute_row_stats",
    "config_hash", "evaluate_recaller", "generate_catalog", "generate_users",
    "gini", "guardrail_check", "guardrail_verdict", "inject_dedicated_row",
    "insert_into_row", "lift_and_pvalue", "load_config",
    "popularity_distribution", "qualify_pool", "retrieve", "run_experiment",
    "select_placement", "simulate_population", "simulate_session",
]
