"""Command-line pipeline: simulate, analyze-placement, run-experiment,
build-recaller, evaluate-recaller, bias-report.

Artifacts are plain text (JSON lines, CSV, TSV) plus a manifest; every
artifact gets a sidecar .meta.json with the config hash so later stages
refuse inputs from a different run. Exit codes: 0 success, 2 config error,
3 guardrail failure.
"""

import argparse
import json
import sys
from pathlib import Path

from . import bias_metrics, pipeline, recaller
from .behavior import SessionLog
from .config import (RunConfig, VERSION, config_hash, load_config)
from .errors import (ConfigError, ExplabError, ManifestMismatchError,
                     NoSafePlacementError)
from .experiment import GUARDRAIL_FAIL
from .placement import compute_row_stats, select_placement

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_GUARDRAIL = 3


def _write_meta(path: Path, cfg_hash: str, seed: int) -> None:
    meta = {"config_hash": cfg_hash, "seed": seed, "version": VERSION}
    Path(f"{path}.meta.json").write_text(json.dumps(meta, sort_keys=True)
                                         + "\n", encoding="utf-8")


def _check_meta(path: Path, cfg_hash: str) -> None:
    meta_path = Path(f"{path}.meta.json")
    if not meta_path.exists():
        raise ManifestMismatchError(f"{path}: missing sidecar {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    if meta.get("config_hash") != cfg_hash:
        raise ManifestMismatchError(
            f"{path}: produced under config {meta.get('config_hash')!r}, "
            f"current config is {cfg_hash!r}")


def _load_manifest(workdir: Path) -> dict:
    path = workdir / "manifest.json"
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def _update_manifest(workdir: Path, cfg_hash: str, seed: int,
                     **entries) -> None:
    manifest = _load_manifest(workdir)
    if manifest and manifest.get("config_hash") not in (None, cfg_hash):
        raise ManifestMismatchError(
            f"workdir {workdir} belongs to config "
            f"{manifest.get('config_hash')!r}")
    manifest.update({"version": VERSION, "seed": seed,
                     "config_hash": cfg_hash})
    manifest.setdefault("artifacts", {}).update(
        {k: v for k, v in entries.items() if v is not None})
    (workdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")


def _prepare(args) -> tuple[RunConfig, Path, str, int]:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = RunConfig(**{**vars(cfg), "seed": args.seed})
    workdir = Path(args.workdir) if args.workdir else Path(cfg.paths.workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    return cfg, workdir, config_hash(cfg), cfg.seed


def cmd_simulate(args) -> int:
    cfg, workdir, cfg_hash, seed = _prepare(args)
    env, log = pipeline.run_collection(cfg, workers=args.workers)
    catalog_path = workdir / "catalog.jsonl"
    sessions_path = workdir / "sessions.jsonl"
    env.catalog.to_jsonl(catalog_path)
    log.canonical_sorted().to_jsonl(sessions_path)
    _write_meta(catalog_path, cfg_hash, seed)
    _write_meta(sessions_path, cfg_hash, seed)
    _update_manifest(workdir, cfg_hash, seed, catalog="catalog.jsonl",
                     sessions="sessions.jsonl", strategy=cfg.strategy.kind,
                     slot=env.slot)
    print(f"wrote {sessions_path} ({len(log)} events, "
          f"{log.n_sessions} sessions, strategy={cfg.strategy.kind}, "
          f"slot={env.slot})")
    return EXIT_OK


def cmd_analyze_placement(args) -> int:
    cfg, workdir, cfg_hash, seed = _prepare(args)
    sessions_path = workdir / "sessions.jsonl"
    if not sessions_path.exists():
        raise ExplabError(f"{sessions_path} not found; run simulate first")
    _check_meta(sessions_path, cfg_hash)
    log = SessionLog.from_jsonl(sessions_path)
    stats = compute_row_stats(log,
                              exclude_rows=tuple(cfg.placement.exclude_rows))
    csv_path = workdir / "row_stats.csv"
    stats.to_csv(csv_path)
    _write_meta(csv_path, cfg_hash, seed)
    try:
        slot = select_placement(stats, pipeline.constraints_from_config(cfg))
    except NoSafePlacementError as exc:
        print(f"no safe placement: {exc}", file=sys.stderr)
        print(exc.feasible_dump, file=sys.stderr)
        return EXIT_ERROR
    _update_manifest(workdir, cfg_hash, seed, row_stats="row_stats.csv",
                     placement_slot=slot)
    print(f"wrote {csv_path}; selected slot {slot}")
    return EXIT_OK


def cmd_run_experiment(args) -> int:
    cfg, workdir, cfg_hash, seed = _prepare(args)
    report = pipeline.run_arm_experiment(cfg, workers=args.workers)
    report_path = workdir / "experiment_report.json"
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    _write_meta(report_path, cfg_hash, seed)
    _update_manifest(workdir, cfg_hash, seed,
                     experiment_report="experiment_report.json")
    print(report.to_table())
    print(f"\nguardrail: {report.guardrail}")
    if report.guardrail == GUARDRAIL_FAIL:
        return EXIT_GUARDRAIL
    return EXIT_OK


def cmd_build_recaller(args) -> int:
    cfg, workdir, cfg_hash, seed = _prepare(args)
    sessions_path = workdir / "sessions.jsonl"
    if not sessions_path.exists():
        raise ExplabError(f"{sessions_path} not found; run simulate first")
    _check_meta(sessions_path, cfg_hash)
    log = SessionLog.from_jsonl(sessions_path)
    histories = recaller.build_histories(log, cap=cfg.recaller.history_cap)
    table = recaller.build_cooccurrence(
        log, histories, threshold=cfg.recaller.threshold,
        normalization=cfg.recaller.normalization)
    tsv_path = workdir / "cooccurrence.tsv"
    table.to_tsv(tsv_path)
    _write_meta(tsv_path, cfg_hash, seed)
    _update_manifest(workdir, cfg_hash, seed, cooccurrence="cooccurrence.tsv")
    if table.n_pairs == 0:
        print("warning: no exploration-sourced watches above threshold; "
              "table is empty", file=sys.stderr)
    print(f"wrote {tsv_path} ({table.n_pairs} pairs, "
          f"{len(table.entries)} antecedents)")
    return EXIT_OK


def cmd_evaluate_recaller(args) -> int:
    cfg, workdir, cfg_hash, seed = _prepare(args)
    sessions_path = workdir / "sessions.jsonl"
    tsv_path = workdir / "cooccurrence.tsv"
    for path in (sessions_path, tsv_path):
        if not path.exists():
            raise ExplabError(f"{path} not found; run the earlier stages")
        _check_meta(path, cfg_hash)
    log = SessionLog.from_jsonl(sessions_path)
    histories = recaller.build_histories(log, cap=cfg.recaller.history_cap)
    table = recaller.CoOccurrenceTable.from_tsv(
        tsv_path, threshold=cfg.recaller.threshold,
        normalization=cfg.recaller.normalization)
    env = pipeline.build_environment(cfg, workers=args.workers)
    report = pipeline.evaluate_recaller_arms(cfg, env, histories,
                                             {"recaller": table},
                                             workers=args.workers)
    report_path = workdir / "recaller_report.json"
    report_path.write_text(report.to_json() + "\n", encoding="utf-8")
    _write_meta(report_path, cfg_hash, seed)
    _update_manifest(workdir, cfg_hash, seed,
                     recaller_report="recaller_report.json")
    print(report.to_table())
    print(f"\nguardrail: {report.guardrail}")
    if report.guardrail == GUARDRAIL_FAIL:
        return EXIT_GUARDRAIL
    return EXIT_OK


def cmd_bias_report(args) -> int:
    cfg, workdir, cfg_hash, seed = _prepare(args)
    sessions_path = workdir / "sessions.jsonl"
    if not sessions_path.exists():
        raise ExplabError(f"{sessions_path} not found; run simulate first")
    _check_meta(sessions_path, cfg_hash)
    log = SessionLog.from_jsonl(sessions_path)
    summary = {}
    for source in ("exploration", "overall"):
        dist = bias_metrics.popularity_distribution(log, source,
                                                    top_n=args.top_n)
        csv_path = workdir / f"popularity_{source}.csv"
        dist.to_csv(csv_path)
        _write_meta(csv_path, cfg_hash, seed)
        summary[source] = {
            "gini": bias_metrics.gini(dist.shares()),
            "n_titles": len(dist.entries),
            "top_share": dist.entries[0][1],
        }
    summary_path = workdir / "bias_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True)
                            + "\n", encoding="utf-8")
    _write_meta(summary_path, cfg_hash, seed)
    _update_manifest(workdir, cfg_hash, seed, bias_summary="bias_summary.json")
    print(f"gini exploration={summary['exploration']['gini']:.3f} "
          f"overall={summary['overall']['gini']:.3f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="explab",
        description="Cost-aware exploration delivery lab for homepage "
                    "recommenders")
    parser.add_argument("--version", action="version", version=VERSION)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, extra=None):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="YAML config file (defaults used "
                                        "when omitted)")
        p.add_argument("--seed", type=int, default=None,
                       help="override config seed")
        p.add_argument("--workdir", default=None,
                       help="override paths.workdir")
        p.add_argument("--workers", type=int, default=1,
                       help="worker count (never changes outputs)")
        if extra:
            extra(p)
        p.set_defaults(fn=fn)
        return p

    add("simulate", cmd_simulate,
        "simulate a population and write catalog + session logs")
    add("analyze-placement", cmd_analyze_placement,
        "compute per-row reach/engagement-share and pick the slot")
    add("run-experiment", cmd_run_experiment,
        "A/B experiment across the configured arms")
    add("build-recaller", cmd_build_recaller,
        "build the co-occurrence table from a sessions artifact")
    add("evaluate-recaller", cmd_evaluate_recaller,
        "serving-time A/B of the recaller-augmented homepage")
    add("bias-report", cmd_bias_report,
        "popularity distributions and Gini by exposure source",
        extra=lambda p: p.add_argument("--top-n", type=int, default=500))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ManifestMismatchError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ExplabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
