"""
Command-line front end.

Usage:
    python -m ais_engine recommend --ratings r.csv --user u007 --top-n 5 --seed 1
    python -m ais_engine negsel-generate --self traffic.csv --out detectors.json
    python -m ais_engine negsel-monitor --detectors detectors.json --traffic traffic.csv
    python -m ais_engine clonal-demo --length 16 --population 20 --generations 50
    python -m ais_engine evaluate --ratings r.csv --users 20 --holdout 0.2
    python -m ais_engine synth-ratings --users 200 --items 100 --out r.csv
    python -m ais_engine synth-traffic --self-rows 50 --attack-rows 10 --out traffic.csv

Exit codes: 0 success, 1 input error, 2 empty neighbourhood, 3 coverage exhausted.
"""
import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ais_engine.affinity import build_matcher
from ais_engine.clonal_selection import run_clonal_search
from ais_engine.config import (
    MatcherKind,
    RunConfig,
    build_run_config,
    config_keys,
    configure_logging,
    derive_seed,
    read_config_file,
)
from ais_engine.db import load_memory_detectors, store_memory_detectors
from ais_engine.encoding import BitString, parse_bitstring, random_bitstring
from ais_engine.errors import AISError, InputError, RepresentationError
from ais_engine.evaluation import EvaluationMethod, evaluate_recommender
from ais_engine.immune_network import StopReason, recommend, run_recommender, state_to_dict
from ais_engine.ingest import (
    TrafficProfile,
    load_ratings,
    load_records,
    save_ratings,
    save_traffic,
    synth_ratings,
    synth_traffic,
)
from ais_engine.negative_selection import (
    Detector,
    DetectorState,
    SelfSet,
    auto_confirm,
    monitor,
    monitor_metrics,
    run_generation,
)
from ais_engine.reports import read_json, write_csv, write_json

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_EMPTY = 2


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1); exit 2 means an empty neighbourhood."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(message)


def _flag(parser, *names, **kwargs):
    """Optional flag whose absence leaves the config value untouched."""
    kwargs.setdefault("default", None)
    parser.add_argument(*names, **kwargs)


def _switch(parser, name, dest, const=True, help=None):
    parser.add_argument(name, dest=dest, action="store_const", const=const, default=None, help=help)


def _add_dynamics_flags(parser):
    _flag(parser, "--pool-size", dest="pool_size", type=int)
    _flag(parser, "--k1", type=float, help="stimulation (idiotypic form)")
    _flag(parser, "--k2", type=float, help="stimulation (plain form) / suppression (idiotypic form)")
    _flag(parser, "--k3", type=float, help="death rate")
    _flag(parser, "--dt", type=float)
    _flag(parser, "--decay-amount", dest="decay_amount", type=float)
    _flag(parser, "--initial-concentration", dest="initial_concentration", type=float)
    _flag(parser, "--removal-floor", dest="removal_floor", type=float)
    _flag(parser, "--saturation-cap", dest="saturation_cap", type=float)
    _flag(parser, "--stabilization-window", dest="stabilization_window", type=int)
    _flag(parser, "--max-iterations", dest="max_iterations", type=int)
    _flag(parser, "--overlap-penalty-threshold", dest="overlap_penalty_threshold", type=int)
    _switch(parser, "--stimulate-on-magnitude", "stimulate_on_magnitude")


def _add_matcher_flags(parser):
    _flag(
        parser, "--matcher",
        choices=["exact", "packet", "r-contiguous"],
        help="defaults to packet for traffic files and exact for bit patterns",
    )
    _flag(parser, "--r", type=int, help="run length for the r-contiguous matcher")


def _add_global_flags(parser, default):
    parser.add_argument("--config", default=default, help="key=value file; flags win over file values")
    parser.add_argument("--seed", type=int, default=default, help="global seed (default $AIS_SEED or 0)")
    parser.add_argument("--log-level", default=default, help="default $LOG_LEVEL or INFO")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ais_engine", description="Artificial immune system toolkit")
    _add_global_flags(parser, None)
    # accepted after the command too; absent flags keep the top-level value
    common = _Parser(add_help=False)
    _add_global_flags(common, argparse.SUPPRESS)
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("recommend", parents=[common], help="immune-network neighbourhood and recommendations")
    _flag(p, "--ratings", dest="ratings_path", required=True)
    p.add_argument("--user", required=True)
    p.add_argument("--top-n", dest="top_n", type=int, default=5)
    _switch(p, "--idiotypic", "idiotypic_enabled")
    _add_dynamics_flags(p)
    _flag(p, "--out-dir", dest="out_dir")
    p.set_defaults(handler=cmd_recommend)

    p = commands.add_parser("negsel-generate", parents=[common], help="generate detectors by negative selection")
    p.add_argument("--self", dest="self_path", required=True)
    p.add_argument("--out", default=None, help="detector JSON (default <out-dir>/detectors.json)")
    _add_matcher_flags(p)
    _flag(p, "--target-count", dest="target_count", type=int)
    _flag(p, "--max-attempts", dest="max_attempts", type=int)
    _switch(p, "--mutate-on-censor", "mutate_instead_of_discard")
    _flag(p, "--max-mutation-retries", dest="max_mutation_retries", type=int)
    _flag(p, "--activation-threshold", dest="activation_threshold", type=int)
    _flag(p, "--lifetime", dest="detector_lifetime", type=int)
    _flag(p, "--wildcard-probability", dest="wildcard_probability", type=float)
    _flag(p, "--workers", type=int)
    _flag(p, "--out-dir", dest="out_dir")
    p.set_defaults(handler=cmd_negsel_generate)

    p = commands.add_parser("negsel-monitor", parents=[common], help="monitor records with a detector set")
    p.add_argument("--detectors", required=True)
    _flag(p, "--traffic", dest="traffic_path", required=True)
    _add_matcher_flags(p)
    p.add_argument("--report", default=None, help="alert JSON (default <out-dir>/report.json)")
    p.add_argument("--metrics", default=None, help="metrics JSON (default <out-dir>/metrics.json)")
    p.add_argument("--auto-confirm-labels", action="store_true",
                   help="promote detectors whose alerts hit labeled non-self records")
    p.add_argument("--detectors-out", default=None, help="write surviving and promoted detectors")
    p.add_argument("--memory-db", default=None, help="TinyDB file of memory detectors")
    _flag(p, "--out-dir", dest="out_dir")
    p.set_defaults(handler=cmd_negsel_monitor)

    p = commands.add_parser("clonal-demo", parents=[common], help="clonal selection towards a target bit string")
    target = p.add_mutually_exclusive_group()
    target.add_argument("--target", default=None)
    target.add_argument("--length", type=int, default=16)
    p.add_argument("--population", type=int, default=20)
    p.add_argument("--generations", type=int, default=50)
    _flag(p, "--max-clones", dest="max_clones", type=int)
    _flag(p, "--rate-min", dest="rate_min", type=float)
    _flag(p, "--rate-max", dest="rate_max", type=float)
    _switch(p, "--no-inverse", "inverse", const=False)
    p.add_argument("--out", default=None, help="trace CSV (default <out-dir>/clonal_trace.csv)")
    _flag(p, "--out-dir", dest="out_dir")
    p.set_defaults(handler=cmd_clonal_demo)

    p = commands.add_parser("evaluate", parents=[common], help="hold-out MAE of ais, ais_idiotypic and knn")
    _flag(p, "--ratings", dest="ratings_path", required=True)
    p.add_argument("--users", type=int, default=20)
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--k", type=int, default=None, help="knn size (default pool size)")
    _add_dynamics_flags(p)
    p.add_argument("--out", default=None, help="metrics JSON (default <out-dir>/evaluation.json)")
    _flag(p, "--out-dir", dest="out_dir")
    p.set_defaults(handler=cmd_evaluate)

    p = commands.add_parser("synth-ratings", parents=[common], help="write a block-structured ratings fixture")
    p.add_argument("--users", type=int, default=200)
    p.add_argument("--items", type=int, default=100)
    p.add_argument("--density", type=float, default=0.3)
    p.add_argument("--groups", type=int, default=2)
    p.add_argument("--noise", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth_ratings)

    p = commands.add_parser("synth-traffic", parents=[common], help="write a labeled traffic fixture")
    p.add_argument("--self-rows", type=int, default=50)
    p.add_argument("--attack-rows", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_synth_traffic)

    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(args.config) if args.config else {}
    keys = config_keys()
    overrides = {k: v for k, v in vars(args).items() if k in keys and v is not None}
    if isinstance(overrides.get("matcher"), str):
        overrides["matcher"] = overrides["matcher"].replace("-", "_")
    return build_run_config(file_values, overrides)


def _out_path(explicit: Optional[str], cfg: RunConfig, name: str) -> Path:
    return Path(explicit) if explicit else Path(cfg.out_dir) / name


def _summary(payload: Dict[str, Any]) -> None:
    print(json.dumps(payload, sort_keys=True))


def cmd_recommend(args: argparse.Namespace, cfg: RunConfig) -> int:
    table = load_ratings(cfg.ratings_path)
    antigen = table.profile(args.user)
    others = [p for u, p in table.profiles.items() if u != args.user]
    if not others:
        raise InputError("Ratings file has no other users to act as neighbours")
    rng = np.random.default_rng(derive_seed(cfg.seed, "recommend"))
    candidates = [others[i] for i in rng.permutation(len(others))]

    state = run_recommender(antigen, candidates, cfg.dynamics, cfg.pearson)
    recommendations = recommend(state, args.top_n) if len(state) else []

    out_dir = Path(cfg.out_dir)
    write_json(out_dir / "neighbourhood.json", state_to_dict(state))
    write_csv(
        out_dir / "recommendations.csv",
        pd.DataFrame(
            [(rank, r.item_id, r.predicted_score) for rank, r in enumerate(recommendations, 1)],
            columns=["rank", "item_id", "predicted_score"],
        ),
    )
    _summary({
        "user": args.user,
        "neighbours": len(state),
        "recommendations": len(recommendations),
        "stop_reason": state.stop_reason.value,
    })
    return EXIT_EMPTY if state.stop_reason is StopReason.NO_NEIGHBORHOOD else EXIT_OK


def _default_matcher(args: argparse.Namespace, cfg_matcher: MatcherKind, sample) -> Optional[str]:
    if args.matcher is not None or not isinstance(sample, BitString):
        return None
    return MatcherKind.EXACT.value if cfg_matcher is MatcherKind.PACKET else None


def _with_default_matcher(args, cfg: RunConfig, sample) -> RunConfig:
    """Bit-pattern inputs fall back to the exact matcher when none was chosen."""
    kind = _default_matcher(args, cfg.generation.matcher, sample)
    if kind is None:
        return cfg
    generation = cfg.generation.model_copy(update={"matcher": MatcherKind(kind)})
    return cfg.model_copy(update={"generation": generation})


def cmd_negsel_generate(args: argparse.Namespace, cfg: RunConfig) -> int:
    log = load_records(args.self_path)
    if not log.records:
        raise InputError(f"{args.self_path} has no records")
    cfg = _with_default_matcher(args, cfg, log.records[0])

    started = time.perf_counter()
    result = run_generation(SelfSet(log.records), cfg.generation)
    elapsed = time.perf_counter() - started

    out = _out_path(args.out, cfg, "detectors.json")
    write_json(out, [d.to_dict() for d in result.detectors])
    _summary({
        "generated": len(result.detectors),
        "attempts": result.attempts,
        "censored": result.censored,
        "rescued": result.rescued,
        "elapsed": round(elapsed, 3),
    })
    return EXIT_OK


def _load_detectors(path: str) -> List[Detector]:
    if not Path(path).is_file():
        raise InputError(f"Detector file not found: {path}")
    try:
        data = read_json(path)
    except ValueError as e:
        raise InputError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(data, list):
        raise InputError(f"{path} is not a detector file (expected a JSON array)")
    return [Detector.from_dict(entry) for entry in data]


def _check_representation(detectors: Sequence[Detector], records: Sequence) -> None:
    if not detectors or not records:
        return
    record_type = type(records[0])
    for detector in detectors:
        if type(detector.pattern) is not record_type:
            raise RepresentationError(
                f"Detector pattern {type(detector.pattern).__name__} does not fit "
                f"{record_type.__name__} records"
            )


def _merge_memory(detectors: List[Detector], memory: Sequence[Detector]) -> List[Detector]:
    keys = {d.key for d in detectors}
    return detectors + [m for m in memory if m.key not in keys]


def cmd_negsel_monitor(args: argparse.Namespace, cfg: RunConfig) -> int:
    detectors = _load_detectors(args.detectors)
    if args.memory_db:
        detectors = _merge_memory(detectors, load_memory_detectors(args.memory_db))
    log = load_records(cfg.traffic_path)
    _check_representation(detectors, log.records)
    sample = detectors[0].pattern if detectors else (log.records[0] if log.records else None)
    cfg = _with_default_matcher(args, cfg, sample)

    report = monitor(detectors, log.records, build_matcher(cfg.generation))
    write_json(_out_path(args.report, cfg, "report.json"), report.to_dict())

    summary: Dict[str, Any] = {"alerts": len(report.alerts), "retired": len(report.retired)}
    if log.labeled:
        metrics = monitor_metrics(report, log.labels)
        write_json(_out_path(args.metrics, cfg, "metrics.json"), metrics)
        summary.update(metrics)

    updated = list(report.detectors)
    if args.auto_confirm_labels:
        if not log.labeled:
            raise InputError("--auto-confirm-labels needs a fully labeled traffic file")
        updated = auto_confirm(report, log.labels)
        summary["promoted"] = sum(
            1 for before, after in zip(report.detectors, updated)
            if before.state is not DetectorState.MEMORY and after.state is DetectorState.MEMORY
        )
    if args.memory_db:
        summary["stored"] = store_memory_detectors(updated, args.memory_db)
    if args.detectors_out:
        retired = set(report.retired)
        survivors = [
            d for i, d in enumerate(updated)
            if i not in retired or d.state is DetectorState.MEMORY
        ]
        write_json(args.detectors_out, [d.to_dict() for d in survivors])

    _summary(summary)
    return EXIT_OK


def cmd_clonal_demo(args: argparse.Namespace, cfg: RunConfig) -> int:
    if args.target:
        target = parse_bitstring(args.target)
    else:
        target = random_bitstring(args.length, np.random.default_rng(derive_seed(cfg.seed, "clonal_target")))
    trace = run_clonal_search(target, args.population, args.generations, cfg.clone)

    frame = pd.DataFrame(
        [(s.generation, s.best_affinity, s.mean_affinity, s.best_pattern) for s in trace],
        columns=["generation", "best_affinity", "mean_affinity", "best_pattern"],
    )
    write_csv(_out_path(args.out, cfg, "clonal_trace.csv"), frame)
    _summary({
        "target": target.render(),
        "generations": trace[-1].generation,
        "best_affinity": trace[-1].best_affinity,
    })
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace, cfg: RunConfig) -> int:
    table = load_ratings(cfg.ratings_path)
    seed = derive_seed(cfg.seed, "evaluate")
    reports = {
        method.value: evaluate_recommender(
            table,
            method,
            cfg.dynamics,
            cfg.pearson,
            n_users=args.users,
            holdout_fraction=args.holdout,
            seed=seed,
            k=args.k,
        ).to_dict()
        for method in EvaluationMethod
    }
    write_json(_out_path(args.out, cfg, "evaluation.json"), reports)
    _summary({m: r["mae"] for m, r in reports.items()})
    return EXIT_OK


def cmd_synth_ratings(args: argparse.Namespace, cfg: RunConfig) -> int:
    table = synth_ratings(
        args.users, args.items, args.density, derive_seed(cfg.seed, "synth_ratings"),
        groups=args.groups, noise=args.noise,
    )
    save_ratings(table, args.out)
    _summary({"users": len(table.users), "ratings": len(table)})
    return EXIT_OK


def cmd_synth_traffic(args: argparse.Namespace, cfg: RunConfig) -> int:
    log = synth_traffic(
        TrafficProfile(), args.self_rows, args.attack_rows, derive_seed(cfg.seed, "synth_traffic")
    )
    save_traffic(log, args.out)
    _summary({"rows": len(log), "attacks": args.attack_rows})
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entry point. Returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        configure_logging(args.log_level)
        cfg = _run_config(args)
        return args.handler(args, cfg)
    except AISError as e:
        logger.error("%s", e)
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code
