#!/usr/bin/env python3
"""Command line tool for fitting, scoring and sampling hypergraph models."""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from database import RunDatabase
from errors import CheckpointError, NumericError, ParseError, ValidationError
from generate import GenSpec, sample_hypergraph
from grid import GridManager
from hypergraph import (
    Hypergraph,
    degree_distribution,
    fingerprint,
    inclusion_occurrences,
    mask_split,
    order_distribution,
    parse_hyperedges,
    summarize,
    write_hyperedges,
)
from inference import FitConfig, e_step, fit, heldout_score
from logger import log_message
from metrics import build_report, heldout_auc, relative_gain
from params import ModelParams, PriorSpec, Variant, load_checkpoint, save_checkpoint
from settings import create_default_settings, int_value, validate_settings

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

CHECKPOINT_FILE = "checkpoint.json"
ITERATION_LOG_FILE = "iterations.tsv"
METRICS_JSON_FILE = "metrics.json"
METRICS_CSV_FILE = "metrics.csv"


def setup_logging(verbose: bool = False) -> None:
    """Setup logging configuration."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level, format="%(message)s", stream=sys.stderr)


def read_hypergraph(args: argparse.Namespace) -> Hypergraph:
    with open(args.input, encoding="utf-8") as stream:
        return parse_hyperedges(
            stream,
            delimiter=args.delimiter,
            max_order=args.max_order,
            drop_repeats=not args.reject_repeats,
            weighted=args.weighted,
        )


def read_checkpoint(path: str) -> ModelParams:
    with open(path, encoding="utf-8") as stream:
        return load_checkpoint(stream)


def write_json(path: Path, payload: Any) -> None:
    with open(path, "w", encoding="utf-8") as stream:
        json.dump(payload, stream, indent=1, sort_keys=False)
        stream.write("\n")


def write_csv(path: Path, rows: Sequence[Dict[str, Any]], fields: Optional[List[str]] = None) -> None:
    fields = fields or (list(rows[0]) if rows else [])
    with open(path, "w", encoding="utf-8", newline="") as stream:
        writer = csv.DictWriter(stream, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def output_directory(args: argparse.Namespace, settings) -> Path:
    directory = Path(args.output or settings.value("output_directory"))
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def open_database(args: argparse.Namespace, settings) -> Optional[RunDatabase]:
    if args.no_db:
        return None
    return RunDatabase(args.db or settings.value("database_path"))


def build_fit_config(args: argparse.Namespace, settings) -> FitConfig:
    prior = None
    if args.prior_alpha is not None or args.prior_beta is not None:
        prior = PriorSpec(
            alpha=1.0 if args.prior_alpha is None else args.prior_alpha,
            beta=0.0 if args.prior_beta is None else args.prior_beta,
        )
    config = FitConfig(
        variant=Variant.parse(args.variant),
        n_classes=args.C,
        n_communities=args.K if args.K is not None else args.C,
        max_iters=args.iters,
        step=args.step,
        restarts=args.restarts,
        seed=args.seed,
        prior=prior,
        gamma_assortative_init=args.gamma_assortative_init,
        log_space_threshold=int_value(settings, "log_space_threshold", 8),
        debug=args.debug,
    )
    config.validate()
    return config


class IterationLog:
    """Per-iteration TSV log fed by the fit progress callback"""

    def __init__(self, path: Path):
        self.stream = open(path, "w", encoding="utf-8")
        self.stream.write("restart\titeration\tloglik\tdelta\twall_ms\n")

    def __call__(self, restart, iteration, value, delta, wall_ms):
        self.stream.write(f"{restart}\t{iteration}\t{value:.10g}\t{delta:.10g}\t{wall_ms:.1f}\n")

    def close(self):
        self.stream.close()


def cmd_fit(args: argparse.Namespace, settings) -> int:
    hypergraph = read_hypergraph(args)
    config = build_fit_config(args, settings)
    directory = output_directory(args, settings)

    split = mask_split(hypergraph, args.mask_seed) if args.mask_seed is not None else None
    train = split.train if split is not None else hypergraph

    iteration_log = IterationLog(directory / ITERATION_LOG_FILE)
    try:
        result = fit(train, config, progress=iteration_log)
    finally:
        iteration_log.close()

    checkpoint_path = directory / CHECKPOINT_FILE
    with open(checkpoint_path, "w", encoding="utf-8") as stream:
        save_checkpoint(
            result.params,
            stream,
            metadata={
                "config": config.to_dict(),
                "mask_seed": args.mask_seed,
                "best_restart": result.best_restart,
                "log_likelihood": result.log_likelihood,
            },
        )

    heldout = heldout_score(split, result.params, config.log_space_threshold) if split else None
    stats = e_step(train, result.params, log_space_threshold=config.log_space_threshold)
    report = build_report(train, result.params, stats, heldout, seed=args.seed)
    payload = report.to_dict()
    payload["fit"] = result.summary()
    write_json(directory / METRICS_JSON_FILE, payload)
    write_csv(directory / METRICS_CSV_FILE, report.to_rows())

    run_db = open_database(args, settings)
    if run_db is not None:
        run_db.record_fit(
            fingerprint(hypergraph),
            config.variant.value,
            config.n_classes,
            config.n_communities,
            config.seed,
            config.restarts,
            result.best_restart,
            result.log_likelihood,
            result.iterations[result.best_restart],
            wall_time=result.wall_time,
            checkpoint_path=str(checkpoint_path),
        )
        run_db.cleanup()

    print(f"log-likelihood {result.log_likelihood:.6f} (restart {result.best_restart})")
    print(f"checkpoint written to {checkpoint_path}")
    return EXIT_OK


def cmd_predict(args: argparse.Namespace, settings) -> int:
    hypergraph = read_hypergraph(args)
    params = read_checkpoint(args.checkpoint)
    threshold = int_value(settings, "log_space_threshold", 8)
    split = mask_split(hypergraph, args.mask_seed)
    score = heldout_score(split, params, threshold)
    payload = score.to_dict()
    payload["auc"] = heldout_auc(score, args.seed)
    if args.baseline:
        baseline = heldout_score(split, read_checkpoint(args.baseline), threshold)
        payload["relative_gain"] = {
            "L": relative_gain(score.total, baseline.total),
            "L_uniform": relative_gain(score.uniform, baseline.uniform),
        }
    if args.output:
        directory = output_directory(args, settings)
        write_json(directory / "predict.json", payload)
    print(json.dumps(payload, indent=1))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace, settings) -> int:
    hypergraph = read_hypergraph(args)
    params = read_checkpoint(args.checkpoint)
    threshold = int_value(settings, "log_space_threshold", 8)
    heldout = None
    data = hypergraph
    if args.mask_seed is not None:
        split = mask_split(hypergraph, args.mask_seed)
        heldout = heldout_score(split, params, threshold)
        data = split.train
    stats = e_step(data, params, log_space_threshold=threshold)
    report = build_report(data, params, stats, heldout, seed=args.seed)
    directory = output_directory(args, settings)
    write_json(directory / METRICS_JSON_FILE, report.to_dict())
    write_csv(directory / METRICS_CSV_FILE, report.to_rows())
    print(f"metrics written to {directory / METRICS_JSON_FILE}")
    return EXIT_OK


def cmd_grid(args: argparse.Namespace, settings) -> int:
    hypergraph = read_hypergraph(args)
    args.C = min(args.grid_c)
    args.K = None
    config = build_fit_config(args, settings)
    jobs = args.jobs if args.jobs is not None else int_value(settings, "jobs", 1)
    directory = output_directory(args, settings)
    mask_seed = args.mask_seed if args.mask_seed is not None else args.seed

    run_db = open_database(args, settings)
    manager = GridManager(
        hypergraph, config, args.grid_c, args.grid_k, mask_seed, jobs=jobs, run_db=run_db
    )
    manager.log_signal.connect(log_message)
    try:
        outcome = manager.run()
    finally:
        manager.cleanup()
        if run_db is not None:
            run_db.cleanup()

    rows = outcome.rows()
    write_csv(directory / "grid.csv", rows)
    winner = outcome.winner
    write_json(
        directory / "grid.json",
        {"mask_seed": mask_seed, "cells": rows, "winner": [winner.n_classes, winner.n_communities]},
    )
    for row in rows:
        print(
            f"C={row['n_classes']} K={row['n_communities']} {row['status']} "
            f"L={row['heldout']} L_uniform={row['heldout_uniform']}"
        )
    print(f"selected C={winner.n_classes} K={winner.n_communities}")
    return EXIT_OK


def _comparison_rows(
    key: str, keys: Iterable[int], original: Dict[int, float], synthetic: Dict[int, float]
) -> List[Dict[str, Any]]:
    return [
        {key: k, "original": original.get(k, 0), "synthetic": synthetic.get(k, 0)}
        for k in keys
    ]


def cmd_generate(args: argparse.Namespace, settings) -> int:
    params = read_checkpoint(args.checkpoint)
    generated = sample_hypergraph(GenSpec(params, seed=args.seed, max_events=args.max_events))
    directory = output_directory(args, settings)
    target = directory / "generated.txt"
    with open(target, "w", encoding="utf-8") as stream:
        lines = write_hyperedges(generated, stream, aggregate=args.aggregate)
    print(f"{generated.total_count()} events on {generated.n_nonzero()} hyperedges, {lines} lines")

    if args.reference:
        args.input = args.reference
        reference = read_hypergraph(args)
        if reference.n_nodes == generated.n_nodes:
            original = dict(enumerate(degree_distribution(reference).tolist()))
            synthetic = dict(enumerate(degree_distribution(generated).tolist()))
            write_csv(
                directory / "degrees.csv",
                _comparison_rows("node", range(generated.n_nodes), original, synthetic),
            )
        else:
            log_message(
                logging.WARNING,
                f"Reference has {reference.n_nodes} nodes, model has {generated.n_nodes}: "
                "skipping degree comparison",
            )
        orders = range(2, params.max_order + 1)
        write_csv(
            directory / "orders.csv",
            _comparison_rows(
                "order", orders, order_distribution(reference), order_distribution(generated)
            ),
        )
        inclusion_orders = range(2, params.max_order)
        write_csv(
            directory / "inclusion.csv",
            _comparison_rows(
                "order",
                inclusion_orders,
                {d: inclusion_occurrences(reference, d, seed=args.seed) for d in inclusion_orders if d < reference.max_order},
                {d: inclusion_occurrences(generated, d, seed=args.seed) for d in inclusion_orders},
            ),
            fields=["order", "original", "synthetic"],
        )
    return EXIT_OK


def cmd_summarize(args: argparse.Namespace, settings) -> int:
    hypergraph = read_hypergraph(args)
    payload = summarize(hypergraph).to_dict()
    payload["fingerprint"] = fingerprint(hypergraph)
    if args.output:
        write_json(output_directory(args, settings) / "summary.json", payload)
    print(json.dumps(payload, indent=1))
    return EXIT_OK


def _int_list(value: str) -> List[int]:
    try:
        items = [int(v) for v in value.replace(",", " ").split()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected integers, got {value!r}") from e
    if not items:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return items


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Mesoscale structure of hypergraphs: fit, score and generate"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Enable verbose output")
    parser.add_argument("--settings", help="Settings ini file (default: user settings)")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_input(p, required=True):
        if required:
            p.add_argument("input", help="Hyperedge file, one occurrence per line")
        p.add_argument("--delimiter", default=None, help="Token separator (default: blanks or commas)")
        p.add_argument("--max-order", type=int, default=None, help="Drop hyperedges larger than this")
        p.add_argument("--weighted", action="store_true", help="Last token of each line is a count")
        p.add_argument("--reject-repeats", action="store_true", help="Fail on lines with a repeated node")

    def add_common(p):
        p.add_argument("-o", "--output", default=None, help="Output directory")
        p.add_argument("--seed", type=int, default=0, help="Random seed")

    def add_db(p):
        p.add_argument("--db", default=None, help="Run database path")
        p.add_argument("--no-db", action="store_true", help="Do not record runs")

    def add_fit_options(p):
        p.add_argument("--variant", default="semi", choices=[v.value for v in Variant])
        p.add_argument("--C", type=int, default=2, help="Number of classes")
        p.add_argument("--K", type=int, default=None, help="Number of communities (default: C)")
        p.add_argument("--iters", type=int, default=1000, help="Maximum EM iterations")
        p.add_argument("--step", type=float, default=1e-6, help="W gradient step size")
        p.add_argument("--restarts", type=int, default=10, help="Independent restarts")
        p.add_argument("--prior-alpha", type=float, default=None, help="Gamma prior shape")
        p.add_argument("--prior-beta", type=float, default=None, help="Gamma prior rate")
        p.add_argument(
            "--gamma-assortative-init",
            action="store_true",
            help="Start pure community rates at 0.01",
        )
        p.add_argument("--debug", action="store_true", help="Check the phi tables periodically")

    p_fit = sub.add_parser("fit", help="Fit a model and write a checkpoint")
    add_input(p_fit)
    add_common(p_fit)
    add_db(p_fit)
    add_fit_options(p_fit)
    p_fit.add_argument("--mask-seed", type=int, default=None, help="Fit on the masked training split")
    p_fit.set_defaults(handler=cmd_fit)

    p_predict = sub.add_parser("predict", help="Score a checkpoint on a held-out split")
    add_input(p_predict)
    add_common(p_predict)
    p_predict.add_argument("--checkpoint", required=True)
    p_predict.add_argument("--baseline", default=None, help="Checkpoint for the relative gain")
    p_predict.add_argument("--mask-seed", type=int, default=0)
    p_predict.set_defaults(handler=cmd_predict)

    p_eval = sub.add_parser("eval", help="Compute the metric report of a checkpoint")
    add_input(p_eval)
    add_common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--mask-seed", type=int, default=None)
    p_eval.set_defaults(handler=cmd_eval)

    p_grid = sub.add_parser("grid", help="Select (C, K) on a held-out split")
    add_input(p_grid)
    add_common(p_grid)
    add_db(p_grid)
    add_fit_options(p_grid)
    p_grid.add_argument("--grid-c", type=_int_list, required=True, help="Class counts, e.g. 2,3,4")
    p_grid.add_argument("--grid-k", type=_int_list, required=True, help="Community counts")
    p_grid.add_argument("--mask-seed", type=int, default=None, help="Default: --seed")
    p_grid.add_argument("--jobs", type=int, default=None, help="Cells fitted in parallel")
    p_grid.set_defaults(handler=cmd_grid)

    p_gen = sub.add_parser("generate", help="Sample a hypergraph from a checkpoint")
    add_input(p_gen, required=False)
    add_common(p_gen)
    p_gen.add_argument("--checkpoint", required=True)
    p_gen.add_argument("--aggregate", action="store_true", help="One line per distinct hyperedge with a count")
    p_gen.add_argument("--reference", default=None, help="Dataset to compare the sample against")
    p_gen.add_argument("--max-events", type=int, default=None)
    p_gen.set_defaults(handler=cmd_generate)

    p_sum = sub.add_parser("summarize", help="Dataset summary statistics as JSON")
    add_input(p_sum)
    add_common(p_sum)
    p_sum.set_defaults(handler=cmd_summarize)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    setup_logging(args.verbose)

    try:
        settings = create_default_settings(args.settings)
        valid, errors = validate_settings(settings)
        if not valid:
            for error in errors:
                print(f"Error: {error}", file=sys.stderr)
            return EXIT_VALIDATION
        return args.handler(args, settings)
    except (ParseError, ValidationError, CheckpointError) as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, RuntimeError) as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
