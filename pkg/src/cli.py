"""
Command-line interface: generate data, train, score, evaluate and analyse lags.

Usage: python src/cli.py <command> [options]

Log lines go to stderr; stdout carries only results (AUROC lines, presets).
"""

import argparse
import os
import sys

import pandas as pd

import config
from bench import format_summary, run_benchmark
from config import PRESETS, dump_config, get_preset, resolve_config
from data import CSV_FLOAT_FORMAT, MIN_T, SCM_NAMES, generate, load_csv, load_truth_csv, save_csv, save_truth_csv
from errors import ConfigError, NavarError
from logger import Color, RunLogger
from model import grid_search, load_checkpoint, save_checkpoint, train, write_report_csv
from scoring import (
    auroc,
    extract_contributions,
    lag_mask_analysis,
    load_scores_csv,
    rank_links,
    save_contributions_csv,
    save_lag_records_csv,
    save_roc_csv,
    save_scores_csv,
    score_links,
)


def _add_config_args(parser):
    parser.add_argument("--preset", help="Named hyperparameter preset (see 'preset --list')")
    parser.add_argument("--config", help="key=value config file applied after the preset")
    group = parser.add_argument_group("overrides")
    group.add_argument("--backbone", dest="backbone_kind", choices=["mlp", "lstm"])
    group.add_argument("--K", type=int, help="Max lag (MLP) or sequence length (LSTM)")
    group.add_argument("--hidden", dest="hidden_units", type=int)
    group.add_argument("--layers", dest="hidden_layers", type=int)
    group.add_argument("--batch", dest="batch_size", type=int)
    group.add_argument("--lr", dest="learning_rate", type=float)
    group.add_argument("--lambda", dest="penalty", type=float, help="Contribution penalty")
    group.add_argument("--mu", dest="weight_decay", type=float, help="Weight decay")
    group.add_argument("--epochs", type=int)
    group.add_argument("--seed", type=int)
    group.add_argument("--val-fraction", dest="val_fraction", type=float)
    group.add_argument("--warmup", dest="warmup_steps", type=int)


def _add_data_args(parser):
    parser.add_argument("--data", nargs="+", required=True, help="Data CSV (one file per replicate)")
    parser.add_argument("--replicate-column", help="Column identifying the replicate of each row")
    parser.add_argument("--delimiter", default=",")


OVERRIDE_FIELDS = (
    "backbone_kind",
    "K",
    "hidden_units",
    "hidden_layers",
    "batch_size",
    "learning_rate",
    "penalty",
    "weight_decay",
    "epochs",
    "seed",
    "val_fraction",
    "warmup_steps",
)


def _config_from_args(args):
    overrides = {name: getattr(args, name, None) for name in OVERRIDE_FIELDS}
    return resolve_config(args.preset, args.config, overrides)


def _load_data(args):
    return load_csv(
        args.data if len(args.data) > 1 else args.data[0],
        delimiter=args.delimiter,
        replicate_column=args.replicate_column,
    )


def _parse_pair(text, names):
    tokens = [t.strip() for t in text.split(",")]
    if len(tokens) != 2:
        raise ConfigError(f"--pair expects 'source,target', got '{text}'")
    pair = []
    for token in tokens:
        if token.isdigit():
            pair.append(int(token))
        elif token in names:
            pair.append(names.index(token))
        else:
            raise ConfigError(f"unknown variable '{token}' (variables: {', '.join(names)})")
    return tuple(pair)


def _parse_grid(entries):
    grid = {}
    for entry in entries:
        key, sep, values = entry.partition("=")
        if not sep or not values:
            raise ConfigError(f"--grid expects key=v1,v2,..., got '{entry}'")
        grid[key.strip()] = [v.strip() for v in values.split(",")]
    return grid


def cmd_generate(args, logger):
    dataset = generate(args.scm, T=args.T, seed=args.seed, N=args.N, K=args.K, density=args.density)
    truth_out = args.truth_out or f"{os.path.splitext(args.out)[0]}_truth.csv"
    save_csv(dataset, args.out)
    save_truth_csv(dataset.truth, truth_out, dataset.variable_names)
    logger.event(f"wrote {dataset.lengths[0]}×{dataset.N} series to {args.out}, truth to {truth_out}")
    return 0


def cmd_train(args, logger):
    navar_config = _config_from_args(args)
    dataset = _load_data(args)
    model, report = train(dataset, navar_config, logger)
    save_checkpoint(model, args.out_model)
    logger.event(f"checkpoint written to {args.out_model}")
    if args.report:
        write_report_csv(report, navar_config, args.report)
        logger.event(f"report written to {args.report}")
    return 0


def cmd_score(args, logger):
    model = load_checkpoint(args.model)
    scores = score_links(extract_contributions(model, _load_data(args)))
    save_scores_csv(scores, args.out_scores)
    logger.event(f"scores written to {args.out_scores}")
    return 0


def cmd_eval(args, logger):
    scores = load_scores_csv(args.scores)
    truth = load_truth_csv(args.truth)
    curve = auroc(scores, truth, ignore_self_links=args.ignore_self_links)
    print(f"{curve.auroc:.6f}")
    if args.out_roc:
        save_roc_csv(curve, args.out_roc)
    if args.rank_out:
        names = scores.variable_names
        frame = pd.DataFrame(
            [(names[i], names[j], s, bool(truth.adjacency[i, j])) for i, j, s in rank_links(scores)],
            columns=["source", "target", "score", "true_link"],
        )
        frame.to_csv(args.rank_out, index=False, float_format=CSV_FLOAT_FORMAT)
    return 0


def cmd_lags(args, logger):
    model = load_checkpoint(args.model)
    pair = _parse_pair(args.pair, model.variable_names)
    records = lag_mask_analysis(model, _load_data(args), pair)
    save_lag_records_csv(records, args.out)
    for record in records:
        logger.print(
            f"lag {record.lag}: score={record.score:.6f} mse={record.mse:.6f} delta={record.delta_score:+.6f}",
            Color.BRIGHT_WHITE,
        )
    return 0


def cmd_contribs(args, logger):
    model = load_checkpoint(args.model)
    save_contributions_csv(extract_contributions(model, _load_data(args)), args.out)
    logger.event(f"contributions written to {args.out}")
    return 0


def cmd_bench(args, logger):
    navar_config = _config_from_args(args)
    stats = run_benchmark(
        args.scm,
        args.trials,
        navar_config,
        seed_base=args.seed_base,
        parallel=args.parallel,
        max_workers=args.max_workers,
        logger=logger,
        T=args.T,
        N=args.N,
        K=args.data_K,
        density=args.density,
    )
    print(format_summary(stats))
    if stats["failed_trials"]:
        logger.warning(f"{stats['failed_trials']} of {stats['trials']} trials failed")
    return 0


def cmd_grid(args, logger):
    base = _config_from_args(args)
    results = grid_search(_load_data(args), base, _parse_grid(args.grid), logger)
    frame = pd.DataFrame([{**r.overrides, "val_mse": r.val_mse} for r in results])
    frame.insert(0, "rank", range(1, len(results) + 1))
    frame.to_csv(args.out, index=False, float_format=CSV_FLOAT_FORMAT)
    best = results[0]
    logger.event(f"best grid point {best.overrides} (val_mse={best.val_mse:.6f})")
    return 0


def cmd_preset(args, logger):
    if args.show:
        sys.stdout.write(dump_config(get_preset(args.show)))
        return 0
    for name in sorted(PRESETS):
        preset = PRESETS[name]
        print(
            f"{name}: {preset.backbone_kind.value} K={preset.K} hidden={preset.hidden_units} "
            f"layers={preset.hidden_layers} batch={preset.batch_size} lr={preset.learning_rate} "
            f"lambda={preset.penalty} mu={preset.weight_decay}"
        )
    return 0


def _series_length(text):
    T = int(text)
    if T < MIN_T:
        raise argparse.ArgumentTypeError(f"series length must be at least {MIN_T}, got {T}")
    return T


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _density(text):
    value = float(text)
    if not 0 < value <= 1:
        raise argparse.ArgumentTypeError(f"density must be in (0, 1], got {value}")
    return value


def build_parser():
    parser = argparse.ArgumentParser(prog="navar", description="Granger causal discovery with NAVAR")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="Generate a synthetic dataset and its true graph")
    p.add_argument("--scm", choices=SCM_NAMES, required=True)
    p.add_argument("--T", type=_series_length, default=4000)
    p.add_argument("--N", type=_positive_int, default=5, help="Variables (linear-var)")
    p.add_argument("--K", type=_positive_int, default=2, help="VAR order (linear-var)")
    p.add_argument("--density", type=_density, default=0.3, help="Link density (linear-var)")
    p.add_argument("--seed", type=int, default=config.DEFAULT_SEED)
    p.add_argument("--out", required=True)
    p.add_argument("--truth-out")
    p.set_defaults(handler=cmd_generate)

    p = sub.add_parser("train", help="Train a model and write a checkpoint")
    _add_data_args(p)
    _add_config_args(p)
    p.add_argument("--out-model", required=True)
    p.add_argument("--report", help="Per-epoch loss CSV")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("score", help="Write the N×N causal score matrix")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--out-scores", required=True)
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("eval", help="AUROC of a score matrix against a true graph")
    p.add_argument("--scores", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--ignore-self-links", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--out-roc")
    p.add_argument("--rank-out")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("lags", help="Lag-masking analysis of one link (MLP models)")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--pair", required=True, help="source,target as indices or variable names")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_lags)

    p = sub.add_parser("contribs", help="Export contribution histories")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_contribs)

    p = sub.add_parser("bench", help="Repeat the full pipeline over seeds")
    p.add_argument("--scm", choices=SCM_NAMES, required=True)
    p.add_argument("--trials", type=_positive_int, default=5)
    p.add_argument("--seed-base", type=int, default=config.DEFAULT_SEED)
    p.add_argument("--T", type=_series_length, default=4000)
    p.add_argument("--N", type=_positive_int, default=5)
    p.add_argument("--var-order", dest="data_K", type=_positive_int, default=2, help="VAR order (linear-var)")
    p.add_argument("--density", type=_density, default=0.3)
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--max-workers", type=_positive_int, default=config.MAX_WORKERS)
    _add_config_args(p)
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("grid", help="Grid search ranked by validation MSE")
    _add_data_args(p)
    _add_config_args(p)
    p.add_argument("--grid", action="append", required=True, help="key=v1,v2,... (repeatable)")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_grid)

    p = sub.add_parser("preset", help="List or show hyperparameter presets")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--list", action="store_true")
    group.add_argument("--show", metavar="NAME")
    p.set_defaults(handler=cmd_preset)

    return parser


def main(argv=None):
    """Run one command; returns 0 on success, 1 on failure, 2 on bad usage."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    logger = RunLogger(stream=sys.stderr)
    try:
        return args.handler(args, logger)
    except (NavarError, OSError) as e:
        logger.error(str(e))
        return 1


if __name__ == "__main__":
    sys.exit(main())
