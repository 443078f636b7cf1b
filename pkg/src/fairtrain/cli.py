"""Command line entry points.

    fairtrain run <config.json> [--jobs N] [--out DIR] [--seed S]
    fairtrain gen-synth <config.json>
    fairtrain eval <model.json> <data.csv>

Exit codes: 0 success, 2 config error, 3 run failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import ConfigError, RunFailure, load_model, parse_config, run_experiment
from .data import CsvParseError, SyntheticConfig, apply_scaler, generate_synthetic, load_csv, write_csv
from .metrics import PredictionSet, fairness_report
from .net import predict_scores

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUN = 3


def _cmd_run(args) -> int:
    try:
        cfg = parse_config(args.config)
        if args.out is not None:
            cfg.output_dir = args.out
        if args.seed is not None:
            cfg.base_seed = args.seed
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run_experiment(cfg, jobs=args.jobs)
    except RunFailure as err:
        print(f"run failure: {err}", file=sys.stderr)
        return EXIT_RUN
    except (OSError, CsvParseError) as err:
        print(f"run failure: {err}", file=sys.stderr)
        return EXIT_RUN
    print(f"completed {summary.repetitions} runs -> {cfg.output_dir}")
    for split_name in ("train", "test"):
        stats = summary.metric_stats[split_name]
        line = "  ".join(f"{k}={v['mean']:.4f}+-{v['std']:.4f}" for k, v in stats.items())
        print(f"{split_name}: {line}")
    return EXIT_OK


def _cmd_gen_synth(args) -> int:
    try:
        with open(args.config, encoding="utf-8") as f:
            doc = json.load(f)
        gen = doc["generator"]
        out = doc["out"]
        cfg = SyntheticConfig(
            n=gen["n"], dim=gen["dim"],
            group_weights=tuple(gen["group_weights"]),
            positive_rates=tuple(gen["positive_rates"]),
            seed=gen["seed"],
            class_sep=gen.get("class_sep", 1.0),
            group_shift=gen.get("group_shift", 0.5),
        )
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        ds = generate_synthetic(cfg)
        write_csv(ds, out)
    except OSError as err:
        print(f"run failure: {err}", file=sys.stderr)
        return EXIT_RUN
    print(f"wrote {len(ds)} rows, {ds.n_groups} groups -> {out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    try:
        spec, params, scaler, schema, threshold = load_model(args.model)
        if schema is None:
            raise ValueError("checkpoint carries no csv_schema; cannot ingest raw CSV")
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        ds = load_csv(args.data, schema)
        X = apply_scaler(scaler, ds.X)
        if X.shape[1] != spec.input_dim:
            raise ValueError(
                f"encoded feature width {X.shape[1]} does not match the model "
                f"input dim {spec.input_dim}")
        scores = predict_scores(spec, params, X)
        report = fairness_report(PredictionSet(scores=scores, labels=ds.y,
                                               groups=ds.g, threshold=threshold))
    except (CsvParseError, ValueError) as err:
        print(f"run failure: {err}", file=sys.stderr)
        return EXIT_RUN
    out = {"n": len(ds), "positive_rate": float(np.mean(ds.y)),
           "metrics": report.to_dict()}
    print(json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fairtrain",
                                     description="fairness-constrained training benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a benchmark experiment from a JSON config")
    p_run.add_argument("config")
    p_run.add_argument("--jobs", type=int, default=1, help="parallel repetitions")
    p_run.add_argument("--out", default=None, help="override output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override base seed")
    p_run.set_defaults(func=_cmd_run)

    p_gen = sub.add_parser("gen-synth", help="write a synthetic dataset CSV")
    p_gen.add_argument("config")
    p_gen.set_defaults(func=_cmd_gen_synth)

    p_eval = sub.add_parser("eval", help="fairness metrics of a checkpoint on a CSV")
    p_eval.add_argument("model")
    p_eval.add_argument("data")
    p_eval.set_defaults(func=_cmd_eval)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
