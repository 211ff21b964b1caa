"""Command-line entry point.

Subcommands: preprocess, features, split, train, crossval, external,
report. Exit codes: 0 success, 1 any-subject failure, 2 config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .errors import ConfigError, GliopipeError, InvalidRatio
from .nifti_io import read_cohort_csv
from . import pipeline


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gliopipe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("preprocess", "features", "split", "train", "crossval", "external", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", type=str, default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--cache-dir", type=str, default=None)
        if name == "external":
            p.add_argument("--model", type=str, required=True, help="frozen model file")
    return parser


def _load_config(args) -> pipeline.PipelineConfig:
    return pipeline.PipelineConfig.from_json(
        args.config, seed=args.seed, jobs=args.jobs, cache_dir=args.cache_dir
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
    except (ConfigError, InvalidRatio) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "preprocess":
            manifest = pipeline.run_preprocess(config)
            summary = manifest["summary"]
            print(json.dumps(summary, indent=2, sort_keys=True))
            return 1 if summary["failed"] else 0
        if args.command == "features":
            result = pipeline.run_features(config)
            print(json.dumps(result, indent=2, sort_keys=True))
            return 1 if result["failed"] else 0
        if args.command == "split":
            cohort = read_cohort_csv(
                Path(config.labels_csv).read_text(),
                id_col=config.id_column,
                label_col=config.label_column,
            )
            split = pipeline.stratified_split(cohort, config.split_ratio, config.seed)
            folds = pipeline.kfold(cohort, config.folds, config.seed)
            out_dir = Path(config.output_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "split.json").write_text(json.dumps(split, indent=2, sort_keys=True))
            (out_dir / "folds.json").write_text(json.dumps(folds, indent=2, sort_keys=True))
            print(json.dumps({"train": sum(v == "train" for v in split.values()),
                              "val": sum(v == "val" for v in split.values())}))
            return 0
        if args.command == "train":
            print(json.dumps(pipeline.run_train(config), indent=2, sort_keys=True))
            return 0
        if args.command == "crossval":
            print(json.dumps(pipeline.run_crossval(config), indent=2, sort_keys=True))
            return 0
        if args.command == "external":
            print(json.dumps(pipeline.run_external(config, args.model), indent=2, sort_keys=True))
            return 0
        if args.command == "report":
            print(json.dumps(pipeline.run_report(config), indent=2, sort_keys=True))
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (GliopipeError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
