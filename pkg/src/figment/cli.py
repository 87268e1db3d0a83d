"""Command-line entry point: ``figment <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import pipeline
from .config import RunConfig
from .errors import FigmentError


def _add_config(p):
    p.add_argument("--config", "-c", help="run config (INI); defaults apply when omitted")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value; repeatable")


def build_parser():
    parser = argparse.ArgumentParser(prog="figment", description="Corpus-level fine-grained entity typing.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus, catalog, embeddings and run config")
    _add_config(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("preprocess", help="clean corpus, extract and sample contexts, split entities")
    _add_config(p)

    p = sub.add_parser("train", help="train the global (gm) or context (cm) model")
    p.add_argument("model", choices=["gm", "cm"])
    _add_config(p)

    p = sub.add_parser("predict", help="write a type score TSV for one split")
    p.add_argument("model", choices=["gm", "cm", "mft"])
    _add_config(p)
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--out", help="output TSV (default: <work_dir>/<model>.<split>.tsv)")
    p.add_argument("--force", action="store_true", help="accept a checkpoint trained under another config")

    p = sub.add_parser("joint", help="average a GM and a CM score TSV")
    p.add_argument("gm_scores")
    p.add_argument("cm_scores")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true", help="accept inputs with different config hashes")

    p = sub.add_parser("evaluate", help="tune thresholds on dev scores and report all metrics")
    p.add_argument("scores", help="scores to evaluate (usually test)")
    p.add_argument("dev_scores", help="dev scores used for threshold tuning")
    _add_config(p)
    p.add_argument("--out", help="write the JSON report here as well as to stdout")
    p.add_argument("--force", action="store_true", help="accept score files from another config")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.command == "joint":
            pipeline.run_joint(args.gm_scores, args.cm_scores, args.out, args.force)
            return 0
        cfg = RunConfig.load(args.config, args.overrides)
        if args.command == "synth":
            pipeline.run_synth(cfg, args.out)
        elif args.command == "preprocess":
            report = pipeline.run_preprocess(cfg)
            print(json.dumps(report["contexts_written"], sort_keys=True))
        elif args.command == "train":
            result = pipeline.run_train(cfg, args.model)
            print(f"best epoch {result.best_epoch} dev micro-F1 {result.best_score:.4f}")
        elif args.command == "predict":
            pipeline.run_predict(cfg, args.model, args.split, args.out, args.force)
        elif args.command == "evaluate":
            report = pipeline.run_evaluate(cfg, args.scores, args.dev_scores, args.out, args.force)
            print(json.dumps(report, sort_keys=True, indent=1))
    except (FigmentError, ValueError, KeyError, OSError) as e:
        print(f"figment: error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
