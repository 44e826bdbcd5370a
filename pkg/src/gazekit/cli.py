"""Command-line entry point.

Commands: validate, stats, extract, train, evaluate, cross-eval, ablate,
analyze, report, run.  Exit codes: 0 success, 1 usage error, 2 data
validation failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .corpus import corpus_stats, load_corpus, validate_corpus
from .errors import ConfigError, CorpusError, GazekitError
from .features import export_features_tsv, extract_features
from .pipeline import (DEFAULT_RATIOS, DEFAULT_SPLIT_SEED, evaluate_runs, make_report,
                       run_ablation, run_analysis, run_cross_eval, run_pipeline,
                       run_training, standardized_splits)
from .regression import TrainConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

logger = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ratios(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated ratios")
    return (parts[0], parts[1], parts[2])


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(","))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(","))


def _pairs(values: list[str]) -> dict[str, str]:
    out = {}
    for value in values:
        if "=" not in value:
            raise ConfigError(f"expected LABEL=PATH, got {value!r}")
        label, path = value.split("=", 1)
        out[label] = path
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gazekit",
                     description="Reading-measure extraction, token regression "
                                 "and its evaluation harness")
    parser.add_argument("--version", action="version", version=f"gazekit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a corpus file against all invariants")
    p.add_argument("corpus")
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = sub.add_parser("stats", help="descriptive statistics of a corpus")
    p.add_argument("corpus")
    p.add_argument("--json", action="store_true")

    p = sub.add_parser("extract", help="compute the feature table of a corpus")
    p.add_argument("corpus")
    p.add_argument("--out", required=True, help="output TSV path")
    p.add_argument("--standardize", action="store_true",
                   help="scale to 0-100 with a train-split-fitted standardizer")
    p.add_argument("--ratios", type=_ratios, default=DEFAULT_RATIOS)
    p.add_argument("--split-seed", type=int, default=DEFAULT_SPLIT_SEED)
    p.add_argument("--scaler-fit", choices=["train", "all"], default="train",
                   help="fit the standardizer on the training split or everything")
    p.add_argument("--avg-fixating-only", action="store_true",
                   help="average counts/durations over fixating subjects only")

    p = sub.add_parser("train", help="fine-tune an encoder on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--encoder", default="tiny")
    p.add_argument("--seed", type=int, default=12)
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--no-finetune", action="store_true",
                   help="frozen pretrained-baseline mode")
    p.add_argument("--train-fraction", type=float, default=1.0)
    p.add_argument("--ratios", type=_ratios, default=DEFAULT_RATIOS)
    p.add_argument("--split-seed", type=int, default=DEFAULT_SPLIT_SEED)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--scaler-fit", choices=["train", "all"], default="train")
    p.add_argument("--avg-fixating-only", action="store_true")

    p = sub.add_parser("evaluate", help="evaluate run(s) on a held-out split")
    p.add_argument("--runs", nargs="+", required=True, help="run directories")
    p.add_argument("--corpus", default=None, help="override the corpus recorded in the run")
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--baseline", action="store_true",
                   help="evaluate the mean baseline instead of the models")
    p.add_argument("--include-padding", action="store_true",
                   help="count padded cells as zero-error")
    p.add_argument("--out", default=None, help="write report JSON here")

    p = sub.add_parser("cross-eval", help="transfer matrix across datasets")
    p.add_argument("--runs", nargs="+", required=True, metavar="LABEL=RUN_DIR")
    p.add_argument("--corpora", nargs="+", required=True, metavar="LABEL=CORPUS")
    p.add_argument("--out", required=True, help="matrix CSV path")
    p.add_argument("--batch-size", type=int, default=16)

    p = sub.add_parser("ablate", help="training-data ablation curve")
    p.add_argument("--corpus", required=True)
    p.add_argument("--encoder", default="tiny")
    p.add_argument("--fractions", type=_floats, default=(0.05, 0.1, 0.2, 0.5, 1.0))
    p.add_argument("--seeds", type=_ints, default=None)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--ratios", type=_ratios, default=DEFAULT_RATIOS)
    p.add_argument("--split-seed", type=int, default=DEFAULT_SPLIT_SEED)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--render", action="store_true",
                   help="also render a PNG of the curve (needs matplotlib)")

    p = sub.add_parser("analyze", help="word-length / readability / POS analyses")
    p.add_argument("--kind", required=True, choices=["wordlen", "readability", "pos"])
    p.add_argument("--corpus", required=True)
    p.add_argument("--run", default=None, help="run directory supplying predictions")
    p.add_argument("--feature", default=None)
    p.add_argument("--tags", default=None, help="TSV of sentence_id, token_index, tag")
    p.add_argument("--language", default=None)
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--render", action="store_true",
                   help="also render a PNG next to the CSV (needs matplotlib)")

    p = sub.add_parser("report", help="summary tables over completed runs")
    p.add_argument("runs", nargs="+", help="run directories with report.json")
    p.add_argument("--out-csv", default=None)

    p = sub.add_parser("run", help="execute an experiment config end to end")
    p.add_argument("--config", required=True, help="experiment JSON")

    return parser


def _train_config(args) -> TrainConfig:
    overrides = {}
    if getattr(args, "epochs", None) is not None:
        overrides["max_epochs"] = args.epochs
    if getattr(args, "patience", None) is not None:
        overrides["patience"] = args.patience
    if getattr(args, "batch_size", None) is not None:
        overrides["batch_size"] = args.batch_size
    if getattr(args, "lr", None) is not None:
        overrides["learning_rate"] = args.lr
    base = TrainConfig().to_json_dict()
    base.update(overrides)
    return TrainConfig.from_json_dict(base)


def _cmd_validate(args) -> int:
    report = validate_corpus(load_corpus(args.corpus, validate=False))
    if args.json:
        print(json.dumps({"clean": report.is_clean,
                          "violations": [{"entity": v.entity, "rule": v.rule,
                                          "message": v.message}
                                         for v in report.violations]}, indent=2))
    elif report.is_clean:
        print(f"{args.corpus}: clean")
    else:
        print(f"{args.corpus}: {len(report)} violation(s)")
        for violation in report.violations:
            print(f"  {violation}")
    return EXIT_OK if report.is_clean else EXIT_VALIDATION


def _cmd_stats(args) -> int:
    stats = corpus_stats(load_corpus(args.corpus))
    if args.json:
        print(json.dumps(stats.as_dict(), indent=2))
    else:
        d = stats.as_dict()
        print(f"subjects:  {d['n_subjects']}")
        print(f"sentences: {d['n_sentences']}")
        print(f"tokens:    {d['n_tokens']}")
        print(f"types:     {d['n_types']}")
        print(f"sentence length: {d['sent_length']['mean']:.2f} "
              f"({d['sent_length']['min']}-{d['sent_length']['max']})")
        print(f"word length:     {d['word_length']['mean']:.2f} "
              f"({d['word_length']['min']}-{d['word_length']['max']})")
    return EXIT_OK


def _cmd_extract(args) -> int:
    if args.standardize:
        corpus = load_corpus(args.corpus)
        train_std, val_std, test_std, _ = standardized_splits(
            corpus, args.ratios, args.split_seed, scaler_fit=args.scaler_fit,
            avg_fixating_only=args.avg_fixating_only)
        stem = Path(args.out)
        for name, ds in [("train", train_std), ("val", val_std), ("test", test_std)]:
            out = stem.with_name(f"{stem.stem}.{name}{stem.suffix or '.tsv'}")
            export_features_tsv(ds, out)
            print(f"wrote {out} ({ds.n_sentences} sentences)")
    else:
        dataset = extract_features(load_corpus(args.corpus),
                                   avg_fixating_only=args.avg_fixating_only)
        export_features_tsv(dataset, args.out)
        print(f"wrote {args.out} ({dataset.n_sentences} sentences, "
              f"{dataset.n_valid_tokens} tokens)")
    return EXIT_OK


def _cmd_train(args) -> int:
    run_dir = run_training(
        args.corpus, args.encoder, args.out, seed=args.seed, cfg=_train_config(args),
        ratios=args.ratios, split_seed=args.split_seed, no_finetune=args.no_finetune,
        train_fraction=args.train_fraction, scaler_fit=args.scaler_fit,
        avg_fixating_only=args.avg_fixating_only, command=" ".join(sys.argv))
    print(f"run directory: {run_dir}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    report = evaluate_runs(args.runs, corpus_path=args.corpus, split=args.split,
                           baseline=args.baseline, include_padding=args.include_padding,
                           out=args.out)
    print(json.dumps(report.to_json_dict(), indent=2))
    return EXIT_OK


def _cmd_cross_eval(args) -> int:
    matrix = run_cross_eval(_pairs(args.runs), _pairs(args.corpora),
                            batch_size=args.batch_size, out=args.out)
    print("labels:", ", ".join(matrix.labels))
    for i, src in enumerate(matrix.labels):
        cells = "  ".join(f"{matrix.deltas[i, j]:+.3f}" for j in range(len(matrix.labels)))
        print(f"  {src}: {cells}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    curve = run_ablation(args.corpus, args.encoder, args.fractions, args.out,
                         cfg=_train_config(args), seeds=args.seeds, ratios=args.ratios,
                         split_seed=args.split_seed, command=" ".join(sys.argv))
    if args.render:
        from .pipeline import render_ablation
        render_ablation(curve, Path(args.out) / "ablation.png")
    for i, fraction in enumerate(curve.fractions):
        print(f"fraction {fraction:>5}: accuracy {curve.accuracy_mean[i]:.2f} "
              f"({curve.accuracy_std[i]:.2f}) on {curve.n_train_sentences[i]} sentences")
    if curve.reference_accuracy is not None:
        print(f"no-finetune reference: {curve.reference_accuracy:.2f}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    result = run_analysis(args.kind, args.corpus, run_dir=args.run,
                          feature=args.feature, tags_path=args.tags,
                          language=args.language, out=args.out)
    if args.render:
        if args.kind == "pos":
            raise ConfigError("--render supports curve analyses only")
        from .pipeline import render_curves
        render_curves(result, Path(args.out).with_suffix(".png"), title=args.kind)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_report(args) -> int:
    print(make_report(args.runs, out_csv=args.out_csv))
    return EXIT_OK


def _cmd_run(args) -> int:
    out_dir = run_pipeline(args.config)
    print(f"pipeline outputs in {out_dir}")
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "stats": _cmd_stats,
    "extract": _cmd_extract,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "cross-eval": _cmd_cross_eval,
    "ablate": _cmd_ablate,
    "analyze": _cmd_analyze,
    "report": _cmd_report,
    "run": _cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"gazekit: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CorpusError as exc:
        print(f"gazekit: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except GazekitError as exc:
        print(f"gazekit: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - anything else is a runtime failure
        if args.verbose:
            raise
        print(f"gazekit: unexpected failure: {exc!r}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
