#!/usr/bin/env python3
"""End-to-end demo on a synthetic corpus: extract features, fine-tune the tiny
encoder, compare against the mean baseline, and dump the word-length curves.

Runs CPU-only in a couple of minutes with the default sizes; shrink
--sentences / --epochs for a faster pass.
"""

import argparse
import json
import tempfile
from pathlib import Path

from gazekit.cli import main as gazekit
from gazekit.corpus import write_unified
from gazekit.synthetic import make_synthetic_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=None,
                        help="working directory (default: a temp dir)")
    parser.add_argument("--sentences", type=int, default=700)
    parser.add_argument("--subjects", type=int, default=12)
    parser.add_argument("--epochs", type=int, default=None,
                        help="override the default 100-epoch recipe")
    parser.add_argument("--seed", type=int, default=12)
    args = parser.parse_args()

    out = args.out or Path(tempfile.mkdtemp(prefix="gazekit-demo-"))
    out.mkdir(parents=True, exist_ok=True)
    corpus_path = out / "corpus.jsonl"
    write_unified(make_synthetic_corpus(n_sentences=args.sentences,
                                        n_subjects=args.subjects, seed=7),
                  corpus_path)

    run_dir = out / f"run-seed{args.seed}"
    train_args = ["train", "--corpus", str(corpus_path), "--encoder", "tiny",
                  "--seed", str(args.seed), "--out", str(run_dir)]
    if args.epochs is not None:
        train_args += ["--epochs", str(args.epochs),
                       "--patience", str(max(1, args.epochs - 1))]

    for step in [
        ["validate", str(corpus_path)],
        ["stats", str(corpus_path)],
        train_args,
        ["evaluate", "--runs", str(run_dir), "--out", str(run_dir / "report.json")],
        ["evaluate", "--runs", str(run_dir), "--baseline",
         "--out", str(out / "baseline.json")],
        ["analyze", "--kind", "wordlen", "--corpus", str(corpus_path),
         "--run", str(run_dir), "--feature", "fProp",
         "--out", str(out / "wordlen.csv")],
        ["report", str(run_dir)],
    ]:
        print(f"\n$ gazekit {' '.join(step)}")
        code = gazekit(step)
        if code != 0:
            raise SystemExit(code)

    model = json.loads((run_dir / "report.json").read_text())
    baseline = json.loads((out / "baseline.json").read_text())
    print(f"\nfine-tuned accuracy: {model['overall']['mean']:.2f}")
    print(f"mean-baseline accuracy: {baseline['overall']['mean']:.2f}")
    print(f"artifacts in {out}")


if __name__ == "__main__":
    main()
