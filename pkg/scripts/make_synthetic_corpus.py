#!/usr/bin/env python3
"""Write synthetic gaze corpora in the unified-jsonl interchange format.

The default profile builds the bundled word-length fixture; --shifted switches
to the contrasting reading regime used for domain-transfer experiments.
"""

import argparse
from pathlib import Path

from gazekit.corpus import write_unified
from gazekit.synthetic import DEFAULT_PROFILE, SHIFTED_PROFILE, make_synthetic_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out", type=Path, help="output .jsonl path")
    parser.add_argument("--name", default="synthetic")
    parser.add_argument("--sentences", type=int, default=1200)
    parser.add_argument("--subjects", type=int, default=12)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--language", default="en")
    parser.add_argument("--shifted", action="store_true",
                        help="use the slow-reading, steep-length-effect profile")
    args = parser.parse_args()

    corpus = make_synthetic_corpus(
        args.name, args.language, n_sentences=args.sentences,
        n_subjects=args.subjects, seed=args.seed,
        profile=SHIFTED_PROFILE if args.shifted else DEFAULT_PROFILE)
    write_unified(corpus, args.out)
    print(f"wrote {args.out}: {len(corpus.sentences)} sentences, "
          f"{len(corpus.subject_ids)} subjects, {len(corpus.trials)} trials")


if __name__ == "__main__":
    main()
