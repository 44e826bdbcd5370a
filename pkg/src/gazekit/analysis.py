"""Input-characteristic analyses: readability scoring, word-length effect
curves, readability-vs-accuracy curves, and part-of-speech aggregation.

Readability uses the Flesch Reading Ease family.  The English weights are
the classic ones; the other languages use the published adaptations, whose
coefficient sets are implementation constants taken from their sources:

* English:  206.835 - 1.015 * ASL - 84.6  * ASW   (Flesch 1948)
* Dutch:    206.84  - 0.93  * ASL - 77.0  * ASW   (Douma 1960)
* German:   180.0   - 1.0   * ASL - 58.5  * ASW   (Amstad 1978)
* Russian:  206.835 - 1.3   * ASL - 60.1  * ASW   (Oborneva 2006)

ASL is words per sentence, ASW syllables per word; every token counts as a
word.  Scores are clamped into [0, 100].  Syllables come from per-language
vowel-group heuristics (see ``count_syllables``), not from hyphenation
dictionaries.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError
from .features import FeatureDataset

FLESCH_COEFFICIENTS: dict[str, tuple[float, float, float]] = {
    "en": (206.835, 1.015, 84.6),
    "nl": (206.84, 0.93, 77.0),
    "de": (180.0, 1.0, 58.5),
    "ru": (206.835, 1.3, 60.1),
}

_VOWEL_GROUP = {
    # y is treated as a vowel in the Germanic heuristics
    "en": re.compile(r"[aeiouy]+"),
    "nl": re.compile(r"[aeiouy]+"),
    "de": re.compile(r"[aeiouyäöü]+"),
}
_RU_VOWELS = re.compile(r"[аеёиоуыэюя]")


def count_syllables(word: str, language: str = "en") -> int:
    """Heuristic syllable count; always >= 1.

    en/nl: one syllable per vowel group, with an English silent-e rule
    (final e after a consonant is dropped unless the word ends in -le).
    de: one per vowel group including umlauts.  ru: one per vowel letter
    (Cyrillic hiatus is syllabic, so groups are not merged).
    """
    if not word:
        raise ConfigError("cannot count syllables of an empty word")
    lowered = word.lower()
    if language in ("en", "nl", "de"):
        groups = _VOWEL_GROUP[language].findall(lowered)
        count = len(groups)
        if (language == "en" and count > 1 and lowered.endswith("e")
                and not lowered.endswith("le")
                and lowered[-2] not in "aeiouy"):
            count -= 1
        return max(1, count)
    if language == "ru":
        return max(1, len(_RU_VOWELS.findall(lowered)))
    raise ConfigError(f"no syllable heuristic for language {language!r}; "
                      f"supported: {sorted(FLESCH_COEFFICIENTS)}")


@dataclass(frozen=True, slots=True)
class ReadabilityScore:
    value: float
    language: str
    avg_sentence_length: float
    avg_syllables_per_word: float


def flesch(sentences: Sequence[Sequence[str]], language: str = "en") -> ReadabilityScore:
    """Reading-ease score of tokenized sentences, clamped into [0, 100]."""
    if language not in FLESCH_COEFFICIENTS:
        raise ConfigError(f"no readability coefficients for language {language!r}; "
                          f"supported: {sorted(FLESCH_COEFFICIENTS)}")
    n_sentences = len(sentences)
    n_words = sum(len(s) for s in sentences)
    if n_sentences == 0 or n_words == 0:
        raise ConfigError("readability needs at least one sentence with one word")

    n_syllables = sum(count_syllables(w, language) for s in sentences for w in s)
    asl = n_words / n_sentences
    asw = n_syllables / n_words
    base, asl_weight, asw_weight = FLESCH_COEFFICIENTS[language]
    raw = base - asl_weight * asl - asw_weight * asw
    return ReadabilityScore(value=min(100.0, max(0.0, raw)), language=language,
                            avg_sentence_length=asl, avg_syllables_per_word=asw)


# ---------------------------------------------------------------------------
# Binned curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BinnedCurve:
    """Per-bin means of some quantity; zero-count bins are omitted."""

    series: str
    feature: str
    bins: tuple[float, ...]
    means: tuple[float, ...]
    counts: tuple[int, ...]

    def mean_at(self, bin_key: float) -> float:
        return self.means[self.bins.index(bin_key)]


def _binned_mean(keys: np.ndarray, values: np.ndarray, series: str,
                 feature: str) -> BinnedCurve:
    order = np.unique(keys)
    bins, means, counts = [], [], []
    for key in order:
        sel = keys == key
        bins.append(float(key))
        means.append(float(values[sel].mean()))
        counts.append(int(sel.sum()))
    return BinnedCurve(series=series, feature=feature, bins=tuple(bins),
                       means=tuple(means), counts=tuple(counts))


def word_length_curve(dataset: FeatureDataset, predictions: np.ndarray | None = None,
                      feature: str = "fProp", *, length_cap: int = 15,
                      reference_predictions: np.ndarray | None = None
                      ) -> list[BinnedCurve]:
    """Mean feature value per word-length bin (characters; >= cap pooled).

    Always returns the curve of the true values; adds one series per supplied
    prediction array (fine-tuned and, optionally, a pretrained reference),
    which must be padded like ``dataset.features``.
    """
    fi = dataset.feature_index(feature)
    lengths = []
    rows = {"true": []}
    if predictions is not None:
        rows["predicted"] = []
    if reference_predictions is not None:
        rows["pretrained"] = []

    for i in range(dataset.n_sentences):
        for ti, surface in enumerate(dataset.tokens[i]):
            if not dataset.mask[i, ti]:
                continue
            lengths.append(min(len(surface), length_cap))
            rows["true"].append(dataset.features[i, ti, fi])
            if predictions is not None:
                rows["predicted"].append(predictions[i, ti, fi])
            if reference_predictions is not None:
                rows["pretrained"].append(reference_predictions[i, ti, fi])

    keys = np.array(lengths)
    return [_binned_mean(keys, np.array(values), series, feature)
            for series, values in rows.items()]


def readability_accuracy_curve(gold: FeatureDataset, predictions: np.ndarray,
                               feature: str = "nFix", language: str = "en", *,
                               bin_width: float = 10.0,
                               series: str = "predicted") -> BinnedCurve:
    """Per-sentence accuracy on one feature, bucketed by the sentence's
    reading-ease score (bins of ``bin_width`` points, keyed by lower edge)."""
    fi = gold.feature_index(feature)
    bins, accs = [], []
    for i in range(gold.n_sentences):
        valid = gold.mask[i]
        if not valid.any():
            continue
        err = np.abs(predictions[i, valid, fi] - gold.features[i, valid, fi]).mean()
        score = flesch([gold.tokens[i]], language).value
        bins.append(bin_width * np.floor(score / bin_width))
        accs.append(100.0 - err)
    if not bins:
        raise ConfigError("no scorable sentences")
    return _binned_mean(np.array(bins), np.array(accs), series, feature)


# ---------------------------------------------------------------------------
# Part-of-speech aggregation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class PosGroup:
    tag: str
    mean_mfd: float
    count: int
    accuracy: float | None = None


def pos_aggregation(dataset: FeatureDataset, tags: Sequence[Sequence[str]],
                    predictions: np.ndarray | None = None,
                    feature: str = "MFD") -> dict[str, PosGroup]:
    """Group-by-tag mean of a feature (MFD by default) over valid tokens.

    ``tags`` must align 1:1 with the dataset's tokens.  With predictions,
    each group also gets its model accuracy on the chosen feature.
    """
    if len(tags) != dataset.n_sentences:
        raise ConfigError(f"tag lists for {len(tags)} sentences, dataset has "
                          f"{dataset.n_sentences}")
    fi = dataset.feature_index(feature)
    by_tag: dict[str, list[float]] = {}
    errors: dict[str, list[float]] = {}
    for i in range(dataset.n_sentences):
        if len(tags[i]) != len(dataset.tokens[i]):
            raise ConfigError(
                f"sentence {dataset.sentence_ids[i]}: {len(tags[i])} tags for "
                f"{len(dataset.tokens[i])} tokens")
        for ti, tag in enumerate(tags[i]):
            if not dataset.mask[i, ti]:
                continue
            by_tag.setdefault(tag, []).append(float(dataset.features[i, ti, fi]))
            if predictions is not None:
                errors.setdefault(tag, []).append(
                    abs(float(predictions[i, ti, fi] - dataset.features[i, ti, fi])))

    return {
        tag: PosGroup(
            tag=tag,
            mean_mfd=float(np.mean(values)),
            count=len(values),
            accuracy=(100.0 - float(np.mean(errors[tag]))) if predictions is not None
            else None,
        )
        for tag, values in sorted(by_tag.items())
    }


def load_tags_tsv(path: str | Path) -> dict[tuple[str, int], str]:
    """Read (sentence_id, token_index, tag) rows; header optional."""
    mapping: dict[tuple[str, int], str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ConfigError(f"{path}:{line_no}: expected 3 tab-separated "
                                  f"columns, got {len(parts)}")
            if line_no == 1 and parts[1] == "token_index":
                continue
            mapping[(parts[0], int(parts[1]))] = parts[2]
    return mapping


def tags_for_dataset(dataset: FeatureDataset,
                     mapping: Mapping[tuple[str, int], str],
                     *, missing: str = "X") -> list[list[str]]:
    """Arrange a tag mapping into per-sentence lists aligned with the dataset."""
    return [
        [mapping.get((sid, ti), missing) for ti in range(len(dataset.tokens[i]))]
        for i, sid in enumerate(dataset.sentence_ids)
    ]


def curves_to_csv(curves: Sequence[BinnedCurve], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin", "series", "mean", "count"])
        for curve in curves:
            for b, m, c in zip(curve.bins, curve.means, curve.counts):
                writer.writerow([b, curve.series, repr(m), c])
