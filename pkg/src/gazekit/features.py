"""Token-level reading measures and their 0-100 standardization.

Eight measures are derived per token from the fixation record: number of
fixations (nFix), first fixation duration (FFD), first pass duration (FPD),
total reading time (TRT), mean fixation duration (MFD), fixation proportion
(fProp), number of re-fixations (nRefix) and re-read proportion (reProp).
Measures are computed per subject, then averaged over all subjects of the
corpus; subjects who never fixated a token (or never read the sentence)
contribute zeros, which keeps the identity nRefix = nFix - fProp exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Corpus, Sentence, SubjectTrial, validate_corpus
from .errors import ConfigError, CorpusError

#: Fixed feature-vector layout used by every matrix, file and report.
FEATURE_NAMES = ("nFix", "FFD", "FPD", "TRT", "MFD", "fProp", "nRefix", "reProp")
N_FEATURES = len(FEATURE_NAMES)

#: Standardized feature range.
SCALE_MAX = 100.0


@dataclass(frozen=True, slots=True)
class SubjectTokenMeasures:
    """Raw measures of one (subject, token) pair, before subject averaging."""

    n_fix: int
    ffd: float
    fpd: float
    trt: float
    mfd: float
    n_refix: int
    fixated: bool
    refixated: bool

    @classmethod
    def zeros(cls) -> "SubjectTokenMeasures":
        return cls(0, 0.0, 0.0, 0.0, 0.0, 0, False, False)


@dataclass(frozen=True, slots=True)
class TokenFeatures:
    """Subject-averaged feature vector of one token, in FEATURE_NAMES order."""

    n_fix: float
    ffd: float
    fpd: float
    trt: float
    mfd: float
    f_prop: float
    n_refix: float
    re_prop: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.n_fix, self.ffd, self.fpd, self.trt, self.mfd, self.f_prop,
             self.n_refix, self.re_prop],
            dtype=np.float64,
        )


def subject_measures(trial: SubjectTrial, sentence: Sentence) -> list[SubjectTokenMeasures]:
    """Per-token measures of a single subject's fixation sequence.

    FFD is the duration of the chronologically first fixation on the token;
    FPD sums the consecutive run of fixations starting there and ending as
    soon as any other token is fixated; TRT sums all fixations on the token
    regardless of position in the sequence.  Unfixated tokens get all zeros.
    """
    n_tokens = len(sentence.tokens)
    sequence = [(f.token_index, f.duration_ms) for f in trial.fixations]

    counts = [0] * n_tokens
    totals = [0.0] * n_tokens
    first_pos = [-1] * n_tokens
    for pos, (tok, dur) in enumerate(sequence):
        counts[tok] += 1
        totals[tok] += dur
        if first_pos[tok] < 0:
            first_pos[tok] = pos

    out: list[SubjectTokenMeasures] = []
    for tok in range(n_tokens):
        if counts[tok] == 0:
            out.append(SubjectTokenMeasures.zeros())
            continue
        start = first_pos[tok]
        ffd = sequence[start][1]
        fpd = 0.0
        for pos in range(start, len(sequence)):
            if sequence[pos][0] != tok:
                break
            fpd += sequence[pos][1]
        trt = totals[tok]
        n_fix = counts[tok]
        out.append(SubjectTokenMeasures(
            n_fix=n_fix,
            ffd=ffd,
            fpd=fpd,
            trt=trt,
            mfd=trt / n_fix,
            n_refix=max(0, n_fix - 1),
            fixated=True,
            refixated=n_fix >= 2,
        ))
    return out


def aggregate_token_features(measures: Sequence[SubjectTokenMeasures],
                             n_subjects: int | None = None,
                             *, avg_fixating_only: bool = False) -> TokenFeatures:
    """Average one token's per-subject measures into a TokenFeatures vector.

    Counts and durations are averaged over all ``n_subjects`` with zeros for
    non-fixating subjects; fProp and reProp always divide by ``n_subjects``.
    With ``avg_fixating_only`` the count/duration means are taken over
    fixating subjects only (proportions are unchanged).
    """
    if n_subjects is None:
        n_subjects = len(measures)
    if n_subjects < 1:
        raise ConfigError("aggregation needs at least one subject")
    if len(measures) != n_subjects:
        raise ConfigError(f"expected {n_subjects} measures, got {len(measures)}")

    n_fixating = sum(1 for m in measures if m.fixated)
    n_refixating = sum(1 for m in measures if m.refixated)
    denom = n_fixating if (avg_fixating_only and n_fixating > 0) else n_subjects

    return TokenFeatures(
        n_fix=sum(m.n_fix for m in measures) / denom,
        ffd=sum(m.ffd for m in measures) / denom,
        fpd=sum(m.fpd for m in measures) / denom,
        trt=sum(m.trt for m in measures) / denom,
        mfd=sum(m.mfd for m in measures) / denom,
        f_prop=n_fixating / n_subjects,
        n_refix=sum(m.n_refix for m in measures) / denom,
        re_prop=n_refixating / n_subjects,
    )


@dataclass(frozen=True)
class FeatureDataset:
    """Sentence-aligned feature matrices with a per-token validity mask.

    ``features`` has shape (n_sentences, max_len, 8) and ``mask`` shape
    (n_sentences, max_len); mask is True exactly where a real token exists.
    """

    corpus_name: str
    split: str
    sentence_ids: tuple[str, ...]
    tokens: tuple[tuple[str, ...], ...]
    features: np.ndarray
    mask: np.ndarray
    feature_order: tuple[str, ...] = FEATURE_NAMES
    standardized: bool = False

    def __post_init__(self):
        n = len(self.sentence_ids)
        if self.features.ndim != 3 or self.features.shape[2] != N_FEATURES:
            raise ConfigError(f"feature matrix must be (N, L, {N_FEATURES}), "
                              f"got {self.features.shape}")
        if self.features.shape[:2] != self.mask.shape or self.mask.shape[0] != n:
            raise ConfigError("feature/mask/sentence shapes disagree")
        if len(self.tokens) != n:
            raise ConfigError("token lists do not match sentence count")

    @property
    def n_sentences(self) -> int:
        return len(self.sentence_ids)

    @property
    def n_valid_tokens(self) -> int:
        return int(self.mask.sum())

    def sentence_length(self, i: int) -> int:
        return len(self.tokens[i])

    def sentence_features(self, i: int) -> np.ndarray:
        """The (n_tokens, 8) matrix of sentence i, without padding."""
        return self.features[i, : self.sentence_length(i)]

    def valid_values(self) -> np.ndarray:
        """All valid rows stacked into an (n_valid_tokens, 8) matrix."""
        return self.features[self.mask]

    def subset(self, indices: Sequence[int]) -> "FeatureDataset":
        indices = list(indices)
        lengths = [len(self.tokens[i]) for i in indices]
        width = max(lengths, default=1)
        return FeatureDataset(
            corpus_name=self.corpus_name,
            split=self.split,
            sentence_ids=tuple(self.sentence_ids[i] for i in indices),
            tokens=tuple(self.tokens[i] for i in indices),
            features=self.features[indices, :width].copy(),
            mask=self.mask[indices, :width].copy(),
            feature_order=self.feature_order,
            standardized=self.standardized,
        )

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_order.index(name)
        except ValueError:
            raise ConfigError(f"unknown feature {name!r}; "
                              f"expected one of {self.feature_order}") from None


def extract_features(corpus: Corpus, *, split: str = "all", validate: bool = True,
                     avg_fixating_only: bool = False) -> FeatureDataset:
    """Compute the full feature matrix of a corpus: one row per token per sentence."""
    if validate:
        report = validate_corpus(corpus)
        if not report.is_clean:
            head = "; ".join(str(v) for v in report.violations[:5])
            raise CorpusError(f"cannot extract features from dirty corpus: {head}")
    if not corpus.sentences:
        raise CorpusError(f"corpus {corpus.name} has no sentences")

    subjects = sorted(corpus.subject_ids)
    n_subjects = max(1, len(subjects))
    trials_by_sentence = corpus.trials_by_sentence()

    max_len = max(len(s.tokens) for s in corpus.sentences)
    features = np.zeros((len(corpus.sentences), max_len, N_FEATURES), dtype=np.float64)
    mask = np.zeros((len(corpus.sentences), max_len), dtype=bool)

    for si, sentence in enumerate(corpus.sentences):
        n_tokens = len(sentence.tokens)
        mask[si, :n_tokens] = True
        by_subject = {t.subject_id: t for t in trials_by_sentence.get(sentence.sentence_id, [])}
        zeros_row = [SubjectTokenMeasures.zeros()] * n_tokens
        per_subject = [
            subject_measures(by_subject[subj], sentence) if subj in by_subject else zeros_row
            for subj in subjects
        ]
        for ti in range(n_tokens):
            token_measures = [per_subject[k][ti] for k in range(len(subjects))]
            if not token_measures:  # corpus without any subjects
                token_measures = [SubjectTokenMeasures.zeros()]
            agg = aggregate_token_features(token_measures, n_subjects,
                                           avg_fixating_only=avg_fixating_only)
            features[si, ti] = agg.as_array()

    return FeatureDataset(
        corpus_name=corpus.name,
        split=split,
        sentence_ids=tuple(s.sentence_id for s in corpus.sentences),
        tokens=tuple(tuple(t.surface for t in s.tokens) for s in corpus.sentences),
        features=features,
        mask=mask,
    )


# ---------------------------------------------------------------------------
# Standardization
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class Standardizer:
    """Invertible per-feature min-max scaling onto [0, 100].

    Fitted on a training split only.  Degenerate features (max == min) map to
    0; out-of-range inputs are clamped into [0, 100] at transform time.
    """

    mins: np.ndarray
    maxs: np.ndarray
    feature_order: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        if self.mins.shape != (N_FEATURES,) or self.maxs.shape != (N_FEATURES,):
            raise ConfigError("standardizer state must hold one (min, max) per feature")
        if np.any(self.maxs < self.mins):
            raise ConfigError("standardizer max < min")

    @property
    def degenerate(self) -> np.ndarray:
        return self.maxs == self.mins

    def transform_array(self, values: np.ndarray) -> np.ndarray:
        span = np.where(self.degenerate, 1.0, self.maxs - self.mins)
        scaled = SCALE_MAX * (values - self.mins) / span
        scaled = np.where(self.degenerate, 0.0, scaled)
        return np.clip(scaled, 0.0, SCALE_MAX)

    def inverse_array(self, values: np.ndarray) -> np.ndarray:
        restored = self.mins + (values / SCALE_MAX) * (self.maxs - self.mins)
        return np.where(self.degenerate, self.mins, restored)

    def to_json_dict(self) -> dict:
        return {
            name: {"min": float(self.mins[i]), "max": float(self.maxs[i])}
            for i, name in enumerate(self.feature_order)
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Standardizer":
        try:
            mins = np.array([data[name]["min"] for name in FEATURE_NAMES], dtype=np.float64)
            maxs = np.array([data[name]["max"] for name in FEATURE_NAMES], dtype=np.float64)
        except KeyError as exc:
            raise ConfigError(f"standardizer state missing entry for {exc}") from exc
        return cls(mins=mins, maxs=maxs)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Standardizer":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_standardizer(train: FeatureDataset) -> Standardizer:
    """Per-feature min/max over the valid tokens of the training split."""
    values = train.valid_values()
    if values.size == 0:
        raise ConfigError("cannot fit a standardizer on a dataset without valid tokens")
    return Standardizer(mins=values.min(axis=0), maxs=values.max(axis=0),
                        feature_order=train.feature_order)


def standardize(scaler: Standardizer, dataset: FeatureDataset) -> FeatureDataset:
    features = scaler.transform_array(dataset.features)
    features[~dataset.mask] = 0.0
    return replace(dataset, features=features, standardized=True)


def destandardize(scaler: Standardizer, dataset: FeatureDataset) -> FeatureDataset:
    features = scaler.inverse_array(dataset.features)
    features[~dataset.mask] = 0.0
    return replace(dataset, features=features, standardized=False)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def export_features_tsv(dataset: FeatureDataset, path: str | Path) -> None:
    """Write one row per valid token: sentence_id, token_index, surface, 8 features."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sentence_id\ttoken_index\tsurface\t" + "\t".join(dataset.feature_order) + "\n")
        for i, sentence_id in enumerate(dataset.sentence_ids):
            for ti, surface in enumerate(dataset.tokens[i]):
                values = "\t".join(repr(float(v)) for v in dataset.features[i, ti])
                fh.write(f"{sentence_id}\t{ti}\t{surface}\t{values}\n")
