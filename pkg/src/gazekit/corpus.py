"""Normalized eye-tracking corpus model: loading, validation, statistics, splits.

A corpus is a set of sentences plus, per sentence, the chronological fixation
sequence of every subject who read it.  The on-disk interchange format is
line-delimited JSON with one record per sentence::

    {"document_id": str, "sentence_id": str, "language": str,
     "tokens": [str, ...],
     "trials": [{"subject_id": str,
                 "fixations": [{"token_index": int, "duration_ms": float,
                                "order": int}, ...]}, ...]}

Only durations and fixation order are stored; absolute onset times are not
needed by any downstream measure.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from .errors import ConfigError, CorpusError

SUPPORTED_LANGUAGES = ("en", "nl", "de", "ru")

#: Language code used when records of several languages are merged into one corpus.
MIXED_LANGUAGE = "mul"

_LANGUAGE_RE = re.compile(r"^[a-z]{2,3}$")


@dataclass(frozen=True, slots=True)
class Token:
    """One word of a sentence, at its 0-based position."""

    surface: str
    index: int
    char_length: int

    @classmethod
    def from_surface(cls, surface: str, index: int) -> "Token":
        return cls(surface=surface, index=index, char_length=len(surface))


@dataclass(frozen=True, slots=True)
class Sentence:
    sentence_id: str
    document_id: str
    tokens: tuple[Token, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


@dataclass(frozen=True, slots=True)
class FixationEvent:
    """A single fixation: which token it landed on, for how long, and when.

    ``order`` is the 0-based position in the subject's chronological fixation
    sequence for the sentence, not a timestamp.
    """

    token_index: int
    duration_ms: float
    order: int


@dataclass(frozen=True, slots=True)
class SubjectTrial:
    """All fixations of one subject over one sentence, in chronological order."""

    subject_id: str
    sentence_id: str
    fixations: tuple[FixationEvent, ...]


@dataclass(frozen=True)
class Corpus:
    name: str
    language: str
    sentences: tuple[Sentence, ...]
    trials: tuple[SubjectTrial, ...]
    subject_ids: frozenset[str]

    def sentence_by_id(self, sentence_id: str) -> Sentence:
        return self._sentence_index[sentence_id]

    @property
    def _sentence_index(self) -> dict[str, Sentence]:
        # cached lazily on the instance; cheap to rebuild for small corpora
        idx = self.__dict__.get("_sentence_index_cache")
        if idx is None:
            idx = {s.sentence_id: s for s in self.sentences}
            self.__dict__["_sentence_index_cache"] = idx
        return idx

    def trials_by_sentence(self) -> dict[str, list[SubjectTrial]]:
        grouped: dict[str, list[SubjectTrial]] = {s.sentence_id: [] for s in self.sentences}
        for trial in self.trials:
            grouped.setdefault(trial.sentence_id, []).append(trial)
        return grouped


@dataclass(frozen=True, slots=True)
class CorpusStats:
    n_subjects: int
    n_sentences: int
    n_tokens: int
    n_types: int
    sent_length_mean: float
    sent_length_min: int
    sent_length_max: int
    word_length_mean: float
    word_length_min: int
    word_length_max: int

    def as_dict(self) -> dict:
        return {
            "n_subjects": self.n_subjects,
            "n_sentences": self.n_sentences,
            "n_tokens": self.n_tokens,
            "n_types": self.n_types,
            "sent_length": {
                "mean": self.sent_length_mean,
                "min": self.sent_length_min,
                "max": self.sent_length_max,
            },
            "word_length": {
                "mean": self.word_length_mean,
                "min": self.word_length_min,
                "max": self.word_length_max,
            },
        }


@dataclass(frozen=True, slots=True)
class Violation:
    entity: str
    rule: str
    message: str

    def __str__(self) -> str:
        return f"{self.entity}: {self.rule}: {self.message}"


@dataclass(slots=True)
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def is_clean(self) -> bool:
        return not self.violations

    def add(self, entity: str, rule: str, message: str) -> None:
        self.violations.append(Violation(entity, rule, message))

    def __len__(self) -> int:
        return len(self.violations)

    def __str__(self) -> str:
        if self.is_clean:
            return "clean"
        return "\n".join(str(v) for v in self.violations)


# ---------------------------------------------------------------------------
# Loading / writing
# ---------------------------------------------------------------------------

AdapterFn = Callable[[Path, str], Corpus]

_ADAPTERS: dict[str, AdapterFn] = {}


def register_adapter(format_tag: str, fn: AdapterFn) -> None:
    """Register a loader for an additional on-disk corpus format."""
    _ADAPTERS[format_tag] = fn


def load_corpus(path: str | Path, format_tag: str = "unified-jsonl", *,
                name: str | None = None, validate: bool = True) -> Corpus:
    """Load a corpus file through the named format adapter.

    Raises CorpusError for malformed records (with line number and field) and,
    when ``validate`` is on, for corpora violating structural invariants.
    """
    path = Path(path)
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    adapter = _ADAPTERS.get(format_tag)
    if adapter is None:
        known = ", ".join(sorted(_ADAPTERS))
        raise ConfigError(f"unknown corpus adapter {format_tag!r} (registered: {known})")
    corpus = adapter(path, name if name is not None else path.stem)
    if validate:
        report = validate_corpus(corpus)
        if not report.is_clean:
            head = "; ".join(str(v) for v in report.violations[:5])
            raise CorpusError(
                f"{path}: corpus violates invariants ({len(report)} violation(s)): {head}"
            )
    return corpus


def _require(record: dict, key: str, line_no: int, path: Path):
    if key not in record:
        raise CorpusError(f"{path}:{line_no}: record is missing field {key!r}")
    return record[key]


def _load_unified_jsonl(path: Path, name: str) -> Corpus:
    sentences: list[Sentence] = []
    trials: list[SubjectTrial] = []
    subject_ids: set[str] = set()
    languages: set[str] = set()

    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"{path}:{line_no}: record is not a JSON object")

            sentence_id = str(_require(record, "sentence_id", line_no, path))
            document_id = str(_require(record, "document_id", line_no, path))
            languages.add(str(_require(record, "language", line_no, path)))
            raw_tokens = _require(record, "tokens", line_no, path)
            if not isinstance(raw_tokens, list):
                raise CorpusError(f"{path}:{line_no}: field 'tokens' must be a list")
            tokens = tuple(
                Token.from_surface(str(surface), i) for i, surface in enumerate(raw_tokens)
            )
            sentences.append(Sentence(sentence_id=sentence_id, document_id=document_id,
                                      tokens=tokens))

            raw_trials = record.get("trials", [])
            if not isinstance(raw_trials, list):
                raise CorpusError(f"{path}:{line_no}: field 'trials' must be a list")
            for trial_rec in raw_trials:
                subject_id = str(_require(trial_rec, "subject_id", line_no, path))
                subject_ids.add(subject_id)
                fixations = []
                for fix_rec in trial_rec.get("fixations", []):
                    try:
                        fixations.append(FixationEvent(
                            token_index=int(fix_rec["token_index"]),
                            duration_ms=float(fix_rec["duration_ms"]),
                            order=int(fix_rec["order"]),
                        ))
                    except (KeyError, TypeError, ValueError) as exc:
                        raise CorpusError(
                            f"{path}:{line_no}: bad fixation record in trial "
                            f"({subject_id}, {sentence_id}): {exc}"
                        ) from exc
                fixations.sort(key=lambda f: f.order)
                trials.append(SubjectTrial(subject_id=subject_id, sentence_id=sentence_id,
                                           fixations=tuple(fixations)))

    if not languages:
        raise CorpusError(f"{path}: empty corpus file")
    language = languages.pop() if len(languages) == 1 else MIXED_LANGUAGE
    return Corpus(name=name, language=language, sentences=tuple(sentences),
                  trials=tuple(trials), subject_ids=frozenset(subject_ids))


register_adapter("unified-jsonl", _load_unified_jsonl)


def write_unified(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus in the unified-jsonl interchange format (one sentence per line)."""
    path = Path(path)
    grouped = corpus.trials_by_sentence()
    with open(path, "w", encoding="utf-8") as fh:
        for sentence in corpus.sentences:
            record = {
                "document_id": sentence.document_id,
                "sentence_id": sentence.sentence_id,
                "language": corpus.language,
                "tokens": [t.surface for t in sentence.tokens],
                "trials": [
                    {
                        "subject_id": trial.subject_id,
                        "fixations": [
                            {"token_index": f.token_index, "duration_ms": f.duration_ms,
                             "order": f.order}
                            for f in trial.fixations
                        ],
                    }
                    for trial in grouped.get(sentence.sentence_id, [])
                ],
            }
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def validate_corpus(corpus: Corpus) -> ValidationReport:
    """Check every structural invariant; violations are data, not exceptions."""
    report = ValidationReport()

    if not _LANGUAGE_RE.match(corpus.language):
        report.add(f"corpus {corpus.name}", "language-code",
                   f"language {corpus.language!r} is not a lowercase ISO-style code")

    seen_sentence_ids: set[str] = set()
    for sentence in corpus.sentences:
        sid = f"sentence {sentence.sentence_id}"
        if sentence.sentence_id in seen_sentence_ids:
            report.add(sid, "unique-sentence-id", "duplicate sentence_id")
        seen_sentence_ids.add(sentence.sentence_id)
        if len(sentence.tokens) == 0:
            report.add(sid, "non-empty-sentence", "sentence has no tokens")
        for i, token in enumerate(sentence.tokens):
            if token.surface == "":
                report.add(sid, "non-empty-surface", f"token {i} has empty surface")
            if token.char_length != len(token.surface):
                report.add(sid, "char-length",
                           f"token {i}: char_length {token.char_length} != "
                           f"len({token.surface!r})")
            if token.index != i:
                report.add(sid, "contiguous-token-index",
                           f"token at position {i} carries index {token.index}")

    sentence_lengths = {s.sentence_id: len(s.tokens) for s in corpus.sentences}
    seen_trials: set[tuple[str, str]] = set()
    for trial in corpus.trials:
        tid = f"trial ({trial.subject_id}, {trial.sentence_id})"
        key = (trial.subject_id, trial.sentence_id)
        if key in seen_trials:
            report.add(tid, "unique-trial", "duplicate (subject_id, sentence_id) pair")
        seen_trials.add(key)
        if trial.sentence_id not in sentence_lengths:
            report.add(tid, "known-sentence", "trial references unknown sentence_id")
        if trial.subject_id not in corpus.subject_ids:
            report.add(tid, "known-subject", "trial subject_id missing from subject_ids")
        n_tokens = sentence_lengths.get(trial.sentence_id)
        for k, fixation in enumerate(trial.fixations):
            if fixation.duration_ms <= 0:
                report.add(tid, "positive-duration",
                           f"fixation {k} has duration_ms {fixation.duration_ms}")
            if fixation.order != k:
                report.add(tid, "contiguous-order",
                           f"fixation at position {k} carries order {fixation.order}")
            if n_tokens is not None and not (0 <= fixation.token_index < n_tokens):
                report.add(tid, "token-index-range",
                           f"fixation {k} targets token {fixation.token_index} "
                           f"but sentence has {n_tokens} tokens")

    return report


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

def corpus_stats(corpus: Corpus) -> CorpusStats:
    """Descriptive counts plus sentence/word length mean and min-max range.

    Types are counted case-sensitively on exact surface forms.
    """
    if not corpus.sentences:
        raise CorpusError(f"corpus {corpus.name} has no sentences")

    sent_lengths = [len(s.tokens) for s in corpus.sentences]
    word_lengths = [t.char_length for s in corpus.sentences for t in s.tokens]
    surfaces = {t.surface for s in corpus.sentences for t in s.tokens}

    return CorpusStats(
        n_subjects=len(corpus.subject_ids),
        n_sentences=len(corpus.sentences),
        n_tokens=len(word_lengths),
        n_types=len(surfaces),
        sent_length_mean=sum(sent_lengths) / len(sent_lengths),
        sent_length_min=min(sent_lengths),
        sent_length_max=max(sent_lengths),
        word_length_mean=sum(word_lengths) / len(word_lengths),
        word_length_min=min(word_lengths),
        word_length_max=max(word_lengths),
    )


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def _rounded_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_dataset(corpus: Corpus, ratios: tuple[float, float, float] = (0.9, 0.05, 0.05),
                  seed: int = 12) -> tuple[Corpus, Corpus, Corpus]:
    """Seeded sentence-level train/validation/test partition.

    Every sentence, together with all of its trials, lands in exactly one
    split.  Validation and test sizes are the rounded ratio shares; the
    remainder goes to train.  The same seed always yields the same partition.
    """
    if any(r <= 0 for r in ratios):
        raise ConfigError(f"split ratios must be positive, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios} (sum {sum(ratios)})")
    n = len(corpus.sentences)
    if n < 3:
        raise ConfigError(f"corpus {corpus.name} has {n} sentences; need at least 3 to split")

    n_val = _rounded_half_up(ratios[1] * n)
    n_test = _rounded_half_up(ratios[2] * n)
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ConfigError(f"ratios {ratios} leave no training sentences for n={n}")

    order = list(range(n))
    random.Random(seed).shuffle(order)
    train_idx = sorted(order[:n_train])
    val_idx = sorted(order[n_train:n_train + n_val])
    test_idx = sorted(order[n_train + n_val:])

    return (
        _subset(corpus, train_idx),
        _subset(corpus, val_idx),
        _subset(corpus, test_idx),
    )


def _subset(corpus: Corpus, sentence_indices: Iterable[int]) -> Corpus:
    """Corpus restricted to the given sentences. Keeps the full subject pool so
    that per-subject averaging denominators stay those of the parent corpus."""
    sentences = tuple(corpus.sentences[i] for i in sentence_indices)
    keep_ids = {s.sentence_id for s in sentences}
    trials = tuple(t for t in corpus.trials if t.sentence_id in keep_ids)
    return Corpus(name=corpus.name, language=corpus.language, sentences=sentences,
                  trials=trials, subject_ids=corpus.subject_ids)


def subset_by_sentence_ids(corpus: Corpus, sentence_ids: Iterable[str]) -> Corpus:
    """Corpus restricted to the given sentence ids, in corpus order."""
    wanted = set(sentence_ids)
    indices = [i for i, s in enumerate(corpus.sentences) if s.sentence_id in wanted]
    return _subset(corpus, indices)
