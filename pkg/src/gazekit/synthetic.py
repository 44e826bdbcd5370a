"""Synthetic gaze corpora with a built-in word-length effect.

The generator emits real fixation sequences (not feature vectors), so the
full extraction pipeline runs on them.  Longer words are fixated more often,
for longer, and are re-read more, which mirrors the length effects seen in
natural reading data and makes the resulting targets learnable from the text
alone.  Everything is driven by one RNG seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, FixationEvent, Sentence, SubjectTrial, Token

_CONSONANTS = "bcdfghjklmnprstvz"
_VOWELS = "aeiou"


@dataclass(frozen=True, slots=True)
class GazeProfile:
    """Knobs of the simulated reading behaviour.

    Fixation probability grows linearly with word length and saturates at
    ``fixate_cap_length`` characters; durations grow linearly with length.
    """

    fixate_floor: float = 0.1
    fixate_cap_length: int = 10
    duration_base_ms: float = 80.0
    duration_per_char_ms: float = 14.0
    duration_noise_ms: float = 6.0
    refixate_floor: float = 0.02
    refixate_per_char: float = 0.05
    refixate_cap: float = 0.65

    def p_fixate(self, length: int) -> float:
        return min(1.0, max(self.fixate_floor, length / self.fixate_cap_length))

    def p_refixate(self, length: int) -> float:
        return min(self.refixate_cap, self.refixate_floor + self.refixate_per_char * length)

    def duration(self, length: int, rng: np.random.Generator) -> float:
        mean = self.duration_base_ms + self.duration_per_char_ms * length
        return float(max(5.0, rng.normal(mean, self.duration_noise_ms)))


#: Behaviour of the default fixture.
DEFAULT_PROFILE = GazeProfile()

#: A contrasting regime (slower reading, steeper length effect) for
#: domain-shift experiments.
SHIFTED_PROFILE = GazeProfile(
    fixate_floor=0.35,
    fixate_cap_length=14,
    duration_base_ms=220.0,
    duration_per_char_ms=30.0,
    duration_noise_ms=12.0,
    refixate_floor=0.2,
    refixate_per_char=0.04,
    refixate_cap=0.8,
)


def make_word_list(rng: np.random.Generator, n_words: int = 240,
                   min_length: int = 1, max_length: int = 12) -> list[str]:
    """Pronounceable pseudo-words spread evenly over the given length range.

    Short lengths have tiny combinatorial spaces, so each length contributes
    at most what it can; the per-length attempt budget keeps generation
    finite either way.
    """
    lengths = list(range(min_length, max_length + 1))
    per_length = max(1, n_words // len(lengths))
    words: set[str] = set()
    for length in lengths:
        found = 0
        for _ in range(per_length * 40):
            if found >= per_length:
                break
            chars = []
            for i in range(length):
                pool = _CONSONANTS if i % 2 == 0 else _VOWELS
                chars.append(pool[rng.integers(len(pool))])
            word = "".join(chars)
            if word not in words:
                words.add(word)
                found += 1
    return sorted(words, key=lambda w: (len(w), w))


def make_synthetic_corpus(name: str = "synthetic", language: str = "en", *,
                          n_sentences: int = 200, n_subjects: int = 12,
                          min_sentence_len: int = 5, max_sentence_len: int = 15,
                          seed: int = 0, profile: GazeProfile = DEFAULT_PROFILE,
                          vocabulary: list[str] | None = None) -> Corpus:
    """Generate a corpus whose gaze record follows ``profile``.

    Per subject and sentence, a first reading pass walks the tokens in order
    and fixates each with the length-dependent probability; re-readings are
    appended afterwards as regressions back to earlier tokens.
    """
    rng = np.random.default_rng(seed)
    vocab = vocabulary if vocabulary is not None else make_word_list(rng)

    sentences: list[Sentence] = []
    trials: list[SubjectTrial] = []
    subject_ids = [f"s{k:02d}" for k in range(n_subjects)]

    for si in range(n_sentences):
        n_tokens = int(rng.integers(min_sentence_len, max_sentence_len + 1))
        surfaces = [vocab[int(rng.integers(len(vocab)))] for _ in range(n_tokens)]
        sentence = Sentence(
            sentence_id=f"{name}-{si:05d}",
            document_id=f"{name}-doc-{si // 50:03d}",
            tokens=tuple(Token.from_surface(s, i) for i, s in enumerate(surfaces)),
        )
        sentences.append(sentence)

        for subject_id in subject_ids:
            fixations: list[FixationEvent] = []
            refix_queue: list[int] = []
            for ti, surface in enumerate(surfaces):
                length = len(surface)
                if rng.random() >= profile.p_fixate(length):
                    continue
                fixations.append(FixationEvent(ti, profile.duration(length, rng),
                                               order=len(fixations)))
                if rng.random() < profile.p_refixate(length):
                    # immediate second fixation within the first pass
                    fixations.append(FixationEvent(ti, profile.duration(length, rng),
                                                   order=len(fixations)))
                elif rng.random() < profile.p_refixate(length):
                    refix_queue.append(ti)
            for ti in refix_queue:  # regressions after the first pass
                length = len(surfaces[ti])
                fixations.append(FixationEvent(ti, profile.duration(length, rng),
                                               order=len(fixations)))
            trials.append(SubjectTrial(subject_id=subject_id,
                                       sentence_id=sentence.sentence_id,
                                       fixations=tuple(fixations)))

    return Corpus(name=name, language=language, sentences=tuple(sentences),
                  trials=tuple(trials), subject_ids=frozenset(subject_ids))


def make_random_corpus(rng: np.random.Generator, *, name: str = "random",
                       max_sentences: int = 20, max_subjects: int = 5,
                       max_tokens: int = 12, max_fixations: int = 30) -> Corpus:
    """Small unstructured corpus for property tests: arbitrary fixation orders,
    arbitrary skips, subjects that may miss whole sentences."""
    n_sentences = int(rng.integers(1, max_sentences + 1))
    n_subjects = int(rng.integers(1, max_subjects + 1))
    subject_ids = [f"s{k}" for k in range(n_subjects)]

    sentences = []
    trials = []
    for si in range(n_sentences):
        n_tokens = int(rng.integers(1, max_tokens + 1))
        tokens = tuple(
            Token.from_surface("w" * int(rng.integers(1, 9)), i) for i in range(n_tokens)
        )
        sentence = Sentence(sentence_id=f"{name}-{si}", document_id=name, tokens=tokens)
        sentences.append(sentence)
        for subject_id in subject_ids:
            if rng.random() < 0.15:  # subject skipped the sentence entirely
                continue
            n_fix = int(rng.integers(0, max_fixations + 1))
            fixations = tuple(
                FixationEvent(int(rng.integers(n_tokens)),
                              float(rng.uniform(10.0, 400.0)), order=k)
                for k in range(n_fix)
            )
            trials.append(SubjectTrial(subject_id=subject_id,
                                       sentence_id=sentence.sentence_id,
                                       fixations=fixations))

    return Corpus(name=name, language="en", sentences=tuple(sentences),
                  trials=tuple(trials), subject_ids=frozenset(subject_ids))
