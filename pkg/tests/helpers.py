"""Independent reference implementations used as test oracles.

Everything here recomputes expected values with the dumbest possible code
(flat loops, per-token scans) so the tested implementations are checked
against a genuinely different path.
"""

from __future__ import annotations

import numpy as np

from gazekit.corpus import Corpus, FixationEvent, Sentence, SubjectTrial, Token


def sentence_from_surfaces(sentence_id, surfaces, document_id="doc"):
    return Sentence(sentence_id=sentence_id, document_id=document_id,
                    tokens=tuple(Token.from_surface(s, i) for i, s in enumerate(surfaces)))


def trial_from_pairs(subject_id, sentence_id, pairs):
    """pairs: [(token_index, duration_ms), ...] in chronological order."""
    return SubjectTrial(
        subject_id=subject_id, sentence_id=sentence_id,
        fixations=tuple(FixationEvent(t, d, order=k) for k, (t, d) in enumerate(pairs)))


def corpus_from_parts(sentences, trials, name="fixture", language="en"):
    return Corpus(name=name, language=language, sentences=tuple(sentences),
                  trials=tuple(trials),
                  subject_ids=frozenset(t.subject_id for t in trials))


# ---------------------------------------------------------------------------
# Measure oracles
# ---------------------------------------------------------------------------

def brute_token_measures(pairs, token):
    """Scan a chronological (token, duration) sequence for one token's measures."""
    durations = [d for t, d in pairs if t == token]
    n_fix = len(durations)
    if n_fix == 0:
        return {"nFix": 0, "FFD": 0.0, "FPD": 0.0, "TRT": 0.0, "MFD": 0.0,
                "nRefix": 0, "fixated": False, "refixated": False}
    first = next(i for i, (t, _) in enumerate(pairs) if t == token)
    fpd = 0.0
    for t, d in pairs[first:]:
        if t != token:
            break
        fpd += d
    trt = sum(durations)
    return {
        "nFix": n_fix,
        "FFD": pairs[first][1],
        "FPD": fpd,
        "TRT": trt,
        "MFD": trt / n_fix,
        "nRefix": max(0, n_fix - 1),
        "fixated": True,
        "refixated": n_fix >= 2,
    }


def brute_extract(corpus):
    """Naive double-loop feature extraction returning {sentence_id: (n_tokens, 8)}.

    Independent of gazekit.features: own averaging, own measure scan.
    """
    subjects = sorted(corpus.subject_ids)
    n_subjects = max(1, len(subjects))
    trial_map = {(t.subject_id, t.sentence_id): t for t in corpus.trials}
    out = {}
    for sentence in corpus.sentences:
        rows = []
        for token in range(len(sentence.tokens)):
            per_subject = []
            for subject in subjects:
                trial = trial_map.get((subject, sentence.sentence_id))
                pairs = [(f.token_index, f.duration_ms) for f in trial.fixations] \
                    if trial is not None else []
                per_subject.append(brute_token_measures(pairs, token))
            if not per_subject:
                per_subject = [brute_token_measures([], token)]
            row = [
                sum(m["nFix"] for m in per_subject) / n_subjects,
                sum(m["FFD"] for m in per_subject) / n_subjects,
                sum(m["FPD"] for m in per_subject) / n_subjects,
                sum(m["TRT"] for m in per_subject) / n_subjects,
                sum(m["MFD"] for m in per_subject) / n_subjects,
                sum(1 for m in per_subject if m["fixated"]) / n_subjects,
                sum(m["nRefix"] for m in per_subject) / n_subjects,
                sum(1 for m in per_subject if m["refixated"]) / n_subjects,
            ]
            rows.append(row)
        out[sentence.sentence_id] = np.array(rows)
    return out


# ---------------------------------------------------------------------------
# Metric oracles
# ---------------------------------------------------------------------------

def flat_mae_overall(predictions, targets, mask):
    total, count = 0.0, 0
    b_n, l_n, g_n = predictions.shape
    for b in range(b_n):
        for l in range(l_n):
            if not mask[b, l]:
                continue
            for g in range(g_n):
                total += abs(predictions[b, l, g] - targets[b, l, g])
                count += 1
    return total / count


def flat_mae_per_feature(predictions, targets, mask):
    b_n, l_n, g_n = predictions.shape
    out = []
    for g in range(g_n):
        total, count = 0.0, 0
        for b in range(b_n):
            for l in range(l_n):
                if mask[b, l]:
                    total += abs(predictions[b, l, g] - targets[b, l, g])
                    count += 1
        out.append(total / count)
    return np.array(out)


def figure_style_corpus():
    """Single subject, one sentence; the target word is fixated twice with one
    intervening fixation elsewhere (233 ms, then 198 ms)."""
    sentence = sentence_from_surfaces("s1", ["Mary", "French", "arrived"])
    trial = trial_from_pairs("subj1", "s1", [(0, 233.0), (2, 150.0), (0, 198.0)])
    return corpus_from_parts([sentence], [trial]), 0  # token index of "Mary"
