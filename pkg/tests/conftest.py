import numpy as np
import pytest

from gazekit.corpus import write_unified
from gazekit.synthetic import make_synthetic_corpus

from helpers import corpus_from_parts, sentence_from_surfaces, trial_from_pairs


@pytest.fixture
def clean_corpus():
    """Three sentences, two subjects, hand-written fixations."""
    sentences = [
        sentence_from_surfaces("a", ["the", "cat", "sat"]),
        sentence_from_surfaces("b", ["on", "a", "warm", "mat"]),
        sentence_from_surfaces("c", ["quietly"]),
    ]
    trials = [
        trial_from_pairs("s1", "a", [(0, 100.0), (1, 220.0), (1, 80.0), (2, 150.0)]),
        trial_from_pairs("s1", "b", [(2, 190.0), (3, 210.0)]),
        trial_from_pairs("s2", "a", [(1, 130.0)]),
        trial_from_pairs("s2", "c", [(0, 310.0), (0, 90.0)]),
    ]
    return corpus_from_parts(sentences, trials)


@pytest.fixture
def synth_corpus():
    return make_synthetic_corpus(n_sentences=40, n_subjects=6, seed=11)


@pytest.fixture
def synth_corpus_file(tmp_path, synth_corpus):
    path = tmp_path / "synth.jsonl"
    write_unified(synth_corpus, path)
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
