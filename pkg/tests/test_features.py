import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazekit.errors import ConfigError, CorpusError
from gazekit.features import (FEATURE_NAMES, Standardizer, SubjectTokenMeasures,
                              aggregate_token_features, destandardize,
                              export_features_tsv, extract_features, fit_standardizer,
                              standardize, subject_measures)
from gazekit.synthetic import make_random_corpus

from helpers import (brute_extract, brute_token_measures, corpus_from_parts,
                     figure_style_corpus, sentence_from_surfaces, trial_from_pairs)

GOLDEN_VECTOR = np.array([2, 233, 233, 431, 215.5, 1, 1, 1], dtype=float)


def fixation_sequences(max_tokens=8, max_fix=25):
    return st.integers(1, max_tokens).flatmap(
        lambda n: st.tuples(
            st.just(n),
            st.lists(st.tuples(st.integers(0, n - 1),
                               st.floats(1.0, 500.0, allow_nan=False)),
                     max_size=max_fix),
        ))


class TestSubjectMeasures:
    def test_twice_fixated_word_with_intervening_fixation(self):
        corpus, token = figure_style_corpus()
        measures = subject_measures(corpus.trials[0], corpus.sentences[0])[token]
        assert measures.n_fix == 2
        assert measures.ffd == 233
        assert measures.fpd == 233
        assert measures.trt == 431
        assert measures.mfd == 215.5
        assert measures.n_refix == 1
        assert measures.fixated and measures.refixated

    def test_unfixated_token_is_all_zero(self):
        corpus, _ = figure_style_corpus()
        skipped = subject_measures(corpus.trials[0], corpus.sentences[0])[1]
        assert skipped == SubjectTokenMeasures.zeros()

    def test_first_pass_run_sums_until_other_token(self):
        sentence = sentence_from_surfaces("s", ["a", "b", "c", "d"])
        trial = trial_from_pairs("x", "s", [(3, 100.0), (3, 50.0), (1, 200.0), (3, 80.0)])
        m = subject_measures(trial, sentence)[3]
        assert (m.n_fix, m.ffd, m.fpd, m.trt) == (3, 100.0, 150.0, 230.0)
        assert m.mfd == pytest.approx(230.0 / 3)
        assert m.n_refix == 2

    @given(fixation_sequences())
    @settings(max_examples=300, deadline=None)
    def test_matches_brute_scan(self, case):
        n_tokens, pairs = case
        sentence = sentence_from_surfaces("s", ["w"] * n_tokens)
        trial = trial_from_pairs("x", "s", pairs)
        measures = subject_measures(trial, sentence)
        for token in range(n_tokens):
            expected = brute_token_measures(pairs, token)
            m = measures[token]
            assert m.n_fix == expected["nFix"]
            assert m.ffd == pytest.approx(expected["FFD"])
            assert m.fpd == pytest.approx(expected["FPD"])
            assert m.trt == pytest.approx(expected["TRT"])
            assert m.mfd == pytest.approx(expected["MFD"])
            assert m.n_refix == expected["nRefix"]

    @given(fixation_sequences())
    @settings(max_examples=300, deadline=None)
    def test_measure_invariants(self, case):
        n_tokens, pairs = case
        sentence = sentence_from_surfaces("s", ["w"] * n_tokens)
        trial = trial_from_pairs("x", "s", pairs)
        for m in subject_measures(trial, sentence):
            assert m.ffd <= m.fpd <= m.trt + 1e-9
            assert m.mfd * m.n_fix == pytest.approx(m.trt)
            assert m.n_refix == max(0, m.n_fix - 1)
            assert m.refixated == (m.n_fix >= 2)
            assert m.fixated == (m.n_fix > 0)


class TestAggregation:
    def test_single_subject_golden(self):
        corpus, token = figure_style_corpus()
        measures = subject_measures(corpus.trials[0], corpus.sentences[0])[token]
        features = aggregate_token_features([measures], 1)
        np.testing.assert_allclose(features.as_array(), GOLDEN_VECTOR, atol=1e-9)

    def test_two_subjects_one_skips(self):
        corpus, token = figure_style_corpus()
        fixating = subject_measures(corpus.trials[0], corpus.sentences[0])[token]
        features = aggregate_token_features([fixating, SubjectTokenMeasures.zeros()], 2)
        assert features.n_fix == pytest.approx(1.0)
        assert features.ffd == pytest.approx(116.5)
        assert features.trt == pytest.approx(215.5)
        assert features.f_prop == pytest.approx(0.5)
        assert features.n_refix == pytest.approx(0.5)
        assert features.re_prop == pytest.approx(0.5)

    def test_all_skip(self):
        features = aggregate_token_features([SubjectTokenMeasures.zeros()] * 4, 4)
        assert np.all(features.as_array() == 0)

    def test_zero_subjects_rejected(self):
        with pytest.raises(ConfigError):
            aggregate_token_features([], 0)

    def test_fixating_only_mode_changes_durations_not_proportions(self):
        corpus, token = figure_style_corpus()
        fixating = subject_measures(corpus.trials[0], corpus.sentences[0])[token]
        both = [fixating, SubjectTokenMeasures.zeros()]
        alt = aggregate_token_features(both, 2, avg_fixating_only=True)
        assert alt.ffd == pytest.approx(233.0)
        assert alt.trt == pytest.approx(431.0)
        assert alt.f_prop == pytest.approx(0.5)
        assert alt.re_prop == pytest.approx(0.5)


class TestExtractFeatures:
    def test_golden_vector_row(self):
        corpus, token = figure_style_corpus()
        dataset = extract_features(corpus)
        np.testing.assert_allclose(dataset.features[0, token], GOLDEN_VECTOR, atol=1e-9)
        assert dataset.feature_order == FEATURE_NAMES

    def test_no_trials_all_zero(self):
        corpus = corpus_from_parts(
            [sentence_from_surfaces("a", ["x", "y"]),
             sentence_from_surfaces("b", ["z"])], [])
        dataset = extract_features(corpus)
        assert np.all(dataset.features == 0)
        assert dataset.mask.sum() == 3

    def test_dirty_corpus_rejected(self, clean_corpus):
        from gazekit.corpus import Corpus
        dirty = Corpus(name="d", language="en", sentences=clean_corpus.sentences,
                       trials=(trial_from_pairs("s1", "a", [(77, 5.0)]),),
                       subject_ids=frozenset({"s1"}))
        with pytest.raises(CorpusError):
            extract_features(dirty)

    @given(seed=st.integers(0, 10**6))
    @settings(max_examples=100, deadline=None)
    def test_matches_brute_reference(self, seed):
        corpus = make_random_corpus(np.random.default_rng(seed))
        dataset = extract_features(corpus)
        expected = brute_extract(corpus)
        for i, sentence_id in enumerate(dataset.sentence_ids):
            got = dataset.sentence_features(i)
            np.testing.assert_allclose(got, expected[sentence_id], atol=1e-12)

    @given(seed=st.integers(0, 10**6))
    @settings(max_examples=100, deadline=None)
    def test_aggregated_identities(self, seed):
        corpus = make_random_corpus(np.random.default_rng(seed))
        dataset = extract_features(corpus)
        values = dataset.valid_values()
        n_fix, ffd, fpd, trt = values[:, 0], values[:, 1], values[:, 2], values[:, 3]
        f_prop, n_refix, re_prop = values[:, 5], values[:, 6], values[:, 7]
        np.testing.assert_allclose(n_refix, n_fix - f_prop, atol=1e-12)
        assert np.all(re_prop <= f_prop + 1e-12)
        assert np.all(f_prop <= 1.0)
        assert np.all(ffd <= fpd + 1e-9)
        assert np.all(fpd <= trt + 1e-9)
        assert np.all(values >= 0)


class TestStandardizer:
    def test_min_max_of_simple_column(self):
        corpus = corpus_from_parts(
            [sentence_from_surfaces("s", ["a", "b", "c"])],
            [trial_from_pairs("x", "s", [(0, 50.0), (1, 100.0), (2, 150.0)])])
        dataset = extract_features(corpus)
        scaler = fit_standardizer(dataset)
        ffd = FEATURE_NAMES.index("FFD")
        assert scaler.mins[ffd] == 50.0
        assert scaler.maxs[ffd] == 100.0 or scaler.maxs[ffd] == 150.0

    def test_linear_map_value(self):
        scaler = Standardizer(mins=np.zeros(8), maxs=np.full(8, 200.0))
        out = scaler.transform_array(np.full((1, 8), 50.0))
        np.testing.assert_allclose(out, 25.0)

    def test_degenerate_feature_maps_to_zero(self):
        mins = np.zeros(8)
        maxs = np.ones(8)
        maxs[3] = 0.0  # degenerate column
        scaler = Standardizer(mins=mins, maxs=maxs)
        assert scaler.degenerate[3]
        out = scaler.transform_array(np.full((5, 8), 0.7))
        assert np.all(out[:, 3] == 0.0)
        restored = scaler.inverse_array(out)
        np.testing.assert_allclose(restored[:, 3], 0.0)  # back to the constant

    def test_fit_matches_flat_scan(self, rng):
        corpus = make_random_corpus(rng)
        dataset = extract_features(corpus)
        scaler = fit_standardizer(dataset)
        flat = [dataset.features[i, t]
                for i in range(dataset.n_sentences)
                for t in range(dataset.sentence_length(i))]
        flat = np.array(flat)
        np.testing.assert_allclose(scaler.mins, flat.min(axis=0))
        np.testing.assert_allclose(scaler.maxs, flat.max(axis=0))

    def test_round_trip_identity(self, rng):
        for _ in range(20):
            mins = rng.uniform(-5, 5, size=8)
            maxs = mins + rng.uniform(0.5, 10, size=8)
            scaler = Standardizer(mins=mins, maxs=maxs)
            x = rng.uniform(mins, maxs, size=(30, 8))
            np.testing.assert_allclose(
                scaler.inverse_array(scaler.transform_array(x)), x, atol=1e-9)

    def test_out_of_range_clamped(self):
        scaler = Standardizer(mins=np.zeros(8), maxs=np.full(8, 10.0))
        out = scaler.transform_array(np.array([[-5.0] * 8, [25.0] * 8]))
        np.testing.assert_allclose(out[0], 0.0)
        np.testing.assert_allclose(out[1], 100.0)

    def test_standardize_dataset_in_range_and_monotone(self, rng):
        corpus = make_random_corpus(rng)
        dataset = extract_features(corpus)
        scaler = fit_standardizer(dataset)
        standardized = standardize(scaler, dataset)
        values = standardized.valid_values()
        assert np.all(values >= 0.0) and np.all(values <= 100.0)
        # monotone per feature: ordering of raw values is preserved
        raw = dataset.valid_values()
        for g in range(8):
            order = np.argsort(raw[:, g], kind="stable")
            assert np.all(np.diff(values[order, g]) >= -1e-12)
        back = destandardize(scaler, standardized)
        np.testing.assert_allclose(back.features[dataset.mask],
                                   dataset.features[dataset.mask], atol=1e-9)

    def test_empty_dataset_rejected(self):
        corpus = corpus_from_parts([sentence_from_surfaces("s", ["a"])], [])
        dataset = extract_features(corpus)
        empty = dataset.subset([])
        with pytest.raises(ConfigError):
            fit_standardizer(empty)

    def test_json_round_trip(self, tmp_path, rng):
        mins = rng.uniform(-3, 0, size=8)
        maxs = mins + rng.uniform(1, 4, size=8)
        scaler = Standardizer(mins=mins, maxs=maxs)
        path = tmp_path / "scaler.json"
        scaler.save(path)
        loaded = Standardizer.load(path)
        np.testing.assert_allclose(loaded.mins, scaler.mins)
        np.testing.assert_allclose(loaded.maxs, scaler.maxs)
        data = json.loads(path.read_text())
        assert set(data) == set(FEATURE_NAMES)
        assert set(data["FFD"]) == {"min", "max"}


class TestExport:
    def test_tsv_layout(self, tmp_path, clean_corpus):
        dataset = extract_features(clean_corpus)
        path = tmp_path / "features.tsv"
        export_features_tsv(dataset, path)
        lines = path.read_text().splitlines()
        header = lines[0].split("\t")
        assert header == ["sentence_id", "token_index", "surface", *FEATURE_NAMES]
        assert len(lines) == 1 + dataset.n_valid_tokens
        first = lines[1].split("\t")
        assert first[0] == "a" and first[1] == "0" and first[2] == "the"
        assert len(first) == 11
