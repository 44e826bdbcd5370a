import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gazekit.encoders import EncoderSpec
from gazekit.errors import ConfigError, GazekitError
from gazekit.evaluation import (BatchTensors, MeanBaseline, ablation_run, accuracy,
                                cross_matrix, dataset_mae, evaluate, mae_overall,
                                mae_per_feature, mean_baseline,
                                nested_subsample_indices, prediction_batches)
from gazekit.features import extract_features, fit_standardizer, standardize
from gazekit.regression import TrainConfig
from gazekit.synthetic import (DEFAULT_PROFILE, SHIFTED_PROFILE, make_random_corpus,
                               make_synthetic_corpus)

from helpers import flat_mae_overall, flat_mae_per_feature


def random_batch(rng, max_b=4, max_l=6):
    b = int(rng.integers(1, max_b + 1))
    l = int(rng.integers(1, max_l + 1))
    predictions = rng.uniform(0, 100, size=(b, l, 8))
    targets = rng.uniform(0, 100, size=(b, l, 8))
    mask = rng.random((b, l)) < 0.7
    if not mask.any():
        mask[0, 0] = True
    return BatchTensors(predictions=predictions, targets=targets, mask=mask)


class ConstantPredictor:
    def __init__(self, value):
        self.value = value

    def predict_batch(self, sentences):
        width = max(len(s) for s in sentences)
        preds = np.full((len(sentences), width, 8), self.value, dtype=float)
        mask = np.zeros((len(sentences), width), dtype=bool)
        for i, s in enumerate(sentences):
            mask[i, :len(s)] = True
        return preds, mask


class LookupPredictor:
    """Perfect predictor: returns the gold rows, keyed by the token tuple."""

    def __init__(self, dataset, noise=0.0):
        self.rows = {dataset.tokens[i]: dataset.sentence_features(i)
                     for i in range(dataset.n_sentences)}
        self.noise = noise

    def predict_batch(self, sentences):
        width = max(len(s) for s in sentences)
        preds = np.zeros((len(sentences), width, 8))
        mask = np.zeros((len(sentences), width), dtype=bool)
        for i, s in enumerate(sentences):
            row = self.rows[tuple(s)]
            preds[i, :len(s)] = row + self.noise
            mask[i, :len(s)] = True
        return preds, mask


class TestMaeEngines:
    def test_zero_error(self, rng):
        t = rng.uniform(0, 100, size=(2, 3, 8))
        batch = BatchTensors(predictions=t.copy(), targets=t,
                             mask=np.ones((2, 3), dtype=bool))
        assert mae_overall(batch) == 0.0
        assert accuracy(mae_overall(batch)) == 100.0

    def test_constant_absolute_error(self):
        targets = np.zeros((1, 2, 8))
        batch = BatchTensors(predictions=targets + 3.0, targets=targets,
                             mask=np.ones((1, 2), dtype=bool))
        assert mae_overall(batch) == pytest.approx(3.0)
        np.testing.assert_allclose(mae_per_feature(batch), 3.0)

    def test_error_in_single_feature(self):
        targets = np.zeros((2, 2, 8))
        preds = targets.copy()
        preds[:, :, 0] = 4.0
        batch = BatchTensors(predictions=preds, targets=targets,
                             mask=np.ones((2, 2), dtype=bool))
        per = mae_per_feature(batch)
        assert per[0] == pytest.approx(4.0)
        np.testing.assert_allclose(per[1:], 0.0)
        assert mae_overall(batch) == pytest.approx(0.5)

    def test_full_mask_feature_mean_equals_overall(self, rng):
        batch = BatchTensors(predictions=rng.uniform(0, 100, (3, 4, 8)),
                             targets=rng.uniform(0, 100, (3, 4, 8)),
                             mask=np.ones((3, 4), dtype=bool))
        assert mae_per_feature(batch).mean() == pytest.approx(mae_overall(batch),
                                                              abs=1e-12)

    def test_matches_flat_loop_oracle(self, rng):
        for _ in range(200):
            batch = random_batch(rng)
            expected = flat_mae_overall(batch.predictions, batch.targets, batch.mask)
            assert mae_overall(batch) == pytest.approx(expected, abs=1e-12)
            np.testing.assert_allclose(
                mae_per_feature(batch),
                flat_mae_per_feature(batch.predictions, batch.targets, batch.mask),
                atol=1e-12)

    def test_padded_cells_do_not_count_by_default(self, rng):
        preds = rng.uniform(0, 100, (2, 3, 8))
        targets = rng.uniform(0, 100, (2, 3, 8))
        mask = np.ones((2, 3), dtype=bool)
        mask[:, 2] = False
        batch = BatchTensors(predictions=preds, targets=targets, mask=mask)
        tampered = targets.copy()
        tampered[:, 2, :] = 1e9  # only masked cells change
        tampered_batch = BatchTensors(predictions=preds, targets=tampered, mask=mask)
        assert mae_overall(batch) == mae_overall(tampered_batch)
        assert mae_overall(batch, include_padding=True) != \
            mae_overall(tampered_batch, include_padding=True)

    def test_all_masked_batch_raises(self):
        batch = BatchTensors(predictions=np.zeros((1, 2, 8)),
                             targets=np.zeros((1, 2, 8)),
                             mask=np.zeros((1, 2), dtype=bool))
        with pytest.raises(GazekitError):
            mae_overall(batch)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ConfigError):
            BatchTensors(predictions=np.zeros((1, 2, 8)), targets=np.zeros((1, 3, 8)),
                         mask=np.zeros((1, 2), dtype=bool))

    @given(seed=st.integers(0, 10**6))
    @settings(max_examples=150, deadline=None)
    def test_oracle_property(self, seed):
        batch = random_batch(np.random.default_rng(seed))
        expected = flat_mae_overall(batch.predictions, batch.targets, batch.mask)
        assert abs(mae_overall(batch) - expected) < 1e-12


class TestMeanBaseline:
    def test_two_point_column(self):
        means = np.full(8, 50.0)
        baseline = MeanBaseline(means=means)
        preds, mask = baseline.predict_batch([["a"], ["b"]])
        np.testing.assert_allclose(preds, 50.0)
        targets = np.zeros((2, 1, 8))
        targets[0, 0, :] = 0.0
        targets[1, 0, :] = 100.0
        batch = BatchTensors(predictions=preds, targets=targets, mask=mask)
        assert mae_overall(batch) == pytest.approx(50.0)

    def test_single_sentence_train_is_perfect_on_itself(self, rng):
        corpus = make_synthetic_corpus(n_sentences=1, n_subjects=2, seed=5,
                                       min_sentence_len=1, max_sentence_len=1)
        dataset = extract_features(corpus)
        baseline = mean_baseline(dataset)
        overall, _ = dataset_mae(baseline, dataset)
        assert overall == pytest.approx(0.0, abs=1e-12)

    def test_baseline_mae_equals_mean_absolute_deviation(self, rng):
        corpus = make_random_corpus(rng, max_sentences=12)
        dataset = extract_features(corpus)
        scaler = fit_standardizer(dataset)
        standardized = standardize(scaler, dataset)
        baseline = mean_baseline(standardized)
        # single batch so the batch average does not reweight sentences
        overall, per_feature = dataset_mae(baseline, standardized,
                                           batch_size=standardized.n_sentences)
        values = standardized.valid_values()
        expected = np.abs(values - values.mean(axis=0)).mean(axis=0)
        np.testing.assert_allclose(per_feature, expected, atol=1e-9)
        assert overall == pytest.approx(expected.mean(), abs=1e-9)


class TestEvaluate:
    def test_perfect_predictor(self, rng):
        corpus = make_random_corpus(rng, max_sentences=10)
        dataset = extract_features(corpus)
        report = evaluate(LookupPredictor(dataset), dataset, model_id="perfect")
        assert report.overall_mean == pytest.approx(100.0)
        assert report.overall_std == 0.0
        np.testing.assert_allclose(report.per_feature_mean, 100.0)

    def test_identical_runs_zero_std(self, rng):
        corpus = make_random_corpus(rng, max_sentences=8)
        dataset = extract_features(corpus)
        models = [ConstantPredictor(5.0)] * 5
        report = evaluate(models, dataset)
        assert report.n_seeds == 5
        assert report.overall_std == 0.0
        np.testing.assert_allclose(report.per_feature_std, 0.0)

    def test_accuracy_complements_mae(self, rng):
        corpus = make_random_corpus(rng, max_sentences=8)
        dataset = extract_features(corpus)
        predictor = ConstantPredictor(1.0)
        overall, _ = dataset_mae(predictor, dataset)
        report = evaluate(predictor, dataset)
        assert report.overall_mean + overall == pytest.approx(100.0, abs=1e-12)

    def test_report_json_schema(self, rng):
        corpus = make_random_corpus(rng, max_sentences=6)
        dataset = extract_features(corpus)
        report = evaluate(ConstantPredictor(0.0), dataset, model_id="const",
                          dataset_id="fixture/test")
        data = report.to_json_dict()
        assert data["model"] == "const"
        assert data["dataset"] == "fixture/test"
        assert set(data["overall"]) == {"mean", "std"}
        assert set(data["per_feature"]) == set(dataset.feature_order)

    def test_batches_cover_every_sentence_once(self, rng):
        corpus = make_random_corpus(rng, max_sentences=15)
        dataset = extract_features(corpus)
        batches = prediction_batches(ConstantPredictor(0.0), dataset, batch_size=4)
        total_rows = sum(b.predictions.shape[0] for b in batches)
        assert total_rows == dataset.n_sentences
        total_valid = sum(int(b.mask.sum()) for b in batches)
        assert total_valid == dataset.n_valid_tokens

    def test_empty_dataset_rejected(self, rng):
        corpus = make_random_corpus(rng, max_sentences=4)
        dataset = extract_features(corpus).subset([])
        with pytest.raises(GazekitError):
            dataset_mae(ConstantPredictor(0.0), dataset)


class TestCrossMatrix:
    def _standardized(self, corpus):
        dataset = extract_features(corpus)
        return standardize(fit_standardizer(dataset), dataset)

    def test_single_dataset(self, rng):
        dataset = self._standardized(make_random_corpus(rng, max_sentences=6))
        matrix = cross_matrix({"a": ConstantPredictor(2.0)}, {"a": dataset})
        assert matrix.deltas.shape == (1, 1)
        assert matrix.deltas[0, 0] == 0.0

    def test_identical_pairs_all_zero(self, rng):
        dataset = self._standardized(make_random_corpus(rng, max_sentences=6))
        model = ConstantPredictor(2.0)
        matrix = cross_matrix({"a": model, "b": model}, {"a": dataset, "b": dataset})
        np.testing.assert_allclose(matrix.deltas, 0.0, atol=1e-12)

    def test_domain_shift_positive_off_diagonal(self):
        corpus_a = make_synthetic_corpus("a", n_sentences=30, n_subjects=6, seed=1,
                                         profile=DEFAULT_PROFILE)
        corpus_b = make_synthetic_corpus("b", n_sentences=30, n_subjects=6, seed=2,
                                         profile=SHIFTED_PROFILE)
        ds = {"a": self._standardized(corpus_a), "b": self._standardized(corpus_b)}
        models = {name: mean_baseline(ds[name]) for name in ds}
        matrix = cross_matrix(models, ds)
        assert matrix.deltas[0, 0] == 0.0 and matrix.deltas[1, 1] == 0.0
        assert matrix.deltas[0, 1] > 0.0
        assert matrix.deltas[1, 0] > 0.0

    def test_supply_order_invariance(self, rng):
        ds_a = self._standardized(make_random_corpus(rng, max_sentences=6, name="a"))
        ds_b = self._standardized(make_random_corpus(rng, max_sentences=6, name="b"))
        m_a, m_b = ConstantPredictor(1.0), ConstantPredictor(9.0)
        one = cross_matrix({"a": m_a, "b": m_b}, {"a": ds_a, "b": ds_b})
        two = cross_matrix({"b": m_b, "a": m_a}, {"b": ds_b, "a": ds_a})
        assert one.labels == two.labels
        np.testing.assert_allclose(one.deltas, two.deltas)

    def test_missing_pairing_rejected(self, rng):
        dataset = self._standardized(make_random_corpus(rng, max_sentences=6))
        with pytest.raises(ConfigError):
            cross_matrix({"a": ConstantPredictor(0.0)}, {"b": dataset})

    def test_csv_layout(self, tmp_path, rng):
        dataset = self._standardized(make_random_corpus(rng, max_sentences=6))
        matrix = cross_matrix({"a": ConstantPredictor(2.0)}, {"a": dataset})
        path = tmp_path / "matrix.csv"
        matrix.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "finetuned_on,tested_on,error,delta"
        assert len(lines) == 2


class TestAblation:
    def test_nested_subsets(self):
        subsets = nested_subsample_indices(50, (0.1, 0.3, 1.0), seed=3)
        assert set(subsets[0]) <= set(subsets[1]) <= set(subsets[2])
        assert subsets[2] == list(range(50))
        assert [len(s) for s in subsets] == [5, 15, 50]

    def test_bad_fractions_rejected(self):
        with pytest.raises(ConfigError):
            nested_subsample_indices(10, (0.5, 0.5), seed=0)
        with pytest.raises(ConfigError):
            nested_subsample_indices(10, (0.0, 1.0), seed=0)
        with pytest.raises(ConfigError):
            nested_subsample_indices(10, (0.5, 1.2), seed=0)

    def test_full_fraction_reproduces_plain_run(self):
        import torch

        from gazekit.corpus import split_dataset
        from gazekit.regression import build_regressor, train

        corpus = make_synthetic_corpus(n_sentences=30, n_subjects=4, seed=9)
        spec = EncoderSpec(checkpoint_id="tiny", hidden_size=32, backend="tiny")
        cfg = TrainConfig(max_epochs=3, patience=2, batch_size=8, seeds=(12,))

        curve = ablation_run(corpus, (0.5, 1.0), spec, cfg, split_seed=7,
                             seeds=(12,), include_reference=True)

        train_c, val_c, test_c = split_dataset(corpus, (0.9, 0.05, 0.05), 7)
        train_ds = extract_features(train_c, split="train")
        scaler = fit_standardizer(train_ds)
        train_std = standardize(scaler, train_ds)
        val_std = standardize(scaler, extract_features(val_c, split="val"))
        test_std = standardize(scaler, extract_features(test_c, split="test"))

        torch.manual_seed(12)
        model = build_regressor(spec)
        result = train(model, train_std, val_std, cfg, seed=12)
        overall, _ = dataset_mae(result.model, test_std, batch_size=cfg.eval_batch_size)

        assert curve.fractions == (0.5, 1.0)
        assert set(curve.subsample_ids[0]) <= set(curve.subsample_ids[1])
        assert curve.accuracy_mean[1] == pytest.approx(accuracy(overall), abs=1e-9)
        assert curve.reference_accuracy is not None

    def test_csv_layout(self, tmp_path):
        corpus = make_synthetic_corpus(n_sentences=24, n_subjects=3, seed=2)
        spec = EncoderSpec(checkpoint_id="tiny", hidden_size=32, backend="tiny")
        cfg = TrainConfig(max_epochs=2, patience=1, batch_size=8, seeds=(12,))
        curve = ablation_run(corpus, (1.0,), spec, cfg, seeds=(12,),
                             include_reference=False)
        path = tmp_path / "curve.csv"
        curve.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("fraction,")
        assert len(lines) == 2
