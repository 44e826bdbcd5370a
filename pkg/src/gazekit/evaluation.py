"""Masked MAE metrics, the mean baseline, multi-seed reports, transfer
matrices and data-ablation curves.

All reported numbers use prediction accuracy = 100 - MAE on the standardized
0-100 feature scale.  The overall MAE treats every (valid token, feature)
cell equally; the per-feature MAE does the same per feature column.  Padded
cells are excluded through the mask by default; ``include_padding=True``
counts them as zero-error cells instead.
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

from .errors import ConfigError, GazekitError
from .features import FEATURE_NAMES, N_FEATURES, FeatureDataset

ACCURACY_BASE = 100.0


class Predictor(Protocol):
    """Anything that maps batches of tokenized sentences to feature vectors."""

    def predict_batch(self, sentences: Sequence[Sequence[str]]
                      ) -> tuple[np.ndarray, np.ndarray]:
        """Return (predictions (B, L, 8), mask (B, L)) on the standardized scale."""
        ...


@dataclass(frozen=True, slots=True)
class BatchTensors:
    """Aligned prediction/target arrays of one batch with a validity mask."""

    predictions: np.ndarray  # (B, L, G)
    targets: np.ndarray      # (B, L, G)
    mask: np.ndarray         # (B, L)

    def __post_init__(self):
        if self.predictions.shape != self.targets.shape:
            raise ConfigError(f"prediction shape {self.predictions.shape} != "
                              f"target shape {self.targets.shape}")
        if self.predictions.ndim != 3 or self.predictions.shape[2] != N_FEATURES:
            raise ConfigError(f"batch arrays must be (B, L, {N_FEATURES}), "
                              f"got {self.predictions.shape}")
        if self.mask.shape != self.predictions.shape[:2]:
            raise ConfigError(f"mask shape {self.mask.shape} does not match batch "
                              f"{self.predictions.shape[:2]}")


def mae_overall(batch: BatchTensors, *, include_padding: bool = False) -> float:
    """Mean absolute error over every (valid position, feature) cell of the batch."""
    abs_err = np.abs(batch.predictions - batch.targets)
    if include_padding:
        return float(abs_err.mean())
    n_valid = int(batch.mask.sum())
    if n_valid == 0:
        raise GazekitError("batch has no valid positions")
    return float(abs_err[batch.mask].mean())


def mae_per_feature(batch: BatchTensors, *, include_padding: bool = False) -> np.ndarray:
    """Per-feature mean absolute error, an array of 8 values."""
    abs_err = np.abs(batch.predictions - batch.targets)
    if include_padding:
        return abs_err.reshape(-1, N_FEATURES).mean(axis=0)
    n_valid = int(batch.mask.sum())
    if n_valid == 0:
        raise GazekitError("batch has no valid positions")
    return abs_err[batch.mask].mean(axis=0)


def accuracy(mae: float | np.ndarray) -> float | np.ndarray:
    return ACCURACY_BASE - mae


# ---------------------------------------------------------------------------
# Batched dataset evaluation
# ---------------------------------------------------------------------------

def eval_batch_indices(dataset: FeatureDataset, batch_size: int,
                       *, sort_by_length: bool = True) -> list[list[int]]:
    """Batch index lists; sorting by sentence length keeps padding small."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = list(range(dataset.n_sentences))
    if sort_by_length:
        order.sort(key=lambda i: (dataset.sentence_length(i), i))
    return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


def prediction_batches(predictor: Predictor, dataset: FeatureDataset,
                       batch_size: int = 16) -> list[BatchTensors]:
    """Run the predictor over the dataset and pair outputs with gold targets."""
    batches = []
    for indices in eval_batch_indices(dataset, batch_size):
        sentences = [dataset.tokens[i] for i in indices]
        width = max(len(s) for s in sentences)
        preds, pred_mask = predictor.predict_batch(sentences)
        if preds.shape[1] < width:  # pad back up if the predictor trimmed
            pad = width - preds.shape[1]
            preds = np.pad(preds, ((0, 0), (0, pad), (0, 0)))
            pred_mask = np.pad(pred_mask, ((0, 0), (0, pad)))
        targets = dataset.features[indices][:, :width]
        gold_mask = dataset.mask[indices][:, :width]
        batches.append(BatchTensors(predictions=preds[:, :width],
                                    targets=targets,
                                    mask=gold_mask & pred_mask[:, :width]))
    return batches


def dataset_mae(predictor: Predictor, dataset: FeatureDataset, *,
                batch_size: int = 16, include_padding: bool = False
                ) -> tuple[float, np.ndarray]:
    """(overall MAE, per-feature MAE) averaged over batches."""
    if dataset.n_sentences == 0:
        raise GazekitError("cannot evaluate on an empty dataset")
    overall = []
    per_feature = []
    for batch in prediction_batches(predictor, dataset, batch_size):
        overall.append(mae_overall(batch, include_padding=include_padding))
        per_feature.append(mae_per_feature(batch, include_padding=include_padding))
    return float(np.mean(overall)), np.mean(np.stack(per_feature), axis=0)


# ---------------------------------------------------------------------------
# Mean baseline
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class MeanBaseline:
    """Constant predictor emitting the per-feature training means."""

    means: np.ndarray
    feature_order: tuple[str, ...] = FEATURE_NAMES

    def predict_batch(self, sentences: Sequence[Sequence[str]]
                      ) -> tuple[np.ndarray, np.ndarray]:
        width = max(len(s) for s in sentences)
        preds = np.tile(self.means, (len(sentences), width, 1))
        mask = np.zeros((len(sentences), width), dtype=bool)
        for i, sentence in enumerate(sentences):
            mask[i, :len(sentence)] = True
        return preds, mask


def mean_baseline(train: FeatureDataset) -> MeanBaseline:
    values = train.valid_values()
    if values.size == 0:
        raise GazekitError("cannot fit the mean baseline on an empty training set")
    return MeanBaseline(means=values.mean(axis=0), feature_order=train.feature_order)


# ---------------------------------------------------------------------------
# Multi-seed reports
# ---------------------------------------------------------------------------

def _spread(values: np.ndarray, population: bool) -> np.ndarray:
    return values.std(axis=0, ddof=0 if population else 1)


@dataclass(frozen=True)
class EvaluationReport:
    """Accuracy aggregates (mean and std over seed runs) for one model/dataset pair."""

    model_id: str
    dataset_id: str
    n_seeds: int
    overall_mean: float
    overall_std: float
    per_feature_mean: np.ndarray
    per_feature_std: np.ndarray
    feature_order: tuple[str, ...] = FEATURE_NAMES

    def to_json_dict(self) -> dict:
        return {
            "model": self.model_id,
            "dataset": self.dataset_id,
            "n_seeds": self.n_seeds,
            "overall": {"mean": self.overall_mean, "std": self.overall_std},
            "per_feature": {
                name: {"mean": float(self.per_feature_mean[i]),
                       "std": float(self.per_feature_std[i])}
                for i, name in enumerate(self.feature_order)
            },
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n",
                              encoding="utf-8")

    @classmethod
    def from_json_dict(cls, data: dict) -> "EvaluationReport":
        order = tuple(data["per_feature"])
        return cls(
            model_id=data["model"],
            dataset_id=data["dataset"],
            n_seeds=data["n_seeds"],
            overall_mean=data["overall"]["mean"],
            overall_std=data["overall"]["std"],
            per_feature_mean=np.array([data["per_feature"][n]["mean"] for n in order]),
            per_feature_std=np.array([data["per_feature"][n]["std"] for n in order]),
            feature_order=order,
        )


def evaluate(models: Predictor | Sequence[Predictor], test: FeatureDataset, *,
             batch_size: int = 16, model_id: str = "model",
             dataset_id: str | None = None, population_std: bool = True,
             include_padding: bool = False) -> EvaluationReport:
    """Evaluate one model (or one per seed) on a test split.

    Per run: batch the test set, average per-batch MAEs, convert to accuracy.
    Across runs: mean and (population, by default) standard deviation.
    """
    runs = [models] if not isinstance(models, (list, tuple)) else list(models)
    if not runs:
        raise ConfigError("evaluate needs at least one model")
    overall = []
    per_feature = []
    for model in runs:
        o, f = dataset_mae(model, test, batch_size=batch_size,
                           include_padding=include_padding)
        overall.append(accuracy(o))
        per_feature.append(accuracy(f))
    overall_arr = np.array(overall)
    feature_arr = np.stack(per_feature)
    return EvaluationReport(
        model_id=model_id,
        dataset_id=dataset_id if dataset_id is not None
        else f"{test.corpus_name}/{test.split}",
        n_seeds=len(runs),
        overall_mean=float(overall_arr.mean()),
        overall_std=float(_spread(overall_arr, population_std)),
        per_feature_mean=feature_arr.mean(axis=0),
        per_feature_std=_spread(feature_arr, population_std),
        feature_order=test.feature_order,
    )


# ---------------------------------------------------------------------------
# Transfer matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossMatrix:
    """Transfer errors relative to the matched in-domain (diagonal) error.

    ``deltas[i, j]`` is the extra error of the model fine-tuned on source i
    when tested on dataset j, compared to dataset j's own model; the diagonal
    is zero by construction.
    """

    labels: tuple[str, ...]
    errors: np.ndarray
    deltas: np.ndarray

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["finetuned_on", "tested_on", "error", "delta"])
            for i, src in enumerate(self.labels):
                for j, dst in enumerate(self.labels):
                    writer.writerow([src, dst, repr(float(self.errors[i, j])),
                                     repr(float(self.deltas[i, j]))])


def cross_matrix(models: Mapping[str, Predictor], tests: Mapping[str, FeatureDataset],
                 *, batch_size: int = 16) -> CrossMatrix:
    """Full source x target error matrix; cells are deltas vs the diagonal."""
    labels = tuple(sorted(models))
    if set(tests) != set(models):
        raise ConfigError(f"model/test label mismatch: models {sorted(models)} "
                          f"vs tests {sorted(tests)}")
    n = len(labels)
    errors = np.zeros((n, n))
    for i, src in enumerate(labels):
        for j, dst in enumerate(labels):
            errors[i, j], _ = dataset_mae(models[src], tests[dst], batch_size=batch_size)
    deltas = errors - np.diag(errors)[None, :]
    np.fill_diagonal(deltas, 0.0)
    return CrossMatrix(labels=labels, errors=errors, deltas=deltas)


# ---------------------------------------------------------------------------
# Data ablation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AblationCurve:
    """Accuracy as a function of the training-data fraction used."""

    fractions: tuple[float, ...]
    accuracy_mean: tuple[float, ...]
    accuracy_std: tuple[float, ...]
    n_train_sentences: tuple[int, ...]
    subsample_ids: tuple[tuple[str, ...], ...]
    seeds: tuple[int, ...]
    reference_accuracy: float | None = None

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fraction", "n_train_sentences", "accuracy_mean",
                             "accuracy_std", "reference_accuracy"])
            ref = "" if self.reference_accuracy is None else repr(self.reference_accuracy)
            for i, fraction in enumerate(self.fractions):
                writer.writerow([fraction, self.n_train_sentences[i],
                                 repr(self.accuracy_mean[i]), repr(self.accuracy_std[i]),
                                 ref])


def nested_subsample_indices(n: int, fractions: Sequence[float], seed: int
                             ) -> list[list[int]]:
    """Index subsets per fraction; smaller subsets are contained in larger ones
    and indices stay in their original order."""
    if any(not (0.0 < f <= 1.0) for f in fractions):
        raise ConfigError(f"fractions must lie in (0, 1], got {fractions}")
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ConfigError(f"fractions must be strictly increasing, got {fractions}")
    order = list(range(n))
    random.Random(seed).shuffle(order)
    subsets = []
    for fraction in fractions:
        k = math.ceil(fraction * n)
        if k < 1:
            raise ConfigError(f"fraction {fraction} yields zero sentences for n={n}")
        subsets.append(sorted(order[:k]))
    return subsets


def ablation_run(corpus, fractions: Sequence[float], encoder_spec, train_cfg, *,
                 split_ratios: tuple[float, float, float] = (0.9, 0.05, 0.05),
                 split_seed: int = 12, seeds: Sequence[int] | None = None,
                 eval_batch_size: int = 16, include_reference: bool = True,
                 population_std: bool = True) -> AblationCurve:
    """Train on nested subsamples of the training split, evaluate on the fixed
    test split, and aggregate over seeds.

    Validation and test splits, and the standardizer (fitted on the full
    training split), are held constant across fractions, so curve points are
    directly comparable.  At fraction 1.0 this reproduces a plain training
    run with the same seed.
    """
    import torch

    from .corpus import split_dataset
    from .features import extract_features, fit_standardizer, standardize
    from .regression import build_regressor, train

    fractions = tuple(fractions)
    seeds = tuple(seeds) if seeds is not None else tuple(train_cfg.seeds)

    train_corpus, val_corpus, test_corpus = split_dataset(corpus, split_ratios, split_seed)
    train_ds = extract_features(train_corpus, split="train")
    scaler = fit_standardizer(train_ds)
    train_std = standardize(scaler, train_ds)
    val_std = standardize(scaler, extract_features(val_corpus, split="val"))
    test_std = standardize(scaler, extract_features(test_corpus, split="test"))

    subsets = nested_subsample_indices(train_std.n_sentences, fractions, split_seed)

    means, stds, sizes, id_sets = [], [], [], []
    for fraction, indices in zip(fractions, subsets):
        sub_train = train_std.subset(indices)
        run_acc = []
        for seed in seeds:
            torch.manual_seed(seed)
            model = build_regressor(encoder_spec)
            result = train(model, sub_train, val_std, train_cfg, seed=seed)
            overall, _ = dataset_mae(result.model, test_std, batch_size=eval_batch_size)
            run_acc.append(accuracy(overall))
        acc = np.array(run_acc)
        means.append(float(acc.mean()))
        stds.append(float(_spread(acc, population_std)))
        sizes.append(sub_train.n_sentences)
        id_sets.append(tuple(sub_train.sentence_ids))

    reference = None
    if include_reference:
        ref_acc = []
        for seed in seeds:
            torch.manual_seed(seed)
            frozen = build_regressor(replace(encoder_spec, trainable=False))
            overall, _ = dataset_mae(frozen, test_std, batch_size=eval_batch_size)
            ref_acc.append(accuracy(overall))
        reference = float(np.mean(ref_acc))

    return AblationCurve(
        fractions=fractions,
        accuracy_mean=tuple(means),
        accuracy_std=tuple(stds),
        n_train_sentences=tuple(sizes),
        subsample_ids=tuple(id_sets),
        seeds=seeds,
        reference_accuracy=reference,
    )
