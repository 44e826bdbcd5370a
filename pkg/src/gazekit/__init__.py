"""gazekit: token-level reading measures from eye-tracking fixations,
transformer regressors that predict them, and the evaluation harness
(baselines, transfer matrices, ablations, readability analyses) around both.
"""

__version__ = "0.1.0"

from .corpus import (Corpus, CorpusStats, FixationEvent, Sentence, SubjectTrial,
                     Token, ValidationReport, corpus_stats, load_corpus,
                     split_dataset, validate_corpus, write_unified)
from .encoders import EncoderSpec, KNOWN_CHECKPOINTS, TinyEncoder
from .errors import ConfigError, CorpusError, GazekitError, TrainingError
from .evaluation import (AblationCurve, BatchTensors, CrossMatrix, EvaluationReport,
                         MeanBaseline, ablation_run, accuracy, cross_matrix,
                         evaluate, mae_overall, mae_per_feature, mean_baseline)
from .features import (FEATURE_NAMES, FeatureDataset, Standardizer,
                       SubjectTokenMeasures, TokenFeatures, aggregate_token_features,
                       destandardize, export_features_tsv, extract_features,
                       fit_standardizer, standardize, subject_measures)
from .regression import (SubwordAlignment, TokenRegressor, TrainConfig, align_subwords,
                         build_regressor, predict, train)
from .analysis import (BinnedCurve, ReadabilityScore, count_syllables, flesch,
                       pos_aggregation, readability_accuracy_curve, word_length_curve)

__all__ = [
    "__version__",
    "Corpus", "CorpusStats", "FixationEvent", "Sentence", "SubjectTrial", "Token",
    "ValidationReport", "corpus_stats", "load_corpus", "split_dataset",
    "validate_corpus", "write_unified",
    "EncoderSpec", "KNOWN_CHECKPOINTS", "TinyEncoder",
    "ConfigError", "CorpusError", "GazekitError", "TrainingError",
    "AblationCurve", "BatchTensors", "CrossMatrix", "EvaluationReport", "MeanBaseline",
    "ablation_run", "accuracy", "cross_matrix", "evaluate", "mae_overall",
    "mae_per_feature", "mean_baseline",
    "FEATURE_NAMES", "FeatureDataset", "Standardizer", "SubjectTokenMeasures",
    "TokenFeatures", "aggregate_token_features", "destandardize",
    "export_features_tsv", "extract_features", "fit_standardizer", "standardize",
    "subject_measures",
    "SubwordAlignment", "TokenRegressor", "TrainConfig", "align_subwords",
    "build_regressor", "predict", "train",
    "BinnedCurve", "ReadabilityScore", "count_syllables", "flesch",
    "pos_aggregation", "readability_accuracy_curve", "word_length_curve",
]
