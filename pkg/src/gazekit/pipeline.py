"""Experiment plumbing: run directories, manifests, and stage drivers.

A training run directory contains::

    manifest.json       command, config snapshot, input hashes, seeds, outputs
    config.json         encoder spec + training recipe + split settings
    standardizer.json   fitted feature scaling state
    history.csv         epoch, train_loss, val_accuracy, lr
    model.pt            best checkpoint (torch state dict, treated as opaque)

Every stage is deterministic at desk scale: identical manifests produce
identical metric files.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch

from . import __version__
from .analysis import (curves_to_csv, load_tags_tsv, pos_aggregation,
                       readability_accuracy_curve, tags_for_dataset,
                       word_length_curve)
from .corpus import Corpus, load_corpus, split_dataset, validate_corpus
from .encoders import EncoderSpec
from .errors import ConfigError, GazekitError
from .evaluation import (AblationCurve, EvaluationReport, ablation_run, cross_matrix,
                         evaluate, mean_baseline, nested_subsample_indices)
from .features import (FeatureDataset, Standardizer, export_features_tsv,
                       extract_features, fit_standardizer, standardize)
from .regression import TokenRegressor, TrainConfig, build_regressor, predict, train

logger = logging.getLogger(__name__)

DEFAULT_RATIOS = (0.9, 0.05, 0.05)
DEFAULT_SPLIT_SEED = 12


def hash_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


@dataclass(frozen=True)
class RunManifest:
    """Audit record of one run: what was executed on which inputs."""

    command: str
    config: dict
    input_hashes: dict[str, str]
    seeds: tuple[int, ...]
    outputs: tuple[str, ...]
    version: str
    created_at: str

    @classmethod
    def create(cls, command: str, config: dict, inputs: Sequence[str | Path],
               seeds: Sequence[int], outputs: Sequence[str | Path]) -> "RunManifest":
        return cls(
            command=command,
            config=config,
            input_hashes={str(p): hash_file(p) for p in inputs},
            seeds=tuple(seeds),
            outputs=tuple(str(p) for p in outputs),
            version=__version__,
            created_at=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        )

    def save(self, path: str | Path) -> None:
        payload = {
            "command": self.command,
            "config": self.config,
            "input_hashes": self.input_hashes,
            "seeds": list(self.seeds),
            "outputs": list(self.outputs),
            "version": self.version,
            "created_at": self.created_at,
        }
        Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RunManifest":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        data["seeds"] = tuple(data["seeds"])
        data["outputs"] = tuple(data["outputs"])
        return cls(**data)


# ---------------------------------------------------------------------------
# Split + extraction helpers
# ---------------------------------------------------------------------------

def split_and_extract(corpus: Corpus, ratios: tuple[float, float, float] = DEFAULT_RATIOS,
                      split_seed: int = DEFAULT_SPLIT_SEED, *,
                      avg_fixating_only: bool = False
                      ) -> tuple[FeatureDataset, FeatureDataset, FeatureDataset]:
    train_c, val_c, test_c = split_dataset(corpus, ratios, split_seed)
    return (extract_features(train_c, split="train", avg_fixating_only=avg_fixating_only),
            extract_features(val_c, split="val", avg_fixating_only=avg_fixating_only),
            extract_features(test_c, split="test", avg_fixating_only=avg_fixating_only))


def standardized_splits(corpus: Corpus, ratios=DEFAULT_RATIOS,
                        split_seed: int = DEFAULT_SPLIT_SEED, *,
                        scaler_fit: str = "train", avg_fixating_only: bool = False
                        ) -> tuple[FeatureDataset, FeatureDataset, FeatureDataset,
                                   Standardizer]:
    """Split, extract and scale.  ``scaler_fit`` picks the fitting scope:
    "train" (no leakage, the default) or "all" (whole-corpus statistics)."""
    train_ds, val_ds, test_ds = split_and_extract(corpus, ratios, split_seed,
                                                  avg_fixating_only=avg_fixating_only)
    if scaler_fit == "train":
        scaler = fit_standardizer(train_ds)
    elif scaler_fit == "all":
        scaler = fit_standardizer(extract_features(
            corpus, avg_fixating_only=avg_fixating_only))
    else:
        raise ConfigError(f"scaler_fit must be 'train' or 'all', got {scaler_fit!r}")
    return (standardize(scaler, train_ds), standardize(scaler, val_ds),
            standardize(scaler, test_ds), scaler)


# ---------------------------------------------------------------------------
# Training runs
# ---------------------------------------------------------------------------

def resolve_encoder(encoder: str | EncoderSpec, *, trainable: bool = True) -> EncoderSpec:
    if isinstance(encoder, EncoderSpec):
        return replace(encoder, trainable=trainable and encoder.trainable)
    return EncoderSpec.from_name(encoder, trainable=trainable)


def run_training(corpus_path: str | Path, encoder: str | EncoderSpec,
                 out_dir: str | Path, *, seed: int, cfg: TrainConfig | None = None,
                 ratios: tuple[float, float, float] = DEFAULT_RATIOS,
                 split_seed: int = DEFAULT_SPLIT_SEED, no_finetune: bool = False,
                 train_fraction: float = 1.0, scaler_fit: str = "train",
                 avg_fixating_only: bool = False, command: str = "train") -> Path:
    """One complete training run; returns the run directory."""
    cfg = cfg or TrainConfig()
    spec = resolve_encoder(encoder, trainable=not no_finetune)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    corpus = load_corpus(corpus_path)
    train_std, val_std, test_std, scaler = standardized_splits(
        corpus, ratios, split_seed, scaler_fit=scaler_fit,
        avg_fixating_only=avg_fixating_only)

    if not (0.0 < train_fraction <= 1.0):
        raise ConfigError(f"train fraction must be in (0, 1], got {train_fraction}")
    if train_fraction < 1.0:
        full_size = train_std.n_sentences
        indices = nested_subsample_indices(full_size, (train_fraction,), split_seed)[0]
        train_std = train_std.subset(indices)
        logger.info("training on %d of %d sentences (fraction %.3f)",
                    len(indices), full_size, train_fraction)

    torch.manual_seed(seed)
    model = build_regressor(spec)
    result = train(model, train_std, val_std, cfg, seed=seed)

    config = {
        "corpus": str(corpus_path),
        "corpus_name": corpus.name,
        "encoder": spec.to_json_dict(),
        "train": cfg.to_json_dict(),
        "loss": "mse-mean-over-valid-positions",
        "schedule": "linear-decay-over-total-steps",
        "split": {"ratios": list(ratios), "seed": split_seed},
        "seed": seed,
        "train_fraction": train_fraction,
        "scaler_fit": scaler_fit,
        "avg_fixating_only": avg_fixating_only,
    }
    (out_dir / "config.json").write_text(json.dumps(config, indent=2) + "\n",
                                         encoding="utf-8")
    scaler.save(out_dir / "standardizer.json")
    result.history.to_csv(out_dir / "history.csv")
    torch.save(result.model.state_dict(), out_dir / "model.pt")
    manifest = RunManifest.create(
        command=command, config=config, inputs=[corpus_path], seeds=[seed],
        outputs=[out_dir / name for name in
                 ("config.json", "standardizer.json", "history.csv", "model.pt")])
    manifest.save(out_dir / "manifest.json")
    logger.info("run saved to %s (best epoch %d, best val acc %.3f)",
                out_dir, result.history.best_epoch, result.history.best_val_accuracy)
    return out_dir


@dataclass(frozen=True)
class LoadedRun:
    run_dir: Path
    config: dict
    model: TokenRegressor
    scaler: Standardizer


def load_run(run_dir: str | Path) -> LoadedRun:
    run_dir = Path(run_dir)
    config_path = run_dir / "config.json"
    if not config_path.exists():
        raise ConfigError(f"{run_dir} is not a run directory (no config.json)")
    config = json.loads(config_path.read_text(encoding="utf-8"))
    spec = EncoderSpec.from_json_dict(config["encoder"])
    model = build_regressor(spec)
    state = torch.load(run_dir / "model.pt", map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    scaler = Standardizer.load(run_dir / "standardizer.json")
    return LoadedRun(run_dir=run_dir, config=config, model=model, scaler=scaler)


def _test_split_for_run(run: LoadedRun, corpus_path: str | Path | None,
                        split: str = "test") -> FeatureDataset:
    path = Path(corpus_path) if corpus_path is not None else Path(run.config["corpus"])
    corpus = load_corpus(path)
    ratios = tuple(run.config["split"]["ratios"])
    split_seed = run.config["split"]["seed"]
    train_ds, val_ds, test_ds = split_and_extract(
        corpus, ratios, split_seed,
        avg_fixating_only=run.config.get("avg_fixating_only", False))
    chosen = {"train": train_ds, "val": val_ds, "test": test_ds}.get(split)
    if chosen is None:
        raise ConfigError(f"unknown split {split!r}; use train, val or test")
    return standardize(run.scaler, chosen)


def evaluate_runs(run_dirs: Sequence[str | Path], *, corpus_path: str | Path | None = None,
                  split: str = "test", batch_size: int | None = None,
                  baseline: bool = False, include_padding: bool = False,
                  out: str | Path | None = None) -> EvaluationReport:
    """Aggregate one or more seed runs of the same configuration into a report."""
    if not run_dirs:
        raise ConfigError("evaluate needs at least one run directory")
    runs = [load_run(d) for d in run_dirs]
    first = runs[0]
    test_std = _test_split_for_run(first, corpus_path, split)

    if baseline:
        path = Path(corpus_path) if corpus_path is not None else Path(first.config["corpus"])
        corpus = load_corpus(path)
        ratios = tuple(first.config["split"]["ratios"])
        train_ds, _, _ = split_and_extract(
            corpus, ratios, first.config["split"]["seed"],
            avg_fixating_only=first.config.get("avg_fixating_only", False))
        models = [mean_baseline(standardize(first.scaler, train_ds))]
        model_id = "mean-baseline"
    else:
        models = [r.model for r in runs]
        model_id = first.config["encoder"]["checkpoint_id"]

    report = evaluate(
        models, test_std,
        batch_size=batch_size or first.config["train"]["eval_batch_size"],
        model_id=model_id,
        dataset_id=f"{first.config['corpus_name']}/{split}",
        include_padding=include_padding,
    )
    if out is not None:
        report.save(out)
    return report


# ---------------------------------------------------------------------------
# Transfer and ablation drivers
# ---------------------------------------------------------------------------

def run_cross_eval(runs: Mapping[str, str | Path], corpora: Mapping[str, str | Path],
                   *, batch_size: int = 16, out: str | Path | None = None):
    """Evaluate each run on every corpus's test split.

    Each test split is standardized with its own run's scaler (the one fitted
    on that corpus's training split), so the deltas isolate model transfer.
    """
    if set(runs) != set(corpora):
        raise ConfigError(f"run labels {sorted(runs)} do not match corpus labels "
                          f"{sorted(corpora)}")
    loaded = {label: load_run(d) for label, d in runs.items()}
    models = {label: r.model for label, r in loaded.items()}
    tests = {label: _test_split_for_run(loaded[label], corpora[label])
             for label in loaded}
    matrix = cross_matrix(models, tests, batch_size=batch_size)
    if out is not None:
        matrix.to_csv(out)
    return matrix


def run_ablation(corpus_path: str | Path, encoder: str | EncoderSpec,
                 fractions: Sequence[float], out_dir: str | Path, *,
                 cfg: TrainConfig | None = None, seeds: Sequence[int] | None = None,
                 ratios: tuple[float, float, float] = DEFAULT_RATIOS,
                 split_seed: int = DEFAULT_SPLIT_SEED,
                 command: str = "ablate") -> AblationCurve:
    cfg = cfg or TrainConfig()
    spec = resolve_encoder(encoder)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    corpus = load_corpus(corpus_path)
    curve = ablation_run(corpus, fractions, spec, cfg, split_ratios=ratios,
                         split_seed=split_seed, seeds=seeds,
                         eval_batch_size=cfg.eval_batch_size)
    curve.to_csv(out_dir / "ablation.csv")
    manifest = RunManifest.create(
        command=command,
        config={"corpus": str(corpus_path), "encoder": spec.to_json_dict(),
                "train": cfg.to_json_dict(), "fractions": list(fractions),
                "split": {"ratios": list(ratios), "seed": split_seed}},
        inputs=[corpus_path], seeds=curve.seeds, outputs=[out_dir / "ablation.csv"])
    manifest.save(out_dir / "manifest.json")
    return curve


# ---------------------------------------------------------------------------
# Analyses
# ---------------------------------------------------------------------------

def run_analysis(kind: str, corpus_path: str | Path, *, run_dir: str | Path | None = None,
                 feature: str | None = None, tags_path: str | Path | None = None,
                 language: str | None = None, out: str | Path | None = None):
    """Produce one analysis artifact (wordlen, readability, or pos) as rows/CSV.

    With a run directory the feature values are put on the run's standardized
    scale and model predictions are added; without one, raw values are used.
    """
    corpus = load_corpus(corpus_path)
    dataset = extract_features(corpus)
    language = language or corpus.language

    predictions = None
    if run_dir is not None:
        run = load_run(run_dir)
        dataset = standardize(run.scaler, dataset)
        predictions, _ = predict(run.model, list(corpus.sentences))

    if kind == "wordlen":
        curves = word_length_curve(dataset, predictions, feature or "fProp")
        if out is not None:
            curves_to_csv(curves, out)
        return curves

    if kind == "readability":
        if predictions is None:
            raise ConfigError("readability analysis needs --run (model predictions)")
        curve = readability_accuracy_curve(dataset, predictions, feature or "nFix",
                                           language)
        if out is not None:
            curves_to_csv([curve], out)
        return [curve]

    if kind == "pos":
        if tags_path is None:
            raise ConfigError("pos analysis needs --tags (sentence_id, token_index, tag)")
        tags = tags_for_dataset(dataset, load_tags_tsv(tags_path))
        groups = pos_aggregation(dataset, tags, predictions, feature or "MFD")
        if out is not None:
            with open(out, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["tag", "mean_mfd", "count", "accuracy"])
                for group in groups.values():
                    writer.writerow([group.tag, repr(group.mean_mfd), group.count,
                                     "" if group.accuracy is None else repr(group.accuracy)])
        return groups

    raise ConfigError(f"unknown analysis kind {kind!r}; use wordlen, readability or pos")


# ---------------------------------------------------------------------------
# Optional plot rendering
# ---------------------------------------------------------------------------

def render_curves(curves, path: str | Path, *, title: str = "") -> None:
    """Render binned curves to an image; needs the optional matplotlib extra."""
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ConfigError("--render needs matplotlib (pip install gazekit[plots])"
                          ) from exc
    fig, ax = plt.subplots(figsize=(6, 4))
    for curve in curves:
        ax.plot(curve.bins, curve.means, marker="o", label=curve.series)
    ax.set_xlabel("bin")
    ax.set_ylabel(curves[0].feature if curves else "")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_ablation(curve: AblationCurve, path: str | Path) -> None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ConfigError("--render needs matplotlib (pip install gazekit[plots])"
                          ) from exc
    fig, ax = plt.subplots(figsize=(6, 4))
    mean = np.array(curve.accuracy_mean)
    std = np.array(curve.accuracy_std)
    ax.plot(curve.fractions, mean, marker="o", label="fine-tuned")
    ax.fill_between(curve.fractions, mean - std, mean + std, alpha=0.25)
    if curve.reference_accuracy is not None:
        ax.axhline(curve.reference_accuracy, linestyle="--", color="gray",
                   label="no fine-tuning")
    ax.set_xlabel("training-data fraction")
    ax.set_ylabel("accuracy")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

def format_cell(mean: float, std: float) -> str:
    return f"{mean:.2f} ({std:.2f})"


def make_report(run_dirs: Sequence[str | Path], *, out_csv: str | Path | None = None
                ) -> str:
    """Summary table over completed runs: rows are models, columns datasets,
    cells "mean (std)" accuracy.  Also writes a per-feature breakdown CSV next
    to each run's report."""
    reports: list[EvaluationReport] = []
    for run_dir in run_dirs:
        report_path = Path(run_dir) / "report.json"
        if not report_path.exists():
            raise ConfigError(f"{run_dir} has no report.json; run 'gazekit evaluate' first")
        report = EvaluationReport.from_json_dict(
            json.loads(report_path.read_text(encoding="utf-8")))
        reports.append(report)
        _write_per_feature_csv(report, Path(run_dir) / "per_feature.csv")

    orders = {r.feature_order for r in reports}
    if len(orders) > 1:
        raise ConfigError(f"runs disagree on feature order: {orders}")

    models = sorted({r.model_id for r in reports})
    datasets = sorted({r.dataset_id for r in reports})
    cells = {(r.model_id, r.dataset_id): format_cell(r.overall_mean, r.overall_std)
             for r in reports}

    widths = [max(len("model"), *(len(m) for m in models))]
    widths += [max(len(d), *(len(cells.get((m, d), "")) for m in models), 1)
               for d in datasets]
    header = ["model"] + datasets
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for m in models:
        row = [m] + [cells.get((m, d), "") for d in datasets]
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    table = "\n".join(lines)

    if out_csv is not None:
        with open(out_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model"] + datasets)
            for m in models:
                writer.writerow([m] + [cells.get((m, d), "") for d in datasets])
    return table


def _write_per_feature_csv(report: EvaluationReport, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "accuracy_mean", "accuracy_std"])
        for i, name in enumerate(report.feature_order):
            writer.writerow([name, repr(float(report.per_feature_mean[i])),
                             repr(float(report.per_feature_std[i]))])


# ---------------------------------------------------------------------------
# Whole-pipeline driver
# ---------------------------------------------------------------------------

KNOWN_STAGES = ("validate", "stats", "extract", "train", "evaluate", "ablate",
                "analyze", "report")


def run_pipeline(config_path: str | Path) -> Path:
    """Execute the stages listed in an experiment config file, in order.

    The config is a JSON document; unknown stages abort before anything runs.
    Stage failures abort with a diagnostic naming the stage, keeping partial
    outputs in place.
    """
    config_path = Path(config_path)
    config = json.loads(config_path.read_text(encoding="utf-8"))
    stages = config.get("stages", ["validate", "train", "evaluate", "report"])
    unknown = [s for s in stages if s not in KNOWN_STAGES]
    if unknown:
        raise ConfigError(f"unknown pipeline stage(s) {unknown}; known: {KNOWN_STAGES}")

    out_dir = Path(config.get("out_dir", config_path.parent / "pipeline-out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus_path = config.get("corpus")
    if corpus_path is None:
        raise ConfigError("pipeline config needs a 'corpus' path")
    encoder = config.get("encoder", "tiny")
    seeds = config.get("seeds", [DEFAULT_SPLIT_SEED])
    split = config.get("split", {})
    ratios = tuple(split.get("ratios", DEFAULT_RATIOS))
    split_seed = split.get("seed", DEFAULT_SPLIT_SEED)
    cfg = TrainConfig.from_json_dict(config.get("train", {}))

    run_dirs = [out_dir / f"run-seed{seed}" for seed in seeds]
    outputs: list[Path] = []

    for stage in stages:
        logger.info("pipeline stage: %s", stage)
        try:
            if stage == "validate":
                report = validate_corpus(load_corpus(corpus_path, validate=False))
                if not report.is_clean:
                    raise GazekitError(f"corpus has {len(report)} violation(s): "
                                       f"{report.violations[0]}")
            elif stage == "stats":
                from .corpus import corpus_stats
                stats = corpus_stats(load_corpus(corpus_path))
                path = out_dir / "stats.json"
                path.write_text(json.dumps(stats.as_dict(), indent=2) + "\n",
                                encoding="utf-8")
                outputs.append(path)
            elif stage == "extract":
                corpus = load_corpus(corpus_path)
                path = out_dir / "features.tsv"
                export_features_tsv(extract_features(corpus), path)
                outputs.append(path)
            elif stage == "train":
                for seed, run_dir in zip(seeds, run_dirs):
                    run_training(corpus_path, encoder, run_dir, seed=seed, cfg=cfg,
                                 ratios=ratios, split_seed=split_seed,
                                 no_finetune=config.get("no_finetune", False))
                    outputs.append(run_dir)
            elif stage == "evaluate":
                report_path = out_dir / "report.json"
                evaluate_runs(run_dirs, out=report_path)
                for run_dir in run_dirs:  # per-run copy so 'report' can pick them up
                    evaluate_runs([run_dir], out=run_dir / "report.json")
                outputs.append(report_path)
            elif stage == "ablate":
                curve = run_ablation(corpus_path, encoder,
                                     config.get("fractions", [0.25, 0.5, 1.0]),
                                     out_dir / "ablation", cfg=cfg, seeds=seeds,
                                     ratios=ratios, split_seed=split_seed)
                outputs.append(out_dir / "ablation" / "ablation.csv")
            elif stage == "analyze":
                analyze = config.get("analyze", {"kind": "wordlen"})
                path = out_dir / f"analysis-{analyze.get('kind', 'wordlen')}.csv"
                trained = (run_dirs[0] / "config.json").exists()
                run_analysis(analyze.get("kind", "wordlen"), corpus_path,
                             run_dir=run_dirs[0] if trained else None,
                             feature=analyze.get("feature"),
                             tags_path=analyze.get("tags"), out=path)
                outputs.append(path)
            elif stage == "report":
                table = make_report(run_dirs, out_csv=out_dir / "summary.csv")
                (out_dir / "summary.txt").write_text(table + "\n", encoding="utf-8")
                outputs.append(out_dir / "summary.csv")
        except GazekitError as exc:
            raise GazekitError(f"pipeline stage {stage!r} failed: {exc}") from exc

    manifest = RunManifest.create(command="run-pipeline", config=config,
                                  inputs=[corpus_path], seeds=seeds, outputs=outputs)
    manifest.save(out_dir / "manifest.json")
    return out_dir
