"""Token regression: encoder + shared linear head, trained with MSE.

Word-level targets are aligned to subword tokenizations by keeping only each
word's first piece; all other pieces are masked out of both the loss and the
gathered predictions.  Training uses decoupled weight decay (AdamW), a linear
learning-rate decay over the planned total number of steps, global gradient
clipping, and early stopping on validation accuracy with the best checkpoint
restored.
"""

from __future__ import annotations

import copy
import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .corpus import Sentence
from .encoders import EncoderSpec, SubwordTokenization, build_encoder
from .errors import ConfigError, GazekitError, TrainingError
from .evaluation import accuracy, dataset_mae
from .features import N_FEATURES, FeatureDataset

logger = logging.getLogger(__name__)

DEFAULT_SEEDS = (12, 79, 237, 549, 886)


class AlignmentError(GazekitError):
    """Tokenizer output that cannot be aligned back to words."""


@dataclass(frozen=True, slots=True)
class SubwordAlignment:
    """Word -> first-piece mapping plus per-piece ownership.

    ``first_piece_index[w]`` is -1 when word w fell off the end of a
    truncated tokenization; mid-sequence words always have exactly one
    first piece.
    """

    first_piece_index: tuple[int, ...]
    piece_owner: tuple[Optional[int], ...]

    @property
    def n_words(self) -> int:
        return len(self.first_piece_index)

    @property
    def present(self) -> tuple[bool, ...]:
        return tuple(i >= 0 for i in self.first_piece_index)


def align_subwords(tokens: Sequence[str], pieces: SubwordTokenization) -> SubwordAlignment:
    """Locate each word's first subword piece.

    Words may only be missing from the piece sequence at the truncated tail;
    a zero-piece word anywhere else is a tokenizer defect and raises.
    """
    n_words = len(tokens)
    if pieces.n_words != n_words:
        raise AlignmentError(f"tokenization covers {pieces.n_words} words, "
                             f"got {n_words} surfaces")
    first = [-1] * n_words
    for pi, wi in enumerate(pieces.word_ids):
        if wi is None:
            continue
        if not 0 <= wi < n_words:
            raise AlignmentError(f"piece {pi} claims word {wi} of {n_words}")
        if first[wi] < 0:
            first[wi] = pi

    last_present = max((w for w in range(n_words) if first[w] >= 0), default=-1)
    for w in range(last_present):
        if first[w] < 0:
            raise AlignmentError(f"word {w} ({tokens[w]!r}) produced zero pieces")
    if last_present < n_words - 1 and not pieces.truncated:
        raise AlignmentError(f"word {last_present + 1} ({tokens[last_present + 1]!r}) "
                             "produced zero pieces")
    return SubwordAlignment(first_piece_index=tuple(first),
                            piece_owner=tuple(pieces.word_ids))


@dataclass(frozen=True)
class TrainConfig:
    """The fine-tuning recipe; defaults follow the standard setup."""

    learning_rate: float = 5e-5
    weight_decay: float = 0.01
    max_epochs: int = 100
    patience: int = 7
    grad_clip: float = 1.0
    batch_size: int = 16
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    eval_batch_size: int = 16

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not self.seeds:
            raise ConfigError("seed list must be non-empty")
        if self.patience >= self.max_epochs:
            raise ConfigError(f"patience ({self.patience}) must be smaller than "
                              f"max_epochs ({self.max_epochs})")

    def to_json_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "grad_clip": self.grad_clip,
            "batch_size": self.batch_size,
            "seeds": list(self.seeds),
            "eval_batch_size": self.eval_batch_size,
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if "seeds" in data:
            data["seeds"] = tuple(data["seeds"])
        return cls(**data)


@dataclass(frozen=True, slots=True)
class EncodedBatch:
    """Collated tensors for one batch of sentences."""

    input_ids: torch.Tensor    # (B, P) long
    attention_mask: torch.Tensor  # (B, P) bool
    gather_index: torch.Tensor  # (B, W) long, 0 where absent
    word_mask: torch.Tensor    # (B, W) bool


class TokenRegressor(nn.Module):
    """Encoder with a position-shared affine head onto the 8 feature dims."""

    def __init__(self, encoder: nn.Module, spec: EncoderSpec):
        super().__init__()
        self.encoder = encoder
        self.spec = spec
        self.head = nn.Linear(encoder.hidden_size, N_FEATURES)
        nn.init.zeros_(self.head.bias)

    def tokenize_sentences(self, sentences: Sequence[Sequence[str]]
                           ) -> list[SubwordTokenization]:
        return [self.encoder.tokenize(list(s)) for s in sentences]

    def encode_batch(self, sentences: Sequence[Sequence[str]],
                     tokenizations: Sequence[SubwordTokenization] | None = None
                     ) -> EncodedBatch:
        if tokenizations is None:
            tokenizations = self.tokenize_sentences(sentences)
        alignments = [align_subwords(list(s), t) for s, t in zip(sentences, tokenizations)]

        n_pieces = max(len(t.piece_ids) for t in tokenizations)
        n_words = max(len(s) for s in sentences)
        batch = len(sentences)

        input_ids = torch.zeros((batch, n_pieces), dtype=torch.long)
        attention = torch.zeros((batch, n_pieces), dtype=torch.bool)
        gather = torch.zeros((batch, n_words), dtype=torch.long)
        word_mask = torch.zeros((batch, n_words), dtype=torch.bool)
        for i, (tok, alignment) in enumerate(zip(tokenizations, alignments)):
            input_ids[i, :len(tok.piece_ids)] = torch.tensor(tok.piece_ids, dtype=torch.long)
            attention[i, :len(tok.piece_ids)] = True
            for w, piece in enumerate(alignment.first_piece_index):
                if piece >= 0:
                    gather[i, w] = piece
                    word_mask[i, w] = True
        return EncodedBatch(input_ids=input_ids, attention_mask=attention,
                            gather_index=gather, word_mask=word_mask)

    def forward(self, batch: EncodedBatch) -> torch.Tensor:
        """Per-word predictions (B, W, 8), gathered at first subword pieces."""
        hidden = self.encoder(batch.input_ids, batch.attention_mask)
        piece_preds = self.head(hidden)
        index = batch.gather_index.unsqueeze(-1).expand(-1, -1, N_FEATURES)
        return torch.gather(piece_preds, 1, index)

    @torch.no_grad()
    def predict_batch(self, sentences: Sequence[Sequence[str]]
                      ) -> tuple[np.ndarray, np.ndarray]:
        was_training = self.training
        self.eval()
        try:
            batch = self.encode_batch(sentences)
            preds = self.forward(batch)
        finally:
            self.train(was_training)
        return (preds.double().numpy(), batch.word_mask.numpy())


def build_regressor(spec: EncoderSpec) -> TokenRegressor:
    """Instantiate the encoder backend and attach a fresh regression head.

    Parameter initialization draws from torch's global RNG; seed it first for
    reproducible models.
    """
    return TokenRegressor(build_encoder(spec), spec)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(slots=True)
class TrainingHistory:
    """Epoch table plus per-step learning rates and post-clip gradient norms."""

    epochs: list[dict] = field(default_factory=list)
    step_lrs: list[float] = field(default_factory=list)
    step_grad_norms: list[float] = field(default_factory=list)
    best_epoch: int = 0
    best_val_accuracy: float = float("-inf")
    stopped_early: bool = False
    total_steps_planned: int = 0

    def log_epoch(self, epoch: int, train_loss: float, val_accuracy: float,
                  lr: float) -> None:
        self.epochs.append({"epoch": epoch, "train_loss": train_loss,
                            "val_accuracy": val_accuracy, "lr": lr})

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_accuracy", "lr"])
            for row in self.epochs:
                writer.writerow([row["epoch"], repr(row["train_loss"]),
                                 repr(row["val_accuracy"]), repr(row["lr"])])


@dataclass(frozen=True)
class TrainResult:
    model: TokenRegressor
    history: TrainingHistory


def masked_mse(predictions: torch.Tensor, targets: torch.Tensor,
               mask: torch.Tensor) -> torch.Tensor:
    """MSE averaged over valid positions and feature dimensions only."""
    n_valid = mask.sum()
    if int(n_valid) == 0:
        raise TrainingError("batch contains no valid target positions")
    diff = (predictions - targets) * mask.unsqueeze(-1)
    return diff.pow(2).sum() / (n_valid * N_FEATURES)


def _dataset_targets(dataset: FeatureDataset, indices: Sequence[int], width: int
                     ) -> tuple[torch.Tensor, torch.Tensor]:
    targets = torch.from_numpy(dataset.features[list(indices)][:, :width]).float()
    mask = torch.from_numpy(dataset.mask[list(indices)][:, :width])
    return targets, mask


def train(model: TokenRegressor, train_ds: FeatureDataset, val_ds: FeatureDataset,
          cfg: TrainConfig, *, seed: int | None = None) -> TrainResult:
    """Fine-tune the regressor; returns the best-validation checkpoint.

    With a non-trainable encoder spec this is the frozen-baseline mode: no
    parameter moves and the history holds a single evaluation pass.
    """
    if train_ds.n_sentences == 0:
        raise TrainingError("training set is empty")
    seed = seed if seed is not None else cfg.seeds[0]
    history = TrainingHistory()

    if not model.spec.trainable:
        val_acc = _validation_accuracy(model, val_ds, cfg)
        history.log_epoch(0, float("nan"), val_acc, 0.0)
        history.best_epoch = 0
        history.best_val_accuracy = val_acc
        return TrainResult(model=model, history=history)

    tokenizations = model.tokenize_sentences(train_ds.tokens)

    steps_per_epoch = math.ceil(train_ds.n_sentences / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.max_epochs
    history.total_steps_planned = total_steps

    optimizer = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate,
                                  weight_decay=cfg.weight_decay)
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda step: 1.0 - step / total_steps)
    shuffler = torch.Generator().manual_seed(seed)

    best_state = None
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = torch.randperm(train_ds.n_sentences, generator=shuffler).tolist()
        epoch_losses = []
        for start in range(0, len(order), cfg.batch_size):
            indices = order[start:start + cfg.batch_size]
            sentences = [train_ds.tokens[i] for i in indices]
            batch = model.encode_batch(sentences, [tokenizations[i] for i in indices])
            width = batch.word_mask.shape[1]
            targets, gold_mask = _dataset_targets(train_ds, indices, width)
            mask = gold_mask & batch.word_mask

            preds = model(batch)
            loss = masked_mse(preds, targets, mask)
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss {loss.item()} at epoch {epoch}, "
                    f"step {len(history.step_lrs)}")

            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            history.step_grad_norms.append(_global_grad_norm(model))
            history.step_lrs.append(optimizer.param_groups[0]["lr"])
            optimizer.step()
            scheduler.step()
            epoch_losses.append(loss.item())

        val_acc = _validation_accuracy(model, val_ds, cfg)
        history.log_epoch(epoch, float(np.mean(epoch_losses)), val_acc,
                          history.step_lrs[-1])

        if val_acc > history.best_val_accuracy:  # ties do not reset patience
            history.best_val_accuracy = val_acc
            history.best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
        elif epoch - history.best_epoch >= cfg.patience:
            history.stopped_early = True
            break

    if best_state is not None:
        model.load_state_dict(best_state)
    return TrainResult(model=model, history=history)


def _validation_accuracy(model: TokenRegressor, val_ds: FeatureDataset,
                         cfg: TrainConfig) -> float:
    overall_mae, _ = dataset_mae(model, val_ds, batch_size=cfg.eval_batch_size)
    return float(accuracy(overall_mae))


def _global_grad_norm(model: nn.Module) -> float:
    total = 0.0
    for p in model.parameters():
        if p.grad is not None:
            total += float(p.grad.detach().pow(2).sum())
    return total ** 0.5


# ---------------------------------------------------------------------------
# Inference
# ---------------------------------------------------------------------------

def predict(model: TokenRegressor, sentences: Sequence[Sentence] | Sequence[Sequence[str]],
            *, batch_size: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Per-word standardized predictions for a list of sentences.

    Returns (predictions (N, L, 8), mask (N, L)); words beyond the encoder's
    maximum length are truncated with a warning and masked out.
    """
    token_lists: list[list[str]] = []
    ids: list[str] = []
    for i, sentence in enumerate(sentences):
        if isinstance(sentence, Sentence):
            token_lists.append(sentence.surfaces)
            ids.append(sentence.sentence_id)
        else:
            token_lists.append(list(sentence))
            ids.append(f"sentence[{i}]")
    if not token_lists:
        raise ConfigError("predict needs at least one sentence")

    width = max(len(t) for t in token_lists)
    preds = np.zeros((len(token_lists), width, N_FEATURES))
    mask = np.zeros((len(token_lists), width), dtype=bool)
    for start in range(0, len(token_lists), batch_size):
        chunk = token_lists[start:start + batch_size]
        tokenizations = model.tokenize_sentences(chunk)
        for offset, tok in enumerate(tokenizations):
            if tok.truncated:
                logger.warning("sentence %s exceeds the encoder maximum length; "
                               "overflowing words are masked out", ids[start + offset])
        batch = model.encode_batch(chunk, tokenizations)
        with torch.no_grad():
            was_training = model.training
            model.eval()
            out = model(batch)
            model.train(was_training)
        w = out.shape[1]
        preds[start:start + len(chunk), :w] = out.double().numpy()
        mask[start:start + len(chunk), :w] = batch.word_mask.numpy()
    return preds, mask
