"""Pluggable sentence encoders behind a common tokenize/forward surface.

Two backends ship by default:

* ``tiny``  -- a small randomly initialized transformer (2 layers, hidden 32
  by default) with a deterministic hash-chunk subword tokenizer.  Every test
  and demo runs on it CPU-only in seconds.
* ``hf``    -- any HuggingFace encoder checkpoint, resolved at runtime
  (requires the optional ``transformers`` dependency and the checkpoint
  being available locally or downloadable).

An encoder is an ``nn.Module`` with ``hidden_size`` and ``max_length``
attributes, a ``tokenize(words) -> SubwordTokenization`` method, and a
``forward(input_ids, attention_mask) -> (B, P, hidden)`` pass.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import torch
from torch import nn

from .errors import ConfigError

#: Checkpoint inventory: short name -> (checkpoint id, hidden size, batch size).
#: Batch sizes follow the memory-driven defaults used with each model family.
KNOWN_CHECKPOINTS: dict[str, tuple[str, int, int]] = {
    "bert-nl": ("wietsedv/bert-base-dutch-cased", 768, 16),
    "bert-en": ("bert-base-uncased", 768, 16),
    "bert-de": ("bert-base-german-cased", 768, 8),
    "bert-ru": ("DeepPavlov/rubert-base-cased", 768, 8),
    "bert-multi": ("bert-base-multilingual-cased", 768, 16),
    "xlm-en": ("xlm-mlm-en-2048", 2048, 2),
    "xlm-ende": ("xlm-mlm-ende-1024", 1024, 8),
    "xlm-17": ("xlm-mlm-17-1280", 1280, 8),
    "xlm-100": ("xlm-mlm-100-1280", 1280, 8),
}

TINY_HIDDEN_SIZE = 32


@dataclass(frozen=True, slots=True)
class SubwordTokenization:
    """One sentence's subword pieces with per-piece word ownership.

    ``word_ids[i]`` is the 0-based word index owning piece ``i``, or None for
    special tokens.  ``truncated`` marks sentences cut at the encoder's
    maximum length.
    """

    piece_ids: tuple[int, ...]
    word_ids: tuple[Optional[int], ...]
    n_words: int
    truncated: bool = False


@dataclass(frozen=True, slots=True)
class EncoderSpec:
    """Which encoder to build and whether its parameters may move."""

    checkpoint_id: str
    hidden_size: int
    backend: str = "tiny"
    trainable: bool = True

    def __post_init__(self):
        if not self.checkpoint_id:
            raise ConfigError("checkpoint_id must be non-empty")
        if self.hidden_size <= 0:
            raise ConfigError(f"hidden_size must be positive, got {self.hidden_size}")

    @classmethod
    def from_name(cls, name: str, *, trainable: bool = True) -> "EncoderSpec":
        """Resolve a short encoder name: ``tiny`` or a known checkpoint alias."""
        if name == "tiny" or name.startswith("tiny-"):
            return cls(checkpoint_id=name, hidden_size=TINY_HIDDEN_SIZE,
                       backend="tiny", trainable=trainable)
        if name in KNOWN_CHECKPOINTS:
            checkpoint, hidden, _ = KNOWN_CHECKPOINTS[name]
            return cls(checkpoint_id=checkpoint, hidden_size=hidden, backend="hf",
                       trainable=trainable)
        raise ConfigError(f"unknown encoder name {name!r}; use 'tiny', one of "
                          f"{sorted(KNOWN_CHECKPOINTS)}, or build an EncoderSpec directly")

    def to_json_dict(self) -> dict:
        return {"checkpoint_id": self.checkpoint_id, "hidden_size": self.hidden_size,
                "backend": self.backend, "trainable": self.trainable}

    @classmethod
    def from_json_dict(cls, data: dict) -> "EncoderSpec":
        return cls(**data)


def default_batch_size(spec: EncoderSpec) -> int:
    """Memory-driven batch size default for a given encoder."""
    for checkpoint, hidden, batch in KNOWN_CHECKPOINTS.values():
        if checkpoint == spec.checkpoint_id:
            return batch
    if spec.hidden_size <= 768:
        return 16
    if spec.hidden_size <= 1280:
        return 8
    return 2


class TinyEncoder(nn.Module):
    """Desk-scale transformer encoder over hashed character chunks.

    Words are split into chunks of at most ``chunk_size`` characters;
    continuation chunks carry a ``##`` marker before hashing, so piece
    identity distinguishes word-initial from word-internal material.  Piece
    ids are stable across processes (CRC32, not Python's randomized hash).

    The blocks are pre-norm without a final LayerNorm: the residual stream
    stays unnormalized, which lets small-learning-rate fine-tuning reach the
    output scale of 0-100 targets in a realistic number of steps.
    """

    PAD, BOS, EOS = 0, 1, 2
    _N_SPECIAL = 3

    def __init__(self, hidden_size: int = TINY_HIDDEN_SIZE, n_layers: int = 2,
                 n_heads: int = 2, vocab_size: int = 32768, max_length: int = 128,
                 chunk_size: int = 6):
        super().__init__()
        if hidden_size % n_heads != 0:
            raise ConfigError(f"hidden_size {hidden_size} not divisible by {n_heads} heads")
        self.hidden_size = hidden_size
        self.max_length = max_length
        self.chunk_size = chunk_size
        self.vocab_size = vocab_size

        self.embeddings = nn.Embedding(vocab_size, hidden_size, padding_idx=self.PAD)
        self.positions = nn.Embedding(max_length, hidden_size)
        # standard transformer initializer range; the default N(0, 1) embedding
        # init gives every vocab id a large random output offset that drowns
        # per-word signal at small learning rates
        with torch.no_grad():
            nn.init.normal_(self.embeddings.weight, std=0.02)
            self.embeddings.weight[self.PAD].zero_()
            nn.init.normal_(self.positions.weight, std=0.02)
        layer = nn.TransformerEncoderLayer(
            d_model=hidden_size, nhead=n_heads, dim_feedforward=4 * hidden_size,
            dropout=0.0, batch_first=True, norm_first=True,
        )
        self.layers = nn.TransformerEncoder(layer, num_layers=n_layers, norm=None,
                                            enable_nested_tensor=False)

    def _piece_id(self, piece: str) -> int:
        return self._N_SPECIAL + zlib.crc32(piece.encode("utf-8")) % (
            self.vocab_size - self._N_SPECIAL)

    def tokenize(self, words: Sequence[str]) -> SubwordTokenization:
        piece_ids: list[int] = [self.BOS]
        word_ids: list[Optional[int]] = [None]
        truncated = False
        for wi, word in enumerate(words):
            chunks = [word[i:i + self.chunk_size]
                      for i in range(0, max(1, len(word)), self.chunk_size)]
            for ci, chunk in enumerate(chunks):
                if len(piece_ids) >= self.max_length - 1:
                    truncated = True
                    break
                piece_ids.append(self._piece_id(chunk if ci == 0 else "##" + chunk))
                word_ids.append(wi)
            if truncated:
                break
        piece_ids.append(self.EOS)
        word_ids.append(None)
        return SubwordTokenization(piece_ids=tuple(piece_ids), word_ids=tuple(word_ids),
                                   n_words=len(words), truncated=truncated)

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(input_ids.shape[1], device=input_ids.device)
        hidden = self.embeddings(input_ids) + self.positions(positions)[None, :, :]
        return self.layers(hidden, src_key_padding_mask=~attention_mask.bool())


class HuggingFaceEncoder(nn.Module):
    """Wrapper exposing a HuggingFace encoder through the common surface."""

    def __init__(self, checkpoint_id: str, expected_hidden: int | None = None):
        super().__init__()
        try:
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ConfigError(
                "the 'hf' backend needs the optional transformers dependency "
                "(pip install gazekit[hf])"
            ) from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(checkpoint_id, use_fast=True)
            self._model = AutoModel.from_pretrained(checkpoint_id)
        except Exception as exc:
            raise ConfigError(f"cannot resolve checkpoint {checkpoint_id!r}: {exc}") from exc

        self.hidden_size = int(self._model.config.hidden_size)
        if expected_hidden is not None and self.hidden_size != expected_hidden:
            raise ConfigError(
                f"checkpoint {checkpoint_id!r} has hidden size {self.hidden_size}, "
                f"spec says {expected_hidden}"
            )
        self.max_length = int(getattr(self._model.config, "max_position_embeddings", 512))

    def tokenize(self, words: Sequence[str]) -> SubwordTokenization:
        encoding = self._tokenizer(list(words), is_split_into_words=True,
                                   truncation=True, max_length=self.max_length)
        word_ids = encoding.word_ids()
        present = {w for w in word_ids if w is not None}
        return SubwordTokenization(
            piece_ids=tuple(encoding["input_ids"]),
            word_ids=tuple(word_ids),
            n_words=len(words),
            truncated=len(present) < len(words),
        )

    def forward(self, input_ids: torch.Tensor, attention_mask: torch.Tensor) -> torch.Tensor:
        return self._model(input_ids=input_ids, attention_mask=attention_mask).last_hidden_state


BackendFn = Callable[[EncoderSpec], nn.Module]

_BACKENDS: dict[str, BackendFn] = {}


def register_encoder_backend(name: str, fn: BackendFn) -> None:
    _BACKENDS[name] = fn


def build_encoder(spec: EncoderSpec) -> nn.Module:
    builder = _BACKENDS.get(spec.backend)
    if builder is None:
        known = ", ".join(sorted(_BACKENDS))
        raise ConfigError(f"unknown encoder backend {spec.backend!r} (registered: {known})")
    encoder = builder(spec)
    if encoder.hidden_size != spec.hidden_size:
        raise ConfigError(f"backend {spec.backend!r} built hidden size "
                          f"{encoder.hidden_size}, spec says {spec.hidden_size}")
    return encoder


register_encoder_backend("tiny", lambda spec: TinyEncoder(hidden_size=spec.hidden_size))
register_encoder_backend(
    "hf", lambda spec: HuggingFaceEncoder(spec.checkpoint_id, expected_hidden=spec.hidden_size)
)
