"""Small differentiable scam classifier with analytic embedding gradients.

Desk-scale stand-in for a fine-tuned transformer detector: a subword
tokenizer with word alignment, mean-pooled trainable embeddings, one tanh
hidden layer, and a logistic output. The architecture is deliberately the
smallest one that keeps embedding-space attribution non-trivial while
leaving every gradient hand-derivable:

    pooled  p = mean_i x_i                      (x_i: piece embedding rows)
    hidden  h = act(W1^T p + b1)                (act: tanh, or identity in
                                                 linear test fixtures)
    logit   z = w2 . h + b2
    P(scam) = logistic(z)

so dz/dx_i = (1/n) W1 (w2 * act'(h)) for every position i.

Training is full-batch gradient descent with early stopping on validation
macro F1; there is no minibatch shuffling, so a (config, seed) pair always
yields identical weights.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .corpus import (
    CHANNEL_MARKERS,
    MARKER_TOKENS,
    FormattedText,
    Label,
    MessageSet,
    format_input,
    truncate_front,
)

CHECKPOINT_FORMAT = "vexa-detector-v1"

PAD_PIECE = "<pad>"
UNK_PIECE = "<unk>"
SPECIAL_PIECES: tuple[str, ...] = (PAD_PIECE, UNK_PIECE) + tuple(
    CHANNEL_MARKERS[ch] for ch in CHANNEL_MARKERS
)

MAX_NGRAM = 4
DEFAULT_PIECE_LIMIT = 512


class DetectorError(Exception):
    """Base class for detector-stage failures."""


class CorpusEmptyError(DetectorError):
    """Vocabulary cannot be built: empty corpus or max_size below minimum."""


class IndexOutOfVocabError(DetectorError):
    """A piece id exceeds the model's vocabulary size."""


class NonFiniteWeightsError(DetectorError):
    """Model weights contain NaN or infinity."""


class SingleClassCorpusError(DetectorError):
    """Training corpus contains only one label."""


class LengthMismatchError(DetectorError):
    """Metric inputs have different lengths or are empty."""


class FrozenModelError(DetectorError):
    """A mutation was attempted on a frozen model."""


class CheckpointFormatError(DetectorError):
    """Checkpoint file is missing or carries the wrong format header."""


# ---------------------------------------------------------------------------
# Vocabulary and tokenization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Vocab:
    """Ordered subword pieces with PAD at index 0 and atomic channel markers."""

    pieces: tuple[str, ...]
    index: Mapping[str, int] = field(repr=False)
    max_piece_len: int

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    def __len__(self) -> int:
        return len(self.pieces)

    @classmethod
    def from_pieces(cls, pieces: Sequence[str]) -> "Vocab":
        pieces = tuple(pieces)
        if pieces[: len(SPECIAL_PIECES)] != SPECIAL_PIECES:
            raise ValueError(f"vocabulary must start with the special pieces {SPECIAL_PIECES}")
        index = {piece: i for i, piece in enumerate(pieces)}
        if len(index) != len(pieces):
            raise ValueError("vocabulary contains duplicate pieces")
        plain = [p for p in pieces if p not in SPECIAL_PIECES]
        max_len = max((len(p) for p in plain), default=1)
        return cls(pieces=pieces, index=index, max_piece_len=max_len)


def build_vocab(corpus: MessageSet, max_size: int = 2000) -> Vocab:
    """Most frequent character n-grams (n in 1..4) plus special pieces.

    Every single character seen in the corpus is force-included so
    segmentation of in-corpus text never needs the unknown piece. Ties in
    frequency break lexicographically; the result is a pure function of the
    corpus content and order.
    """
    if len(corpus) == 0:
        raise CorpusEmptyError("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    chars: set[str] = set()
    for message in corpus:
        for word in format_input(message).text.split():
            if word in MARKER_TOKENS:
                continue
            lowered = word.lower()
            chars.update(lowered)
            for n in range(1, MAX_NGRAM + 1):
                for i in range(len(lowered) - n + 1):
                    counts[lowered[i : i + n]] += 1
    minimum = len(SPECIAL_PIECES) + len(chars)
    if max_size < minimum:
        raise CorpusEmptyError(
            f"max_size {max_size} below specials + alphabet ({minimum}); cannot cover the corpus"
        )
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    pieces: list[str] = list(SPECIAL_PIECES)
    pieces.extend(p for p, _ in ranked if len(p) == 1)
    budget = max_size - len(pieces)
    multis = (p for p, _ in ranked if len(p) > 1)
    for piece in multis:
        if budget <= 0:
            break
        pieces.append(piece)
        budget -= 1
    return Vocab.from_pieces(pieces)


@dataclass(frozen=True)
class TokenizedInput:
    """Subword piece ids plus a piece-to-word alignment map.

    `alignment[i]` is the index into `words` of the word that produced piece
    position i. Front truncation drops leading pieces and re-indexes piece
    positions, but word indices keep referring to the full `words` tuple.
    """

    piece_ids: tuple[int, ...]
    alignment: tuple[int, ...]
    words: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.piece_ids) != len(self.alignment):
            raise ValueError("piece_ids and alignment must have equal length")
        if any(b < a for a, b in zip(self.alignment, self.alignment[1:])):
            raise ValueError("alignment must be monotonically non-decreasing")
        if self.alignment and self.alignment[-1] >= len(self.words):
            raise ValueError("alignment references a word position out of range")


def _segment_word(word: str, vocab: Vocab) -> list[int]:
    """Greedy longest-match segmentation with single-character fallback."""
    if word in MARKER_TOKENS:
        return [vocab.index[word]]
    lowered = word.lower()
    ids: list[int] = []
    i = 0
    while i < len(lowered):
        matched = False
        for length in range(min(vocab.max_piece_len, len(lowered) - i), 0, -1):
            candidate = lowered[i : i + length]
            piece_id = vocab.index.get(candidate)
            if piece_id is not None:
                ids.append(piece_id)
                i += length
                matched = True
                break
        if not matched:
            ids.append(vocab.unk_id)
            i += 1
    return ids


def tokenize(text: FormattedText, vocab: Vocab, limit: int = DEFAULT_PIECE_LIMIT) -> TokenizedInput:
    """Segment each whitespace word into pieces and record its word position."""
    words = tuple(text.text.split())
    piece_ids: list[int] = []
    alignment: list[int] = []
    for word_pos, word in enumerate(words):
        for piece_id in _segment_word(word, vocab):
            piece_ids.append(piece_id)
            alignment.append(word_pos)
    if len(piece_ids) > limit:
        piece_ids = truncate_front(piece_ids, limit)
        alignment = truncate_front(alignment, limit)
    return TokenizedInput(tuple(piece_ids), tuple(alignment), words)


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

# Activations mapped to (f, f' expressed in terms of f's output).
ACTIVATIONS: dict[str, tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]] = {
    "tanh": (np.tanh, lambda out: 1.0 - out * out),
    "identity": (lambda x: x, np.ones_like),
}


@dataclass(frozen=True)
class Prediction:
    scam_probability: float
    predicted_label: Label
    logit: float


@dataclass(frozen=True)
class DetectorModel:
    """Embedding table + mean pooling + one hidden layer + logistic output.

    The "identity" activation exists for linear test fixtures only; real
    models use tanh. Once frozen, weight arrays are marked read-only and
    further training raises.
    """

    vocab: Vocab
    embedding: np.ndarray  # (V, d)
    hidden_w: np.ndarray  # (d, h)
    hidden_b: np.ndarray  # (h,)
    out_w: np.ndarray  # (h,)
    out_b: float
    activation: str = "tanh"
    piece_limit: int = DEFAULT_PIECE_LIMIT
    seed: int = 0
    frozen: bool = False
    val_macro_f1: float | None = None
    epochs_run: int | None = None

    def __post_init__(self) -> None:
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.embedding.shape[1] < 2 or self.hidden_w.shape[1] < 1:
            raise ValueError("embedding dim must be >= 2 and hidden dim >= 1")

    @property
    def dim(self) -> int:
        return self.embedding.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.hidden_w.shape[1]

    def weight_arrays(self) -> tuple[np.ndarray, ...]:
        return (self.embedding, self.hidden_w, self.hidden_b, self.out_w)


def _check_finite(model: DetectorModel) -> None:
    for array in model.weight_arrays():
        if not np.all(np.isfinite(array)):
            raise NonFiniteWeightsError("model weights contain non-finite values")
    if not math.isfinite(model.out_b):
        raise NonFiniteWeightsError("model weights contain non-finite values")


def _sigmoid_scalar(z: float) -> float:
    if z >= 0:
        p = 1.0 / (1.0 + math.exp(-z))
    else:
        e = math.exp(z)
        p = e / (1.0 + e)
    # Keep the probability strictly inside (0, 1) even for extreme logits.
    return min(max(p, 5e-324), float(np.nextafter(1.0, 0.0)))


def _sigmoid_vec(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logits_from_pooled(model: DetectorModel, pooled: np.ndarray) -> np.ndarray:
    """Scam logits for a batch of pooled embedding vectors, shape (S, d) -> (S,)."""
    act, _ = ACTIVATIONS[model.activation]
    hidden = act(pooled @ model.hidden_w + model.hidden_b)
    return hidden @ model.out_w + model.out_b


def grad_wrt_pooled(model: DetectorModel, pooled: np.ndarray) -> np.ndarray:
    """d(logit)/d(pooled) for a batch of pooled vectors, shape (S, d) -> (S, d)."""
    act, dact = ACTIVATIONS[model.activation]
    hidden = act(pooled @ model.hidden_w + model.hidden_b)
    dz_dhidden = dact(hidden) * model.out_w
    return dz_dhidden @ model.hidden_w.T


def embed(model: DetectorModel, tokenized: TokenizedInput) -> np.ndarray:
    """Embedding rows for the input pieces, shape (n, d)."""
    ids = np.asarray(tokenized.piece_ids, dtype=np.intp)
    if ids.size == 0:
        raise ValueError("cannot embed an input with no pieces")
    if ids.max() >= len(model.vocab):
        raise IndexOutOfVocabError(
            f"piece id {int(ids.max())} out of range for vocabulary of {len(model.vocab)}"
        )
    return model.embedding[ids]


def logit_from_embeddings(model: DetectorModel, piece_embeddings: np.ndarray) -> float:
    """Scam logit for an explicit (n, d) embedding matrix."""
    pooled = piece_embeddings.mean(axis=0)
    return float(logits_from_pooled(model, pooled[None, :])[0])


def forward(model: DetectorModel, tokenized: TokenizedInput) -> Prediction:
    """Deterministic forward pass to a scam probability."""
    logit = logit_from_embeddings(model, embed(model, tokenized))
    probability = _sigmoid_scalar(logit)
    label = Label.SCAM if probability >= 0.5 else Label.HAM
    return Prediction(scam_probability=probability, predicted_label=label, logit=logit)


def grad_wrt_embeddings(model: DetectorModel, piece_embeddings: np.ndarray) -> np.ndarray:
    """Exact gradient of the scam logit w.r.t. each piece embedding coordinate.

    Mean pooling spreads the pooled gradient uniformly: every row of the
    result equals grad_wrt_pooled(mean) / n.
    """
    _check_finite(model)
    n = piece_embeddings.shape[0]
    pooled = piece_embeddings.mean(axis=0)
    g = grad_wrt_pooled(model, pooled[None, :])[0] / n
    return np.tile(g, (n, 1))


def freeze(model: DetectorModel) -> DetectorModel:
    """Return a frozen copy whose weight arrays are read-only. Idempotent."""
    if model.frozen:
        return model
    arrays = {}
    for name in ("embedding", "hidden_w", "hidden_b", "out_w"):
        arr = np.array(getattr(model, name), dtype=np.float64, copy=True)
        arr.setflags(write=False)
        arrays[name] = arr
    return replace(model, frozen=True, **arrays)


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    # Full-batch descent needs a large step: the +/-0.1 init leaves the
    # logit path (embedding -> hidden -> output) with tiny initial gradients.
    lr: float = 5.0
    epochs: int = 300
    patience: int = 30
    d: int = 16
    h: int = 8
    val_fraction: float = 0.2
    seed: int = 0
    vocab_size: int = 2000
    limit: int = DEFAULT_PIECE_LIMIT

    def __post_init__(self) -> None:
        if not (0.0 < self.val_fraction < 1.0):
            raise ValueError("val_fraction must be in (0, 1)")
        if self.epochs < 1 or self.patience < 1:
            raise ValueError("epochs and patience must be >= 1")


def _bag_matrix(corpus: MessageSet, vocab: Vocab, limit: int) -> np.ndarray:
    """(N, V) matrix of piece frequencies normalized so row @ E = pooled mean."""
    bags = np.zeros((len(corpus), len(vocab)), dtype=np.float64)
    for row, message in enumerate(corpus):
        tokenized = tokenize(format_input(message), vocab, limit)
        ids = np.asarray(tokenized.piece_ids, dtype=np.intp)
        np.add.at(bags[row], ids, 1.0)
        bags[row] /= len(ids)
    return bags


def _split_indices(
    labels: np.ndarray, val_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Stratified train/validation split with at least one of each side per class."""
    train: list[int] = []
    val: list[int] = []
    for value in (0.0, 1.0):
        idx = np.flatnonzero(labels == value)
        idx = rng.permutation(idx)
        n_val = int(round(val_fraction * len(idx)))
        n_val = min(max(n_val, 1), len(idx) - 1)
        val.extend(idx[:n_val].tolist())
        train.extend(idx[n_val:].tolist())
    return np.array(sorted(train)), np.array(sorted(val))


def train(
    corpus: MessageSet, config: TrainConfig, init: DetectorModel | None = None
) -> DetectorModel:
    """Full-batch cross-entropy descent with early stopping on validation macro F1.

    Returns the best-validation checkpoint, unfrozen. Deterministic: weight
    init, the train/validation split, and the update schedule all derive from
    config.seed.
    """
    if init is not None and init.frozen:
        raise FrozenModelError("cannot continue training a frozen model")
    label_values = {m.label for m in corpus}
    if len(label_values) < 2:
        raise SingleClassCorpusError("training corpus must contain both scam and ham messages")

    rng = np.random.default_rng(config.seed)
    if init is not None:
        vocab = init.vocab
        d, h = init.dim, init.hidden_dim
        embedding = np.array(init.embedding, copy=True)
        hidden_w = np.array(init.hidden_w, copy=True)
        hidden_b = np.array(init.hidden_b, copy=True)
        out_w = np.array(init.out_w, copy=True)
        out_b = float(init.out_b)
    else:
        vocab = build_vocab(corpus, config.vocab_size)
        d, h = config.d, config.h
        embedding = rng.uniform(-0.1, 0.1, size=(len(vocab), d))
        hidden_w = rng.uniform(-0.1, 0.1, size=(d, h))
        hidden_b = rng.uniform(-0.1, 0.1, size=h)
        out_w = rng.uniform(-0.1, 0.1, size=h)
        out_b = float(rng.uniform(-0.1, 0.1))

    bags = _bag_matrix(corpus, vocab, config.limit)
    y = np.array([1.0 if m.label is Label.SCAM else 0.0 for m in corpus])
    train_idx, val_idx = _split_indices(y, config.val_fraction, rng)
    if val_idx.size == 0:
        raise DetectorError("corpus too small to hold out a validation split")
    bags_train, y_train = bags[train_idx], y[train_idx]
    bags_val = bags[val_idx]
    val_labels = [Label.SCAM if y[i] == 1.0 else Label.HAM for i in val_idx]

    act, dact = ACTIVATIONS["tanh"]
    best: tuple[float, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]] | None = None
    wait = 0
    epochs_run = 0
    for _ in range(config.epochs):
        epochs_run += 1
        pooled = bags_train @ embedding
        hidden = act(pooled @ hidden_w + hidden_b)
        probs = _sigmoid_vec(hidden @ out_w + out_b)
        dz = (probs - y_train) / len(y_train)
        d_out_w = hidden.T @ dz
        d_out_b = float(dz.sum())
        d_hidden = dact(hidden) * np.outer(dz, out_w)
        d_hidden_w = pooled.T @ d_hidden
        d_hidden_b = d_hidden.sum(axis=0)
        d_pooled = d_hidden @ hidden_w.T
        d_embedding = bags_train.T @ d_pooled

        embedding -= config.lr * d_embedding
        hidden_w -= config.lr * d_hidden_w
        hidden_b -= config.lr * d_hidden_b
        out_w -= config.lr * d_out_w
        out_b -= config.lr * d_out_b

        val_logits = act(bags_val @ embedding @ hidden_w + hidden_b) @ out_w + out_b
        predicted = [Label.SCAM if z >= 0 else Label.HAM for z in val_logits]
        f1 = macro_f1(predicted, val_labels)
        if best is None or f1 > best[0]:
            best = (
                f1,
                (embedding.copy(), hidden_w.copy(), hidden_b.copy(), out_w.copy(), float(out_b)),
            )
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                break

    assert best is not None
    f1, (embedding, hidden_w, hidden_b, out_w, out_b) = best
    return DetectorModel(
        vocab=vocab,
        embedding=embedding,
        hidden_w=hidden_w,
        hidden_b=hidden_b,
        out_w=out_w,
        out_b=out_b,
        activation="tanh",
        piece_limit=config.limit,
        seed=config.seed,
        frozen=False,
        val_macro_f1=f1,
        epochs_run=epochs_run,
    )


def predict_set(model: DetectorModel, message_set: MessageSet) -> dict[str, Prediction]:
    """Predictions keyed by message id."""
    out = {}
    for message in message_set:
        tokenized = tokenize(format_input(message), model.vocab, model.piece_limit)
        out[message.id] = forward(model, tokenized)
    return out


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _class_f1(predicted: Sequence[Label], actual: Sequence[Label], positive: Label) -> float:
    tp = sum(1 for p, a in zip(predicted, actual) if p is positive and a is positive)
    fp = sum(1 for p, a in zip(predicted, actual) if p is positive and a is not positive)
    fn = sum(1 for p, a in zip(predicted, actual) if p is not positive and a is positive)
    # A class absent from both sides contributes 0 by convention.
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def macro_f1(predicted: Sequence[Label], actual: Sequence[Label]) -> float:
    """Unweighted mean of per-class F1 over scam and ham."""
    if len(predicted) != len(actual) or len(predicted) == 0:
        raise LengthMismatchError(
            f"predicted and actual must be equal-length and non-empty "
            f"({len(predicted)} vs {len(actual)})"
        )
    return 0.5 * (
        _class_f1(predicted, actual, Label.SCAM) + _class_f1(predicted, actual, Label.HAM)
    )


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def save_model(model: DetectorModel, path: str | Path) -> None:
    """Single-file JSON checkpoint; floats round-trip exactly via repr."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "pieces": list(model.vocab.pieces),
        "embedding": model.embedding.tolist(),
        "hidden_w": model.hidden_w.tolist(),
        "hidden_b": model.hidden_b.tolist(),
        "out_w": model.out_w.tolist(),
        "out_b": model.out_b,
        "activation": model.activation,
        "piece_limit": model.piece_limit,
        "seed": model.seed,
        "frozen": model.frozen,
        "val_macro_f1": model.val_macro_f1,
        "epochs_run": model.epochs_run,
    }
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle)
        handle.write("\n")


def load_model(path: str | Path) -> DetectorModel:
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointFormatError(
            f"{path}: expected checkpoint format {CHECKPOINT_FORMAT!r}, "
            f"got {payload.get('format')!r}"
        )
    model = DetectorModel(
        vocab=Vocab.from_pieces(payload["pieces"]),
        embedding=np.array(payload["embedding"], dtype=np.float64),
        hidden_w=np.array(payload["hidden_w"], dtype=np.float64),
        hidden_b=np.array(payload["hidden_b"], dtype=np.float64),
        out_w=np.array(payload["out_w"], dtype=np.float64),
        out_b=float(payload["out_b"]),
        activation=payload["activation"],
        piece_limit=int(payload["piece_limit"]),
        seed=int(payload["seed"]),
        frozen=False,
        val_macro_f1=payload.get("val_macro_f1"),
        epochs_run=payload.get("epochs_run"),
    )
    if payload.get("frozen"):
        model = freeze(model)
    return model
