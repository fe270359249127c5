"""Embedding-space attribution for the frozen detector.

Expected-gradients sampling against a fixed all-PAD baseline, aggregation of
subword scores into word scores via the tokenizer alignment, and filtering
into a compact ranked evidence set. Scores stay signed end to end; ranking
by raw score means negatively attributed words sort to the bottom.
"""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import AbstractSet

import numpy as np

from . import lexicon
from .corpus import MARKER_TOKENS
from .detector import DetectorModel, TokenizedInput, embed, grad_wrt_pooled, logit_from_embeddings

DEFAULT_EVIDENCE_K = 8

# Samples are evaluated in bounded batches to keep the noise draws from
# dominating memory on long inputs.
_SAMPLE_CHUNK = 256


class AttributionError(Exception):
    """Base class for attribution-stage failures."""


class ModelNotFrozenError(AttributionError):
    """Attribution requires a frozen model so scores are stable."""


class ZeroSamplesError(AttributionError):
    """The sample count must be at least one."""


class AlignmentMismatchError(AttributionError):
    """Piece scores and tokenizer alignment have different lengths."""


@dataclass(frozen=True)
class AttributionConfig:
    n_samples: int = 64
    noise_std: float = 0.01
    seed: int = 0
    baseline: str = "pad_embedding"

    def __post_init__(self) -> None:
        if self.baseline != "pad_embedding":
            raise ValueError(f"unsupported baseline {self.baseline!r}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")


@dataclass(frozen=True)
class SubwordAttribution:
    """Signed score per piece position."""

    scores: tuple[float, ...]


@dataclass(frozen=True)
class WordAttribution:
    """Signed score per word position, summed over that word's pieces."""

    scores: dict[int, float]
    words: tuple[str, ...]


@dataclass(frozen=True)
class EvidenceSet:
    """Ranked, filtered word-level evidence phrases with attribution scores."""

    phrases: tuple[tuple[str, float], ...]
    k: int

    def __post_init__(self) -> None:
        if len(self.phrases) > self.k:
            raise ValueError("evidence set larger than its selection size k")

    def words(self) -> tuple[str, ...]:
        return tuple(word for word, _ in self.phrases)


def gradient_shap(
    model: DetectorModel, tokenized: TokenizedInput, config: AttributionConfig
) -> SubwordAttribution:
    """Expected gradients of the scam logit against the all-PAD baseline.

    Each sample draws an interpolation coefficient uniform in [0, 1) and
    Gaussian noise per embedding coordinate, evaluates the gradient at
    baseline + alpha * (input - baseline) + noise, and averages
    (input - baseline) * gradient over samples. Per-piece scores sum the
    embedding coordinates. Pure function of (weights, input, config).
    """
    if not model.frozen:
        raise ModelNotFrozenError("gradient_shap requires a frozen model")
    if config.n_samples < 1:
        raise ZeroSamplesError("n_samples must be >= 1")

    x = embed(model, tokenized)  # (n, d)
    n, d = x.shape
    baseline_row = model.embedding[model.vocab.pad_id]
    diff = x - baseline_row  # broadcasts the PAD row across positions
    pooled_x = x.mean(axis=0)
    pooled_baseline = baseline_row

    rng = np.random.default_rng(config.seed)
    grad_sum = np.zeros(d)
    remaining = config.n_samples
    while remaining > 0:
        chunk = min(_SAMPLE_CHUNK, remaining)
        alphas = rng.uniform(0.0, 1.0, size=chunk)
        noise = rng.normal(0.0, config.noise_std, size=(chunk, n, d))
        # The logit depends on the embeddings only through their mean, so
        # each sample point reduces to a pooled vector.
        pooled = (
            pooled_baseline
            + alphas[:, None] * (pooled_x - pooled_baseline)
            + noise.mean(axis=1)
        )
        grad_sum += grad_wrt_pooled(model, pooled).sum(axis=0)
        remaining -= chunk
    mean_grad = grad_sum / config.n_samples

    # Every position sees the pooled gradient scaled by 1/n.
    attribution = diff * (mean_grad / n)
    scores = attribution.sum(axis=1)
    return SubwordAttribution(tuple(float(s) for s in scores))


def completeness_gap(
    model: DetectorModel, tokenized: TokenizedInput, attribution: SubwordAttribution
) -> float:
    """|sum of piece scores - (logit(input) - logit(baseline))|."""
    x = embed(model, tokenized)
    baseline = np.tile(model.embedding[model.vocab.pad_id], (x.shape[0], 1))
    target = logit_from_embeddings(model, x) - logit_from_embeddings(model, baseline)
    return abs(sum(attribution.scores) - target)


def aggregate_to_words(sub: SubwordAttribution, tokenized: TokenizedInput) -> WordAttribution:
    """Word score = sum of its piece scores; conserves the total exactly."""
    if len(sub.scores) != len(tokenized.alignment):
        raise AlignmentMismatchError(
            f"{len(sub.scores)} piece scores vs alignment of {len(tokenized.alignment)}"
        )
    scores: dict[int, float] = {}
    for word_pos, score in zip(tokenized.alignment, sub.scores):
        scores[word_pos] = scores.get(word_pos, 0.0) + score
    return WordAttribution(scores=scores, words=tokenized.words)


def filter_evidence(
    words: WordAttribution,
    stopwords: AbstractSet[str] = lexicon.STOPWORDS,
    k: int = DEFAULT_EVIDENCE_K,
) -> EvidenceSet:
    """Drop stopwords and channel markers, keep risk tokens, take the top k.

    Risk tokens (URL-like, currency, emphatic punctuation) bypass the
    stopword drop. Ranking is by signed score descending with earlier word
    position breaking ties. An empty result is legal; callers flag it.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    survivors: list[tuple[float, int, str]] = []
    for position in sorted(words.scores):
        word = words.words[position]
        if word in MARKER_TOKENS:
            continue
        if not lexicon.is_risk_token(word) and word.lower().strip(string.punctuation) in stopwords:
            continue
        survivors.append((words.scores[position], position, word))
    survivors.sort(key=lambda item: (-item[0], item[1]))
    top = survivors[:k]
    return EvidenceSet(phrases=tuple((word, score) for score, _, word in top), k=k)
