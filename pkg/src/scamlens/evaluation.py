"""Automatic explanation-quality metrics and per-condition reporting.

Three metrics per explanation:

  faithfulness  overlap between detector evidence lemmas and explanation
                lemmas, as a fraction of the evidence set
  correctness   entailment-based support for a fixed risk hypothesis,
                entailment probability plus alpha-weighted neutrality
  fkgl          Flesch-Kincaid grade level with the standard coefficients
                0.39 / 11.8 / 15.59

The entailment probabilities come from an external scoring endpoint or from
a deterministic lexicon-based mock. Aggregation reports mean and sample
standard deviation per condition in the shape of a four-row results table.
"""

from __future__ import annotations

import os
import re
import string
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import mean, stdev
from typing import Mapping, Sequence

from . import lexicon
from .attribution import EvidenceSet
from .generation import Condition, Explanation, post_json_with_retry

RISK_HYPOTHESIS = "The explanation identifies cues that support assessing message risk."

CONDITION_LABELS: dict[Condition, str] = {
    Condition.PURE_LLM: "No XAI",
    Condition.XAI_ONLY: "XAI Only",
    Condition.XAI_HIGH_VULNERABILITY: "XAI + High Vulnerability",
    Condition.XAI_LOW_VULNERABILITY: "XAI + Low Vulnerability",
}

REPORT_CONDITION_ORDER: tuple[Condition, ...] = (
    Condition.PURE_LLM,
    Condition.XAI_ONLY,
    Condition.XAI_HIGH_VULNERABILITY,
    Condition.XAI_LOW_VULNERABILITY,
)


class EvaluationError(Exception):
    """Base class for evaluation-stage failures."""


class EmptyEvidenceError(EvaluationError):
    """Faithfulness is undefined for an empty evidence set."""


class ProbabilitySumViolationError(EvaluationError):
    """Entailment probabilities do not sum to one."""


class EmptyTextError(EvaluationError):
    """Readability metrics need at least one word and one sentence."""


class NoLettersError(EvaluationError):
    """Syllable counting needs at least one letter."""


class EmptyGroupError(EvaluationError):
    """A condition group has no scores to aggregate."""


@dataclass(frozen=True)
class EvaluationConfig:
    alpha: float = 0.5
    hypothesis: str = RISK_HYPOTHESIS
    stopwords_version: str = lexicon.STOPWORDS_VERSION
    fkgl_sentence_weight: float = 0.39
    fkgl_syllable_weight: float = 11.8
    fkgl_offset: float = 15.59

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError("alpha must be in [0, 1]")


# ---------------------------------------------------------------------------
# Lemmatization
# ---------------------------------------------------------------------------

# Suffix endings that mark "es" as a true inserted suffix; elsewhere the bare
# "s" rule applies so forms like "prizes" keep their stem's final "e".
_ES_STEM_ENDINGS = ("ss", "sh", "ch", "x", "zz")


def lemmatize(token: str) -> str:
    """Lowercase and stem one token with ordered suffix rules.

    Risk tokens (URLs, currency, emphatic punctuation) pass through with
    only lowercasing so they stay matchable verbatim. Everything else is
    stripped of edge punctuation, then the first matching rule wins:
    -ies > -y, -sses > -ss, -es, -s, -ing, -ed (the last four only when the
    remaining stem keeps at least three characters).
    """
    lowered = token.lower()
    if lexicon.is_risk_token(lowered):
        return lowered
    word = lowered.strip(string.punctuation)
    if not word:
        return ""
    if word.endswith("ies"):
        word = word[:-3] + "y"
    elif word.endswith("sses"):
        word = word[:-2]
    elif word.endswith("es") and len(word) >= 5 and word[:-2].endswith(_ES_STEM_ENDINGS):
        word = word[:-2]
    elif word.endswith("s") and not word.endswith("ss") and len(word) >= 4:
        word = word[:-1]
    elif word.endswith("ing") and len(word) >= 6:
        word = word[:-3]
    elif word.endswith("ed") and len(word) >= 5:
        word = word[:-2]
    # Stripping a possessive or plural suffix can expose inner punctuation
    # ("grandma's" -> "grandma'"); clean the edges again so the lemma is a
    # fixed point.
    return word.strip(string.punctuation)


@dataclass(frozen=True)
class ExplanationTokens:
    """Lemmatized content-token set of an explanation."""

    lemmas: frozenset[str]

    @classmethod
    def from_text(cls, text: str) -> "ExplanationTokens":
        # Stopwords are dropped by the same surface rule evidence filtering
        # uses, so an echoed evidence word is never lost on one side only.
        lemmas = set()
        for token in text.split():
            if lexicon.is_stopword_surface(token) and not lexicon.is_risk_token(token.lower()):
                continue
            lemma = lemmatize(token)
            if lemma:
                lemmas.add(lemma)
        return cls(lemmas=frozenset(lemmas))


def evidence_lemmas(evidence: EvidenceSet) -> frozenset[str]:
    return frozenset(l for l in (lemmatize(word) for word in evidence.words()) if l)


def faithfulness(evidence: EvidenceSet, explanation: Explanation) -> float:
    """Fraction of evidence lemmas that appear in the explanation.

    Membership is exact lemma equality, never substring matching.
    """
    reference = evidence_lemmas(evidence)
    if not reference:
        raise EmptyEvidenceError(
            f"message {explanation.message_id!r}: evidence set is empty, cannot score"
        )
    found = ExplanationTokens.from_text(explanation.text).lemmas
    return len(reference & found) / len(reference)


# ---------------------------------------------------------------------------
# Entailment scoring
# ---------------------------------------------------------------------------

_PROBABILITY_SUM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class NliScores:
    p_entailment: float
    p_neutral: float
    p_contradiction: float

    def __post_init__(self) -> None:
        total = self.p_entailment + self.p_neutral + self.p_contradiction
        if abs(total - 1.0) > _PROBABILITY_SUM_TOLERANCE:
            raise ProbabilitySumViolationError(
                f"entailment probabilities sum to {total!r}, expected 1"
            )
        for p in (self.p_entailment, self.p_neutral, self.p_contradiction):
            if not (0.0 <= p <= 1.0):
                raise ProbabilitySumViolationError(f"probability {p!r} outside [0, 1]")


@dataclass(frozen=True)
class NliClientConfig:
    base_url: str
    api_key_env_var: str | None = None
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5


def score_nli(
    config: NliClientConfig, explanation: Explanation, hypothesis: str = RISK_HYPOTHESIS
) -> NliScores:
    """Score one explanation against the risk hypothesis over HTTP."""
    if hypothesis != RISK_HYPOTHESIS:
        raise ValueError("hypothesis must be the configured risk hypothesis string")
    headers = {}
    if config.api_key_env_var:
        key = os.environ.get(config.api_key_env_var, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
    url = config.base_url.rstrip("/") + "/nli"
    response = post_json_with_retry(
        url,
        {"premise": explanation.text, "hypothesis": hypothesis},
        headers,
        timeout=config.timeout,
        max_retries=config.max_retries,
        backoff_base=config.backoff_base,
    )
    body = response.json()
    try:
        entailment = float(body["entailment"])
        neutral = float(body["neutral"])
        contradiction = float(body["contradiction"])
    except (KeyError, TypeError, ValueError) as exc:
        raise EvaluationError(f"{url}: malformed entailment response ({exc})") from None
    return NliScores(
        p_entailment=entailment, p_neutral=neutral, p_contradiction=contradiction
    )


def score_nli_many(
    config: NliClientConfig,
    explanations: Sequence[Explanation],
    hypothesis: str = RISK_HYPOTHESIS,
    max_in_flight: int = 4,
) -> list[NliScores]:
    """Bounded-concurrency scoring; results follow input order, never
    completion order. Same transport contract as the generation client."""
    if not explanations:
        return []
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = [pool.submit(score_nli, config, e, hypothesis) for e in explanations]
        return [future.result() for future in futures]


# Fixed simplex points for the offline scorer, keyed by how many distinct
# risk-cue lemmas the explanation mentions.
_MOCK_RICH = NliScores(0.80, 0.15, 0.05)
_MOCK_THIN = NliScores(0.40, 0.35, 0.25)
_MOCK_BARE = NliScores(0.10, 0.30, 0.60)

_RISK_CUE_LEMMAS = frozenset(lemmatize(w) for w in lexicon.RISK_CUE_WORDS)


def mock_score_nli(explanation: Explanation) -> NliScores:
    """Deterministic lexicon-based entailment scorer for offline runs."""
    found = ExplanationTokens.from_text(explanation.text).lemmas & _RISK_CUE_LEMMAS
    if len(found) >= 2:
        return _MOCK_RICH
    if len(found) == 1:
        return _MOCK_THIN
    return _MOCK_BARE


def correctness(scores: NliScores, config: EvaluationConfig) -> float:
    """Entailment plus alpha-weighted neutrality."""
    return scores.p_entailment + config.alpha * scores.p_neutral


# ---------------------------------------------------------------------------
# Readability
# ---------------------------------------------------------------------------

_SENTENCE_SPLIT = re.compile(r"[.!?]+(?:\s+|$)")
_WORD_CHAR = re.compile(r"\w")
_VOWEL_RUN = re.compile(r"[aeiouy]+")


def split_sentences(text: str) -> list[str]:
    """Split on terminator runs followed by whitespace or end of text.

    Segments without word characters are discarded; a text with no
    terminator at all is a single sentence.
    """
    if not text.strip():
        raise EmptyTextError("cannot split an empty text")
    segments = [s for s in _SENTENCE_SPLIT.split(text) if _WORD_CHAR.search(s)]
    if not segments:
        raise EmptyTextError("text contains no word characters")
    return segments


def count_syllables(word: str) -> int:
    """Vowel-run heuristic with a silent terminal 'e' adjustment, minimum 1."""
    lowered = word.lower()
    if not any(ch.isalpha() for ch in lowered):
        raise NoLettersError(f"no letters in {word!r}")
    runs = len(_VOWEL_RUN.findall(lowered))
    if runs > 1 and lowered.endswith("e") and not lowered.endswith("le"):
        runs -= 1
    return max(runs, 1)


@dataclass(frozen=True)
class ReadabilityBreakdown:
    words: int
    sentences: int
    syllables: int
    sc: float
    ld: float
    fkgl: float


def fkgl(text: str, config: EvaluationConfig = EvaluationConfig()) -> ReadabilityBreakdown:
    """Flesch-Kincaid grade level; may be negative for very simple text.

    Words are whitespace tokens containing at least one letter or digit;
    all-digit tokens count one syllable.
    """
    sentences = split_sentences(text)
    words = [t for t in text.split() if any(ch.isalnum() for ch in t)]
    if not words:
        raise EmptyTextError("no countable words in text")
    syllables = sum(
        count_syllables(w) if any(ch.isalpha() for ch in w) else 1 for w in words
    )
    sc = len(words) / len(sentences)
    ld = syllables / len(words)
    value = config.fkgl_sentence_weight * sc + config.fkgl_syllable_weight * ld - config.fkgl_offset
    return ReadabilityBreakdown(
        words=len(words),
        sentences=len(sentences),
        syllables=syllables,
        sc=sc,
        ld=ld,
        fkgl=value,
    )


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MessageMetrics:
    """Per-message scores for one condition; faithfulness is None when the
    condition had no evidence access."""

    message_id: str
    condition: Condition
    correctness: float
    fkgl: float
    faithfulness: float | None = None


@dataclass(frozen=True)
class MeanStd:
    mean: float
    std: float


@dataclass(frozen=True)
class ConditionReport:
    condition: Condition
    n: int
    correctness: MeanStd
    fkgl: MeanStd
    faithfulness: MeanStd | None


@dataclass(frozen=True)
class MetricReport:
    rows: tuple[ConditionReport, ...] = field(default_factory=tuple)

    def row(self, condition: Condition) -> ConditionReport:
        for row in self.rows:
            if row.condition is condition:
                return row
        raise KeyError(condition)


def _mean_std(values: Sequence[float]) -> MeanStd:
    # Sample (n-1) standard deviation; defined as 0 for a single value.
    return MeanStd(mean=mean(values), std=stdev(values) if len(values) > 1 else 0.0)


def aggregate_report(
    per_condition: Mapping[Condition, Sequence[MessageMetrics]]
) -> MetricReport:
    """Mean and sample std per metric per condition, in fixed row order.

    Faithfulness is omitted for the no-evidence condition.
    """
    rows = []
    for condition in REPORT_CONDITION_ORDER:
        if condition not in per_condition:
            continue
        group = per_condition[condition]
        if not group:
            raise EmptyGroupError(f"no scores for condition {condition.value}")
        faith: MeanStd | None = None
        if condition is not Condition.PURE_LLM:
            values = [m.faithfulness for m in group]
            if any(v is None for v in values):
                raise EvaluationError(
                    f"condition {condition.value} has rows without faithfulness scores"
                )
            faith = _mean_std([v for v in values if v is not None])
        rows.append(
            ConditionReport(
                condition=condition,
                n=len(group),
                correctness=_mean_std([m.correctness for m in group]),
                fkgl=_mean_std([m.fkgl for m in group]),
                faithfulness=faith,
            )
        )
    if not rows:
        raise EmptyGroupError("no condition groups to aggregate")
    return MetricReport(rows=tuple(rows))


def report_to_json(report: MetricReport) -> dict[str, object]:
    conditions = []
    for row in report.rows:
        entry: dict[str, object] = {
            "condition": row.condition.value,
            "label": CONDITION_LABELS[row.condition],
            "n": row.n,
            "correctness": {"mean": row.correctness.mean, "std": row.correctness.std},
            "fkgl": {"mean": row.fkgl.mean, "std": row.fkgl.std},
            "faithfulness": None
            if row.faithfulness is None
            else {"mean": row.faithfulness.mean, "std": row.faithfulness.std},
        }
        conditions.append(entry)
    return {"conditions": conditions}


def render_report_table(report: MetricReport) -> str:
    """Aligned plain-text table with one row per condition."""
    header = ("Condition", "Faithfulness", "Correctness", "FKGL")
    rows = [header]
    for row in report.rows:
        faith = (
            "--"
            if row.faithfulness is None
            else f"{row.faithfulness.mean:.3f} ± {row.faithfulness.std:.3f}"
        )
        rows.append(
            (
                CONDITION_LABELS[row.condition],
                faith,
                f"{row.correctness.mean:.3f} ± {row.correctness.std:.3f}",
                f"{row.fkgl.mean:.2f} ± {row.fkgl.std:.2f}",
            )
        )
    widths = [max(len(r[col]) for r in rows) for col in range(4)]
    lines = []
    for r in rows:
        lines.append("  ".join(cell.ljust(width) for cell, width in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"
