"""Prompt construction and explanation generation.

Builds prompts for the four experimental conditions and obtains explanations
either from an OpenAI-compatible chat-completions endpoint or from a
deterministic in-process mock. The generator never classifies: it explains a
message that upstream stages already judged to be a scam.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any, Sequence

import requests

from .attribution import EvidenceSet
from .corpus import FormattedText
from .persona import PersonaInstruction


class Condition(Enum):
    PURE_LLM = "pure_llm"
    XAI_ONLY = "xai_only"
    XAI_HIGH_VULNERABILITY = "xai_high_vulnerability"
    XAI_LOW_VULNERABILITY = "xai_low_vulnerability"

    @property
    def wants_evidence(self) -> bool:
        return self is not Condition.PURE_LLM

    @property
    def wants_persona(self) -> bool:
        return self in (Condition.XAI_HIGH_VULNERABILITY, Condition.XAI_LOW_VULNERABILITY)


class GeneratorKind(Enum):
    REMOTE = "remote"
    MOCK = "mock"


class GenerationError(Exception):
    """Base class for generation-stage failures."""


class ConditionMismatchError(GenerationError):
    """Evidence/instruction presence does not match the condition."""


class TransportError(GenerationError):
    """HTTP request failed after exhausting retries."""


class AuthError(TransportError):
    """Authentication failed (401/403) or no API key is configured."""


class RateLimitedError(TransportError):
    """HTTP 429 persisted after all retries."""


class TransportTimeoutError(TransportError):
    """The endpoint did not answer within the timeout, retries included."""


class EmptyCompletionError(GenerationError):
    """The endpoint answered with an empty completion."""


@dataclass(frozen=True)
class Prompt:
    system_text: str
    user_text: str
    condition: Condition
    message_id: str


@dataclass(frozen=True)
class Explanation:
    message_id: str
    condition: Condition
    text: str
    generator: GeneratorKind
    model_name: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("explanation text must be non-empty")


@dataclass(frozen=True)
class LlmClientConfig:
    base_url: str
    model_name: str
    api_key_env_var: str = "SCAMLENS_LLM_API_KEY"
    temperature: float = 0.2
    max_tokens: int = 400
    timeout: float = 30.0
    max_retries: int = 3
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


EVIDENCE_HEADER = "Detector evidence terms (most important first):"
STYLE_PREFIX = "Style instructions:"

_SYSTEM_BASE = (
    "You explain risky messages for a general audience. The message you are given "
    "was already classified as a scam by a separate detector; do not re-classify it, "
    "explain why it is dangerous."
)
_SYSTEM_EVIDENCE = (
    " Ground the explanation in the detector-derived evidence terms provided and "
    "reference them explicitly."
)


def build_prompt(
    condition: Condition,
    message: FormattedText,
    evidence: EvidenceSet | None = None,
    instruction: PersonaInstruction | None = None,
    *,
    message_id: str,
) -> Prompt:
    """Deterministic template fill for one condition.

    Evidence phrases are listed verbatim and in order; the evidence set is
    never mutated or reformatted.
    """
    if condition.wants_evidence and evidence is None:
        raise ConditionMismatchError(f"{condition.value} requires an evidence set")
    if not condition.wants_evidence and evidence is not None:
        raise ConditionMismatchError(f"{condition.value} must not receive evidence")
    if condition.wants_persona and instruction is None:
        raise ConditionMismatchError(f"{condition.value} requires a persona instruction")
    if not condition.wants_persona and instruction is not None:
        raise ConditionMismatchError(f"{condition.value} must not receive a persona instruction")

    system_text = _SYSTEM_BASE + (_SYSTEM_EVIDENCE if evidence is not None else "")
    parts = [f"Message:\n{message.text}\n"]
    if evidence is not None:
        lines = "\n".join(f"- {word}" for word, _ in evidence.phrases)
        parts.append(f"{EVIDENCE_HEADER}\n{lines}\n")
    if instruction is not None:
        parts.append(f"{STYLE_PREFIX} {instruction.rendered}\n")
    parts.append("Explain why this message was flagged as a scam.")
    return Prompt(
        system_text=system_text,
        user_text="\n".join(parts),
        condition=condition,
        message_id=message_id,
    )


def evidence_phrases_from_prompt(prompt: Prompt) -> list[str]:
    """Recover the verbatim evidence list from a built prompt, if present."""
    lines = prompt.user_text.splitlines()
    phrases = []
    in_block = False
    for line in lines:
        if line == EVIDENCE_HEADER:
            in_block = True
            continue
        if in_block:
            if line.startswith("- "):
                phrases.append(line[2:])
            else:
                break
    return phrases


# ---------------------------------------------------------------------------
# Remote client
# ---------------------------------------------------------------------------


def post_json_with_retry(
    url: str,
    payload: dict[str, Any],
    headers: dict[str, str],
    *,
    timeout: float,
    max_retries: int,
    backoff_base: float,
) -> requests.Response:
    """POST with exponential backoff on timeouts, connection errors, 429, and 5xx.

    Non-retryable auth failures (401/403) raise immediately. Shared by the
    chat-completions and entailment clients so both follow one transport
    contract.
    """
    attempts = max_retries + 1
    last_failure: Exception | None = None
    for attempt in range(attempts):
        try:
            response = requests.post(url, json=payload, headers=headers, timeout=timeout)
        except requests.Timeout as exc:
            last_failure = TransportTimeoutError(f"{url}: timed out after {timeout}s")
            last_failure.__cause__ = exc
        except requests.ConnectionError as exc:
            last_failure = TransportError(f"{url}: connection failed ({exc})")
        else:
            if response.status_code in (401, 403):
                raise AuthError(f"{url}: authentication rejected ({response.status_code})")
            if response.status_code == 429:
                last_failure = RateLimitedError(f"{url}: rate limited (429)")
            elif response.status_code >= 500:
                last_failure = TransportError(f"{url}: server error ({response.status_code})")
            else:
                return response
        if attempt < attempts - 1:
            time.sleep(backoff_base * (2**attempt))
    assert last_failure is not None
    raise last_failure


def _resolve_api_key(config: LlmClientConfig) -> str:
    key = os.environ.get(config.api_key_env_var, "")
    if not key:
        raise AuthError(f"environment variable {config.api_key_env_var} is not set")
    return key


def generate(config: LlmClientConfig, prompt: Prompt) -> Explanation:
    """One chat-completion request for one prompt."""
    key = _resolve_api_key(config)
    url = config.base_url.rstrip("/") + "/chat/completions"
    payload = {
        "model": config.model_name,
        "messages": [
            {"role": "system", "content": prompt.system_text},
            {"role": "user", "content": prompt.user_text},
        ],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }
    response = post_json_with_retry(
        url,
        payload,
        {"Authorization": f"Bearer {key}"},
        timeout=config.timeout,
        max_retries=config.max_retries,
        backoff_base=config.backoff_base,
    )
    try:
        body = response.json()
        text = body["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise TransportError(f"{url}: malformed completion response ({exc})") from None
    if not isinstance(text, str) or not text.strip():
        raise EmptyCompletionError(f"{url}: endpoint returned an empty completion")
    return Explanation(
        message_id=prompt.message_id,
        condition=prompt.condition,
        text=text,
        generator=GeneratorKind.REMOTE,
        model_name=config.model_name,
    )


def generate_many(
    config: LlmClientConfig, prompts: Sequence[Prompt], max_in_flight: int = 4
) -> list[Explanation]:
    """Bounded-concurrency generation; output order follows the input prompts,
    never request completion order."""
    if not prompts:
        return []
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = [pool.submit(generate, config, prompt) for prompt in prompts]
        results = {}
        for prompt, future in zip(prompts, futures):
            results[(prompt.message_id, prompt.condition)] = future.result()
    return [results[(p.message_id, p.condition)] for p in prompts]


# ---------------------------------------------------------------------------
# Deterministic mock
# ---------------------------------------------------------------------------


class MockStyle(Enum):
    EVIDENCE_ECHOING = "evidence_echoing"
    EVIDENCE_BLIND = "evidence_blind"


MOCK_MODEL_NAME = "mock-explainer-v1"

# Cue slots are joined with spaced commas so every evidence phrase survives
# whitespace tokenization verbatim.
_ECHO_HIGH = (
    "Take a breath. You are safe right now. We checked this note for you. It is a scam. "
    "The top signs we found are : {cues} . Do not tap the link. Do not send money. "
    "Do not share your details. You can just delete it. If you feel unsure , talk to a "
    "friend first."
)
_ECHO_NEUTRAL = (
    "This message was flagged as a scam by the detector. The strongest cues were : {cues} . "
    "Together these cues match known scam patterns , so do not click , reply , or pay."
)
_ECHO_LOW = (
    "Systematic inspection of this communication surfaces indicators characteristic of "
    "fraudulent solicitation , specifically : {cues} . The joint occurrence of these "
    "indicators materially elevates the probability of deceptive intent , warranting "
    "categorical avoidance of any interaction , including clicking , replying , or "
    "transferring money."
)
_BLIND = (
    "Caution is advised here. A careful independent look suggests this was composed to "
    "mislead whoever reads it. The safest option is to disregard it entirely. When in "
    "doubt , ask a person you know offline."
)


def mock_generate(prompt: Prompt, style: MockStyle) -> Explanation:
    """Deterministic test double for the remote generator.

    Evidence-echoing output embeds every evidence phrase from the prompt
    verbatim, with persona-matched sentence shape; evidence-blind output is a
    fixed generic warning that shares no content with the evidence.
    """
    if style is MockStyle.EVIDENCE_BLIND:
        text = _BLIND
    else:
        phrases = evidence_phrases_from_prompt(prompt)
        cues = " , ".join(phrases) if phrases else "the overall wording"
        if prompt.condition is Condition.XAI_HIGH_VULNERABILITY:
            template = _ECHO_HIGH
        elif prompt.condition is Condition.XAI_LOW_VULNERABILITY:
            template = _ECHO_LOW
        else:
            template = _ECHO_NEUTRAL
        text = template.format(cues=cues)
    return Explanation(
        message_id=prompt.message_id,
        condition=prompt.condition,
        text=text,
        generator=GeneratorKind.MOCK,
        model_name=MOCK_MODEL_NAME,
    )
