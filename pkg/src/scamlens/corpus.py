"""Multi-channel message corpus: ingestion, formatting, sampling, filtering.

Messages arrive from email, SMS, or social feeds, get normalized into a
channel-tagged canonical form, and are filtered down to the subset the
explanation stages consume. All operations are pure functions of their
inputs plus an explicit seed, so corpora and samples reproduce exactly.
"""

from __future__ import annotations

import json
import random
import string
from collections import Counter
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Iterator, Mapping, Sequence, TypeVar


class Channel(Enum):
    EMAIL = "email"
    SMS = "sms"
    SNS = "sns"


class Label(Enum):
    SCAM = "scam"
    HAM = "ham"


CHANNEL_MARKERS: dict[Channel, str] = {
    Channel.EMAIL: "<Email>",
    Channel.SMS: "<SMS>",
    Channel.SNS: "<SNS>",
}

MARKER_TOKENS: frozenset[str] = frozenset(CHANNEL_MARKERS.values())

# Raw labels accepted on input records.
LABEL_ALIASES: dict[str, Label] = {"spam": Label.SCAM, "scam": Label.SCAM, "ham": Label.HAM}

# Bodies longer than this many whitespace tokens are front-truncated before
# explanation; a noise guard, not a model constraint.
EXPLANATION_TOKEN_CAP = 1500

# English heuristic: fraction of characters that must be plain ASCII
# letters/digits/punctuation/whitespace.
ENGLISH_ASCII_MIN_FRACTION = 0.90


class CorpusError(Exception):
    """Base class for corpus-stage failures."""


class MissingFieldError(CorpusError):
    """A raw record lacks a required field (body or label)."""


class InvalidLabelError(CorpusError):
    """A raw record's label cannot be mapped to scam/ham."""


class InsufficientDataError(CorpusError):
    """A sampling stratum is smaller than the requested count."""


class MissingPredictionError(CorpusError):
    """The prediction map does not cover a message id."""


@dataclass(frozen=True)
class Message:
    """One channel-tagged communication item."""

    id: str
    channel: Channel
    body: str
    label: Label
    subject: str | None = None
    source: str = ""

    def __post_init__(self) -> None:
        if not self.body.strip():
            raise ValueError(f"message {self.id!r}: body is empty")
        if self.subject is not None and self.channel is not Channel.EMAIL:
            raise ValueError(f"message {self.id!r}: subject is only valid for email")


@dataclass(frozen=True)
class FormattedText:
    """Detector-ready text beginning with exactly one channel marker."""

    text: str
    channel_marker: str

    def __post_init__(self) -> None:
        if self.channel_marker not in MARKER_TOKENS:
            raise ValueError(f"unknown channel marker {self.channel_marker!r}")
        if not self.text.startswith(self.channel_marker + " "):
            raise ValueError("formatted text must start with its channel marker and a space")


@dataclass(frozen=True)
class MessageSet:
    """An immutable, ordered collection of messages with unique ids."""

    messages: tuple[Message, ...]

    def __post_init__(self) -> None:
        counts = Counter(m.id for m in self.messages)
        dupes = sorted(i for i, n in counts.items() if n > 1)
        if dupes:
            raise ValueError(f"duplicate message ids: {dupes[:5]}")

    def __len__(self) -> int:
        return len(self.messages)

    def __iter__(self) -> Iterator[Message]:
        return iter(self.messages)

    def counts(self) -> dict[Channel, tuple[int, int]]:
        """Per-channel (scam, ham) counts, omitting absent channels."""
        out: dict[Channel, tuple[int, int]] = {}
        for channel in Channel:
            scam = sum(1 for m in self.messages if m.channel is channel and m.label is Label.SCAM)
            ham = sum(1 for m in self.messages if m.channel is channel and m.label is Label.HAM)
            if scam or ham:
                out[channel] = (scam, ham)
        return out


def ingest(records: Sequence[Mapping[str, object]], channel: Channel) -> MessageSet:
    """Turn raw field-maps into Messages with a uniform channel.

    Ids are taken from the record when present, otherwise assigned
    deterministically from record order and source. Subjects are honored for
    email only and silently dropped elsewhere.
    """
    messages = []
    for i, record in enumerate(records):
        body = record.get("body")
        if body is None or not str(body).strip():
            raise MissingFieldError(f"record {i}: missing body")
        raw_label = record.get("label")
        if raw_label is None:
            raise MissingFieldError(f"record {i}: missing label")
        label = LABEL_ALIASES.get(str(raw_label).strip().lower())
        if label is None:
            raise InvalidLabelError(f"record {i}: cannot map label {raw_label!r}")
        source = str(record.get("source") or "ingest")
        message_id = str(record.get("id") or f"{source}:{channel.value}:{i:06d}")
        subject = record.get("subject") if channel is Channel.EMAIL else None
        messages.append(
            Message(
                id=message_id,
                channel=channel,
                body=str(body),
                label=label,
                subject=None if subject is None else str(subject),
                source=source,
            )
        )
    return MessageSet(tuple(messages))


def format_input(message: Message) -> FormattedText:
    """Prepend the channel marker; email joins subject and body with a newline."""
    marker = CHANNEL_MARKERS[message.channel]
    if message.subject:
        content = f"{message.subject}\n{message.body}"
    else:
        content = message.body
    return FormattedText(text=f"{marker} {content}", channel_marker=marker)


T = TypeVar("T")


def truncate_front(tokens: Sequence[T], limit: int) -> list[T]:
    """Keep the last `limit` tokens, preserving order; no-op when short enough."""
    if limit <= 0:
        raise ValueError(f"limit must be positive, got {limit}")
    if len(tokens) <= limit:
        return list(tokens)
    return list(tokens[-limit:])


def stratified_sample(message_set: MessageSet, per_channel_per_label: int, seed: int) -> MessageSet:
    """Select exactly N scam and N ham messages per channel, deterministically."""
    if per_channel_per_label <= 0:
        raise ValueError("per_channel_per_label must be positive")
    rng = random.Random(seed)
    selected: list[int] = []
    present = {m.channel for m in message_set}
    for channel in Channel:
        if channel not in present:
            continue
        for label in (Label.SCAM, Label.HAM):
            stratum = [
                i
                for i, m in enumerate(message_set.messages)
                if m.channel is channel and m.label is label
            ]
            if len(stratum) < per_channel_per_label:
                raise InsufficientDataError(
                    f"{channel.value}/{label.value}: requested {per_channel_per_label}, "
                    f"have {len(stratum)}"
                )
            selected.extend(rng.sample(stratum, per_channel_per_label))
    selected.sort()
    return MessageSet(tuple(message_set.messages[i] for i in selected))


def _is_plain_ascii(ch: str) -> bool:
    return ch.isascii() and (ch.isalnum() or ch in string.punctuation or ch.isspace())


def is_mostly_ascii_english(text: str, min_fraction: float = ENGLISH_ASCII_MIN_FRACTION) -> bool:
    """Transparent stand-in for language detection: share of plain-ASCII chars."""
    if not text:
        return False
    ok = sum(1 for ch in text if _is_plain_ascii(ch))
    return ok / len(text) >= min_fraction


def filter_for_explanation(
    message_set: MessageSet, predictions: Mapping[str, Label]
) -> MessageSet:
    """Keep correctly-classified scam messages suitable for explanation.

    Retains messages whose true and predicted labels are both scam, drops
    non-English-looking bodies, and front-truncates bodies longer than the
    explanation token cap.
    """
    kept = []
    for message in message_set:
        if message.id not in predictions:
            raise MissingPredictionError(f"no prediction for message {message.id!r}")
        if message.label is not Label.SCAM or predictions[message.id] is not Label.SCAM:
            continue
        if not is_mostly_ascii_english(message.body):
            continue
        words = message.body.split()
        if len(words) > EXPLANATION_TOKEN_CAP:
            message = replace(message, body=" ".join(truncate_front(words, EXPLANATION_TOKEN_CAP)))
        kept.append(message)
    return MessageSet(tuple(kept))


# ---------------------------------------------------------------------------
# Synthetic corpus
#
# Desk-scale substitute for the public datasets: templated scam messages
# built from urgency terms, reward phrases, shortened-URL-like strings, and
# currency mentions, plus mundane benign messages. Scam and ham content
# vocabularies are disjoint, so the corpus is linearly separable by
# construction.
# ---------------------------------------------------------------------------

_NAMES = ("Alex", "Jordan", "Sam", "Riley", "Casey", "Morgan", "Taylor", "Quinn")
_AMOUNTS = (45, 60, 80, 250, 500, 750, 900, 1200)
_HOURS = (12, 24, 48)
_SHORTENERS = ("snip.ly", "lnk.do", "bit.ly", "t.co")
_CODE_ALPHABET = "abcdefghjkmnpqrstuvwxyz23456789"

_EMAIL_SCAM = (
    ("Urgent security alert", "Your account was locked after unusual activity. Verify your password within {hours} hours at {url} or access will be suspended."),
    ("You are our winner", "Congratulations {name}! You won a ${amount} gift card. Claim your prize today at {url} before it expires."),
    ("Final notice on your refund", "A tax refund of ${amount} is waiting. Confirm your bank details at {url} immediately to receive the transfer."),
    ("Payment required for delivery", "Your package is on hold. Pay the ${amount} customs fee at {url} today or the parcel returns to sender."),
    ("Exclusive bonus inside", "Limited offer!! Redeem a ${amount} cash bonus now. Click {url} and enter code {code} before midnight."),
)

_EMAIL_HAM = (
    ("Meeting notes", "Hi {name}, the notes from the Tuesday sync are attached. Tell me if anything needs fixing."),
    ("Lunch tomorrow", "Hi {name}, are we still on for lunch at noon tomorrow? The new ramen spot sounds fun."),
    ("Weekend plans", "Hi {name}, grandma is visiting this weekend. Could you pick up groceries for dinner on Saturday?"),
    ("Project draft", "Hi {name}, the first draft of the report is ready. I left comments in the shared folder near the figures."),
    ("Book club", "Hi {name}, we moved book club to Thursday. Chapter twelve was great, bring your favorite quote."),
)

_SMS_SCAM = (
    "URGENT: your bank card is frozen. Unlock it now at {url} or the account stays blocked.",
    "You won ${amount} in the holiday draw!! Claim at {url} within {hours} hours.",
    "Delivery failed. Pay the ${amount} redelivery fee at {url} today.",
    "Final chance {name}: redeem your ${amount} reward with code {code} at {url} before midnight!!",
    "Security alert!! Unusual login on your account. Verify now at {url}.",
)

_SMS_HAM = (
    "Running ten minutes late, order me a coffee please",
    "Practice moved to six, can you grab my cleats",
    "Movie tonight? The early one so we can eat after",
    "Happy birthday! Cake at ours on Sunday, bring whatever you like",
    "Train is delayed again, start dinner without me",
)

_SNS_SCAM = (
    "Get 5000 free followers instantly!! Tap {url} and log in with your account",
    "Flash giveaway: win a ${amount} gift card. Claim at {url} before midnight!!",
    "Your profile was flagged. Verify your password at {url} within {hours} hours or lose access",
    "Crypto deal of the day: turn ${amount} into double overnight. Transfer via {url} now",
    "Exclusive discount with code {code}: everything free today only at {url}!!",
)

_SNS_HAM = (
    "The sunset from the trail tonight was unreal, photo dump soon",
    "Made grandma's dumpling recipe and the kitchen survived",
    "Our team pulled off the comeback, what a game",
    "Museum day with the cousins, the whale skeleton wins again",
    "New coffee spot on fifth has the best oat latte, fight me",
)


def _fill(template: str, rng: random.Random) -> str:
    return template.format(
        name=rng.choice(_NAMES),
        amount=rng.choice(_AMOUNTS),
        hours=rng.choice(_HOURS),
        url=f"{rng.choice(_SHORTENERS)}/{''.join(rng.choice(_CODE_ALPHABET) for _ in range(5))}",
        code="".join(rng.choice(_CODE_ALPHABET) for _ in range(6)).upper(),
    )


def synth_corpus(seed: int, per_channel_per_label: int) -> MessageSet:
    """Deterministic synthetic corpus: N scam and N ham messages per channel."""
    if per_channel_per_label <= 0:
        raise ValueError("per_channel_per_label must be positive")
    rng = random.Random(seed)
    messages = []
    plans = (
        (Channel.EMAIL, Label.SCAM, _EMAIL_SCAM),
        (Channel.EMAIL, Label.HAM, _EMAIL_HAM),
        (Channel.SMS, Label.SCAM, _SMS_SCAM),
        (Channel.SMS, Label.HAM, _SMS_HAM),
        (Channel.SNS, Label.SCAM, _SNS_SCAM),
        (Channel.SNS, Label.HAM, _SNS_HAM),
    )
    for channel, label, templates in plans:
        for i in range(per_channel_per_label):
            template = templates[i % len(templates)]
            if channel is Channel.EMAIL:
                subject, body_template = template
                subject = _fill(subject, rng)
                body = _fill(body_template, rng)
            else:
                subject = None
                body = _fill(template, rng)
            messages.append(
                Message(
                    id=f"synth-{channel.value}-{label.value}-{i:04d}",
                    channel=channel,
                    body=body,
                    label=label,
                    subject=subject,
                    source="synth",
                )
            )
    return MessageSet(tuple(messages))


# ---------------------------------------------------------------------------
# JSON Lines persistence
# ---------------------------------------------------------------------------


def message_to_record(message: Message) -> dict[str, object]:
    record: dict[str, object] = {
        "id": message.id,
        "channel": message.channel.value,
        "body": message.body,
        "label": message.label.value,
        "source": message.source,
    }
    if message.subject is not None:
        record["subject"] = message.subject
    return record


def message_from_record(record: Mapping[str, object]) -> Message:
    raw_channel = str(record.get("channel", "")).strip().lower()
    try:
        channel = Channel(raw_channel)
    except ValueError:
        raise InvalidLabelError(f"unknown channel {raw_channel!r}") from None
    raw_label = record.get("label")
    if raw_label is None:
        raise MissingFieldError("record missing label")
    label = LABEL_ALIASES.get(str(raw_label).strip().lower())
    if label is None:
        raise InvalidLabelError(f"cannot map label {raw_label!r}")
    body = record.get("body")
    if body is None or not str(body).strip():
        raise MissingFieldError("record missing body")
    subject = record.get("subject")
    return Message(
        id=str(record.get("id") or ""),
        channel=channel,
        body=str(body),
        label=label,
        subject=None if subject is None else str(subject),
        source=str(record.get("source") or ""),
    )


def save_jsonl(message_set: MessageSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for message in message_set:
            handle.write(json.dumps(message_to_record(message), sort_keys=True, ensure_ascii=False))
            handle.write("\n")


def load_jsonl(path: str | Path) -> MessageSet:
    messages = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            message = message_from_record(record)
            if not message.id:
                message = replace(message, id=f"{path}:{lineno:06d}")
            messages.append(message)
    return MessageSet(tuple(messages))


def read_raw_records(path: str | Path) -> list[dict[str, object]]:
    """Read a JSONL file of raw field-maps without interpreting them."""
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc})") from None
    return records
