"""Command-line interface wiring the full pipeline.

Subcommands cover each stage (ingest, sample, train, predict, explain,
evaluate, report) plus the end-to-end `pipeline` run and a single-message
`explain-one` inspection utility. A JSON config file drives the pipeline;
string values may interpolate environment variables as ${NAME} so secrets
never land in run manifests.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import random
import re
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Mapping, Sequence

from . import __version__, attribution, corpus, detector, evaluation, generation, lexicon, persona


class ConfigError(Exception):
    """Configuration is incomplete or inconsistent."""


_ENV_VAR = re.compile(r"\$\{(\w+)\}")


def interpolate_env(value: Any) -> Any:
    """Replace ${NAME} in strings with environment values, recursively."""
    if isinstance(value, str):
        def repl(match: re.Match[str]) -> str:
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"config references unset environment variable {name}")
            return os.environ[name]

        return _ENV_VAR.sub(repl, value)
    if isinstance(value, dict):
        return {k: interpolate_env(v) for k, v in value.items()}
    if isinstance(value, list):
        return [interpolate_env(v) for v in value]
    return value


@dataclasses.dataclass
class RunConfig:
    """Resolved pipeline configuration with defaults suitable for mock runs."""

    corpus_path: str | None = None
    synth_seed: int = 7
    synth_per_stratum: int = 100
    model_path: str | None = None
    train: dict[str, Any] = dataclasses.field(default_factory=dict)
    attribution_n_samples: int = 64
    attribution_noise_std: float = 0.01
    attribution_seed: int = 0
    evidence_k: int = attribution.DEFAULT_EVIDENCE_K
    alpha: float = 0.5
    sample_fraction: float = 0.10
    sample_seed: int = 0
    conditions: tuple[generation.Condition, ...] = evaluation.REPORT_CONDITION_ORDER
    llm: dict[str, Any] = dataclasses.field(default_factory=dict)
    nli: dict[str, Any] = dataclasses.field(default_factory=dict)
    mock_llm: bool = False
    mock_nli: bool = False
    out_dir: str | None = None
    config_sha256: str | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.sample_fraction <= 1.0):
            raise ConfigError("sample_fraction must be in (0, 1]")


_KNOWN_KEYS = {
    "corpus_path",
    "synth",
    "model_path",
    "train",
    "attribution",
    "evaluation",
    "sample_fraction",
    "sample_seed",
    "conditions",
    "llm",
    "nli",
    "out_dir",
}


def parse_conditions(names: Sequence[str]) -> tuple[generation.Condition, ...]:
    out = []
    for name in names:
        try:
            out.append(generation.Condition(name.strip()))
        except ValueError:
            valid = ", ".join(c.value for c in generation.Condition)
            raise ConfigError(f"unknown condition {name!r}; valid: {valid}") from None
    if not out:
        raise ConfigError("condition list is empty")
    return tuple(out)


def load_run_config(path: str | Path | None) -> RunConfig:
    raw_text = ""
    data: dict[str, Any] = {}
    if path is not None:
        raw_text = Path(path).read_text(encoding="utf-8")
        parsed = json.loads(raw_text)
        if not isinstance(parsed, dict):
            raise ConfigError("config document must be a JSON object")
        unknown = set(parsed) - _KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = interpolate_env(parsed)

    synth = data.get("synth", {})
    attrib = data.get("attribution", {})
    evaluation_cfg = data.get("evaluation", {})
    llm = dict(data.get("llm", {}))
    nli = dict(data.get("nli", {}))
    mock_llm = bool(llm.pop("mock", False))
    mock_nli = bool(nli.pop("mock", False))
    config = RunConfig(
        corpus_path=data.get("corpus_path"),
        synth_seed=int(synth.get("seed", 7)),
        synth_per_stratum=int(synth.get("per_channel_per_label", 100)),
        model_path=data.get("model_path"),
        train=dict(data.get("train", {})),
        attribution_n_samples=int(attrib.get("n_samples", 64)),
        attribution_noise_std=float(attrib.get("noise_std", 0.01)),
        attribution_seed=int(attrib.get("seed", 0)),
        evidence_k=int(attrib.get("k", attribution.DEFAULT_EVIDENCE_K)),
        alpha=float(evaluation_cfg.get("alpha", 0.5)),
        sample_fraction=float(data.get("sample_fraction", 0.10)),
        sample_seed=int(data.get("sample_seed", 0)),
        conditions=parse_conditions(
            data.get("conditions", [c.value for c in evaluation.REPORT_CONDITION_ORDER])
        ),
        llm=llm,
        nli=nli,
        mock_llm=mock_llm,
        mock_nli=mock_nli,
        out_dir=data.get("out_dir"),
        config_sha256=hashlib.sha256(raw_text.encode("utf-8")).hexdigest() if raw_text else None,
    )
    return config


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        config.synth_seed = args.seed
        config.sample_seed = args.seed
        config.attribution_seed = args.seed
        config.train = dict(config.train, seed=args.seed)
    if getattr(args, "mock", False):
        config.mock_llm = True
        config.mock_nli = True
    if getattr(args, "conditions", None):
        config.conditions = parse_conditions(args.conditions.split(","))
    if getattr(args, "out", None):
        config.out_dir = args.out
    return config


# ---------------------------------------------------------------------------
# Artifact helpers
# ---------------------------------------------------------------------------


def _write_jsonl(path: Path, records: Sequence[Mapping[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True, ensure_ascii=False))
            handle.write("\n")


def _write_json(path: Path, payload: Mapping[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, ensure_ascii=False)
        handle.write("\n")


def _resolve_out_dir(config: RunConfig) -> Path:
    # Artifacts are immutable: a fresh directory per run. Without an explicit
    # --out, runs land under ./runs with a UTC timestamp.
    if config.out_dir:
        out = Path(config.out_dir)
        if out.exists() and any(out.iterdir()):
            raise ConfigError(f"output directory {out} already exists and is not empty")
    else:
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
        out = Path("runs") / stamp
        if out.exists():
            raise ConfigError(f"output directory {out} already exists")
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        raise RuntimeError(f"stage {name!r} failed: {exc}") from exc


def _load_corpus(config: RunConfig) -> corpus.MessageSet:
    if config.corpus_path:
        return corpus.load_jsonl(config.corpus_path)
    return corpus.synth_corpus(config.synth_seed, config.synth_per_stratum)


def _load_or_train_model(
    config: RunConfig, messages: corpus.MessageSet, allow_train: bool, out: Path
) -> tuple[detector.DetectorModel, Path]:
    model_path = Path(config.model_path) if config.model_path else out / "model.json"
    if model_path.exists():
        return detector.load_model(model_path), model_path
    if not allow_train:
        raise ConfigError(
            f"model file {model_path} not found; pass --train to fit one from the corpus"
        )
    model = detector.train(messages, detector.TrainConfig(**config.train))
    detector.save_model(model, model_path)
    return model, model_path


def _explanation_subset(
    config: RunConfig, filtered: corpus.MessageSet
) -> corpus.MessageSet:
    """Stratified fraction of filtered scam messages per channel, shared by
    every condition in the run."""
    rng = random.Random(config.sample_seed)
    selected: list[int] = []
    for channel in corpus.Channel:
        stratum = [i for i, m in enumerate(filtered.messages) if m.channel is channel]
        if not stratum:
            continue
        count = max(1, int(math.floor(config.sample_fraction * len(stratum) + 0.5)))
        count = min(count, len(stratum))
        selected.extend(rng.sample(stratum, count))
    selected.sort()
    return corpus.MessageSet(tuple(filtered.messages[i] for i in selected))


def _compute_evidence(
    config: RunConfig, model: detector.DetectorModel, subset: corpus.MessageSet
) -> tuple[list[tuple[corpus.Message, attribution.EvidenceSet]], int]:
    attrib_config = attribution.AttributionConfig(
        n_samples=config.attribution_n_samples,
        noise_std=config.attribution_noise_std,
        seed=config.attribution_seed,
    )
    kept: list[tuple[corpus.Message, attribution.EvidenceSet]] = []
    dropped = 0
    for message in subset:
        tokenized = detector.tokenize(
            corpus.format_input(message), model.vocab, model.piece_limit
        )
        sub = attribution.gradient_shap(model, tokenized, attrib_config)
        words = attribution.aggregate_to_words(sub, tokenized)
        evidence = attribution.filter_evidence(words, k=config.evidence_k)
        if not evidence.phrases:
            dropped += 1
            continue
        kept.append((message, evidence))
    return kept, dropped


def _mock_style_for(condition: generation.Condition) -> generation.MockStyle:
    if condition is generation.Condition.PURE_LLM:
        return generation.MockStyle.EVIDENCE_BLIND
    return generation.MockStyle.EVIDENCE_ECHOING


def _build_prompts(
    config: RunConfig,
    with_evidence: Sequence[tuple[corpus.Message, attribution.EvidenceSet]],
) -> list[tuple[generation.Prompt, attribution.EvidenceSet]]:
    instructions = {
        generation.Condition.XAI_HIGH_VULNERABILITY: persona.build_instruction(
            persona.persona_from_vulnerability(persona.VulnerabilityLevel.HIGH_VULNERABILITY)
        ),
        generation.Condition.XAI_LOW_VULNERABILITY: persona.build_instruction(
            persona.persona_from_vulnerability(persona.VulnerabilityLevel.LOW_VULNERABILITY)
        ),
    }
    prompts = []
    for condition in config.conditions:
        for message, evidence in with_evidence:
            prompt = generation.build_prompt(
                condition,
                corpus.format_input(message),
                evidence if condition.wants_evidence else None,
                instructions.get(condition),
                message_id=message.id,
            )
            prompts.append((prompt, evidence))
    return prompts


def _generate_all(
    config: RunConfig, prompts: Sequence[generation.Prompt]
) -> list[generation.Explanation]:
    if config.mock_llm:
        return [generation.mock_generate(p, _mock_style_for(p.condition)) for p in prompts]
    if "base_url" not in config.llm or "model_name" not in config.llm:
        raise ConfigError("remote generation needs llm.base_url and llm.model_name, or --mock")
    llm_config = generation.LlmClientConfig(**config.llm)
    return generation.generate_many(llm_config, prompts)


def _score_all(
    config: RunConfig,
    explanations: Sequence[generation.Explanation],
    evidence_by_id: Mapping[str, attribution.EvidenceSet],
) -> list[evaluation.MessageMetrics]:
    eval_config = evaluation.EvaluationConfig(alpha=config.alpha)
    if config.mock_nli:
        all_scores = [evaluation.mock_score_nli(e) for e in explanations]
    else:
        if "base_url" not in config.nli:
            raise ConfigError("remote scoring needs nli.base_url, or --mock")
        nli_config = evaluation.NliClientConfig(**config.nli)
        all_scores = evaluation.score_nli_many(nli_config, explanations)
    metrics = []
    for explanation, scores in zip(explanations, all_scores):
        faith = None
        if explanation.condition is not generation.Condition.PURE_LLM:
            faith = evaluation.faithfulness(evidence_by_id[explanation.message_id], explanation)
        metrics.append(
            evaluation.MessageMetrics(
                message_id=explanation.message_id,
                condition=explanation.condition,
                correctness=evaluation.correctness(scores, eval_config),
                fkgl=evaluation.fkgl(explanation.text, eval_config).fkgl,
                faithfulness=faith,
            )
        )
    return metrics


def run_pipeline(config: RunConfig, allow_train: bool) -> Path:
    out = _resolve_out_dir(config)

    messages = _stage("corpus", _load_corpus, config)
    corpus.save_jsonl(messages, out / "corpus.jsonl")

    model, model_path = _stage("model", _load_or_train_model, config, messages, allow_train, out)
    model = detector.freeze(model)

    predictions = _stage("predict", detector.predict_set, model, messages)
    _write_jsonl(
        out / "predictions.jsonl",
        [
            {
                "id": mid,
                "scam_probability": p.scam_probability,
                "logit": p.logit,
                "predicted_label": p.predicted_label.value,
            }
            for mid, p in predictions.items()
        ],
    )

    predicted_labels = {mid: p.predicted_label for mid, p in predictions.items()}
    filtered = _stage("filter", corpus.filter_for_explanation, messages, predicted_labels)
    if len(filtered) == 0:
        raise ConfigError("no messages survived the explanation filter")
    corpus.save_jsonl(filtered, out / "filtered.jsonl")

    subset = _stage("subset", _explanation_subset, config, filtered)
    corpus.save_jsonl(subset, out / "subset.jsonl")

    with_evidence, dropped = _stage("attribution", _compute_evidence, config, model, subset)
    if not with_evidence:
        raise ConfigError("every subset message produced an empty evidence set")
    _write_jsonl(
        out / "evidence.jsonl",
        [
            {
                "id": message.id,
                "phrases": [{"word": w, "score": s} for w, s in evidence.phrases],
                "k": evidence.k,
                "seed": config.attribution_seed,
            }
            for message, evidence in with_evidence
        ],
    )

    prompt_pairs = _stage("prompts", _build_prompts, config, with_evidence)
    prompts = [p for p, _ in prompt_pairs]
    explanations = _stage("generate", _generate_all, config, prompts)
    _write_jsonl(
        out / "explanations.jsonl",
        [
            {
                "message_id": e.message_id,
                "condition": e.condition.value,
                "text": e.text,
                "generator": e.generator.value,
                "model_name": e.model_name,
            }
            for e in explanations
        ],
    )

    evidence_by_id = {message.id: evidence for message, evidence in with_evidence}
    metrics = _stage("evaluate", _score_all, config, explanations, evidence_by_id)
    _write_jsonl(
        out / "metrics.jsonl",
        [
            {
                "message_id": m.message_id,
                "condition": m.condition.value,
                "faithfulness": m.faithfulness,
                "correctness": m.correctness,
                "fkgl": m.fkgl,
            }
            for m in metrics
        ],
    )

    grouped: dict[generation.Condition, list[evaluation.MessageMetrics]] = {}
    for m in metrics:
        grouped.setdefault(m.condition, []).append(m)
    report = _stage("report", evaluation.aggregate_report, grouped)
    _write_json(out / "report.json", evaluation.report_to_json(report))
    (out / "report.txt").write_text(evaluation.render_report_table(report), encoding="utf-8")

    manifest = {
        "package_version": __version__,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "config_sha256": config.config_sha256,
        "generator": "mock" if config.mock_llm else "remote",
        "nli": "mock" if config.mock_nli else "remote",
        "seeds": {
            "synth": config.synth_seed,
            "train": config.train.get("seed", detector.TrainConfig().seed),
            "sample": config.sample_seed,
            "attribution": config.attribution_seed,
        },
        "sample_fraction": config.sample_fraction,
        "conditions": [c.value for c in config.conditions],
        "stopwords_version": lexicon.STOPWORDS_VERSION,
        "model_path": str(model_path),
        "empty_evidence_dropped": dropped,
        "artifacts": [
            "corpus.jsonl",
            "predictions.jsonl",
            "filtered.jsonl",
            "subset.jsonl",
            "evidence.jsonl",
            "explanations.jsonl",
            "metrics.jsonl",
            "report.json",
            "report.txt",
        ],
    }
    _write_json(out / "manifest.json", manifest)
    return out


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_ingest(args: argparse.Namespace) -> int:
    records = corpus.read_raw_records(args.infile)
    message_set = corpus.ingest(records, corpus.Channel(args.channel))
    corpus.save_jsonl(message_set, args.out)
    print(f"ingested {len(message_set)} messages to {args.out}")
    return 0


def _cmd_sample(args: argparse.Namespace) -> int:
    message_set = corpus.load_jsonl(args.infile)
    sampled = corpus.stratified_sample(message_set, args.per_stratum, args.seed)
    corpus.save_jsonl(sampled, args.out)
    print(f"sampled {len(sampled)} messages to {args.out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    messages = corpus.load_jsonl(args.corpus)
    config = detector.TrainConfig(
        lr=args.lr,
        epochs=args.epochs,
        patience=args.patience,
        seed=args.seed,
        d=args.dim,
        h=args.hidden,
        val_fraction=args.val_fraction,
        vocab_size=args.vocab_size,
    )
    model = detector.train(messages, config)
    detector.save_model(model, args.out)
    print(f"trained detector (validation macro F1 {model.val_macro_f1:.4f}) -> {args.out}")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    messages = corpus.load_jsonl(args.corpus)
    model = detector.freeze(detector.load_model(args.model))
    predictions = detector.predict_set(model, messages)
    _write_jsonl(
        Path(args.out),
        [
            {
                "id": mid,
                "scam_probability": p.scam_probability,
                "logit": p.logit,
                "predicted_label": p.predicted_label.value,
            }
            for mid, p in predictions.items()
        ],
    )
    print(f"wrote {len(predictions)} predictions to {args.out}")
    return 0


def _cmd_pipeline(args: argparse.Namespace) -> int:
    config = apply_overrides(load_run_config(args.config), args)
    out = run_pipeline(config, allow_train=args.train)
    print(f"pipeline complete: {out}")
    print((out / "report.txt").read_text(encoding="utf-8"), end="")
    return 0


def _persona_condition(flag: str) -> generation.Condition:
    return {
        "high": generation.Condition.XAI_HIGH_VULNERABILITY,
        "low": generation.Condition.XAI_LOW_VULNERABILITY,
        "none": generation.Condition.XAI_ONLY,
    }[flag]


def _cmd_explain_one(args: argparse.Namespace) -> int:
    config = apply_overrides(load_run_config(args.config), args)
    model = detector.freeze(detector.load_model(args.model))
    message = corpus.Message(
        id="adhoc-000000",
        channel=corpus.Channel(args.channel),
        body=args.text,
        label=corpus.Label.SCAM,
        subject=args.subject if args.channel == "email" else None,
        source="cli",
    )
    formatted = corpus.format_input(message)
    tokenized = detector.tokenize(formatted, model.vocab, model.piece_limit)
    prediction = detector.forward(model, tokenized)
    print(
        f"prediction: {prediction.predicted_label.value} "
        f"(p_scam={prediction.scam_probability:.4f}, logit={prediction.logit:+.4f})"
    )

    attrib_config = attribution.AttributionConfig(
        n_samples=config.attribution_n_samples,
        noise_std=config.attribution_noise_std,
        seed=config.attribution_seed,
    )
    sub = _stage("attribution", attribution.gradient_shap, model, tokenized, attrib_config)
    words = attribution.aggregate_to_words(sub, tokenized)
    evidence = attribution.filter_evidence(words, k=config.evidence_k)
    print("evidence:")
    for word, score in evidence.phrases:
        print(f"  {score:+.5f}  {word}")
    if not evidence.phrases:
        print("  (empty)")
        return 1

    condition = _persona_condition(args.persona)
    instruction = None
    if condition.wants_persona:
        level = (
            persona.VulnerabilityLevel.HIGH_VULNERABILITY
            if args.persona == "high"
            else persona.VulnerabilityLevel.LOW_VULNERABILITY
        )
        instruction = persona.build_instruction(persona.persona_from_vulnerability(level))
    prompt = generation.build_prompt(
        condition, formatted, evidence, instruction, message_id=message.id
    )
    if args.mock:
        explanation = generation.mock_generate(prompt, generation.MockStyle.EVIDENCE_ECHOING)
    else:
        if "base_url" not in config.llm or "model_name" not in config.llm:
            raise ConfigError("remote generation needs llm.base_url and llm.model_name, or --mock")
        llm_config = generation.LlmClientConfig(**config.llm)
        explanation = _stage("generate", generation.generate, llm_config, prompt)
    print(f"condition: {condition.value}")
    print(f"explanation ({explanation.generator.value}):")
    print(explanation.text)
    return 0


def _cmd_explain(args: argparse.Namespace) -> int:
    config = apply_overrides(load_run_config(args.config), args)
    config.sample_fraction = 1.0
    messages = corpus.load_jsonl(args.corpus)
    model = detector.freeze(detector.load_model(args.model))
    with_evidence, dropped = _stage("attribution", _compute_evidence, config, model, messages)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(
        out / "evidence.jsonl",
        [
            {
                "id": message.id,
                "phrases": [{"word": w, "score": s} for w, s in evidence.phrases],
                "k": evidence.k,
                "seed": config.attribution_seed,
            }
            for message, evidence in with_evidence
        ],
    )
    prompt_pairs = _build_prompts(config, with_evidence)
    prompts = [p for p, _ in prompt_pairs]
    explanations = _stage("generate", _generate_all, config, prompts)
    _write_jsonl(
        out / "explanations.jsonl",
        [
            {
                "message_id": e.message_id,
                "condition": e.condition.value,
                "text": e.text,
                "generator": e.generator.value,
                "model_name": e.model_name,
            }
            for e in explanations
        ],
    )
    print(f"explained {len(with_evidence)} messages ({dropped} dropped for empty evidence)")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    config = apply_overrides(load_run_config(args.config), args)
    evidence_by_id: dict[str, attribution.EvidenceSet] = {}
    for record in corpus.read_raw_records(args.evidence):
        phrases = tuple((p["word"], float(p["score"])) for p in record["phrases"])
        evidence_by_id[str(record["id"])] = attribution.EvidenceSet(
            phrases=phrases, k=int(record["k"])
        )
    explanations = []
    for record in corpus.read_raw_records(args.explanations):
        explanations.append(
            generation.Explanation(
                message_id=str(record["message_id"]),
                condition=generation.Condition(record["condition"]),
                text=str(record["text"]),
                generator=generation.GeneratorKind(record["generator"]),
                model_name=str(record["model_name"]),
            )
        )
    metrics = _stage("evaluate", _score_all, config, explanations, evidence_by_id)
    _write_jsonl(
        Path(args.out),
        [
            {
                "message_id": m.message_id,
                "condition": m.condition.value,
                "faithfulness": m.faithfulness,
                "correctness": m.correctness,
                "fkgl": m.fkgl,
            }
            for m in metrics
        ],
    )
    print(f"scored {len(metrics)} explanations to {args.out}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    grouped: dict[generation.Condition, list[evaluation.MessageMetrics]] = {}
    for record in corpus.read_raw_records(args.metrics):
        m = evaluation.MessageMetrics(
            message_id=str(record["message_id"]),
            condition=generation.Condition(record["condition"]),
            correctness=float(record["correctness"]),
            fkgl=float(record["fkgl"]),
            faithfulness=None if record["faithfulness"] is None else float(record["faithfulness"]),
        )
        grouped.setdefault(m.condition, []).append(m)
    report = evaluation.aggregate_report(grouped)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "report.json", evaluation.report_to_json(report))
    (out / "report.txt").write_text(evaluation.render_report_table(report), encoding="utf-8")
    print((out / "report.txt").read_text(encoding="utf-8"), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scamlens",
        description="Scam-message explanation pipeline with evidence-grounded generation",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize raw JSONL records into the corpus format")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--channel", required=True, choices=[c.value for c in corpus.Channel])
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("sample", help="stratified per-channel per-label sampling")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-stratum", dest="per_stratum", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("train", help="train the detector on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=detector.TrainConfig().lr)
    p.add_argument("--epochs", type=int, default=detector.TrainConfig().epochs)
    p.add_argument("--patience", type=int, default=detector.TrainConfig().patience)
    p.add_argument("--dim", type=int, default=detector.TrainConfig().d)
    p.add_argument("--hidden", type=int, default=detector.TrainConfig().h)
    p.add_argument("--val-fraction", dest="val_fraction", type=float, default=detector.TrainConfig().val_fraction)
    p.add_argument("--vocab-size", dest="vocab_size", type=int, default=detector.TrainConfig().vocab_size)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="run the detector over a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("explain", help="attribution + generation for a prepared corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--mock", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--conditions")
    p.set_defaults(func=_cmd_explain)

    p = sub.add_parser("evaluate", help="score explanations against evidence")
    p.add_argument("--evidence", required=True)
    p.add_argument("--explanations", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--mock", action="store_true")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="aggregate per-message metrics into the results table")
    p.add_argument("--metrics", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--mock", action="store_true")
    p.add_argument("--train", action="store_true", help="train the detector if no checkpoint exists")
    p.add_argument("--conditions")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("explain-one", help="inspect one message end to end")
    p.add_argument("--text", required=True)
    p.add_argument("--channel", required=True, choices=[c.value for c in corpus.Channel])
    p.add_argument("--subject")
    p.add_argument("--model", required=True)
    p.add_argument("--persona", choices=["high", "low", "none"], default="none")
    p.add_argument("--mock", action="store_true")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_explain_one)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RuntimeError as exc:
        # Stage failures carry the stage name.
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (
        ConfigError,
        corpus.CorpusError,
        detector.DetectorError,
        attribution.AttributionError,
        generation.GenerationError,
        evaluation.EvaluationError,
        persona.UnknownLevelError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
