from __future__ import annotations

import json
from pathlib import Path

import pytest

from scamlens import cli, corpus, detector
from scamlens.cli import ConfigError, interpolate_env, load_run_config, parse_conditions
from scamlens.generation import Condition

ARTIFACTS = (
    "corpus.jsonl",
    "predictions.jsonl",
    "filtered.jsonl",
    "subset.jsonl",
    "evidence.jsonl",
    "explanations.jsonl",
    "metrics.jsonl",
    "report.json",
    "report.txt",
    "manifest.json",
)


def write_config(path: Path, **overrides) -> Path:
    data = {
        "synth": {"seed": 7, "per_channel_per_label": 25},
        "train": {"seed": 7},
        "attribution": {"n_samples": 32, "noise_std": 0.01, "seed": 11, "k": 8},
        "sample_fraction": 0.3,
        "sample_seed": 5,
    }
    data.update(overrides)
    config_path = path / "config.json"
    config_path.write_text(json.dumps(data), encoding="utf-8")
    return config_path


class TestConfig:
    def test_env_interpolation(self, monkeypatch):
        monkeypatch.setenv("SOME_HOST", "example.internal")
        value = interpolate_env({"url": "http://${SOME_HOST}/v1", "n": 3})
        assert value == {"url": "http://example.internal/v1", "n": 3}

    def test_unset_variable_rejected(self, monkeypatch):
        monkeypatch.delenv("NOT_SET_ANYWHERE", raising=False)
        with pytest.raises(ConfigError):
            interpolate_env("${NOT_SET_ANYWHERE}")

    def test_unknown_keys_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text('{"bogus_key": 1}')
        with pytest.raises(ConfigError):
            load_run_config(path)

    def test_unknown_condition_rejected(self):
        with pytest.raises(ConfigError):
            parse_conditions(["xai_only", "nonsense"])

    def test_defaults_without_file(self):
        config = load_run_config(None)
        assert config.sample_fraction == 0.10
        assert config.conditions == (
            Condition.PURE_LLM,
            Condition.XAI_ONLY,
            Condition.XAI_HIGH_VULNERABILITY,
            Condition.XAI_LOW_VULNERABILITY,
        )

    def test_mock_flags_from_config_file(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"llm": {"mock": True}, "nli": {"mock": True}}))
        config = load_run_config(path)
        assert config.mock_llm and config.mock_nli
        assert "mock" not in config.llm and "mock" not in config.nli


class TestPipelineCommand:
    def test_mock_pipeline_writes_all_artifacts(self, tmp_path, capsys):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        rc = cli.main(
            ["pipeline", "--config", str(config), "--mock", "--train", "--out", str(out)]
        )
        assert rc == 0
        for name in ARTIFACTS:
            assert (out / name).exists(), name
        report = json.loads((out / "report.json").read_text())
        assert len(report["conditions"]) == 4
        stdout = capsys.readouterr().out
        assert "No XAI" in stdout

    def test_identical_runs_are_byte_identical(self, tmp_path):
        config = write_config(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert cli.main(["pipeline", "--config", str(config), "--mock", "--train", "--out", str(out_a)]) == 0
        assert cli.main(["pipeline", "--config", str(config), "--mock", "--train", "--out", str(out_b)]) == 0
        for name in ("evidence.jsonl", "explanations.jsonl", "metrics.jsonl", "report.json", "report.txt"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name

    def test_missing_model_without_train_flag_fails(self, tmp_path, capsys):
        config = write_config(tmp_path, model_path=str(tmp_path / "missing-model.json"))
        rc = cli.main(
            ["pipeline", "--config", str(config), "--mock", "--out", str(tmp_path / "run")]
        )
        assert rc != 0
        assert "model" in capsys.readouterr().err.lower()

    def test_existing_nonempty_out_dir_rejected(self, tmp_path, capsys):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        out.mkdir()
        (out / "junk.txt").write_text("x")
        rc = cli.main(["pipeline", "--config", str(config), "--mock", "--train", "--out", str(out)])
        assert rc != 0

    def test_subset_shared_across_conditions(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        cli.main(["pipeline", "--config", str(config), "--mock", "--train", "--out", str(out)])
        per_condition: dict[str, set[str]] = {}
        for line in (out / "explanations.jsonl").read_text().splitlines():
            record = json.loads(line)
            per_condition.setdefault(record["condition"], set()).add(record["message_id"])
        id_sets = list(per_condition.values())
        assert len(id_sets) == 4
        assert all(ids == id_sets[0] for ids in id_sets)

    def test_manifest_records_seeds_and_config_hash(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        cli.main(["pipeline", "--config", str(config), "--mock", "--train", "--out", str(out)])
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["seeds"] == {"synth": 7, "train": 7, "sample": 5, "attribution": 11}
        assert manifest["generator"] == "mock"
        assert len(manifest["config_sha256"]) == 64

    def test_remote_pipeline_against_stub_endpoints(self, tmp_path, stub_server, monkeypatch):
        monkeypatch.setenv("STUB_LLM_KEY", "k1")
        monkeypatch.setenv("STUB_NLI_KEY", "k2")

        def respond(path, body):
            if path == "/chat/completions":
                return {
                    "choices": [
                        {"message": {"content": "This urgent link is a scam. Do not click it."}}
                    ]
                }
            return {"entailment": 0.7, "neutral": 0.2, "contradiction": 0.1}

        stub_server.script = [{"status": 200, "body": respond}]
        config = write_config(
            tmp_path,
            llm={
                "base_url": stub_server.url,
                "model_name": "stub-model",
                "api_key_env_var": "STUB_LLM_KEY",
                "max_retries": 1,
                "timeout": 10,
                "backoff_base": 0.01,
            },
            nli={
                "base_url": stub_server.url,
                "api_key_env_var": "STUB_NLI_KEY",
                "max_retries": 1,
                "timeout": 10,
                "backoff_base": 0.01,
            },
        )
        out = tmp_path / "run"
        rc = cli.main(["pipeline", "--config", str(config), "--train", "--out", str(out)])
        assert rc == 0
        explanations = [
            json.loads(l) for l in (out / "explanations.jsonl").read_text().splitlines()
        ]
        assert explanations
        assert all(r["generator"] == "remote" for r in explanations)
        assert all(r["model_name"] == "stub-model" for r in explanations)
        metrics = [json.loads(l) for l in (out / "metrics.jsonl").read_text().splitlines()]
        # The stub's simplex point (0.7, 0.2, 0.1) scores 0.7 + 0.5 * 0.2.
        assert all(abs(m["correctness"] - 0.8) < 1e-12 for m in metrics)
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["generator"] == "remote"
        assert manifest["nli"] == "remote"

    def test_remote_pipeline_without_endpoint_config_fails_cleanly(self, tmp_path, capsys):
        config = write_config(tmp_path)
        rc = cli.main(["pipeline", "--config", str(config), "--train", "--out", str(tmp_path / "r")])
        assert rc != 0
        assert "llm.base_url" in capsys.readouterr().err

    def test_condition_subset_via_flag(self, tmp_path):
        config = write_config(tmp_path)
        out = tmp_path / "run"
        rc = cli.main(
            [
                "pipeline",
                "--config",
                str(config),
                "--mock",
                "--train",
                "--out",
                str(out),
                "--conditions",
                "xai_only,xai_low_vulnerability",
            ]
        )
        assert rc == 0
        report = json.loads((out / "report.json").read_text())
        assert [c["condition"] for c in report["conditions"]] == [
            "xai_only",
            "xai_low_vulnerability",
        ]


class TestStageCommands:
    def test_ingest_then_sample_round_trip(self, tmp_path):
        raw = tmp_path / "raw.jsonl"
        rows = []
        for i in range(6):
            label = "spam" if i % 2 == 0 else "ham"
            rows.append(json.dumps({"body": f"message body {i}", "label": label}))
        raw.write_text("\n".join(rows) + "\n")

        messages = tmp_path / "messages.jsonl"
        assert cli.main(["ingest", "--in", str(raw), "--channel", "sms", "--out", str(messages)]) == 0
        loaded = corpus.load_jsonl(messages)
        assert len(loaded) == 6

        sampled = tmp_path / "sampled.jsonl"
        assert cli.main(
            ["sample", "--in", str(messages), "--out", str(sampled), "--per-stratum", "2", "--seed", "3"]
        ) == 0
        out = corpus.load_jsonl(sampled)
        assert out.counts() == {corpus.Channel.SMS: (2, 2)}

    def test_train_and_predict_commands(self, tmp_path, small_corpus):
        corpus_path = tmp_path / "corpus.jsonl"
        corpus.save_jsonl(small_corpus, corpus_path)
        model_path = tmp_path / "model.json"
        assert cli.main(
            ["train", "--corpus", str(corpus_path), "--out", str(model_path), "--seed", "7"]
        ) == 0
        model = detector.load_model(model_path)
        assert model.val_macro_f1 is not None and model.val_macro_f1 >= 0.9

        predictions_path = tmp_path / "predictions.jsonl"
        assert cli.main(
            [
                "predict",
                "--corpus",
                str(corpus_path),
                "--model",
                str(model_path),
                "--out",
                str(predictions_path),
            ]
        ) == 0
        lines = predictions_path.read_text().splitlines()
        assert len(lines) == len(small_corpus)
        record = json.loads(lines[0])
        assert set(record) == {"id", "scam_probability", "logit", "predicted_label"}

    def test_explain_command_writes_evidence_and_explanations(
        self, tmp_path, frozen_model, small_corpus
    ):
        scams = corpus.MessageSet(
            tuple(m for m in small_corpus if m.label is corpus.Label.SCAM)[:4]
        )
        corpus_path = tmp_path / "scams.jsonl"
        corpus.save_jsonl(scams, corpus_path)
        model_path = tmp_path / "model.json"
        detector.save_model(frozen_model, model_path)
        out = tmp_path / "explained"
        rc = cli.main(
            [
                "explain",
                "--corpus",
                str(corpus_path),
                "--model",
                str(model_path),
                "--out",
                str(out),
                "--mock",
                "--conditions",
                "xai_only",
            ]
        )
        assert rc == 0
        evidence_rows = [json.loads(l) for l in (out / "evidence.jsonl").read_text().splitlines()]
        explanation_rows = [
            json.loads(l) for l in (out / "explanations.jsonl").read_text().splitlines()
        ]
        assert {r["id"] for r in evidence_rows} == {m.id for m in scams}
        assert all(r["condition"] == "xai_only" for r in explanation_rows)
        assert len(explanation_rows) == len(evidence_rows)

    def test_evaluate_and_report_commands(self, tmp_path):
        evidence_path = tmp_path / "evidence.jsonl"
        evidence_path.write_text(
            json.dumps(
                {
                    "id": "m1",
                    "phrases": [{"word": "urgent", "score": 0.5}, {"word": "link", "score": 0.2}],
                    "k": 8,
                    "seed": 0,
                }
            )
            + "\n"
        )
        explanations_path = tmp_path / "explanations.jsonl"
        rows = [
            {
                "message_id": "m1",
                "condition": "xai_only",
                "text": "The urgent link is a scam trap.",
                "generator": "mock",
                "model_name": "mock",
            },
            {
                "message_id": "m1",
                "condition": "pure_llm",
                "text": "Be wary of strangers bearing gifts.",
                "generator": "mock",
                "model_name": "mock",
            },
        ]
        explanations_path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")

        metrics_path = tmp_path / "metrics.jsonl"
        assert cli.main(
            [
                "evaluate",
                "--evidence",
                str(evidence_path),
                "--explanations",
                str(explanations_path),
                "--out",
                str(metrics_path),
                "--mock",
            ]
        ) == 0
        metrics = [json.loads(l) for l in metrics_path.read_text().splitlines()]
        xai_row = next(m for m in metrics if m["condition"] == "xai_only")
        assert xai_row["faithfulness"] == 1.0

        report_dir = tmp_path / "report"
        assert cli.main(["report", "--metrics", str(metrics_path), "--out", str(report_dir)]) == 0
        table = (report_dir / "report.txt").read_text()
        assert "No XAI" in table and "--" in table


class TestExplainOne:
    def test_mock_explain_one_prints_evidence_and_text(self, tmp_path, frozen_model, capsys):
        model_path = tmp_path / "model.json"
        detector.save_model(frozen_model, model_path)
        rc = cli.main(
            [
                "explain-one",
                "--text",
                "URGENT: your account is frozen, verify now at bit.ly/ab1cd",
                "--channel",
                "sms",
                "--model",
                str(model_path),
                "--persona",
                "high",
                "--mock",
            ]
        )
        out = capsys.readouterr().out
        assert rc == 0
        assert "prediction:" in out
        assert "evidence:" in out
        assert "condition: xai_high_vulnerability" in out
        assert "explanation (mock):" in out

    def test_persona_none_maps_to_xai_only(self, tmp_path, frozen_model, capsys):
        model_path = tmp_path / "model.json"
        detector.save_model(frozen_model, model_path)
        rc = cli.main(
            [
                "explain-one",
                "--text",
                "You won a $500 gift card, claim today at snip.ly/q2w3e",
                "--channel",
                "sms",
                "--model",
                str(model_path),
                "--persona",
                "none",
                "--mock",
            ]
        )
        assert rc == 0
        assert "condition: xai_only" in capsys.readouterr().out

    def test_unreachable_endpoint_surfaces_stage_error(self, tmp_path, frozen_model, capsys, monkeypatch):
        monkeypatch.setenv("TEST_LLM_KEY", "k")
        model_path = tmp_path / "model.json"
        detector.save_model(frozen_model, model_path)
        config_path = tmp_path / "config.json"
        config_path.write_text(
            json.dumps(
                {
                    "llm": {
                        "base_url": "http://127.0.0.1:9",
                        "model_name": "m",
                        "api_key_env_var": "TEST_LLM_KEY",
                        "max_retries": 0,
                        "timeout": 0.5,
                        "backoff_base": 0.01,
                    }
                }
            )
        )
        rc = cli.main(
            [
                "explain-one",
                "--text",
                "URGENT: claim your prize now at bit.ly/zz9xx",
                "--channel",
                "sms",
                "--model",
                str(model_path),
                "--config",
                str(config_path),
            ]
        )
        assert rc != 0
        err = capsys.readouterr().err
        assert "generate" in err
