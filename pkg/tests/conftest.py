from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from scamlens import corpus, detector
from scamlens.detector import SPECIAL_PIECES, DetectorModel, Vocab


def make_vocab(*extra: str) -> Vocab:
    chars = sorted({ch for piece in extra for ch in piece} | set("abcdefghijklmnopqrstuvwxyz"))
    return Vocab.from_pieces(SPECIAL_PIECES + tuple(chars) + tuple(extra))


def make_model(
    rng: np.random.Generator,
    vocab: Vocab | None = None,
    d: int = 6,
    h: int = 4,
    scale: float = 0.5,
    activation: str = "tanh",
) -> DetectorModel:
    vocab = vocab or make_vocab()
    return DetectorModel(
        vocab=vocab,
        embedding=rng.uniform(-scale, scale, size=(len(vocab), d)),
        hidden_w=rng.uniform(-scale, scale, size=(d, h)),
        hidden_b=rng.uniform(-scale, scale, size=h),
        out_w=rng.uniform(-scale, scale, size=h),
        out_b=float(rng.uniform(-scale, scale)),
        activation=activation,
    )


def zero_model(vocab: Vocab | None = None, d: int = 4, h: int = 3) -> DetectorModel:
    vocab = vocab or make_vocab()
    return DetectorModel(
        vocab=vocab,
        embedding=np.zeros((len(vocab), d)),
        hidden_w=np.zeros((d, h)),
        hidden_b=np.zeros(h),
        out_w=np.zeros(h),
        out_b=0.0,
    )


@pytest.fixture(scope="session")
def small_corpus() -> corpus.MessageSet:
    return corpus.synth_corpus(seed=7, per_channel_per_label=30)


@pytest.fixture(scope="session")
def trained_model(small_corpus) -> detector.DetectorModel:
    return detector.train(small_corpus, detector.TrainConfig(seed=7))


@pytest.fixture(scope="session")
def frozen_model(trained_model) -> detector.DetectorModel:
    return detector.freeze(trained_model)


class ScriptedServer:
    """Local HTTP server that answers POSTs from a scripted response list.

    Each script entry is a dict with optional keys: status (default 200),
    body (dict or callable(path, request_body) -> dict), delay (seconds).
    The last entry repeats once the script is exhausted. Every request is
    recorded as (path, headers, parsed body).
    """

    def __init__(self) -> None:
        self.script: list[dict] = []
        self.requests: list[tuple[str, dict, dict]] = []
        self._lock = threading.Lock()
        self._cursor = 0

        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:  # noqa: N802 (http.server API)
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length) if length else b"{}"
                body = json.loads(raw or b"{}")
                with server._lock:
                    entry = server.script[min(server._cursor, len(server.script) - 1)]
                    server._cursor += 1
                    server.requests.append((self.path, dict(self.headers), body))
                if entry.get("delay"):
                    time.sleep(entry["delay"])
                payload = entry.get("body", {})
                if callable(payload):
                    payload = payload(self.path, body)
                data = json.dumps(payload).encode("utf-8")
                try:
                    self.send_response(entry.get("status", 200))
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(data)))
                    self.end_headers()
                    self.wfile.write(data)
                except (BrokenPipeError, ConnectionResetError):
                    pass

            def log_message(self, *args) -> None:
                pass

        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}"

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()


@pytest.fixture
def stub_server():
    server = ScriptedServer()
    yield server
    server.close()
