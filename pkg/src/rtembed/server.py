"""Bundled HTTP server for the rt-encode wire protocol.

Wraps any ``EncoderBackend`` (usually the additive reference) so the
remote client can be exercised end to end without a real model server.
Runs threaded on an ephemeral port; use as a context manager:

    with MockEncodeServer(backend) as server:
        remote = RemoteBackend(server.url, dim=backend.dim())
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .backends import ENCODE_PATH, PROTOCOL_VERSION, EncoderBackend
from .core import Embedding


class _EncodeHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, format: str, *args) -> None:  # silence request logging
        pass

    def do_POST(self) -> None:
        owner: "MockEncodeServer" = self.server.owner  # type: ignore[attr-defined]
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        owner.request_bodies.append(raw)
        if owner.drop_next_requests > 0:
            owner.drop_next_requests -= 1
            self.close_connection = True  # hang up without a response: transport failure
            return
        if self.path != ENCODE_PATH:
            self._send_error(404, f"unknown path {self.path}")
            return
        try:
            payload = json.loads(raw)
        except ValueError:
            self._send_error(400, "request body is not valid JSON")
            return
        if not isinstance(payload, dict) or payload.get("version") != PROTOCOL_VERSION:
            self._send_error(400, "unsupported protocol version")
            return
        text = payload.get("text")
        vectors = payload.get("prefix_vectors")
        if not isinstance(text, str) or not isinstance(vectors, list):
            self._send_error(400, "request must carry text and prefix_vectors")
            return
        try:
            states = [Embedding(np.asarray(v, dtype=np.float64)) for v in vectors]
            result = owner.backend.encode(text, states)
        except (ValueError, TypeError) as exc:
            self._send_error(400, str(exc))
            return
        values = owner.mangle(result)
        self._send_json(200, {"version": PROTOCOL_VERSION, "embedding": values, "dim": len(values)})

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error(self, status: int, message: str) -> None:
        self._send_json(status, {"error": message})


class MockEncodeServer:
    """Threaded rt-encode server over a backend, on an ephemeral port.

    Test hooks: ``request_bodies`` records every raw request;
    ``drop_next_requests`` makes the next N connections fail at the
    transport level; ``mangle`` lets a test distort the response vector
    (e.g. return a non-unit or wrong-dim embedding).
    """

    def __init__(self, backend: EncoderBackend, host: str = "127.0.0.1", port: int = 0):
        self.backend = backend
        self.request_bodies: list[bytes] = []
        self.drop_next_requests = 0
        self.mangle = lambda emb: [float(x) for x in emb.values]
        self._httpd = ThreadingHTTPServer((host, port), _EncodeHandler)
        self._httpd.owner = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockEncodeServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "MockEncodeServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
