"""HTTP prediction service over a loaded index.

One endpoint: ``POST /predict`` with a JSON body ``{"text": ...,
"k": ...?, "rho": ...?}``. The reply carries the ranked predictions and
the subset that clears the threshold:

    {"predictions": [{"cve_id": ..., "score": ...}, ...],
     "thresholded": ["CVE-...", ...]}

Malformed requests get a 4xx with ``{"error": reason}``. The handler
calls exactly the same ranking functions as the CLI, so the two
surfaces cannot disagree.
"""

from __future__ import annotations

import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .embedder import Backend, embed
from .errors import CvelinkError
from .index import VectorIndex, apply_threshold, rank_top_k
from .textprep import normalize

log = logging.getLogger(__name__)

MAX_BODY_BYTES = 1 << 20


class _PredictionHandler(BaseHTTPRequestHandler):
    server_version = "cvelink"

    # These are injected by make_server onto the handler class.
    index: VectorIndex
    backend: Backend
    default_k: int
    default_rho: float

    def log_message(self, fmt: str, *args) -> None:
        log.debug("%s " + fmt, self.address_string(), *args)

    def _reply(self, status: int, payload: dict) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_POST(self) -> None:  # noqa: N802 (http.server naming)
        if self.path != "/predict":
            self._reply(404, {"error": f"no such endpoint: {self.path}"})
            return
        length = int(self.headers.get("Content-Length") or 0)
        if length <= 0 or length > MAX_BODY_BYTES:
            self._reply(400, {"error": "request body missing or too large"})
            return
        try:
            payload = json.loads(self.rfile.read(length))
        except (json.JSONDecodeError, UnicodeDecodeError):
            self._reply(400, {"error": "request body is not valid JSON"})
            return
        if not isinstance(payload, dict):
            self._reply(400, {"error": "request body must be a JSON object"})
            return

        text = payload.get("text")
        if not isinstance(text, str) or not text.strip():
            self._reply(400, {"error": "'text' must be a non-empty string"})
            return
        k = payload.get("k", self.default_k)
        if not isinstance(k, int) or isinstance(k, bool) or k < 1:
            self._reply(400, {"error": "'k' must be an integer >= 1"})
            return
        rho = payload.get("rho", self.default_rho)
        if isinstance(rho, bool) or not isinstance(rho, (int, float)) or not 0 <= rho <= 1:
            self._reply(400, {"error": "'rho' must be a number in [0, 1]"})
            return

        try:
            cleaned = normalize(text)
            query = embed(self.backend, cleaned)
            ranked = rank_top_k(query, self.index, k)
            kept = apply_threshold(ranked, float(rho))
        except CvelinkError as exc:
            self._reply(400, {"error": str(exc)})
            return
        self._reply(
            200,
            {
                "predictions": [
                    {"cve_id": p.cve_id, "score": p.score} for p in ranked
                ],
                "thresholded": [p.cve_id for p in kept],
            },
        )

    def do_GET(self) -> None:  # noqa: N802
        self._reply(405, {"error": "use POST /predict"})


def make_server(
    index: VectorIndex,
    backend: Backend,
    k: int,
    rho: float,
    host: str = "127.0.0.1",
    port: int = 8080,
) -> ThreadingHTTPServer:
    """Build the HTTP server; caller decides when to serve_forever()."""
    handler = type(
        "BoundPredictionHandler",
        (_PredictionHandler,),
        {"index": index, "backend": backend, "default_k": k, "default_rho": rho},
    )
    return ThreadingHTTPServer((host, port), handler)
