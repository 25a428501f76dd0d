"""HTTP query service over read-only lexical and dense indexes.

Endpoints:

``GET /healthz``
    200 ``{"status": "ok"}`` once indexes are loaded, 503 before.
``POST /search``
    Body ``{"query_text", "query_vector", "modalities", "fusion", "top_n"}``.
    Returns ranked ``results`` with per-modality ranks and the server-side
    ``served_latency_ms``.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from ._validation import check_choice, check_non_negative, check_positive_int, check_unit_interval
from .dense import DenseRetriever
from .exceptions import DataError, NotReadyError
from .fuse import rrf_fuse, wrrf_fuse
from .io import read_weights
from .lexical import BM25Retriever
from .model import FUSION_METHODS, QueryRecord, RankedList, WeightTable

log = logging.getLogger(__name__)

MODALITIES = ("text", "vision")


class SearchService:
    """Request handling independent of the HTTP layer."""

    def __init__(self, config: dict):
        self.config = config
        self.text: Optional[BM25Retriever] = None
        self.dense: Optional[DenseRetriever] = None
        self.weights: Optional[WeightTable] = None
        self._ready = threading.Event()

    @property
    def ready(self) -> bool:
        return self._ready.is_set()

    def load(self) -> "SearchService":
        depth = self.config["fusion"]["depth"]
        paths = self.config["indexes"]
        if paths.get("text"):
            self.text = BM25Retriever.load(paths["text"], top_n=depth)
        if paths.get("dense"):
            self.dense = DenseRetriever.load(paths["dense"], top_n=depth)
        if self.config.get("weights"):
            self.weights = read_weights(self.config["weights"])
        if self.text is None and self.dense is None:
            raise DataError("no indexes configured (indexes.text / indexes.dense)")
        self._ready.set()
        log.info("indexes loaded")
        return self

    def _fusion_params(self, body: dict) -> dict:
        defaults = self.config["fusion"]
        raw = body.get("fusion") or {}
        if not isinstance(raw, dict):
            raise DataError("fusion must be an object")
        unknown = set(raw) - {"method", "k", "default_alpha"}
        if unknown:
            raise DataError(f"unknown fusion keys {sorted(unknown)}")
        return {
            "method": check_choice(raw.get("method", defaults["method"]), "fusion.method", FUSION_METHODS),
            "k": check_non_negative(raw.get("k", defaults["k"]), "fusion.k"),
            "default_alpha": check_unit_interval(
                raw.get("default_alpha", defaults["default_alpha"]), "fusion.default_alpha"
            ),
        }

    def search(self, body) -> dict:
        if not self.ready:
            raise NotReadyError("indexes are still loading")
        started = time.perf_counter()
        if not isinstance(body, dict):
            raise DataError("request body must be a JSON object")
        modalities = body.get("modalities", list(MODALITIES))
        if (
            not isinstance(modalities, list)
            or not modalities
            or any(m not in MODALITIES for m in modalities)
            or len(set(modalities)) != len(modalities)
        ):
            raise DataError(f"modalities must be a non-empty list drawn from {list(MODALITIES)}")
        top_n = check_positive_int(body.get("top_n", self.config["serve"]["top_n"]), "top_n")
        fusion = self._fusion_params(body)
        qid = str(body.get("qid") or "q")

        runs: dict[str, RankedList] = {}
        if "text" in modalities:
            text = body.get("query_text")
            if not isinstance(text, str) or not text.strip():
                raise DataError("text modality requires a non-empty query_text")
            if self.text is None:
                raise DataError("no lexical index is loaded")
            runs["text"] = self.text.search(QueryRecord(qid, text))
        if "vision" in modalities:
            vector = body.get("query_vector")
            if not isinstance(vector, list) or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in vector
            ):
                raise DataError("vision modality requires query_vector as a list of numbers")
            if self.dense is None:
                raise DataError("no dense index is loaded")
            runs["vision"] = self.dense.search(vector, qid)

        if len(runs) == 1:
            fused = next(iter(runs.values())).head(top_n)
        elif fusion["method"] == "rrf":
            fused = rrf_fuse([runs["text"], runs["vision"]], fusion["k"], top_n)
        else:
            if self.weights is not None:
                weights = self.weights.with_default(fusion["default_alpha"])
            else:
                weights = WeightTable.constant(fusion["default_alpha"])
            fused = wrrf_fuse(runs["text"], runs["vision"], weights, fusion["k"], top_n)

        results = [
            {
                "doc_id": e.doc_id,
                "score": e.score,
                "rank": e.rank,
                "per_modality_ranks": {m: runs[m].rank_of(e.doc_id) for m in runs},
            }
            for e in fused
        ]
        return {
            "qid": qid,
            "modalities": modalities,
            "fusion": fusion if len(runs) > 1 else None,
            "results": results,
            "served_latency_ms": (time.perf_counter() - started) * 1000.0,
        }


def _handler_for(service: SearchService):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.debug("%s - " + fmt, self.address_string(), *args)

        def _send(self, status: int, payload: dict):
            data = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            if self.path != "/healthz":
                self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})
            elif service.ready:
                self._send(HTTPStatus.OK, {"status": "ok"})
            else:
                self._send(HTTPStatus.SERVICE_UNAVAILABLE, {"status": "loading"})

        def do_POST(self):
            if self.path != "/search":
                self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})
                return
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length)
            try:
                body = json.loads(raw.decode("utf-8"))
                self._send(HTTPStatus.OK, service.search(body))
            except NotReadyError as exc:
                self._send(HTTPStatus.SERVICE_UNAVAILABLE, {"error": str(exc)})
            except (UnicodeDecodeError, json.JSONDecodeError):
                self._send(HTTPStatus.BAD_REQUEST, {"error": "body is not valid JSON"})
            except DataError as exc:
                self._send(HTTPStatus.BAD_REQUEST, {"error": str(exc)})
            except Exception:  # noqa: BLE001
                log.exception("search failed")
                self._send(HTTPStatus.INTERNAL_SERVER_ERROR, {"error": "internal error"})

    return Handler


def make_server(service: SearchService, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _handler_for(service))
    server.daemon_threads = True
    return server


def start_background(service: SearchService, host: str = "127.0.0.1", port: int = 0, load: bool = True):
    """Start serving on a daemon thread; indexes load after the socket is bound.

    Returns ``(server, thread)``; stop with ``server.shutdown()``.
    """
    server = make_server(service, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    if load:
        service.load()
    return server, thread
