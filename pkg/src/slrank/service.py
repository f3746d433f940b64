"""JSON-over-HTTP ranking endpoint.

``POST /rank`` takes a request of the form::

    {
      "impression": {<impression document>},   # or the fields inline
      "mode": "feasible" | "randomized",
      "seed": 123,                              # optional, randomized mode
      "baseline": {"w": 1.0}                    # optional side-by-side block
    }

and answers with the ranked item ids in caller slot order, revenue,
relevance, relevance ratio, redundancy flag and the server-side solve time.
A request that misses its deadline gets 504 and no ranking. ``GET /healthz``
answers ``{"status": "ok"}``.
"""

from __future__ import annotations

import json
import logging
import secrets
import threading
import time
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from .baseline import ScoreConfig, score_rank
from .core import InstanceFormatError, InstanceValidationError, evaluate
from .formats import impression_from_dict, loads
from .ranker import rank_feasible, rank_randomized

log = logging.getLogger(__name__)

DEFAULT_DEADLINE = 0.1  # seconds
DEFAULT_PORT = 8080
PORT_ENV = "SLRANK_PORT"

_executor: Optional[ThreadPoolExecutor] = None
_executor_lock = threading.Lock()


def _pool() -> ThreadPoolExecutor:
    global _executor
    with _executor_lock:
        if _executor is None:
            _executor = ThreadPoolExecutor(max_workers=8, thread_name_prefix="slrank-solve")
        return _executor


def _error(status: int, message: str, field: Optional[str] = None):
    body = {"error": message}
    if field:
        body["field"] = field
    return status, body


def _solve(imp, mode: str, seed: Optional[int], baseline: Optional[ScoreConfig]) -> dict:
    t0 = time.perf_counter()
    out = rank_feasible(imp) if mode == "feasible" else rank_randomized(imp, seed)
    solve_time = time.perf_counter() - t0
    res = evaluate(imp, out.plan)
    body = {
        "item_ids": imp.to_caller_order(out.plan),
        "provenance": out.plan.provenance,
        "revenue": res.revenue,
        "relevance": res.relevance,
        "relevance_ratio": res.relevance_ratio,
        "constraint_redundant": out.constraint_redundant,
        "solve_time_ms": solve_time * 1e3,
    }
    if mode == "randomized":
        body["seed"] = seed
        body["branch"] = out.branch
    if baseline is not None:
        bplan = score_rank(imp, baseline)
        bres = evaluate(imp, bplan)
        body["baseline"] = {
            "w": baseline.w,
            "item_ids": imp.to_caller_order(bplan),
            "revenue": bres.revenue,
            "relevance": bres.relevance,
            "relevance_ratio": bres.relevance_ratio,
        }
    return body


def handle_rank(
    payload,
    deadline: float = DEFAULT_DEADLINE,
    weight_profile: Optional[list] = None,
    received_at: Optional[float] = None,
):
    """Validate and solve one ranking request. Returns ``(status, body)``.

    ``payload`` is raw bytes/str or an already-decoded object. The deadline is
    measured from ``received_at`` (``time.perf_counter()`` clock) or from
    entry.
    """
    start = time.perf_counter() if received_at is None else received_at
    try:
        doc = loads(payload.decode("utf-8") if isinstance(payload, bytes) else payload) \
            if isinstance(payload, (bytes, str)) else payload
        if not isinstance(doc, dict):
            raise InstanceFormatError("expected an object", "<root>")
        mode = doc.get("mode", "feasible")
        if mode not in ("feasible", "randomized"):
            raise InstanceFormatError("must be 'feasible' or 'randomized'", "mode")
        seed = doc.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int) or seed < 0):
            raise InstanceFormatError("expected a nonnegative integer", "seed")
        if mode == "randomized" and seed is None:
            seed = secrets.randbits(63)
        baseline = None
        if doc.get("baseline") is not None:
            b = doc["baseline"]
            w = b.get("w", 1.0) if isinstance(b, dict) else None
            if isinstance(w, bool) or not isinstance(w, (int, float)):
                raise InstanceFormatError("expected {\"w\": number}", "baseline")
            if w < 0:
                raise InstanceValidationError("must be nonnegative", "baseline.w")
            baseline = ScoreConfig(float(w))
        imp_doc = doc.get("impression", doc)
        where = "impression." if "impression" in doc else ""
        imp = impression_from_dict(imp_doc, where, weight_profile)
        if baseline is not None and not all(it.has_rates for it in imp.items):
            raise InstanceValidationError("baseline needs items with ptr/price/take_rate/ad_rate", "baseline")
    except InstanceValidationError as exc:
        return _error(422, exc.message, exc.field)
    except InstanceFormatError as exc:
        return _error(400, exc.message, exc.field)

    remaining = deadline - (time.perf_counter() - start)
    if remaining <= 0:
        return _error(504, f"deadline of {deadline * 1e3:.1f} ms exceeded before solve")
    fut = _pool().submit(_solve, imp, mode, seed, baseline)
    try:
        body = fut.result(timeout=remaining)
    except FutureTimeout:
        fut.cancel()
        return _error(504, f"deadline of {deadline * 1e3:.1f} ms exceeded")
    if time.perf_counter() - start > deadline:
        return _error(504, f"deadline of {deadline * 1e3:.1f} ms exceeded")
    return 200, body


class _Handler(BaseHTTPRequestHandler):
    server_version = "slrank/0.1"

    def _send(self, status: int, body: dict):
        data = json.dumps(body).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):
        if self.path == "/healthz":
            self._send(200, {"status": "ok"})
        else:
            self._send(404, {"error": "not found"})

    def do_POST(self):
        received = time.perf_counter()
        if self.path != "/rank":
            self._send(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length)
        status, body = handle_rank(raw, self.server.deadline, self.server.weight_profile, received)
        self._send(status, body)

    def log_message(self, fmt, *args):
        log.debug("%s - %s", self.address_string(), fmt % args)


class RankServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, deadline: float = DEFAULT_DEADLINE, weight_profile: Optional[list] = None):
        super().__init__(address, _Handler)
        self.deadline = deadline
        self.weight_profile = weight_profile


def serve(host: str = "127.0.0.1", port: int = DEFAULT_PORT, deadline: float = DEFAULT_DEADLINE,
          weight_profile: Optional[list] = None) -> None:
    with RankServer((host, port), deadline, weight_profile) as srv:
        log.info("serving on %s:%d (deadline %.1f ms)", host, srv.server_address[1], deadline * 1e3)
        try:
            srv.serve_forever()
        except KeyboardInterrupt:
            pass
