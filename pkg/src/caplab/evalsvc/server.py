"""JSON-over-HTTP front end for the rating service.

Endpoints:

    POST /tasks                      {pairs, raters, gold_fraction, seed} -> {task_id}
    GET  /tasks/{id}/next?rater=R    -> blinded pair + progress, or {done: true}
    POST /tasks/{id}/judgments       {rater_id, pair_id, score_left, score_right,
                                      verdict, token} -> {ok, duplicate, progress}
    GET  /tasks/{id}/report          -> GSB rates + gold accuracy + per-rater

Bodies mirror the service types; the wire never carries source labels or the
canonical orientation. CORS is wide open so a browser client on another
origin can talk to it directly.
"""

from __future__ import annotations

import json
import re
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .core import EvalService, EvalServiceError, TaskPair

_TASK_ROUTE = re.compile(r"^/tasks/([^/]+)/(next|judgments|report)$")


class _EvalHandler(BaseHTTPRequestHandler):
    service: EvalService  # injected by make_server

    # -- plumbing ----------------------------------------------------------

    def _send(self, status: int, payload: dict) -> None:
        data = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self._cors()
        self.end_headers()
        self.wfile.write(data)

    def _cors(self) -> None:
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")

    def _body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        if length == 0:
            return {}
        return json.loads(self.rfile.read(length).decode("utf-8"))

    def log_message(self, fmt, *args):
        pass

    def do_OPTIONS(self):
        self.send_response(204)
        self._cors()
        self.end_headers()

    # -- routes ------------------------------------------------------------

    def do_POST(self):
        parsed = urlparse(self.path)
        try:
            if parsed.path == "/tasks":
                body = self._body()
                pairs = [
                    TaskPair(
                        pair_id=p["pair_id"],
                        image_ref=p.get("image_ref", ""),
                        caption_left=p.get("caption_left", ""),
                        caption_right=p.get("caption_right", ""),
                        source_left=p.get("source_left", ""),
                        source_right=p.get("source_right", ""),
                        expected_verdict=p.get("expected_verdict"),
                    )
                    for p in body.get("pairs", [])
                ]
                task_id = self.service.create_task(
                    pairs=pairs,
                    raters=body.get("raters", []),
                    gold_fraction=body.get("gold_fraction", 0.10),
                    seed=body.get("seed", 0),
                )
                self._send(201, {"task_id": task_id})
                return
            match = _TASK_ROUTE.match(parsed.path)
            if match and match.group(2) == "judgments":
                task_id = match.group(1)
                body = self._body()
                ack = self.service.submit(
                    task_id=task_id,
                    rater_id=body.get("rater_id", ""),
                    pair_id=body.get("pair_id", ""),
                    score_left=body.get("score_left"),
                    score_right=body.get("score_right"),
                    verdict=body.get("verdict", ""),
                    token=body.get("token", ""),
                )
                judged, total = self.service.progress(task_id, body.get("rater_id", ""))
                ack["progress"] = {"judged": judged, "total": total}
                self._send(200, ack)
                return
            self._send(404, {"error": f"no such endpoint: {parsed.path}"})
        except EvalServiceError as exc:
            self._send(400, {"error": str(exc)})
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            self._send(400, {"error": f"bad request: {exc}"})

    def do_GET(self):
        parsed = urlparse(self.path)
        match = _TASK_ROUTE.match(parsed.path)
        try:
            if match is None:
                self._send(404, {"error": f"no such endpoint: {parsed.path}"})
                return
            task_id, action = match.group(1), match.group(2)
            if action == "next":
                rater = parse_qs(parsed.query).get("rater", [""])[0]
                item = self.service.next_item(task_id, rater)
                judged, total = self.service.progress(task_id, rater)
                progress = {"judged": judged, "total": total}
                if item is None:
                    self._send(200, {"done": True, "progress": progress})
                else:
                    payload = item.wire_payload()
                    payload["done"] = False
                    payload["progress"] = progress
                    self._send(200, payload)
            elif action == "report":
                self._send(200, self.service.report(task_id))
            else:
                self._send(404, {"error": f"no such action: {action}"})
        except EvalServiceError as exc:
            self._send(400, {"error": str(exc)})


def make_server(data_dir, port: int = 0) -> tuple[ThreadingHTTPServer, int, EvalService]:
    service = EvalService(data_dir)
    handler = type("Handler", (_EvalHandler,), {"service": service})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    return server, server.server_address[1], service


def start_background(data_dir, port: int = 0):
    """For tests: serve on a daemon thread, return (server, port, service)."""
    server, bound_port, service = make_server(data_dir, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, bound_port, service


def serve(data_dir, port: int) -> None:
    server, bound_port, _ = make_server(data_dir, port)
    print(f"evalsvc listening on 127.0.0.1:{bound_port}, data in {data_dir}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
