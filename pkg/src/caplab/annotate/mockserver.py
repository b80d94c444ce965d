"""HTTP mock captioner: speaks the captioner wire format for integration runs."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


class _MockCaptionerHandler(BaseHTTPRequestHandler):
    latency = 0.0

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length).decode("utf-8"))
            image_ref = body["image_ref"]
        except (json.JSONDecodeError, KeyError):
            self.send_response(400)
            self.end_headers()
            return
        if self.latency:
            time.sleep(self.latency)
        reply = json.dumps({"caption": f"A detailed synthetic caption of {image_ref}."})
        data = reply.encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt, *args):  # quiet by default
        pass


def start_mock_captioner(port: int = 0, latency: float = 0.0):
    """Start the mock server on a background thread; returns (server, port)."""
    handler = type("Handler", (_MockCaptionerHandler,), {"latency": latency})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, server.server_address[1]


def serve_mock_captioner(port: int, latency: float = 0.0) -> None:
    handler = type("Handler", (_MockCaptionerHandler,), {"latency": latency})
    server = ThreadingHTTPServer(("127.0.0.1", port), handler)
    print(f"mock captioner listening on 127.0.0.1:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()
