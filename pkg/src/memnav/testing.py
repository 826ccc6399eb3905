"""Canned-response decider server for integration tests and offline demos."""

from __future__ import annotations

import json
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


def _make_handler(owner: "FakeDeciderServer"):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):  # noqa: N802 (http.server API)
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            try:
                owner.requests.append(json.loads(raw))
            except ValueError:
                owner.requests.append({"raw": raw.decode("utf-8", "replace")})
            if owner.delay:
                time.sleep(owner.delay)
            payload = (
                json.dumps(owner.body) if isinstance(owner.body, dict) else owner.body
            ).encode("utf-8")
            self.send_response(owner.status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):  # silence stderr chatter
            pass

    return Handler


class FakeDeciderServer:
    """Loopback HTTP server answering every POST with a fixed body.

    Use as a context manager; `url` is the endpoint to point the external
    decider at. Received request documents are kept in `requests`.
    """

    def __init__(
        self,
        body: dict | str | None = None,
        status: int = 200,
        delay: float = 0.0,
        port: int = 0,
    ):
        self.body = {"action": 0} if body is None else body
        self.status = status
        self.delay = delay
        self.requests: list[dict] = []
        self._server = ThreadingHTTPServer(("127.0.0.1", port), _make_handler(self))
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self._server.server_address
        return f"http://{host}:{port}/decide"

    def start(self) -> "FakeDeciderServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self) -> "FakeDeciderServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def run_fake_decider(port: int, action: int) -> None:
    """Blocking canned-response server for manual CLI experiments."""
    server = FakeDeciderServer({"action": action}, port=port)
    print(f"fake decider answering {{\"action\": {action}}} at {server.url}")
    try:
        server._server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server._server.server_close()
