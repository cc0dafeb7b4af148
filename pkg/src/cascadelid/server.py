"""Minimal HTTP front end for a loaded cascade.

``POST /identify`` with ``{"text": ...}`` returns the cascade decision,
``GET /healthz`` returns ``ok``. Internal stages run concurrently across
request threads; each external stage serializes its own child I/O.
"""

import json
import logging
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .cascade import run_cascade
from .errors import StageError
from .evaluation import negative_label

log = logging.getLogger(__name__)

MAX_BODY = 1 << 20


def identify(cascade, text):
    outcome = run_cascade(cascade, text)
    label = cascade.target_label if outcome.accepted else negative_label(cascade.target_label)
    return {
        "label": label,
        "p_target": outcome.trace[-1].p_target,
        "trace": [{"stage": r.name, "p_target": r.p_target, "decision": r.decision} for r in outcome.trace],
    }


def make_handler(cascade):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def _reply(self, status, body, content_type="application/json"):
            data = body.encode("utf-8") if isinstance(body, str) else body
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def _json(self, status, obj):
            self._reply(status, json.dumps(obj, ensure_ascii=False))

        def do_GET(self):
            if self.path == "/healthz":
                self._reply(200, "ok", "text/plain; charset=utf-8")
            else:
                self._json(404, {"error": "not found"})

        def do_POST(self):
            if self.path != "/identify":
                self._json(404, {"error": "not found"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
            except ValueError:
                length = -1
            if not 0 <= length <= MAX_BODY:
                self._json(400, {"error": "missing or oversized body"})
                return
            raw = self.rfile.read(length)
            try:
                body = json.loads(raw.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError):
                self._json(400, {"error": "body is not valid JSON"})
                return
            if not isinstance(body, dict) or not isinstance(body.get("text"), str):
                self._json(400, {"error": "expected an object with a string \"text\" field"})
                return
            try:
                self._json(200, identify(cascade, body["text"]))
            except StageError as exc:
                log.error("%s", exc)
                self._json(500, {"error": str(exc), "stage": exc.stage})

        def log_message(self, fmt, *args):
            log.info("%s %s", self.address_string(), fmt % args)

    return Handler


def make_server(cascade, host="127.0.0.1", port=8080):
    server = ThreadingHTTPServer((host, port), make_handler(cascade))
    server.daemon_threads = True
    return server


def serve(cascade, host="127.0.0.1", port=8080):
    server = make_server(cascade, host, port)
    log.info("listening on %s:%d", *server.server_address[:2])
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
