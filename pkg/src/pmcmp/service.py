"""HTTP service exposing the five-endpoint batch-comparison interface.

    POST /experiments/setup            -> 303 redirect to the upload path
    POST /experiments/structures/[id]  -> 200, HTML link to the uploaded file
    GET  /experiments/start/[id]       -> 200 OK
    GET  /experiments/status/[id]      -> 200, status in plain text
    GET  /experiments/download/[id]    -> 200, results file
                                          (?histograms=1 for histogram data)

Requests are handled on one thread each; anything long-running is delegated
to the scheduler queue, so the service never blocks a request on comparison
work. Built on the stdlib HTTP server: the only non-trivial protocol work
is multipart/form-data parsing, which reuses the stdlib email parser.
"""

from __future__ import annotations

import json
import logging
import re
import threading
from email import policy
from email.parser import BytesParser
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .engine import Engine
from .errors import (
    CapExceededError,
    EntityTooLargeError,
    FormatError,
    MultiChainError,
    NotFoundError,
    PmCmpError,
    StateError,
    TooFewStructuresError,
)
from .experiment import TERMINAL_STATES
from .measures import ComparisonMode, ScaleMode, parse_measures
from .store import STRUCTURE_BODY_LIMIT

logger = logging.getLogger("pmcmp.service")

_ROUTE = re.compile(r"^/experiments/(setup|structures|start|status|download)(?:/([A-Za-z0-9._-]+))?$")

_MAX_REQUEST_BODY = 8 * STRUCTURE_BODY_LIMIT


class ApiError(Exception):
    def __init__(self, http_status: int, code: str, message: str):
        super().__init__(message)
        self.http_status = http_status
        self.code = code
        self.message = message


def _api_error(exc: Exception) -> ApiError:
    if isinstance(exc, ApiError):
        return exc
    if isinstance(exc, NotFoundError):
        return ApiError(404, exc.code, str(exc))
    if isinstance(exc, EntityTooLargeError):
        return ApiError(413, exc.code, str(exc))
    if isinstance(exc, StateError):
        return ApiError(409, exc.code, str(exc))
    if isinstance(
        exc,
        (FormatError, MultiChainError, TooFewStructuresError, CapExceededError),
    ):
        return ApiError(400, exc.code, str(exc))
    if isinstance(exc, PmCmpError):
        return ApiError(500, exc.code, str(exc))
    logger.exception("unhandled service error")
    return ApiError(500, "INTERNAL", str(exc))


def parse_multipart(body: bytes, content_type: str) -> list[tuple[str, str | None, bytes]]:
    """(field name, filename, data) triples from a multipart/form-data body."""
    header = f"Content-Type: {content_type}\r\nMIME-Version: 1.0\r\n\r\n".encode("ascii")
    message = BytesParser(policy=policy.HTTP).parsebytes(header + body)
    if not message.is_multipart():
        raise ApiError(400, "BAD_MULTIPART", "body is not multipart/form-data")
    parts = []
    for part in message.iter_parts():
        disposition = part.get("Content-Disposition", "")
        if "form-data" not in disposition:
            continue
        name = part.get_param("name", header="content-disposition")
        filename = part.get_filename()
        payload = part.get_payload(decode=True)
        if payload is None:
            payload = b""
        parts.append((name or "", filename, payload))
    return parts


def _sanitize_filename(label: str) -> str:
    cleaned = re.sub(r"[^A-Za-z0-9._-]+", "_", label).strip("._") or "results"
    return cleaned


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "pm-cmp/0.1"
    engine: Engine  # bound by make_server

    # -- helpers -------------------------------------------------------------

    def _send(
        self,
        status: int,
        body: bytes,
        content_type: str = "text/plain; charset=utf-8",
        extra_headers: dict | None = None,
    ) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        for name, value in (extra_headers or {}).items():
            self.send_header(name, value)
        self.end_headers()
        self.wfile.write(body)

    def _send_error(self, err: ApiError) -> None:
        body = json.dumps({"code": err.code, "message": err.message}).encode("utf-8")
        self._send(err.http_status, body, "application/json")

    def _read_body(self) -> bytes:
        length = int(self.headers.get("Content-Length", "0") or "0")
        if length > _MAX_REQUEST_BODY:
            raise ApiError(413, "ENTITY_TOO_LARGE", "request body too large")
        return self.rfile.read(length)

    def log_message(self, fmt, *args):  # quiet by default
        logger.debug("%s - %s", self.address_string(), fmt % args)

    # -- dispatch ------------------------------------------------------------

    def do_POST(self) -> None:
        try:
            path = urlsplit(self.path).path
            match = _ROUTE.match(path)
            if match is None:
                raise ApiError(404, "NOT_FOUND", f"no such resource: {path}")
            action, exp_id = match.groups()
            if action == "setup" and exp_id is None:
                self._handle_setup()
            elif action == "structures" and exp_id is not None:
                self._handle_upload(exp_id)
            else:
                raise ApiError(404, "NOT_FOUND", f"no such resource: {path}")
        except Exception as exc:  # every failure maps to one JSON error body
            self._send_error(_api_error(exc))

    def do_GET(self) -> None:
        try:
            split = urlsplit(self.path)
            match = _ROUTE.match(split.path)
            if match is None:
                raise ApiError(404, "NOT_FOUND", f"no such resource: {split.path}")
            action, exp_id = match.groups()
            if exp_id is None:
                raise ApiError(404, "NOT_FOUND", f"no such resource: {split.path}")
            if action == "start":
                self._handle_start(exp_id)
            elif action == "status":
                self._handle_status(exp_id)
            elif action == "download":
                query = parse_qs(split.query)
                self._handle_download(exp_id, query)
            else:
                raise ApiError(404, "NOT_FOUND", f"no such resource: {split.path}")
        except Exception as exc:
            self._send_error(_api_error(exc))

    # -- endpoints -------------------------------------------------------------

    def _form_fields(self) -> dict[str, list[str]]:
        content_type = self.headers.get("Content-Type", "")
        body = self._read_body()
        if content_type.startswith("application/x-www-form-urlencoded") or not content_type:
            return parse_qs(body.decode("utf-8"), keep_blank_values=True)
        if content_type.startswith("multipart/form-data"):
            fields: dict[str, list[str]] = {}
            for name, _filename, data in parse_multipart(body, content_type):
                fields.setdefault(name, []).append(data.decode("utf-8"))
            return fields
        raise ApiError(400, "BAD_REQUEST", f"unsupported content type {content_type}")

    def _handle_setup(self) -> None:
        fields = self._form_fields()
        label = (fields.get("label") or [""])[0].strip()
        if not label:
            raise ApiError(400, "MISSING_LABEL", "label must be non-empty")

        raw_measures: list[str] = []
        for value in fields.get("measures", []):
            raw_measures.extend(v for v in value.split(",") if v.strip())
        if not raw_measures:
            raise ApiError(400, "EMPTY_MEASURES", "select at least one measure")
        try:
            measures = parse_measures(raw_measures)
        except ValueError as exc:
            raise ApiError(400, "UNKNOWN_MEASURE", str(exc)) from None

        mode_raw = (fields.get("mode") or [""])[0]
        try:
            mode = ComparisonMode(mode_raw)
        except ValueError:
            raise ApiError(
                400, "UNKNOWN_MODE",
                f"mode must be one of {[m.value for m in ComparisonMode]}, got {mode_raw!r}",
            ) from None

        scale_raw = (fields.get("scale") or [""])[0]
        try:
            scale = ScaleMode(scale_raw)
        except ValueError:
            raise ApiError(
                400, "UNKNOWN_SCALE",
                f"scale must be one of {[s.value for s in ScaleMode]}, got {scale_raw!r}",
            ) from None

        exp_id = self.engine.create_experiment(label, measures, mode, scale)
        location = f"/experiments/structures/{exp_id}"
        self._send(
            303,
            f"see {location}\n".encode("utf-8"),
            extra_headers={"Location": location},
        )

    def _handle_upload(self, exp_id: str) -> None:
        content_type = self.headers.get("Content-Type", "")
        if not content_type.startswith("multipart/form-data"):
            raise ApiError(400, "BAD_REQUEST", "upload must be multipart/form-data")
        body = self._read_body()
        file_part = None
        for name, filename, data in parse_multipart(body, content_type):
            if name == "file":
                file_part = (filename or "model.pdb", data)
                break
        if file_part is None:
            raise ApiError(400, "MISSING_FILE", "multipart field 'file' is required")
        filename, data = file_part
        if len(data) > STRUCTURE_BODY_LIMIT:
            raise ApiError(
                413, "ENTITY_TOO_LARGE",
                f"{filename}: {len(data)} bytes exceeds the {STRUCTURE_BODY_LIMIT}-byte limit",
            )
        ref = self.engine.add_structure(exp_id, filename, data)
        html = (
            f'<a href="/experiments/structures/{exp_id}">{ref.name}</a>'
        ).encode("utf-8")
        self._send(200, html, "text/html; charset=utf-8")

    def _handle_start(self, exp_id: str) -> None:
        self.engine.start_experiment(exp_id)
        self._send(200, b"OK\n")

    def _handle_status(self, exp_id: str) -> None:
        line = self.engine.status_line(exp_id)
        self._send(200, (line + "\n").encode("utf-8"))

    def _handle_download(self, exp_id: str, query: dict) -> None:
        exp = self.engine.experiment(exp_id)
        if exp.state not in TERMINAL_STATES:
            raise ApiError(
                409, "NOT_FINISHED",
                f"experiment status: {self.engine.status_line(exp_id)}",
            )
        if query.get("histograms", ["0"])[0] in ("1", "true", "yes"):
            body = self.engine.histograms_bytes(exp_id)
            self._send(200, body, "application/json")
            return
        body = self.engine.results_bytes(exp_id)
        filename = _sanitize_filename(exp.config.label) + ".tsv"
        self._send(
            200,
            body,
            "text/tab-separated-values; charset=utf-8",
            {"Content-Disposition": f'attachment; filename="{filename}"'},
        )


def make_server(engine: Engine, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    """Bound (not yet serving) HTTP server; port 0 picks a free port."""
    handler = type("BoundHandler", (_Handler,), {"engine": engine})
    server = ThreadingHTTPServer((host, port), handler)
    server.daemon_threads = True
    return server


class ServiceThread:
    """Run a server in a background thread; used by tests and the bot harness."""

    def __init__(self, engine: Engine, host: str = "127.0.0.1", port: int = 0):
        self.engine = engine
        self.server = make_server(engine, host, port)
        self._thread = threading.Thread(
            target=self.server.serve_forever, name="pmcmp-http", daemon=True
        )

    @property
    def address(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "ServiceThread":
        self.engine.start()
        self._thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.server.shutdown()
        self.server.server_close()
        self.engine.stop()
