"""HTTP face of the model runner.

Endpoints (paths are fixed):

    POST /getBinary             csv + proto parts -> serialized rows
    POST /getBinaryDefault      csv part          -> serialized rows
    POST /getBinaryJSON         json + proto parts -> serialized rows
    POST /getBinaryJSONDefault  json part          -> serialized rows
    POST /model                 model part (bundle zip or bare PPF) -> swap
    POST /model/configuration   config part -> swap
    POST /proto                 proto part  -> swap
    POST /transformCSV          csv + proto + model parts -> install + predict
    POST /transformCSVDefault   csv part  -> predict with current model
    POST /transformJSON         json + proto + model parts -> install + predict
    POST /transformJSONDefault  json part -> predict with current model
    GET  /status                serving state as JSON
    GET  /proto                 current schema in canonical proto text

Uploads are multipart/form-data with fixed part names (csv, json, proto,
model, config); binary responses are length-delimited protobuf streams with
content-type application/octet-stream.  Every data-handling response
carries ``X-Model-Epoch`` with the epoch of the one snapshot the request
used throughout.  The optional ``operation`` query parameter selects a
configured operation (default "predict"); serialization-only endpoints
accept and ignore it.

Requests run concurrently, each bound to the snapshot it took at entry;
swap endpoints funnel into the swap manager's serialized writer path, so
the service stays responsive during swaps.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from email.parser import BytesParser
from email.policy import default as _EMAIL_POLICY
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .bundle import load_bundle
from .config import ServiceConfig
from .errors import (
    BadRequest,
    InvalidUtf8,
    MessageNotFound,
    ModelRunnerError,
    PostSwapRequestError,
    PpfSyntaxError,
)
from .proto_schema import Schema, find_message, parse_schema, print_schema
from .swap import SwapManager, serve_prediction
from .tabular import csv_to_batch, json_to_batch
from .wire import encode_stream

logger = logging.getLogger("modelrunner.service")

_ZIP_MAGIC = b"PK\x03\x04"


class _Inflight:
    """Counts requests being handled, so shutdown can drain them."""

    def __init__(self):
        self._count = 0
        self._cond = threading.Condition()

    def __enter__(self):
        with self._cond:
            self._count += 1

    def __exit__(self, *exc):
        with self._cond:
            self._count -= 1
            if self._count == 0:
                self._cond.notify_all()

    def wait_idle(self, timeout: float) -> bool:
        with self._cond:
            return self._cond.wait_for(lambda: self._count == 0, timeout)


class ModelRunnerServer(ThreadingHTTPServer):
    # handler threads are daemons: idle keep-alive connections must never
    # block shutdown; in-flight work is drained via the inflight counter
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address, swap_manager: SwapManager, max_body_bytes: int):
        super().__init__(address, _Handler)
        self.swap_manager = swap_manager
        self.max_body_bytes = max_body_bytes
        self.inflight = _Inflight()

    @property
    def port(self) -> int:
        return self.server_address[1]


def build_server(config: ServiceConfig, swap_manager: SwapManager,
                 host: str = "0.0.0.0") -> ModelRunnerServer:
    return ModelRunnerServer((host, config.port), swap_manager,
                             config.max_body_bytes)


def _parse_multipart(body: bytes, content_type: str) -> dict[str, bytes]:
    if not content_type or "multipart/form-data" not in content_type:
        raise BadRequest("expected a multipart/form-data request body")
    header = f"Content-Type: {content_type}\r\n\r\n".encode("latin-1")
    message = BytesParser(policy=_EMAIL_POLICY).parsebytes(header + body)
    if not message.is_multipart():
        raise BadRequest("multipart body could not be parsed")
    parts: dict[str, bytes] = {}
    for part in message.iter_parts():
        name = part.get_param("name", header="content-disposition")
        if not name:
            raise BadRequest("multipart part without a name")
        payload = part.get_payload(decode=True)
        parts[name] = payload if payload is not None else b""
    return parts


def _text_part(parts: dict[str, bytes], name: str) -> str:
    try:
        return parts[name].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidUtf8(f"part {name!r} is not valid UTF-8: {exc}") from None


def _resolve_input_message(schema: Schema, preferred: str):
    """Pick the row message of a request-supplied schema: the configured
    input message name when present, otherwise the schema's only message."""
    try:
        return find_message(schema, preferred)
    except MessageNotFound:
        if len(schema.messages) == 1:
            return schema.messages[0]
        raise


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "modelrunner/0.1"

    # --- plumbing ------------------------------------------------------

    def log_message(self, fmt, *args):
        # client_address directly: address_string() would do reverse DNS
        logger.debug("%s %s", self.client_address[0], fmt % args)

    def _send(self, status: int, body: bytes, content_type: str,
              epoch: int | None = None):
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        if epoch is not None:
            self.send_header("X-Model-Epoch", str(epoch))
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, obj, epoch: int | None = None):
        body = json.dumps(obj).encode("utf-8")
        self._send(status, body, "application/json", epoch)

    def _read_body(self) -> bytes:
        length = self.headers.get("Content-Length")
        if length is None:
            raise BadRequest("Content-Length header required")
        try:
            length = int(length)
        except ValueError:
            raise BadRequest("malformed Content-Length") from None
        if length > self.server.max_body_bytes:
            self.close_connection = True
            self._send_json(413, {
                "error": "BodyTooLarge",
                "detail": f"request body of {length} bytes exceeds limit "
                          f"{self.server.max_body_bytes}",
            })
            raise _Handled()
        return self.rfile.read(length)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def _dispatch(self, method: str):
        split = urlsplit(self.path)
        query = parse_qs(split.query)
        operation = query.get("operation", ["predict"])[0]
        route = _ROUTES.get((method, split.path))
        self._epoch = None  # set by handlers once they bind a snapshot
        with self.server.inflight:
            try:
                if route is None:
                    if any(path == split.path for _, path in _ROUTES):
                        self._send_json(405, {"error": "MethodNotAllowed",
                                              "detail": f"{method} {split.path}"})
                    else:
                        self._send_json(404, {"error": "NotFound",
                                              "detail": split.path})
                    return
                route(self, operation)
            except _Handled:
                pass
            except PostSwapRequestError as exc:
                self._send_json(exc.http_status, {
                    "error": "PostSwapRequestError",
                    "detail": str(exc),
                    "epoch": exc.epoch,
                }, epoch=exc.epoch)
            except ModelRunnerError as exc:
                self._send_json(exc.http_status, {
                    "error": type(exc).__name__,
                    "detail": str(exc),
                }, epoch=self._epoch)
            except Exception:
                logger.exception("unhandled error on %s %s", method, split.path)
                self._send_json(500, {"error": "InternalError",
                                      "detail": "unexpected server error"})

    def _parts(self, allowed: frozenset[str], required: frozenset[str]):
        body = self._read_body()
        parts = _parse_multipart(body, self.headers.get("Content-Type", ""))
        for name in parts:
            if name not in allowed:
                raise BadRequest(f"unexpected part {name!r}; allowed: "
                                 f"{', '.join(sorted(allowed))}")
        for name in required:
            if name not in parts:
                raise BadRequest(f"missing required part {name!r}")
        return parts

    # --- serialization endpoints ----------------------------------------

    def _get_binary(self, operation: str, fmt: str, use_default: bool):
        del operation  # meaningless without a model run; accepted, ignored
        mgr: SwapManager = self.server.swap_manager
        snap = mgr.snapshot()
        self._epoch = snap.epoch
        data_part = "csv" if fmt == "csv" else "json"
        if use_default:
            parts = self._parts(frozenset({data_part}), frozenset({data_part}))
            schema = snap.bundle.schema
        else:
            parts = self._parts(frozenset({data_part, "proto"}),
                                frozenset({data_part, "proto"}))
            schema = parse_schema(_text_part(parts, "proto"))
        descriptor = _resolve_input_message(schema, snap.bundle.config.input_message)
        data = _text_part(parts, data_part)
        if fmt == "csv":
            batch = csv_to_batch(data, descriptor)
        else:
            batch = json_to_batch(data, descriptor)
        self._send(200, encode_stream(batch.rows),
                   "application/octet-stream", epoch=snap.epoch)

    def ep_get_binary(self, operation):
        self._get_binary(operation, "csv", use_default=False)

    def ep_get_binary_default(self, operation):
        self._get_binary(operation, "csv", use_default=True)

    def ep_get_binary_json(self, operation):
        self._get_binary(operation, "json", use_default=False)

    def ep_get_binary_json_default(self, operation):
        self._get_binary(operation, "json", use_default=True)

    # --- swap endpoints --------------------------------------------------

    def ep_replace_model(self, operation):
        del operation
        mgr: SwapManager = self.server.swap_manager
        parts = self._parts(frozenset({"model"}), frozenset({"model"}))
        payload = parts["model"]
        if payload[:4] == _ZIP_MAGIC:
            bundle = load_bundle(payload)
            epoch = mgr.swap_bundle(bundle)
            name = bundle.metadata.model_name
        else:
            try:
                ppf = payload.decode("utf-8")
            except UnicodeDecodeError:
                raise PpfSyntaxError(
                    "model part is neither a ZIP bundle nor UTF-8 text") from None
            epoch = mgr.swap_predictor(ppf)
            name = mgr.snapshot().bundle.metadata.model_name
        self._send_json(200, {"epoch": epoch, "model_name": name})

    def ep_replace_proto(self, operation):
        del operation
        parts = self._parts(frozenset({"proto"}), frozenset({"proto"}))
        epoch = self.server.swap_manager.swap_proto(_text_part(parts, "proto"))
        self._send_json(200, {"epoch": epoch})

    def ep_replace_config(self, operation):
        del operation
        parts = self._parts(frozenset({"config"}), frozenset({"config"}))
        epoch = self.server.swap_manager.swap_config(_text_part(parts, "config"))
        self._send_json(200, {"epoch": epoch})

    # --- prediction endpoints --------------------------------------------

    def _transform(self, operation: str, fmt: str, use_default: bool):
        mgr: SwapManager = self.server.swap_manager
        data_part = "csv" if fmt == "csv" else "json"
        if use_default:
            parts = self._parts(frozenset({data_part}), frozenset({data_part}))
            snap = mgr.snapshot()
            self._epoch = snap.epoch
            body = serve_prediction(snap.bundle, _text_part(parts, data_part),
                                    fmt, operation)
            epoch = snap.epoch
        else:
            names = frozenset({data_part, "proto", "model"})
            parts = self._parts(names, names)
            body, epoch = mgr.transform(
                _text_part(parts, data_part), fmt,
                _text_part(parts, "proto"), _text_part(parts, "model"),
                operation)
            self._epoch = epoch
        self._send(200, body, "application/octet-stream", epoch=epoch)

    def ep_transform_csv(self, operation):
        self._transform(operation, "csv", use_default=False)

    def ep_transform_csv_default(self, operation):
        self._transform(operation, "csv", use_default=True)

    def ep_transform_json(self, operation):
        self._transform(operation, "json", use_default=False)

    def ep_transform_json_default(self, operation):
        self._transform(operation, "json", use_default=True)

    # --- observability -----------------------------------------------------

    def ep_status(self, operation):
        del operation
        report = self.server.swap_manager.status()
        report["pid"] = os.getpid()
        self._send_json(200, report)

    def ep_get_proto(self, operation):
        del operation
        snap = self.server.swap_manager.snapshot()
        self._epoch = snap.epoch
        text = print_schema(snap.bundle.schema)
        self._send(200, text.encode("utf-8"), "text/plain; charset=utf-8",
                   epoch=snap.epoch)


class _Handled(Exception):
    """Response already sent (e.g. 413 before reading the body)."""


_ROUTES = {
    ("POST", "/getBinary"): _Handler.ep_get_binary,
    ("POST", "/getBinaryDefault"): _Handler.ep_get_binary_default,
    ("POST", "/getBinaryJSON"): _Handler.ep_get_binary_json,
    ("POST", "/getBinaryJSONDefault"): _Handler.ep_get_binary_json_default,
    ("POST", "/model"): _Handler.ep_replace_model,
    ("POST", "/model/configuration"): _Handler.ep_replace_config,
    ("POST", "/proto"): _Handler.ep_replace_proto,
    ("POST", "/transformCSV"): _Handler.ep_transform_csv,
    ("POST", "/transformCSVDefault"): _Handler.ep_transform_csv_default,
    ("POST", "/transformJSON"): _Handler.ep_transform_json,
    ("POST", "/transformJSONDefault"): _Handler.ep_transform_json_default,
    ("GET", "/status"): _Handler.ep_status,
    ("GET", "/proto"): _Handler.ep_get_proto,
}
