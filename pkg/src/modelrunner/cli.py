"""Operator command line: launch the service, onboard bundles, trigger
swaps, run predictions, inspect state.

Exit codes: 0 success, 2 config or validation failure, 3 bind failure,
4 remote (HTTP) error, 5 response decode failure.  Results go to stdout,
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path

import requests

from .bundle import assemble_bundle, load_bundle, save_bundle
from .config import resolve_config
from .errors import ModelRunnerError, ServiceConfigError, VersionNotFound
from .proto_schema import find_message, parse_schema
from .service import build_server
from .store import ArtifactStore
from .swap import SwapManager
from .tabular import RowBatch, batch_to_csv
from .wire import decode_stream

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BIND = 3
EXIT_REMOTE = 4
EXIT_DECODE = 5

_TIMEOUT = 30


def _err(message: str) -> None:
    print(f"modelrunner: {message}", file=sys.stderr)


def _read_text(path: str) -> str:
    return Path(path).read_text("utf-8")


def _check_response(resp: requests.Response) -> None:
    if resp.status_code >= 400:
        try:
            detail = resp.json()
        except ValueError:
            detail = resp.text
        raise RuntimeError(f"server answered {resp.status_code}: {detail}")


def cmd_serve(args) -> int:
    try:
        cfg = resolve_config(args.config, port=args.port,
                             store_path=args.store,
                             initial_bundle=args.bundle,
                             max_body_bytes=args.max_body_bytes)
        store = ArtifactStore(cfg.store_path)
        initial = None
        if cfg.initial_bundle is not None:
            initial = load_bundle(Path(cfg.initial_bundle).read_bytes())
        manager = SwapManager(store, initial)
    except (ServiceConfigError, ModelRunnerError, OSError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    try:
        server = build_server(cfg, manager)
    except OSError as exc:
        _err(f"cannot bind port {cfg.port}: {exc}")
        return EXIT_BIND
    _err(f"serving on port {server.port}, store at {cfg.store_path}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        _err("shutting down")
    finally:
        server.shutdown()
        server.inflight.wait_idle(timeout=10)
        server.server_close()
    return EXIT_OK


def cmd_onboard(args) -> int:
    try:
        bundle = assemble_bundle(_read_text(args.proto), _read_text(args.ppf),
                                 _read_text(args.config),
                                 _read_text(args.metadata))
        archive = save_bundle(bundle)
    except (ModelRunnerError, OSError) as exc:
        _err(str(exc))
        return EXIT_CONFIG
    Path(args.out).write_bytes(archive)
    print(hashlib.sha256(archive).hexdigest())
    return EXIT_OK


def _post_swap(url: str, endpoint: str, files: dict) -> int:
    resp = requests.post(url.rstrip("/") + endpoint, files=files,
                         timeout=_TIMEOUT)
    _check_response(resp)
    epoch = resp.json()["epoch"]
    print(epoch)
    return EXIT_OK


def cmd_swap(args) -> int:
    try:
        if args.proto:
            return _post_swap(args.server, "/proto",
                              {"proto": _read_text(args.proto)})
        if args.config:
            return _post_swap(args.server, "/model/configuration",
                              {"config": _read_text(args.config)})
        return _post_swap(args.server, "/model",
                          {"model": Path(args.bundle).read_bytes()})
    except OSError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except (requests.RequestException, RuntimeError) as exc:
        _err(str(exc))
        return EXIT_REMOTE


def _fetch_output_descriptor(server: str):
    status = requests.get(server.rstrip("/") + "/status", timeout=_TIMEOUT)
    _check_response(status)
    output_message = status.json()["output_message"]
    proto = requests.get(server.rstrip("/") + "/proto", timeout=_TIMEOUT)
    _check_response(proto)
    return find_message(parse_schema(proto.text), output_message)


def cmd_predict(args) -> int:
    fmt = args.format
    endpoint = {"csv": "/transformCSVDefault", "json": "/transformJSONDefault"}[fmt]
    try:
        files = {fmt: _read_text(args.data)}
        if args.install:
            if not args.proto or not args.ppf:
                _err("--install requires --proto and --ppf")
                return EXIT_CONFIG
            endpoint = {"csv": "/transformCSV", "json": "/transformJSON"}[fmt]
            files["proto"] = _read_text(args.proto)
            files["model"] = _read_text(args.ppf)
    except OSError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    params = {"operation": args.operation} if args.operation else None
    try:
        resp = requests.post(args.server.rstrip("/") + endpoint, files=files,
                             params=params, timeout=_TIMEOUT)
        _check_response(resp)
        descriptor = _fetch_output_descriptor(args.server)
    except (requests.RequestException, RuntimeError) as exc:
        _err(str(exc))
        return EXIT_REMOTE
    try:
        rows = decode_stream(resp.content, descriptor)
        sys.stdout.write(batch_to_csv(RowBatch(descriptor, tuple(rows))))
    except ModelRunnerError as exc:
        _err(f"cannot decode prediction stream: {exc}")
        return EXIT_DECODE
    return EXIT_OK


def cmd_status(args) -> int:
    try:
        resp = requests.get(args.server.rstrip("/") + "/status", timeout=_TIMEOUT)
        _check_response(resp)
    except (requests.RequestException, RuntimeError) as exc:
        _err(str(exc))
        return EXIT_REMOTE
    print(json.dumps(resp.json(), indent=2))
    return EXIT_OK


def cmd_versions(args) -> int:
    try:
        records = ArtifactStore(args.store).list_versions(args.name)
    except ModelRunnerError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    print(json.dumps([asdict(r) for r in records], indent=2))
    return EXIT_OK


def cmd_rollback(args) -> int:
    try:
        archive = ArtifactStore(args.store).get_version(args.name, args.version)
    except VersionNotFound as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except ModelRunnerError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    try:
        return _post_swap(args.server, "/model", {"model": archive})
    except (requests.RequestException, RuntimeError) as exc:
        _err(str(exc))
        return EXIT_REMOTE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modelrunner",
        description="Hot-swappable model-serving microservice and client.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--config", help="properties file (default: $RUNNER_CONFIG)")
    p.add_argument("--port", type=int)
    p.add_argument("--store", help="artifact store directory")
    p.add_argument("--bundle", help="initial bundle archive")
    p.add_argument("--max-body-bytes", type=int, dest="max_body_bytes")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("onboard", help="assemble and validate a bundle archive")
    p.add_argument("--proto", required=True)
    p.add_argument("--ppf", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--metadata", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_onboard)

    p = sub.add_parser("swap", help="replace the served bundle, schema or config")
    p.add_argument("server", help="base URL, e.g. http://127.0.0.1:8334")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("bundle", nargs="?", help="bundle archive to install")
    group.add_argument("--proto", help="replace only the schema")
    group.add_argument("--config", help="replace only the config")
    p.set_defaults(func=cmd_swap)

    p = sub.add_parser("predict", help="run predictions and print CSV")
    p.add_argument("server")
    p.add_argument("data", help="csv or json file of rows")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--operation")
    p.add_argument("--install", action="store_true",
                   help="install --proto/--ppf as the new default first")
    p.add_argument("--proto")
    p.add_argument("--ppf")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("status", help="print the server status report")
    p.add_argument("server")
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("versions", help="list artifact-store versions")
    p.add_argument("--store", required=True)
    p.add_argument("name")
    p.set_defaults(func=cmd_versions)

    p = sub.add_parser("rollback", help="re-install a stored version")
    p.add_argument("--store", required=True)
    p.add_argument("--server", required=True)
    p.add_argument("name")
    p.add_argument("version", type=int)
    p.set_defaults(func=cmd_rollback)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
