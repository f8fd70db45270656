"""Service configuration: properties file, environment, flag overrides.

The config file is plain ``key=value`` lines (``#`` comments and blank
lines allowed) with four recognised keys:

    server.port=8334
    store.path=./store
    bundle.initial=./bundle.zip
    limits.max_body_bytes=67108864

``RUNNER_CONFIG`` names the file when no explicit path is given; flag
values override file values.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .errors import ServiceConfigError

DEFAULT_PORT = 8334
DEFAULT_MAX_BODY = 64 * 1024 * 1024

_KEYS = ("server.port", "store.path", "bundle.initial", "limits.max_body_bytes")


@dataclass
class ServiceConfig:
    port: int = DEFAULT_PORT
    store_path: Path = Path("store")
    initial_bundle: Path | None = None
    max_body_bytes: int = DEFAULT_MAX_BODY


def load_properties(path: str | Path) -> dict[str, str]:
    try:
        text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise ServiceConfigError(f"cannot read config file {path}: {exc}") from None
    props: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ServiceConfigError(
                f"{path}:{number}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _KEYS:
            raise ServiceConfigError(f"{path}:{number}: unknown key {key!r}")
        props[key] = value.strip()
    return props


def _parse_int(value: str, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ServiceConfigError(f"{what} must be an integer, got {value!r}") from None


def resolve_config(config_path: str | None = None, *,
                   port: int | None = None,
                   store_path: str | None = None,
                   initial_bundle: str | None = None,
                   max_body_bytes: int | None = None) -> ServiceConfig:
    path = config_path or os.environ.get("RUNNER_CONFIG")
    props = load_properties(path) if path else {}

    cfg = ServiceConfig()
    if "server.port" in props:
        cfg.port = _parse_int(props["server.port"], "server.port")
    if "store.path" in props:
        cfg.store_path = Path(props["store.path"])
    if "bundle.initial" in props:
        cfg.initial_bundle = Path(props["bundle.initial"])
    if "limits.max_body_bytes" in props:
        cfg.max_body_bytes = _parse_int(props["limits.max_body_bytes"],
                                        "limits.max_body_bytes")

    if port is not None:
        cfg.port = port
    if store_path is not None:
        cfg.store_path = Path(store_path)
    if initial_bundle is not None:
        cfg.initial_bundle = Path(initial_bundle)
    if max_body_bytes is not None:
        cfg.max_body_bytes = max_body_bytes

    if not 1 <= cfg.port <= 65535:
        raise ServiceConfigError(f"port {cfg.port} outside 1..65535")
    if cfg.max_body_bytes < 1:
        raise ServiceConfigError("limits.max_body_bytes must be positive")
    return cfg
