"""Shared fixtures: schema/bundle builders and an in-process service."""

from __future__ import annotations

import json
import threading
from pathlib import Path
from types import SimpleNamespace

import pytest

from modelrunner import ArtifactStore, SwapManager, assemble_bundle
from modelrunner.config import ServiceConfig
from modelrunner.service import build_server

TESTDATA = Path(__file__).resolve().parent.parent / "testdata"

PROTO_XY = (
    'syntax = "proto3";\n'
    "message DataFrame {\n"
    "  double x = 1;\n"
    "  double y = 2;\n"
    "}\n"
    "message Prediction {\n"
    "  double prediction = 1;\n"
    "}\n"
)


def linear_ppf(weights, intercept=0.0, link="identity",
               inputs=("x", "y"), output="prediction") -> str:
    return json.dumps({
        "format_version": "ppf-1",
        "kind": "linear",
        "input_fields": list(inputs),
        "output_field": output,
        "params": {"weights": list(weights), "intercept": intercept,
                   "link": link},
    })


def metadata_text(name="demo", created="2026-01-05T12:00:00Z",
                  description="fixture model") -> str:
    return json.dumps({"model_name": name, "created_at": created,
                       "description": description})


def make_bundle(proto=PROTO_XY, ppf=None, config="{}", metadata=None):
    ppf = ppf if ppf is not None else linear_ppf([2.0, 3.0], intercept=1.0)
    metadata = metadata if metadata is not None else metadata_text()
    return assemble_bundle(proto, ppf, config, metadata)


@pytest.fixture
def bundle_xy():
    return make_bundle()


@pytest.fixture
def service(tmp_path):
    """Factory starting an in-process HTTP service on an ephemeral port."""
    running = []

    def start(initial_bundle, max_body_bytes=64 * 1024 * 1024, store_dir=None):
        store = ArtifactStore(store_dir or tmp_path / f"store{len(running)}")
        manager = SwapManager(store, initial_bundle)
        server = build_server(
            ServiceConfig(port=0, max_body_bytes=max_body_bytes),
            manager, host="127.0.0.1")
        thread = threading.Thread(
            target=lambda: server.serve_forever(poll_interval=0.02),
            daemon=True)
        thread.start()
        running.append(server)
        return SimpleNamespace(
            url=f"http://127.0.0.1:{server.port}",
            manager=manager,
            server=server,
            store=store,
        )

    yield start
    for server in running:
        server.shutdown()
        server.server_close()
