"""Live serving state with atomic, zero-downtime hot swaps.

The design is publish-by-atomic-reference: requests call :meth:`snapshot`
once at entry and use that immutable (epoch, bundle) pair for their whole
lifetime, while swaps build a fully validated candidate bundle off to the
side and publish it with a single reference assignment.  Readers never
block writers; writers are serialized by one lock and each validates its
candidate against the exact state it replaces.

A successful swap archives the *outgoing* bundle to the artifact store
before publishing, so every bundle that was ever in production stays
retrievable; a store failure aborts the swap.  Failed swaps of any kind are
exact no-ops: epoch, snapshot, history and store are untouched.

No similarity between old and new bundles is required: replacing a model
with a newer version, with a schema-tweaked variant, or with something
entirely unrelated is the same operation.
"""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass

from .bundle import ModelBundle, assemble_bundle, save_bundle
from .errors import NotInitialized, PostSwapRequestError, UnknownOperation
from .predictor import predict_batch
from .proto_schema import find_message
from .store import ArtifactStore, _utc_now
from .tabular import csv_to_batch, json_to_batch
from .wire import encode_stream

DEFAULT_CONFIG_TEXT = "{}"


@dataclass(frozen=True)
class ServingSnapshot:
    epoch: int
    bundle: ModelBundle


@dataclass(frozen=True)
class HistoryEntry:
    """One successful swap.  ``version`` is the artifact-store version the
    replaced bundle was archived under (beside its own model name)."""
    epoch: int
    model_name: str
    version: int
    swap_kind: str
    timestamp: str


def serve_prediction(bundle: ModelBundle, data: str, fmt: str,
                     operation: str = "predict") -> bytes:
    """Run the full pipeline for one request against one bundle: parse the
    tabular payload, predict, and encode the prediction stream."""
    input_desc = find_message(bundle.schema, bundle.config.input_message)
    output_desc = find_message(bundle.schema, bundle.config.output_message)
    output_field = bundle.config.operations.get(operation)
    if output_field is None:
        available = ", ".join(sorted(bundle.config.operations))
        raise UnknownOperation(
            f"operation {operation!r} not configured; available: {available}")
    if fmt == "csv":
        batch = csv_to_batch(data, input_desc)
    else:
        batch = json_to_batch(data, input_desc)
    result = predict_batch(bundle.predictor, batch, output_desc,
                           output_field=output_field)
    return encode_stream(result.rows)


class SwapManager:
    def __init__(self, store: ArtifactStore,
                 initial: ModelBundle | None = None):
        self._store = store
        self._write_lock = threading.Lock()
        self._history: list[HistoryEntry] = []
        self._current: ServingSnapshot | None = (
            ServingSnapshot(0, initial) if initial is not None else None)

    def snapshot(self) -> ServingSnapshot:
        """The currently published snapshot; callers hold it for the whole
        request even if swaps land meanwhile."""
        snap = self._current
        if snap is None:
            raise NotInitialized(
                "no model installed; start with an initial bundle or POST one "
                "to /model")
        return snap

    def _require_current(self) -> ServingSnapshot:
        snap = self._current
        if snap is None:
            raise NotInitialized("no model installed")
        return snap

    def _install(self, new: ModelBundle, swap_kind: str) -> int:
        # caller holds the write lock
        old = self._current
        if old is None:
            self._current = ServingSnapshot(0, new)
            return 0
        stored = self._store.put_version(old.bundle.metadata.model_name,
                                         save_bundle(old.bundle))
        snap = ServingSnapshot(old.epoch + 1, new)
        self._history.append(HistoryEntry(
            epoch=snap.epoch,
            model_name=new.metadata.model_name,
            version=stored.version,
            swap_kind=swap_kind,
            timestamp=_utc_now(),
        ))
        self._current = snap  # the single atomic publication point
        return snap.epoch

    def swap_bundle(self, new: ModelBundle, swap_kind: str = "model") -> int:
        """Publish a fully validated bundle; returns the new epoch.  On an
        uninitialized manager this installs the first bundle at epoch 0."""
        with self._write_lock:
            return self._install(new, swap_kind)

    def swap_proto(self, proto: str) -> int:
        """Replace only the schema, revalidating the current predictor and
        config against it."""
        with self._write_lock:
            current = self._require_current().bundle
            candidate = assemble_bundle(proto, current.files.ppf,
                                        current.files.config,
                                        current.files.metadata)
            return self._install(candidate, "proto")

    def swap_predictor(self, ppf: str) -> int:
        """Replace only the model, reusing the current schema and config."""
        with self._write_lock:
            current = self._require_current().bundle
            candidate = assemble_bundle(current.files.proto, ppf,
                                        current.files.config,
                                        current.files.metadata)
            return self._install(candidate, "model")

    def swap_config(self, config: str) -> int:
        with self._write_lock:
            current = self._require_current().bundle
            candidate = assemble_bundle(current.files.proto,
                                        current.files.ppf,
                                        config,
                                        current.files.metadata)
            return self._install(candidate, "config")

    def transform(self, data: str, fmt: str, proto: str, ppf: str,
                  operation: str = "predict") -> tuple[bytes, int]:
        """Install the supplied schema + model as the new default, then
        answer the request with it.

        Validation failures reject without installing.  Once the install
        has happened it stands even if the prediction step fails; such
        failures surface as :class:`PostSwapRequestError` carrying the new
        epoch.
        """
        with self._write_lock:
            current = self._require_current().bundle
            candidate = assemble_bundle(proto, ppf, DEFAULT_CONFIG_TEXT,
                                        current.files.metadata)
            epoch = self._install(candidate, "transform")
        try:
            body = serve_prediction(candidate, data, fmt, operation)
        except Exception as exc:
            raise PostSwapRequestError(epoch, exc) from exc
        return body, epoch

    def status(self) -> dict:
        """Epoch, model identity, schema names and hash, history tail."""
        snap = self._current
        history = [asdict(e) for e in self._history[-20:]]
        if snap is None:
            return {
                "epoch": None,
                "model_name": None,
                "input_message": None,
                "output_message": None,
                "schema_hash": None,
                "history": history,
            }
        bundle = snap.bundle
        return {
            "epoch": snap.epoch,
            "model_name": bundle.metadata.model_name,
            "input_message": bundle.config.input_message,
            "output_message": bundle.config.output_message,
            "schema_hash": bundle.schema.source_hash,
            "history": history,
        }
