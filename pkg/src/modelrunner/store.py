"""Versioned on-disk persistence of model bundles.

Layout under the store root:

    <model_name>/manifest.json        ordered list of version records
    <model_name>/<version>/bundle.zip archive bytes

Every write goes through write-temp-then-rename on the same filesystem, and
the manifest is always updated last, so a crash at any point leaves the
store readable with either N or N+1 contiguous versions.  The manifest is
the source of truth: version directories it does not list are debris from
interrupted writes and get overwritten by the next allocation.

Versions are events, not content addresses: storing identical bytes twice
yields two versions with the same content hash.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

from .bundle import load_bundle
from .errors import (
    HashMismatch,
    InvalidBundle,
    ModelRunnerError,
    StoreIoError,
    VersionNotFound,
)

_NAME_RE = re.compile(r"[A-Za-z0-9_-]+\Z")


def _utc_now() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


@dataclass(frozen=True)
class StoredVersion:
    model_name: str
    version: int
    archive_path: str  # store-relative
    content_hash: str
    created_at: str


def _atomic_write(path: Path, data: bytes) -> None:
    """Write-temp-fsync-rename; the destination is either absent, the old
    content, or the complete new content."""
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        raise StoreIoError(f"cannot write {path}: {exc}") from None


class ArtifactStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise StoreIoError(f"cannot create store root {root}: {exc}") from None
        self._lock = threading.Lock()

    def _manifest_path(self, name: str) -> Path:
        return self.root / name / "manifest.json"

    def _check_name(self, name: str) -> None:
        if not _NAME_RE.match(name):
            raise StoreIoError(f"invalid model name {name!r}")

    def _read_manifest(self, name: str) -> list[StoredVersion]:
        path = self._manifest_path(name)
        if not path.exists():
            return []
        try:
            doc = json.loads(path.read_text("utf-8"))
            records = [StoredVersion(**entry) for entry in doc["versions"]]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise StoreIoError(f"corrupt manifest for {name!r}: {exc}") from None
        return sorted(records, key=lambda r: r.version)

    def _write_manifest(self, name: str, records: list[StoredVersion]) -> None:
        doc = {"model_name": name, "versions": [asdict(r) for r in records]}
        _atomic_write(self._manifest_path(name),
                      json.dumps(doc, indent=2).encode("utf-8"))

    def put_version(self, name: str, archive: bytes) -> StoredVersion:
        """Allocate the next version of ``name`` and persist ``archive``.

        The archive must load as a valid bundle; rejects otherwise without
        touching disk.
        """
        self._check_name(name)
        try:
            load_bundle(archive)
        except ModelRunnerError as exc:
            raise InvalidBundle(f"archive is not a valid bundle: {exc}") from None
        with self._lock:
            records = self._read_manifest(name)
            version = records[-1].version + 1 if records else 1
            vdir = self.root / name / str(version)
            try:
                vdir.mkdir(parents=True, exist_ok=True)
            except OSError as exc:
                raise StoreIoError(f"cannot create {vdir}: {exc}") from None
            _atomic_write(vdir / "bundle.zip", archive)
            record = StoredVersion(
                model_name=name,
                version=version,
                archive_path=f"{name}/{version}/bundle.zip",
                content_hash=hashlib.sha256(archive).hexdigest(),
                created_at=_utc_now(),
            )
            self._write_manifest(name, records + [record])
            return record

    def get_version(self, name: str, version: int) -> bytes:
        self._check_name(name)
        for record in self._read_manifest(name):
            if record.version == version:
                break
        else:
            raise VersionNotFound(f"{name!r} has no version {version}")
        try:
            data = (self.root / record.archive_path).read_bytes()
        except OSError as exc:
            raise StoreIoError(
                f"cannot read {record.archive_path}: {exc}") from None
        digest = hashlib.sha256(data).hexdigest()
        if digest != record.content_hash:
            raise HashMismatch(
                f"{record.archive_path}: stored hash {record.content_hash} "
                f"but content hashes to {digest}")
        return data

    def list_versions(self, name: str) -> list[StoredVersion]:
        self._check_name(name)
        return self._read_manifest(name)
