"""The model bundle: the versioned deployable unit.

A bundle is a ZIP archive with exactly four members at its root:

    model.proto         proto3 schema (see proto_schema)
    predictor.ppf.json  portable predictor document (see predictor)
    config.json         serving config: input/output message names, operations
    metadata.json       model name, creation time, description

Validation is atomic: either every member parses and every cross-reference
(config message names, predictor feature and output fields) resolves, or the
whole bundle is rejected.  Bundles keep their raw member texts so saving a
loaded bundle reproduces it byte for byte.
"""

from __future__ import annotations

import io
import json
import re
import zipfile
from dataclasses import dataclass

from .errors import (
    ArchiveMalformed,
    ConfigError,
    CrossValidationError,
    MemberMissing,
    MetadataError,
)
from .predictor import NUMERIC_KINDS, Predictor, load_predictor
from .proto_schema import MessageDescriptor, Schema, find_message, parse_schema

MEMBER_PROTO = "model.proto"
MEMBER_PPF = "predictor.ppf.json"
MEMBER_CONFIG = "config.json"
MEMBER_METADATA = "metadata.json"
MEMBERS = (MEMBER_PROTO, MEMBER_PPF, MEMBER_CONFIG, MEMBER_METADATA)

DEFAULT_INPUT_MESSAGE = "DataFrame"
DEFAULT_OUTPUT_MESSAGE = "Prediction"
DEFAULT_OPERATION = "predict"

_NAME_RE = re.compile(r"[A-Za-z0-9_-]+\Z")


@dataclass(frozen=True)
class BundleMetadata:
    model_name: str
    created_at: str = ""
    description: str = ""


@dataclass(frozen=True)
class ModelConfig:
    input_message: str = DEFAULT_INPUT_MESSAGE
    output_message: str = DEFAULT_OUTPUT_MESSAGE
    operations: dict[str, str] = None  # operation name -> output field

    def __post_init__(self):
        if self.operations is None:
            object.__setattr__(self, "operations", {})


@dataclass(frozen=True)
class BundleFiles:
    """Raw member texts, preserved verbatim for exact round-trips."""
    proto: str
    ppf: str
    config: str
    metadata: str


@dataclass(frozen=True)
class ModelBundle:
    metadata: BundleMetadata
    schema: Schema
    predictor: Predictor
    config: ModelConfig
    files: BundleFiles


def parse_metadata(text: str) -> BundleMetadata:
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise MetadataError(f"metadata.json: {exc}") from None
    if not isinstance(doc, dict):
        raise MetadataError("metadata.json must be an object")
    extra = set(doc) - {"model_name", "created_at", "description"}
    if extra:
        raise MetadataError(f"metadata.json: unknown key {sorted(extra)[0]!r}")
    name = doc.get("model_name")
    if not isinstance(name, str) or not _NAME_RE.match(name):
        raise MetadataError(
            "metadata.json: model_name must match [A-Za-z0-9_-]+")
    created = doc.get("created_at", "")
    description = doc.get("description", "")
    if not isinstance(created, str) or not isinstance(description, str):
        raise MetadataError(
            "metadata.json: created_at and description must be strings")
    return BundleMetadata(name, created, description)


def parse_config(text: str, predictor: Predictor) -> ModelConfig:
    """Parse config.json; omitted keys fall back to documented defaults and
    the default operation targets the predictor's own output field."""
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise ConfigError(f"config.json: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config.json must be an object")
    extra = set(doc) - {"input_message", "output_message", "operations"}
    if extra:
        raise ConfigError(f"config.json: unknown key {sorted(extra)[0]!r}")
    input_message = doc.get("input_message", DEFAULT_INPUT_MESSAGE)
    output_message = doc.get("output_message", DEFAULT_OUTPUT_MESSAGE)
    if not isinstance(input_message, str) or not isinstance(output_message, str):
        raise ConfigError("config.json: message names must be strings")
    operations = doc.get("operations")
    if operations is None:
        operations = {DEFAULT_OPERATION: predictor.output_field}
    else:
        if not isinstance(operations, dict) or not all(
                isinstance(k, str) and k and isinstance(v, str) and v
                for k, v in operations.items()):
            raise ConfigError(
                "config.json: operations must map operation names to field names")
        if DEFAULT_OPERATION not in operations:
            raise ConfigError(
                f"config.json: operations must contain {DEFAULT_OPERATION!r}")
        operations = dict(operations)
    return ModelConfig(input_message, output_message, operations)


def _cross_validate(schema: Schema, predictor: Predictor,
                    config: ModelConfig) -> None:
    def resolve(name: str) -> MessageDescriptor:
        try:
            return find_message(schema, name)
        except Exception as exc:
            raise CrossValidationError(str(exc)) from None

    input_msg = resolve(config.input_message)
    output_msg = resolve(config.output_message)

    for name in predictor.input_fields:
        fld = input_msg.field(name)
        if fld is None:
            raise CrossValidationError(
                f"predictor input field {name!r} missing from message "
                f"{input_msg.name!r}")
        if fld.repeated or fld.kind not in NUMERIC_KINDS:
            raise CrossValidationError(
                f"predictor input field {name!r} must be a numeric scalar, "
                f"found {'repeated ' if fld.repeated else ''}{fld.kind}")

    targets = {predictor.output_field, *config.operations.values()}
    for name in sorted(targets):
        fld = output_msg.field(name)
        if fld is None or fld.repeated or fld.kind != "double":
            raise CrossValidationError(
                f"output field {name!r} must exist in message "
                f"{output_msg.name!r} as a non-repeated double")


def assemble_bundle(proto: str, ppf: str, config: str, metadata: str) -> ModelBundle:
    """Build and fully validate a bundle from its four member texts."""
    schema = parse_schema(proto)
    predictor = load_predictor(ppf)
    meta = parse_metadata(metadata)
    cfg = parse_config(config, predictor)
    _cross_validate(schema, predictor, cfg)
    return ModelBundle(meta, schema, predictor, cfg,
                       BundleFiles(proto, ppf, config, metadata))


def load_bundle(archive: bytes) -> ModelBundle:
    try:
        zf = zipfile.ZipFile(io.BytesIO(archive))
    except zipfile.BadZipFile as exc:
        raise ArchiveMalformed(f"not a ZIP archive: {exc}") from None
    with zf:
        names = zf.namelist()
        for member in MEMBERS:
            if member not in names:
                raise MemberMissing(f"bundle archive is missing {member!r}")
        extra = [n for n in names if n not in MEMBERS]
        if extra:
            raise ArchiveMalformed(f"unexpected archive member {extra[0]!r}")
        texts = []
        for member in MEMBERS:
            raw = zf.read(member)
            try:
                texts.append(raw.decode("utf-8"))
            except UnicodeDecodeError as exc:
                raise ArchiveMalformed(
                    f"member {member!r} is not valid UTF-8: {exc}") from None
    return assemble_bundle(*texts)


def save_bundle(bundle: ModelBundle) -> bytes:
    """Deterministic archive: fixed member order, zeroed timestamps, no
    compression, so identical bundles serialize to identical bytes."""
    buffer = io.BytesIO()
    texts = (bundle.files.proto, bundle.files.ppf,
             bundle.files.config, bundle.files.metadata)
    with zipfile.ZipFile(buffer, "w", zipfile.ZIP_STORED) as zf:
        for member, text in zip(MEMBERS, texts):
            info = zipfile.ZipInfo(member, date_time=(1980, 1, 1, 0, 0, 0))
            info.external_attr = 0o644 << 16
            zf.writestr(info, text)
    return buffer.getvalue()
