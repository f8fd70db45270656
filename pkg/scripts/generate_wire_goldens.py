#!/usr/bin/env python3
"""Generate the frozen wire-format golden fixtures.

Run once (and re-run only if the fixture set changes):

    python scripts/generate_wire_goldens.py

For every case the schema is materialized in the reference protobuf
implementation (the `protobuf` package) via a dynamic descriptor pool, the
values are serialized there, and the resulting bytes are frozen into
``testdata/wire/golden.json``.  The test suite then checks our codec against
the frozen bytes without needing protobuf at test time.

The script also records two behaviors checked against the reference
implementation: rejection of field numbers in the reserved 19000..19999
range, and silent skipping of unknown tags on parse.
"""

from __future__ import annotations

import json
import struct
import sys
from pathlib import Path

from google.protobuf import descriptor_pb2, descriptor_pool, message_factory

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from modelrunner import parse_schema  # noqa: E402
from modelrunner.wire import DynamicMessage, encode_message  # noqa: E402

OUT = Path(__file__).resolve().parent.parent / "testdata" / "wire" / "golden.json"

_KIND_TO_TYPE = {
    "double": descriptor_pb2.FieldDescriptorProto.TYPE_DOUBLE,
    "float": descriptor_pb2.FieldDescriptorProto.TYPE_FLOAT,
    "int32": descriptor_pb2.FieldDescriptorProto.TYPE_INT32,
    "int64": descriptor_pb2.FieldDescriptorProto.TYPE_INT64,
    "bool": descriptor_pb2.FieldDescriptorProto.TYPE_BOOL,
    "string": descriptor_pb2.FieldDescriptorProto.TYPE_STRING,
}

_pool_counter = 0


def reference_message_class(proto_text: str, message_name: str):
    """Build the reference implementation's message class for a schema."""
    global _pool_counter
    _pool_counter += 1
    schema = parse_schema(proto_text)
    fdp = descriptor_pb2.FileDescriptorProto()
    fdp.name = f"golden_{_pool_counter}.proto"
    fdp.package = f"golden{_pool_counter}"
    fdp.syntax = "proto3"
    for msg in schema.messages:
        mt = fdp.message_type.add()
        mt.name = msg.name
        for fld in msg.fields:
            fd = mt.field.add()
            fd.name = fld.name
            fd.number = fld.tag
            fd.type = _KIND_TO_TYPE[fld.kind]
            fd.label = (descriptor_pb2.FieldDescriptorProto.LABEL_REPEATED
                        if fld.repeated
                        else descriptor_pb2.FieldDescriptorProto.LABEL_OPTIONAL)
    pool = descriptor_pool.DescriptorPool()
    file_desc = pool.Add(fdp)
    return message_factory.GetMessageClass(
        file_desc.message_types_by_name[message_name])


def f32(value: float) -> float:
    """Round a double to the nearest float32, exactly representable."""
    return struct.unpack("<f", struct.pack("<f", value))[0]


SCHEMA_ONE_DOUBLE = 'syntax = "proto3"; message M { double x = 1; }'
SCHEMA_ALL_KINDS = (
    'syntax = "proto3";\n'
    "message M {\n"
    "  double d = 1;\n"
    "  float f = 2;\n"
    "  int32 i = 3;\n"
    "  int64 l = 4;\n"
    "  bool b = 5;\n"
    "  string s = 6;\n"
    "}\n"
)
SCHEMA_REPEATED = (
    'syntax = "proto3";\n'
    "message M {\n"
    "  repeated double d = 1;\n"
    "  repeated float f = 2;\n"
    "  repeated int32 i = 3;\n"
    "  repeated int64 l = 4;\n"
    "  repeated bool b = 5;\n"
    "  repeated string s = 6;\n"
    "}\n"
)
SCHEMA_TAGS = ('syntax = "proto3"; message M '
               "{ double lo = 15; double hi = 16; double top = 536870911; }")

CASES = [
    ("double_one", SCHEMA_ONE_DOUBLE, "M", {"x": 1.0}),
    ("double_pi", SCHEMA_ONE_DOUBLE, "M", {"x": 3.141592653589793}),
    ("double_negative", SCHEMA_ONE_DOUBLE, "M", {"x": -2.5}),
    ("double_tiny", SCHEMA_ONE_DOUBLE, "M", {"x": 5e-324}),
    ("double_nan", SCHEMA_ONE_DOUBLE, "M", {"x": float("nan")}),
    ("double_neg_inf", SCHEMA_ONE_DOUBLE, "M", {"x": float("-inf")}),
    ("empty_message", SCHEMA_ALL_KINDS, "M", {}),
    ("float_exact", SCHEMA_ALL_KINDS, "M", {"f": f32(1.5)}),
    ("float_third", SCHEMA_ALL_KINDS, "M", {"f": f32(1.0 / 3.0)}),
    ("int32_150", SCHEMA_ALL_KINDS, "M", {"i": 150}),
    ("int32_minus_one", SCHEMA_ALL_KINDS, "M", {"i": -1}),
    ("int32_min", SCHEMA_ALL_KINDS, "M", {"i": -(1 << 31)}),
    ("int32_max", SCHEMA_ALL_KINDS, "M", {"i": (1 << 31) - 1}),
    ("int64_min", SCHEMA_ALL_KINDS, "M", {"l": -(1 << 63)}),
    ("int64_max", SCHEMA_ALL_KINDS, "M", {"l": (1 << 63) - 1}),
    ("bool_true", SCHEMA_ALL_KINDS, "M", {"b": True}),
    ("string_hi", SCHEMA_ALL_KINDS, "M", {"s": "hi"}),
    ("string_unicode", SCHEMA_ALL_KINDS, "M", {"s": "héllo ✓ wörld"}),
    ("all_kinds_set", SCHEMA_ALL_KINDS, "M",
     {"d": -0.125, "f": f32(2.75), "i": -42, "l": 1 << 40, "b": True,
      "s": "row"}),
    ("partial_presence", SCHEMA_ALL_KINDS, "M", {"d": 9.5, "s": "only"}),
    ("repeated_double_packed", SCHEMA_REPEATED, "M",
     {"d": [1.0, -2.0, 0.0, 3.5]}),
    ("repeated_float_packed", SCHEMA_REPEATED, "M",
     {"f": [f32(0.1), f32(-7.25), f32(1e10)]}),
    ("repeated_int32_packed", SCHEMA_REPEATED, "M",
     {"i": [1, -1, 300, -(1 << 31), (1 << 31) - 1]}),
    ("repeated_int64_packed", SCHEMA_REPEATED, "M",
     {"l": [0, -(1 << 63), (1 << 63) - 1, 150]}),
    ("repeated_bool_packed", SCHEMA_REPEATED, "M",
     {"b": [True, False, True]}),
    ("repeated_string", SCHEMA_REPEATED, "M", {"s": ["a", "", "c,d"]}),
    ("single_element_lists", SCHEMA_REPEATED, "M", {"d": [0.5], "s": ["x"]}),
    ("tag_key_widths", SCHEMA_TAGS, "M",
     {"lo": 1.0, "hi": 2.0, "top": 3.0}),
]


def encode_reference(proto_text: str, message_name: str, values: dict) -> bytes:
    cls = reference_message_class(proto_text, message_name)
    msg = cls()
    for name, value in values.items():
        if isinstance(value, list):
            getattr(msg, name).extend(value)
        else:
            setattr(msg, name, value)
    return msg.SerializeToString(deterministic=True)


def check_reserved_tag_rejected() -> bool:
    try:
        reference_message_class(
            'syntax = "proto3"; message M { double x = 19000; }', "M")
    except Exception:
        return True
    return False


def check_unknown_tag_skipped() -> bool:
    cls = reference_message_class(
        'syntax = "proto3"; message M { double y = 2; }', "M")
    msg = cls()
    msg.ParseFromString(bytes.fromhex("089601"))  # tag 1 varint, unknown
    return len(msg.ListFields()) == 0


def main() -> int:
    cases = []
    for name, proto_text, message_name, values in CASES:
        expected = encode_reference(proto_text, message_name, values)
        schema = parse_schema(proto_text)
        descriptor = next(m for m in schema.messages if m.name == message_name)
        ours = encode_message(DynamicMessage(descriptor, values))
        if ours != expected:
            print(f"MISMATCH {name}: ours={ours.hex()} ref={expected.hex()}")
            return 1
        cases.append({
            "name": name,
            "proto": proto_text,
            "message": message_name,
            "values": values,
            "encoded_hex": expected.hex(),
        })
    meta = {
        "reference": "protobuf (pip) dynamic descriptor pool, deterministic "
                     "serialization",
        "reference_rejects_reserved_tag_19000": check_reserved_tag_rejected(),
        "reference_skips_unknown_tag": check_unknown_tag_skipped(),
        "unknown_tag_case": {
            "proto": 'syntax = "proto3"; message M { double y = 2; }',
            "message": "M",
            "encoded_hex": "089601",
            "decodes_to": {},
        },
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps({"meta": meta, "cases": cases}, indent=2,
                              allow_nan=True) + "\n")
    print(f"wrote {len(cases)} cases to {OUT}")
    print(f"reserved tag rejected by reference: "
          f"{meta['reference_rejects_reserved_tag_19000']}")
    print(f"unknown tag skipped by reference: "
          f"{meta['reference_skips_unknown_tag']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
