"""Protobuf wire-format codec for dynamically described messages.

Encoding rules (proto3 binary format, scalar subset):

* field key = varint ``(tag << 3) | wire_type``, fields emitted in ascending
  tag order so encoding is deterministic;
* ``double``/``float`` are little-endian IEEE-754 (wire types 1 / 5);
* ``int32``/``int64`` are 64-bit two's-complement varints (wire type 0), so
  negative values always occupy 10 bytes;
* ``bool`` is varint 0/1; ``string`` is length-delimited UTF-8 (wire type 2);
* repeated numeric fields are packed into one length-delimited record,
  repeated strings are one length-delimited record per element.

Decoding accepts both packed and unpacked repeated numerics, skips unknown
tags by wire type (schema drift between hot-swapped versions is expected),
and applies last-wins merge for duplicate scalar occurrences.

Messages follow proto3 presence semantics: a scalar holding its default
value (0, 0.0, false, "") is indistinguishable from an absent field, is
never emitted on the wire, and is normalized away at construction time.

Everything here is a pure function over immutable inputs; concurrent use
needs no synchronization.
"""

from __future__ import annotations

import struct
from collections.abc import Iterable, Mapping
from types import MappingProxyType

from .errors import (
    InvalidUtf8,
    MalformedVarint,
    TruncatedFrame,
    TruncatedInput,
    ValueKindMismatch,
    WireTypeMismatch,
)
from .proto_schema import FieldDescriptor, MessageDescriptor

_WT_VARINT = 0
_WT_I64 = 1
_WT_LEN = 2
_WT_I32 = 5

_SCALAR_WIRE_TYPE = {
    "double": _WT_I64,
    "float": _WT_I32,
    "int32": _WT_VARINT,
    "int64": _WT_VARINT,
    "bool": _WT_VARINT,
    "string": _WT_LEN,
}

_U64 = (1 << 64) - 1
_INT32_MIN, _INT32_MAX = -(1 << 31), (1 << 31) - 1
_INT64_MIN, _INT64_MAX = -(1 << 63), (1 << 63) - 1

_DEFAULTS = {"double": 0.0, "float": 0.0, "int32": 0, "int64": 0,
             "bool": False, "string": ""}

_pack_double = struct.Struct("<d").pack
_pack_float = struct.Struct("<f").pack
_unpack_double = struct.Struct("<d").unpack_from
_unpack_float = struct.Struct("<f").unpack_from


def _check_value(field: FieldDescriptor, value):
    """Validate one scalar element against the field kind; returns it
    coerced (ints for float kinds become floats)."""
    kind = field.kind
    if kind in ("double", "float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValueKindMismatch(
                f"field {field.name!r} expects {kind}, got {type(value).__name__}")
        return float(value)
    if kind in ("int32", "int64"):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueKindMismatch(
                f"field {field.name!r} expects {kind}, got {type(value).__name__}")
        lo, hi = (_INT32_MIN, _INT32_MAX) if kind == "int32" else (_INT64_MIN, _INT64_MAX)
        if not lo <= value <= hi:
            raise ValueKindMismatch(
                f"field {field.name!r}: {value} does not fit in {kind}")
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise ValueKindMismatch(
                f"field {field.name!r} expects bool, got {type(value).__name__}")
        return value
    # string
    if not isinstance(value, str):
        raise ValueKindMismatch(
            f"field {field.name!r} expects string, got {type(value).__name__}")
    try:
        value.encode("utf-8")
    except UnicodeEncodeError as exc:
        raise ValueKindMismatch(
            f"field {field.name!r}: string not encodable as UTF-8: {exc}") from None
    return value


class DynamicMessage:
    """A typed record bound to a :class:`MessageDescriptor`.

    ``values`` maps field name to a scalar, or to an ordered tuple for
    repeated fields.  Default-valued scalars and empty repeated fields are
    dropped at construction (proto3: absent means default).
    """

    __slots__ = ("descriptor", "_values")

    def __init__(self, descriptor: MessageDescriptor,
                 values: Mapping[str, object] | None = None):
        normalized: dict[str, object] = {}
        for name, value in (values or {}).items():
            fld = descriptor.field(name)
            if fld is None:
                raise ValueKindMismatch(
                    f"message {descriptor.name!r} has no field {name!r}")
            if fld.repeated:
                if isinstance(value, (str, bytes)) or not isinstance(value, Iterable):
                    raise ValueKindMismatch(
                        f"field {name!r} is repeated and expects a sequence")
                items = tuple(_check_value(fld, v) for v in value)
                if items:
                    normalized[name] = items
            else:
                checked = _check_value(fld, value)
                if checked != _DEFAULTS[fld.kind]:
                    normalized[name] = checked
        self.descriptor = descriptor
        self._values = normalized

    @property
    def values(self) -> Mapping[str, object]:
        return MappingProxyType(self._values)

    def get(self, name: str, default=None):
        return self._values.get(name, default)

    def __eq__(self, other):
        if not isinstance(other, DynamicMessage):
            return NotImplemented
        if self.descriptor != other.descriptor:
            return False
        if self._values.keys() != other._values.keys():
            return False
        for name, mine in self._values.items():
            fld = self.descriptor.field(name)
            theirs = other._values[name]
            if fld.repeated:
                if len(mine) != len(theirs):
                    return False
                pairs = zip(mine, theirs)
            else:
                pairs = ((mine, theirs),)
            for a, b in pairs:
                if not _scalar_equal(fld.kind, a, b):
                    return False
        return True

    def __ne__(self, other):
        result = self.__eq__(other)
        return result if result is NotImplemented else not result

    def __repr__(self):
        return f"DynamicMessage({self.descriptor.name}, {self._values!r})"


def _scalar_equal(kind: str, a, b) -> bool:
    # Floats compare by their wire bytes, so NaN payloads round-trip and
    # NaN == NaN holds for identical bits.
    if kind == "double":
        return _pack_double(a) == _pack_double(b)
    if kind == "float":
        return _pack_f32(a) == _pack_f32(b)
    return a == b


def encode_varint(value: int) -> bytes:
    """Base-128 little-endian varint of an unsigned 64-bit integer."""
    if not 0 <= value <= _U64:
        raise ValueError(f"varint value out of unsigned 64-bit range: {value}")
    out = bytearray()
    while True:
        bits = value & 0x7F
        value >>= 7
        if value:
            out.append(bits | 0x80)
        else:
            out.append(bits)
            return bytes(out)


def decode_varint(data, pos: int = 0) -> tuple[int, int]:
    """Decode a varint at ``pos``; returns (value, next position)."""
    return _read_varint(data, pos, len(data))


def _read_varint(data, pos: int, limit: int) -> tuple[int, int]:
    result = 0
    shift = 0
    for _ in range(10):
        if pos >= limit:
            raise TruncatedInput("input ends inside a varint")
        byte = data[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result & _U64, pos
        shift += 7
    raise MalformedVarint("varint longer than 10 bytes")


def _pack_f32(value: float) -> bytes:
    try:
        return _pack_float(value)
    except OverflowError:
        # finite doubles beyond float32 range round to signed infinity,
        # matching a C-style narrowing cast
        return _pack_float(float("inf") if value > 0 else float("-inf"))


def _scalar_bytes(kind: str, value) -> bytes:
    """Wire bytes of one scalar value, key excluded (also the packed form)."""
    if kind == "double":
        return _pack_double(value)
    if kind == "float":
        return _pack_f32(value)
    if kind == "int32" or kind == "int64":
        return encode_varint(value & _U64)
    if kind == "bool":
        return b"\x01" if value else b"\x00"
    raise ValueError(f"no packed form for kind {kind!r}")


def encode_message(msg: DynamicMessage) -> bytes:
    out = bytearray()
    for fld in msg.descriptor.tag_order:
        value = msg.get(fld.name)
        if value is None:
            continue
        if fld.repeated:
            if fld.kind == "string":
                key = encode_varint((fld.tag << 3) | _WT_LEN)
                for item in value:
                    data = item.encode("utf-8")
                    out += key
                    out += encode_varint(len(data))
                    out += data
            else:
                payload = b"".join(_scalar_bytes(fld.kind, v) for v in value)
                out += encode_varint((fld.tag << 3) | _WT_LEN)
                out += encode_varint(len(payload))
                out += payload
        elif fld.kind == "string":
            data = value.encode("utf-8")
            out += encode_varint((fld.tag << 3) | _WT_LEN)
            out += encode_varint(len(data))
            out += data
        else:
            out += encode_varint((fld.tag << 3) | _SCALAR_WIRE_TYPE[fld.kind])
            out += _scalar_bytes(fld.kind, value)
    return bytes(out)


def _read_scalar(data, pos: int, limit: int, kind: str):
    if kind == "double":
        if pos + 8 > limit:
            raise TruncatedInput("input ends inside a double value")
        return _unpack_double(data, pos)[0], pos + 8
    if kind == "float":
        if pos + 4 > limit:
            raise TruncatedInput("input ends inside a float value")
        return _unpack_float(data, pos)[0], pos + 4
    raw, pos = _read_varint(data, pos, limit)
    if kind == "int32":
        raw &= 0xFFFFFFFF
        return raw - (1 << 32) if raw >= (1 << 31) else raw, pos
    if kind == "int64":
        return raw - (1 << 64) if raw >= (1 << 63) else raw, pos
    if kind == "bool":
        return raw != 0, pos
    raise ValueError(f"kind {kind!r} has no varint form")


def _read_string(data, pos: int, limit: int) -> tuple[str, int]:
    length, pos = _read_varint(data, pos, limit)
    end = pos + length
    if end > limit:
        raise TruncatedInput(
            f"string of {length} bytes exceeds remaining input")
    try:
        return bytes(data[pos:end]).decode("utf-8"), end
    except UnicodeDecodeError as exc:
        raise InvalidUtf8(f"string field holds invalid UTF-8: {exc}") from None


def _skip_field(data, pos: int, limit: int, tag: int, wire_type: int) -> int:
    if wire_type == _WT_VARINT:
        _, pos = _read_varint(data, pos, limit)
        return pos
    if wire_type == _WT_I64:
        if pos + 8 > limit:
            raise TruncatedInput("input ends inside a skipped 64-bit value")
        return pos + 8
    if wire_type == _WT_I32:
        if pos + 4 > limit:
            raise TruncatedInput("input ends inside a skipped 32-bit value")
        return pos + 4
    if wire_type == _WT_LEN:
        length, pos = _read_varint(data, pos, limit)
        if pos + length > limit:
            raise TruncatedInput(
                f"skipped field of {length} bytes exceeds remaining input")
        return pos + length
    raise WireTypeMismatch(
        f"cannot skip unknown tag {tag} with unsupported wire type {wire_type}")


def decode_message(data, descriptor: MessageDescriptor) -> DynamicMessage:
    """Inverse of :func:`encode_message` on its image; tolerant of unknown
    tags and of unpacked encodings of repeated numeric fields."""
    values: dict[str, object] = {}
    repeated_acc: dict[str, list] = {}
    pos, limit = 0, len(data)
    while pos < limit:
        key, pos = _read_varint(data, pos, limit)
        tag, wire_type = key >> 3, key & 7
        fld = descriptor.by_tag.get(tag)
        if fld is None:
            pos = _skip_field(data, pos, limit, tag, wire_type)
            continue
        expected = _SCALAR_WIRE_TYPE[fld.kind]
        if fld.repeated:
            acc = repeated_acc.setdefault(fld.name, [])
            if fld.kind == "string":
                if wire_type != _WT_LEN:
                    raise WireTypeMismatch(
                        f"field {fld.name!r} (tag {tag}) expects wire type "
                        f"{_WT_LEN}, got {wire_type}")
                item, pos = _read_string(data, pos, limit)
                acc.append(item)
            elif wire_type == _WT_LEN:
                # packed record: scalars back to back until the chunk ends
                length, pos = _read_varint(data, pos, limit)
                end = pos + length
                if end > limit:
                    raise TruncatedInput(
                        f"packed field of {length} bytes exceeds remaining input")
                while pos < end:
                    item, pos = _read_scalar(data, pos, end, fld.kind)
                    acc.append(item)
            elif wire_type == expected:
                item, pos = _read_scalar(data, pos, limit, fld.kind)
                acc.append(item)
            else:
                raise WireTypeMismatch(
                    f"field {fld.name!r} (tag {tag}) expects wire type "
                    f"{expected} or packed {_WT_LEN}, got {wire_type}")
        else:
            if wire_type != expected:
                raise WireTypeMismatch(
                    f"field {fld.name!r} (tag {tag}) expects wire type "
                    f"{expected}, got {wire_type}")
            if fld.kind == "string":
                item, pos = _read_string(data, pos, limit)
            else:
                item, pos = _read_scalar(data, pos, limit, fld.kind)
            values[fld.name] = item  # duplicate scalar: last wins
    values.update(repeated_acc)
    return DynamicMessage(descriptor, values)


def encode_stream(batch: Iterable[DynamicMessage]) -> bytes:
    """Length-delimited concatenation: ``varint(len)`` + message bytes per
    row, preserving order.  All messages must share one descriptor."""
    parts: list[bytes] = []
    descriptor = None
    for msg in batch:
        if descriptor is None:
            descriptor = msg.descriptor
        elif msg.descriptor != descriptor:
            raise ValueKindMismatch(
                "stream messages must share a single descriptor")
        body = encode_message(msg)
        parts.append(encode_varint(len(body)))
        parts.append(body)
    return b"".join(parts)


def decode_stream(data, descriptor: MessageDescriptor) -> list[DynamicMessage]:
    messages: list[DynamicMessage] = []
    pos, limit = 0, len(data)
    while pos < limit:
        try:
            length, pos = _read_varint(data, pos, limit)
        except TruncatedInput as exc:
            raise TruncatedFrame(f"stream ends inside a frame header: {exc}") from None
        end = pos + length
        if end > limit:
            raise TruncatedFrame(
                f"frame of {length} bytes exceeds remaining {limit - pos} bytes")
        messages.append(decode_message(bytes(data[pos:end]), descriptor))
        pos = end
    return messages
