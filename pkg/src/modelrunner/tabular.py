"""CSV and JSON adapters that turn tabular payloads into message batches.

Column-mapping rules for CSV: if the first record's cells are exactly the
schema's field names (any order), it is a header and columns map by name;
otherwise columns map positionally to the fields in ascending tag order.
Unlike the wire codec's skip-unknown policy, unknown columns and keys here
are hard errors: tabular input mistakes are user mistakes, not version
drift.  Every error message names the offending row/column (CSV, rows
numbered from 1) or path (JSON).

Floats render in their shortest round-trip decimal form; NaN and the
infinities spell ``NaN``/``Infinity``/``-Infinity``.  Decimal text carries
no NaN sign or payload bits, so any NaN canonicalizes on the way through
(the binary wire format, by contrast, preserves it verbatim).
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass

from .errors import (
    ArrayForScalarField,
    CoercionError,
    ColumnCountMismatch,
    HeaderFieldUnknown,
    JsonSyntaxError,
    RepeatedFieldUnsupported,
    UnknownKey,
)
from .proto_schema import FieldDescriptor, MessageDescriptor
from .wire import DynamicMessage

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_INT32_RANGE = (-(1 << 31), (1 << 31) - 1)
_INT64_RANGE = (-(1 << 63), (1 << 63) - 1)
# largest magnitude at which every integral double can be printed as an int
# and re-parsed without loss
_EXACT_INT_BOUND = float(1 << 53)


@dataclass(frozen=True)
class RowBatch:
    descriptor: MessageDescriptor
    rows: tuple[DynamicMessage, ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        for row in self.rows:
            if row.descriptor != self.descriptor:
                raise ValueError("all rows of a batch must share the descriptor")

    def __len__(self):
        return len(self.rows)


def format_float(value: float) -> str:
    """Shortest decimal text that parses back to the same double."""
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "Infinity" if value > 0 else "-Infinity"
    if value.is_integer() and abs(value) <= _EXACT_INT_BOUND:
        return str(int(value))
    return repr(value)


def _reject_repeated(descriptor: MessageDescriptor) -> None:
    for fld in descriptor.fields:
        if fld.repeated:
            raise RepeatedFieldUnsupported(
                f"field {fld.name!r} is repeated; CSV cannot express lists")


def _coerce_cell(fld: FieldDescriptor, cell: str, row: int):
    kind = fld.kind
    if kind == "string":
        return cell
    err = CoercionError(
        f"row {row}, column {fld.name!r}: cannot parse {cell!r} as {kind}")
    if kind in ("double", "float"):
        if "_" in cell:
            raise err
        try:
            return float(cell)
        except ValueError:
            raise err from None
    if kind == "bool":
        if cell == "true":
            return True
        if cell == "false":
            return False
        raise err
    # int32 / int64
    if "_" in cell:
        raise err
    try:
        value = int(cell, 10)
    except ValueError:
        raise err from None
    lo, hi = _INT32_RANGE if kind == "int32" else _INT64_RANGE
    if not lo <= value <= hi:
        raise CoercionError(
            f"row {row}, column {fld.name!r}: {value} does not fit in {kind}")
    return value


def _detect_header(first: list[str], descriptor: MessageDescriptor) -> bool:
    """True when the first record is exactly the field-name set.

    A record that merely *looks* like a header (identifiers, at least one of
    which names a schema field) is rejected loudly instead of being parsed
    as data.
    """
    names = {f.name for f in descriptor.fields}
    if len(first) == len(set(first)) and set(first) == names:
        return True
    if all(_IDENT_RE.match(cell) for cell in first) and any(c in names for c in first):
        unknown = [c for c in first if c not in names]
        if unknown:
            raise HeaderFieldUnknown(
                f"header names unknown field {unknown[0]!r}; "
                f"schema fields: {', '.join(sorted(names))}")
        if len(first) != len(set(first)):
            dup = next(c for c in first if first.count(c) > 1)
            raise ColumnCountMismatch(f"header repeats column {dup!r}")
        raise ColumnCountMismatch(
            f"header lists {len(first)} of {len(names)} schema fields")
    return False


def csv_to_batch(text: str, descriptor: MessageDescriptor) -> RowBatch:
    _reject_repeated(descriptor)
    try:
        records = [r for r in csv.reader(io.StringIO(text, newline="")) if r]
    except csv.Error as exc:
        raise CoercionError(f"CSV parse error: {exc}") from None
    if not records:
        return RowBatch(descriptor, ())

    if _detect_header(records[0], descriptor):
        columns = [descriptor.field(name) for name in records[0]]
        records = records[1:]
    else:
        columns = list(descriptor.tag_order)

    rows = []
    for number, record in enumerate(records, start=1):
        if len(record) != len(columns):
            raise ColumnCountMismatch(
                f"row {number}: expected {len(columns)} columns, got {len(record)}")
        values = {}
        for fld, cell in zip(columns, record):
            if cell == "":
                continue  # empty cell means absent
            values[fld.name] = _coerce_cell(fld, cell, number)
        rows.append(DynamicMessage(descriptor, values))
    return RowBatch(descriptor, tuple(rows))


def _cell_text(fld: FieldDescriptor, value) -> str:
    if value is None:
        return ""
    if fld.kind in ("double", "float"):
        return format_float(value)
    if fld.kind == "bool":
        return "true" if value else "false"
    if fld.kind == "string":
        if "\x00" in value:
            raise CoercionError(
                f"column {fld.name!r}: NUL character not representable in CSV")
        return value
    return str(value)


def _csv_record(cells) -> str:
    # the excel dialect quotes cells containing CR or LF; its \r\n record
    # terminator is stripped so the output uses bare LF line endings
    buffer = io.StringIO()
    csv.writer(buffer).writerow(cells)
    return buffer.getvalue()[:-2]


def batch_to_csv(batch: RowBatch) -> str:
    _reject_repeated(batch.descriptor)
    fields = batch.descriptor.tag_order
    lines = [_csv_record([f.name for f in fields])]
    for row in batch.rows:
        lines.append(_csv_record([_cell_text(f, row.get(f.name))
                                  for f in fields]))
    return "\n".join(lines) + "\n"


def _coerce_json(fld: FieldDescriptor, value, path: str):
    kind = fld.kind
    if isinstance(value, (list, dict)):
        raise CoercionError(f"{path}: expected a {kind} scalar")
    if kind in ("double", "float"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise CoercionError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise CoercionError(f"{path}: expected true or false, got {value!r}")
        return value
    if kind == "string":
        if not isinstance(value, str):
            raise CoercionError(f"{path}: expected a string, got {value!r}")
        return value
    # int32 / int64
    if isinstance(value, bool):
        raise CoercionError(f"{path}: expected an integer, got {value!r}")
    if isinstance(value, float):
        if not value.is_integer():
            raise CoercionError(f"{path}: {value!r} is not integer-valued")
        value = int(value)
    elif not isinstance(value, int):
        raise CoercionError(f"{path}: expected an integer, got {value!r}")
    lo, hi = _INT32_RANGE if kind == "int32" else _INT64_RANGE
    if not lo <= value <= hi:
        raise CoercionError(f"{path}: {value} does not fit in {kind}")
    return value


def json_to_batch(text: str, descriptor: MessageDescriptor) -> RowBatch:
    """Accepts a top-level array of objects, or a single object as a one-row
    batch.  ``null`` and missing keys mean absent; arrays are only legal for
    repeated fields."""
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise JsonSyntaxError(str(exc)) from None
    if isinstance(doc, dict):
        items = [doc]
    elif isinstance(doc, list):
        items = doc
    else:
        raise JsonSyntaxError("top-level value must be an object or an array")

    rows = []
    for index, obj in enumerate(items):
        path = f"$[{index}]"
        if not isinstance(obj, dict):
            raise JsonSyntaxError(f"{path}: expected an object")
        values = {}
        for key, value in obj.items():
            fld = descriptor.field(key)
            if fld is None:
                raise UnknownKey(f"{path}.{key}: unknown field {key!r}")
            if value is None:
                continue
            if fld.repeated:
                if not isinstance(value, list):
                    raise CoercionError(
                        f"{path}.{key}: repeated field requires an array")
                items_ = [
                    _coerce_json(fld, v, f"{path}.{key}[{j}]")
                    for j, v in enumerate(value)
                ]
                if items_:
                    values[key] = items_
            else:
                if isinstance(value, list):
                    raise ArrayForScalarField(
                        f"{path}.{key}: field {key!r} is not repeated")
                values[key] = _coerce_json(fld, value, f"{path}.{key}")
        rows.append(DynamicMessage(descriptor, values))
    return RowBatch(descriptor, tuple(rows))


def batch_to_json(batch: RowBatch) -> str:
    objs = []
    for row in batch.rows:
        obj = {}
        for fld in batch.descriptor.tag_order:
            value = row.get(fld.name)
            if value is None:
                continue
            obj[fld.name] = list(value) if fld.repeated else value
        objs.append(obj)
    return json.dumps(objs, separators=(",", ":"))
