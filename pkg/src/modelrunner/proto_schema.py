"""Parse a proto3 subset into runtime message descriptors.

The supported grammar is deliberately small: flat proto3 messages whose
fields use the six scalar kinds ``double``, ``float``, ``int32``, ``int64``,
``bool`` and ``string``, optionally ``repeated``.  Everything else (imports,
packages, options, maps, oneofs, enums, services, nested messages, proto2)
is rejected with :class:`UnsupportedFeature` rather than silently ignored,
so a schema that parses is a schema the wire codec fully understands.

Descriptors are immutable after construction and safe to share across
threads without synchronization.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from functools import cached_property

from .errors import (
    DuplicateName,
    DuplicateTag,
    InvalidTag,
    MessageNotFound,
    ProtoSyntaxError,
    UnsupportedFeature,
)

SCALAR_KINDS = ("double", "float", "int32", "int64", "bool", "string")

MAX_TAG = 536_870_911
RESERVED_TAG_LO = 19_000
RESERVED_TAG_HI = 19_999

# Constructs we recognise well enough to refuse by name.
_UNSUPPORTED_KEYWORDS = frozenset({
    "import", "package", "option", "oneof", "enum", "service", "extend",
    "extensions", "reserved", "map", "optional", "required", "group",
    "rpc", "returns", "stream",
})


def _check_tag(tag: int) -> None:
    if tag < 1 or tag > MAX_TAG:
        raise InvalidTag(f"field tag {tag} outside valid range 1..{MAX_TAG}")
    if RESERVED_TAG_LO <= tag <= RESERVED_TAG_HI:
        raise InvalidTag(
            f"field tag {tag} is in the reserved range "
            f"{RESERVED_TAG_LO}..{RESERVED_TAG_HI}"
        )


@dataclass(frozen=True)
class FieldDescriptor:
    name: str
    tag: int
    kind: str
    repeated: bool = False

    def __post_init__(self):
        if self.kind not in SCALAR_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        _check_tag(self.tag)


@dataclass(frozen=True)
class MessageDescriptor:
    name: str
    fields: tuple[FieldDescriptor, ...]

    def __post_init__(self):
        object.__setattr__(self, "fields", tuple(self.fields))
        seen_names: set[str] = set()
        seen_tags: set[int] = set()
        for f in self.fields:
            if f.name in seen_names:
                raise DuplicateName(
                    f"message {self.name!r}: duplicate field name {f.name!r}")
            if f.tag in seen_tags:
                raise DuplicateTag(
                    f"message {self.name!r}: duplicate field tag {f.tag}")
            seen_names.add(f.name)
            seen_tags.add(f.tag)

    @cached_property
    def by_name(self) -> dict[str, FieldDescriptor]:
        return {f.name: f for f in self.fields}

    @cached_property
    def by_tag(self) -> dict[int, FieldDescriptor]:
        return {f.tag: f for f in self.fields}

    @cached_property
    def tag_order(self) -> tuple[FieldDescriptor, ...]:
        return tuple(sorted(self.fields, key=lambda f: f.tag))

    def field(self, name: str) -> FieldDescriptor | None:
        return self.by_name.get(name)


@dataclass(frozen=True)
class Schema:
    syntax: str
    messages: tuple[MessageDescriptor, ...]
    source_hash: str = field(default="", compare=True)

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("schema requires at least one message")
        seen: set[str] = set()
        for m in self.messages:
            if m.name in seen:
                raise DuplicateName(f"duplicate message name {m.name!r}")
            seen.add(m.name)


@dataclass(frozen=True)
class _Token:
    kind: str  # ident | number | string | punct | eof
    text: str
    line: int
    column: int


_TOKEN_RE = re.compile(
    r"(?P<ws>\s+)"
    r"|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<number>[0-9]+)"
    r'|(?P<string>"[^"\n]*")'
    r"|(?P<punct>[{}=;<>,.\[\]()])"
    r"|(?P<other>.)",
    re.DOTALL,
)


def _position(text: str, index: int) -> tuple[int, int]:
    line = text.count("\n", 0, index) + 1
    last_nl = text.rfind("\n", 0, index)
    return line, index - last_nl


def _strip_comments(source: str) -> str:
    """Blank out // and /* */ comments, preserving offsets and newlines."""
    out: list[str] = []
    i, n = 0, len(source)
    while i < n:
        ch = source[i]
        if ch == "/" and source.startswith("//", i):
            end = source.find("\n", i)
            end = n if end == -1 else end
            out.append(" " * (end - i))
            i = end
        elif ch == "/" and source.startswith("/*", i):
            end = source.find("*/", i + 2)
            if end == -1:
                line, col = _position(source, i)
                raise ProtoSyntaxError("unterminated block comment", line, col)
            out.append("".join(c if c == "\n" else " " for c in source[i:end + 2]))
            i = end + 2
        elif ch == '"':
            end = source.find('"', i + 1)
            if end == -1:
                line, col = _position(source, i)
                raise ProtoSyntaxError("unterminated string literal", line, col)
            out.append(source[i:end + 1])
            i = end + 1
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    for match in _TOKEN_RE.finditer(text):
        kind = match.lastgroup
        if kind == "ws":
            continue
        line, col = _position(text, match.start())
        if kind == "other":
            raise ProtoSyntaxError(
                f"unexpected character {match.group()!r}", line, col)
        tokens.append(_Token(kind, match.group(), line, col))
    line, col = _position(text, len(text))
    tokens.append(_Token("eof", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self._tokens = tokens
        self._pos = 0

    def _peek(self) -> _Token:
        return self._tokens[self._pos]

    def _next(self) -> _Token:
        tok = self._tokens[self._pos]
        if tok.kind != "eof":
            self._pos += 1
        return tok

    def _expect(self, kind: str, text: str | None = None) -> _Token:
        tok = self._next()
        if tok.kind != kind or (text is not None and tok.text != text):
            want = text if text is not None else kind
            got = tok.text if tok.kind != "eof" else "end of input"
            raise ProtoSyntaxError(f"expected {want!r}, got {got!r}",
                                   tok.line, tok.column)
        return tok

    def parse_file(self) -> tuple[MessageDescriptor, ...]:
        self._parse_syntax()
        messages: list[MessageDescriptor] = []
        names: set[str] = set()
        while self._peek().kind != "eof":
            msg = self._parse_message()
            if msg.name in names:
                raise DuplicateName(f"duplicate message name {msg.name!r}")
            names.add(msg.name)
            messages.append(msg)
        if not messages:
            tok = self._peek()
            raise ProtoSyntaxError("no message definitions", tok.line, tok.column)
        return tuple(messages)

    def _parse_syntax(self) -> None:
        tok = self._peek()
        if tok.kind != "ident" or tok.text != "syntax":
            raise UnsupportedFeature(
                "missing syntax declaration; only proto3 is supported",
                tok.line, tok.column)
        self._next()
        self._expect("punct", "=")
        lit = self._expect("string")
        value = lit.text[1:-1]
        if value == "proto2":
            raise UnsupportedFeature("proto2 is not supported", lit.line, lit.column)
        if value != "proto3":
            raise ProtoSyntaxError(f"unknown syntax {value!r}", lit.line, lit.column)
        self._expect("punct", ";")

    def _parse_message(self) -> MessageDescriptor:
        tok = self._next()
        if tok.kind != "ident":
            raise ProtoSyntaxError(f"expected 'message', got {tok.text!r}",
                                   tok.line, tok.column)
        if tok.text != "message":
            if tok.text in _UNSUPPORTED_KEYWORDS:
                raise UnsupportedFeature(f"{tok.text!r} is not supported",
                                         tok.line, tok.column)
            raise ProtoSyntaxError(f"expected 'message', got {tok.text!r}",
                                   tok.line, tok.column)
        name = self._expect("ident")
        self._expect("punct", "{")
        fields: list[FieldDescriptor] = []
        names: set[str] = set()
        tags: set[int] = set()
        while True:
            tok = self._peek()
            if tok.kind == "punct" and tok.text == "}":
                self._next()
                break
            if tok.kind == "eof":
                raise ProtoSyntaxError(
                    f"unterminated message {name.text!r}", tok.line, tok.column)
            fld = self._parse_field()
            if fld.name in names:
                raise DuplicateName(
                    f"message {name.text!r}: duplicate field name {fld.name!r}")
            if fld.tag in tags:
                raise DuplicateTag(
                    f"message {name.text!r}: duplicate field tag {fld.tag}")
            names.add(fld.name)
            tags.add(fld.tag)
            fields.append(fld)
        return MessageDescriptor(name.text, tuple(fields))

    def _parse_field(self) -> FieldDescriptor:
        tok = self._expect("ident")
        if tok.text == "message":
            raise UnsupportedFeature("nested messages are not supported",
                                     tok.line, tok.column)
        if tok.text in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(f"{tok.text!r} is not supported",
                                     tok.line, tok.column)
        repeated = False
        if tok.text == "repeated":
            repeated = True
            tok = self._expect("ident")
            if tok.text in _UNSUPPORTED_KEYWORDS or tok.text == "message":
                raise UnsupportedFeature(f"{tok.text!r} is not supported",
                                         tok.line, tok.column)
        if tok.text not in SCALAR_KINDS:
            raise UnsupportedFeature(
                f"field type {tok.text!r} not supported; "
                f"supported kinds: {', '.join(SCALAR_KINDS)}",
                tok.line, tok.column)
        kind = tok.text
        name = self._expect("ident")
        self._expect("punct", "=")
        num = self._expect("number")
        tag = int(num.text)
        _check_tag(tag)
        self._expect("punct", ";")
        return FieldDescriptor(name.text, tag, kind, repeated)


def parse_schema(source: str | bytes) -> Schema:
    """Parse proto text into a validated :class:`Schema`.

    ``source_hash`` is the SHA-256 of the raw source bytes, so byte-identical
    inputs always produce identical schemas.
    """
    if isinstance(source, bytes):
        raw = source
        try:
            text = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtoSyntaxError(f"source is not valid UTF-8: {exc}") from None
    else:
        text = source
        raw = source.encode("utf-8")
    stripped = _strip_comments(text)
    messages = _Parser(_tokenize(stripped)).parse_file()
    return Schema("proto3", messages, hashlib.sha256(raw).hexdigest())


def print_schema(schema: Schema) -> str:
    """Render a schema in canonical textual form.

    Parsing the output yields a schema with the same messages (the hash
    differs unless the input already was canonical).
    """
    lines = ['syntax = "proto3";', ""]
    for msg in schema.messages:
        lines.append(f"message {msg.name} {{")
        for f in msg.fields:
            label = "repeated " if f.repeated else ""
            lines.append(f"  {label}{f.kind} {f.name} = {f.tag};")
        lines.append("}")
        lines.append("")
    return "\n".join(lines)


def find_message(schema: Schema, name: str) -> MessageDescriptor:
    for msg in schema.messages:
        if msg.name == name:
            return msg
    available = ", ".join(m.name for m in schema.messages)
    raise MessageNotFound(f"no message named {name!r}; available: {available}")
