"""Portable predictor format (PPF): load and evaluate serving models.

A PPF document is UTF-8 JSON describing either a linear model or a decision
tree ensemble:

    {
      "format_version": "ppf-1",
      "kind": "linear",
      "input_fields": ["x", "y"],
      "output_field": "prediction",
      "params": {"weights": [2.0, 3.0], "intercept": 1.0, "link": "identity"}
    }

    {
      "format_version": "ppf-1",
      "kind": "tree_ensemble",
      "input_fields": ["x"],
      "output_field": "prediction",
      "params": {
        "init": 0.0,
        "aggregate": "sum",
        "trees": [
          {"nodes": [
            {"feature": 0, "threshold": 1.5, "left": 1, "right": 2},
            {"value": -1.0},
            {"value": 1.0}
          ]}
        ]
      }
    }

Evaluation semantics, pinned so an independent implementation reproduces
identical bits: linear applies the link to ``intercept + sum(w[i] * x[i])``
accumulated in field order; ensembles descend each tree from node 0 going
left when ``x[feature] <= threshold``, sum the reached leaves in tree index
order, divide that sum by the tree count when aggregate is "mean", and add
``init`` last.  NaN features are rejected rather than silently routed.

Predictors are immutable after load; concurrent evaluation needs no locks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Union

from .errors import (
    MissingFeature,
    NaNFeature,
    NonFiniteResult,
    NonNumericFeature,
    OutputFieldMissingFromSchema,
    PpfSyntaxError,
    PpfValidationError,
    PpfVersionUnsupported,
)
from .proto_schema import MessageDescriptor
from .tabular import RowBatch
from .wire import DynamicMessage

FORMAT_VERSION = "ppf-1"
NUMERIC_KINDS = frozenset({"double", "float", "int32", "int64"})


@dataclass(frozen=True)
class LeafNode:
    value: float


@dataclass(frozen=True)
class SplitNode:
    feature: int
    threshold: float
    left: int
    right: int


Node = Union[LeafNode, SplitNode]


@dataclass(frozen=True)
class Tree:
    nodes: tuple[Node, ...]


@dataclass(frozen=True)
class LinearParams:
    weights: tuple[float, ...]
    intercept: float
    link: str


@dataclass(frozen=True)
class EnsembleParams:
    trees: tuple[Tree, ...]
    aggregate: str
    init: float


@dataclass(frozen=True)
class Predictor:
    format_version: str
    kind: str
    input_fields: tuple[str, ...]
    output_field: str
    params: LinearParams | EnsembleParams


def _require_object(value, where: str) -> dict:
    if not isinstance(value, dict):
        raise PpfValidationError(f"{where} must be an object")
    return value


def _check_keys(obj: dict, required: tuple[str, ...], where: str,
                optional: tuple[str, ...] = ()) -> None:
    for key in required:
        if key not in obj:
            raise PpfValidationError(f"{where}: missing key {key!r}")
    extra = set(obj) - set(required) - set(optional)
    if extra:
        raise PpfValidationError(f"{where}: unknown key {sorted(extra)[0]!r}")


def _finite_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise PpfValidationError(f"{where} must be a number")
    value = float(value)
    if not math.isfinite(value):
        raise PpfValidationError(f"{where} must be finite")
    return value


def _index(value, bound: int, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise PpfValidationError(f"{where} must be an integer")
    if not 0 <= value < bound:
        raise PpfValidationError(f"{where}: index {value} out of range 0..{bound - 1}")
    return value


def _parse_tree(doc, n_features: int, tree_index: int) -> Tree:
    where = f"trees[{tree_index}]"
    doc = _require_object(doc, where)
    _check_keys(doc, ("nodes",), where)
    raw_nodes = doc["nodes"]
    if not isinstance(raw_nodes, list) or not raw_nodes:
        raise PpfValidationError(f"{where}.nodes must be a non-empty array")
    nodes: list[Node] = []
    for i, raw in enumerate(raw_nodes):
        node_where = f"{where}.nodes[{i}]"
        raw = _require_object(raw, node_where)
        if set(raw) == {"value"}:
            nodes.append(LeafNode(_finite_number(raw["value"], f"{node_where}.value")))
        elif set(raw) == {"feature", "threshold", "left", "right"}:
            nodes.append(SplitNode(
                _index(raw["feature"], n_features, f"{node_where}.feature"),
                _finite_number(raw["threshold"], f"{node_where}.threshold"),
                _index(raw["left"], len(raw_nodes), f"{node_where}.left"),
                _index(raw["right"], len(raw_nodes), f"{node_where}.right"),
            ))
        else:
            raise PpfValidationError(
                f"{node_where}: node must have exactly 'value' or "
                "'feature'/'threshold'/'left'/'right'")
    # the reachable graph must be a tree: no node seen twice, no cycles
    visited: set[int] = set()
    stack = [0]
    while stack:
        index = stack.pop()
        if index in visited:
            raise PpfValidationError(
                f"{where}: node {index} reachable more than once (not a tree)")
        visited.add(index)
        node = nodes[index]
        if isinstance(node, SplitNode):
            stack.append(node.left)
            stack.append(node.right)
    return Tree(tuple(nodes))


def load_predictor(document: str) -> Predictor:
    """Parse and eagerly validate a PPF document."""
    try:
        doc = json.loads(document)
    except ValueError as exc:
        raise PpfSyntaxError(f"invalid PPF document: {exc}") from None
    doc = _require_object(doc, "document")
    _check_keys(doc, ("format_version", "kind", "input_fields",
                      "output_field", "params"), "document")
    version = doc["format_version"]
    if not isinstance(version, str):
        raise PpfValidationError("format_version must be a string")
    if version != FORMAT_VERSION:
        raise PpfVersionUnsupported(
            f"format_version {version!r} unsupported; this runner reads "
            f"{FORMAT_VERSION!r}")

    inputs = doc["input_fields"]
    if (not isinstance(inputs, list) or not inputs
            or not all(isinstance(n, str) and n for n in inputs)):
        raise PpfValidationError("input_fields must be a non-empty array of names")
    if len(set(inputs)) != len(inputs):
        raise PpfValidationError("input_fields must be unique")
    output = doc["output_field"]
    if not isinstance(output, str) or not output:
        raise PpfValidationError("output_field must be a non-empty name")
    if output in inputs:
        raise PpfValidationError(
            f"output_field {output!r} also appears in input_fields")

    kind = doc["kind"]
    params = _require_object(doc["params"], "params")
    if kind == "linear":
        _check_keys(params, ("weights", "intercept", "link"), "params")
        raw_weights = params["weights"]
        if not isinstance(raw_weights, list):
            raise PpfValidationError("params.weights must be an array")
        if len(raw_weights) != len(inputs):
            raise PpfValidationError(
                f"params.weights has {len(raw_weights)} entries for "
                f"{len(inputs)} input fields")
        weights = tuple(_finite_number(w, f"params.weights[{i}]")
                        for i, w in enumerate(raw_weights))
        link = params["link"]
        if link not in ("identity", "logit"):
            raise PpfValidationError(f"params.link {link!r} must be identity or logit")
        parsed = LinearParams(weights, _finite_number(params["intercept"],
                                                      "params.intercept"), link)
    elif kind == "tree_ensemble":
        _check_keys(params, ("trees", "aggregate", "init"), "params")
        raw_trees = params["trees"]
        if not isinstance(raw_trees, list) or not raw_trees:
            raise PpfValidationError("params.trees must be a non-empty array")
        trees = tuple(_parse_tree(t, len(inputs), i)
                      for i, t in enumerate(raw_trees))
        aggregate = params["aggregate"]
        if aggregate not in ("sum", "mean"):
            raise PpfValidationError(
                f"params.aggregate {aggregate!r} must be sum or mean")
        parsed = EnsembleParams(trees, aggregate,
                                _finite_number(params["init"], "params.init"))
    else:
        raise PpfValidationError(
            f"kind {kind!r} must be linear or tree_ensemble")

    return Predictor(FORMAT_VERSION, kind, tuple(inputs), output, parsed)


def _feature_vector(predictor: Predictor, row: DynamicMessage) -> list[float]:
    descriptor = row.descriptor
    features = []
    for name in predictor.input_fields:
        fld = descriptor.field(name)
        if fld is None:
            raise MissingFeature(
                f"input field {name!r} not present in message {descriptor.name!r}")
        if fld.repeated or fld.kind not in NUMERIC_KINDS:
            raise NonNumericFeature(
                f"input field {name!r} has kind "
                f"{'repeated ' if fld.repeated else ''}{fld.kind}; "
                "a numeric scalar is required")
        value = row.get(name)
        x = 0.0 if value is None else float(value)  # absent means default 0
        if math.isnan(x):
            raise NaNFeature(f"input field {name!r} is NaN")
        features.append(x)
    return features


def _logit(z: float) -> float:
    # split on sign so exp never overflows
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def predict_row(predictor: Predictor, row: DynamicMessage) -> float:
    features = _feature_vector(predictor, row)
    params = predictor.params
    if predictor.kind == "linear":
        z = params.intercept
        for w, x in zip(params.weights, features):
            z += w * x
        result = _logit(z) if params.link == "logit" else z
    else:
        acc = 0.0
        for tree in params.trees:
            node = tree.nodes[0]
            while isinstance(node, SplitNode):
                follow = node.left if features[node.feature] <= node.threshold else node.right
                node = tree.nodes[follow]
            acc += node.value
        if params.aggregate == "mean":
            acc /= len(params.trees)
        result = params.init + acc
    if not math.isfinite(result):
        raise NonFiniteResult(f"prediction is not finite: {result!r}")
    return result


def predict_batch(predictor: Predictor, batch: RowBatch,
                  output_descriptor: MessageDescriptor,
                  output_field: str | None = None) -> RowBatch:
    """One output row per input row, in order, carrying only the output
    field.  ``output_field`` overrides the predictor's default target (used
    by configured operations)."""
    name = output_field if output_field is not None else predictor.output_field
    fld = output_descriptor.field(name)
    if fld is None or fld.repeated or fld.kind != "double":
        raise OutputFieldMissingFromSchema(
            f"output field {name!r} must exist in message "
            f"{output_descriptor.name!r} as a non-repeated double")
    rows = []
    for number, row in enumerate(batch.rows, start=1):
        try:
            value = predict_row(predictor, row)
        except (MissingFeature, NonNumericFeature, NaNFeature,
                NonFiniteResult) as exc:
            raise type(exc)(f"row {number}: {exc}") from None
        rows.append(DynamicMessage(output_descriptor, {name: value}))
    return RowBatch(output_descriptor, tuple(rows))
