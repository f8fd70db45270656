"""Hot-swappable model-serving microservice speaking protobuf over HTTP.

The package is organized around one pipeline: proto text becomes runtime
message descriptors (:mod:`proto_schema`), descriptors drive a protobuf
wire codec (:mod:`wire`) and CSV/JSON adapters (:mod:`tabular`), portable
predictor documents evaluate rows (:mod:`predictor`), the four artifacts
travel together as a bundle (:mod:`bundle`), bundles are versioned on disk
(:mod:`store`) and hot-swapped into a live HTTP service without restarts
(:mod:`swap`, :mod:`service`, :mod:`cli`).
"""

from .bundle import (
    BundleFiles,
    BundleMetadata,
    ModelBundle,
    ModelConfig,
    assemble_bundle,
    load_bundle,
    save_bundle,
)
from .predictor import Predictor, load_predictor, predict_batch, predict_row
from .proto_schema import (
    FieldDescriptor,
    MessageDescriptor,
    Schema,
    find_message,
    parse_schema,
    print_schema,
)
from .store import ArtifactStore, StoredVersion
from .swap import ServingSnapshot, SwapManager, serve_prediction
from .tabular import (
    RowBatch,
    batch_to_csv,
    batch_to_json,
    csv_to_batch,
    json_to_batch,
)
from .wire import (
    DynamicMessage,
    decode_message,
    decode_stream,
    decode_varint,
    encode_message,
    encode_stream,
    encode_varint,
)

__version__ = "0.1.0"

__all__ = [
    "ArtifactStore",
    "BundleFiles",
    "BundleMetadata",
    "DynamicMessage",
    "FieldDescriptor",
    "MessageDescriptor",
    "ModelBundle",
    "ModelConfig",
    "Predictor",
    "RowBatch",
    "Schema",
    "ServingSnapshot",
    "StoredVersion",
    "SwapManager",
    "assemble_bundle",
    "batch_to_csv",
    "batch_to_json",
    "csv_to_batch",
    "decode_message",
    "decode_stream",
    "decode_varint",
    "encode_message",
    "encode_stream",
    "encode_varint",
    "find_message",
    "json_to_batch",
    "load_bundle",
    "load_predictor",
    "parse_schema",
    "predict_batch",
    "predict_row",
    "print_schema",
    "save_bundle",
    "serve_prediction",
    "__version__",
]
