import io
import json
import zipfile

import pytest

from modelrunner import assemble_bundle, load_bundle, save_bundle
from modelrunner.bundle import MEMBERS
from modelrunner.errors import (
    ArchiveMalformed,
    ConfigError,
    CrossValidationError,
    MemberMissing,
    MetadataError,
)

from conftest import PROTO_XY, linear_ppf, make_bundle, metadata_text


def test_assemble_valid():
    bundle = make_bundle()
    assert bundle.metadata.model_name == "demo"
    assert bundle.config.input_message == "DataFrame"
    assert bundle.config.output_message == "Prediction"
    assert bundle.config.operations == {"predict": "prediction"}


def test_config_defaults_from_empty_object():
    bundle = make_bundle(config="{}")
    assert bundle.config.operations == {"predict": "prediction"}


def test_config_explicit():
    cfg = json.dumps({"input_message": "DataFrame",
                      "output_message": "Prediction",
                      "operations": {"predict": "prediction",
                                     "score": "prediction"}})
    bundle = make_bundle(config=cfg)
    assert set(bundle.config.operations) == {"predict", "score"}


def test_config_must_keep_predict_operation():
    cfg = json.dumps({"operations": {"score": "prediction"}})
    with pytest.raises(ConfigError):
        make_bundle(config=cfg)


def test_config_unknown_key():
    with pytest.raises(ConfigError):
        make_bundle(config='{"port": 1}')


def test_config_missing_message():
    with pytest.raises(CrossValidationError):
        make_bundle(config='{"input_message": "X"}')


def test_predictor_field_absent_from_schema():
    ppf = linear_ppf([1.0, 1.0, 1.0], inputs=("x", "y", "z"))
    with pytest.raises(CrossValidationError) as exc_info:
        make_bundle(ppf=ppf)
    assert "'z'" in str(exc_info.value)


def test_predictor_field_must_be_numeric_scalar():
    proto = ('syntax="proto3"; message DataFrame { double x = 1; string y = 2; } '
             "message Prediction { double prediction = 1; }")
    with pytest.raises(CrossValidationError):
        assemble_bundle(proto, linear_ppf([1.0, 1.0]), "{}", metadata_text())


def test_output_field_must_be_double():
    proto = ('syntax="proto3"; message DataFrame { double x = 1; double y = 2; } '
             "message Prediction { int32 prediction = 1; }")
    with pytest.raises(CrossValidationError):
        assemble_bundle(proto, linear_ppf([1.0, 1.0]), "{}", metadata_text())


def test_operation_targets_validated():
    cfg = json.dumps({"operations": {"predict": "prediction",
                                     "score": "missing_field"}})
    with pytest.raises(CrossValidationError):
        make_bundle(config=cfg)


@pytest.mark.parametrize("meta", [
    '{"model_name": ""}',
    '{"model_name": "bad name"}',
    '{"model_name": "ok", "extra": 1}',
    '{"created_at": "2026"}',
    "[]",
    "{broken",
])
def test_metadata_rejected(meta):
    with pytest.raises(MetadataError):
        make_bundle(metadata=meta)


def test_archive_round_trip():
    bundle = make_bundle()
    archive = save_bundle(bundle)
    assert load_bundle(archive) == bundle


def test_archive_deterministic():
    assert save_bundle(make_bundle()) == save_bundle(make_bundle())


def test_archive_lists_exactly_four_members():
    archive = save_bundle(make_bundle())
    with zipfile.ZipFile(io.BytesIO(archive)) as zf:
        assert tuple(zf.namelist()) == MEMBERS


def test_archive_missing_member():
    archive = save_bundle(make_bundle())
    buffer = io.BytesIO()
    with zipfile.ZipFile(io.BytesIO(archive)) as src, \
            zipfile.ZipFile(buffer, "w") as dst:
        for name in src.namelist():
            if name != "config.json":
                dst.writestr(name, src.read(name))
    with pytest.raises(MemberMissing) as exc_info:
        load_bundle(buffer.getvalue())
    assert "config.json" in str(exc_info.value)


def test_archive_extra_member():
    archive = save_bundle(make_bundle())
    buffer = io.BytesIO(archive)
    with zipfile.ZipFile(buffer, "a") as zf:
        zf.writestr("README.txt", "stowaway")
    with pytest.raises(ArchiveMalformed):
        load_bundle(buffer.getvalue())


def test_archive_not_a_zip():
    with pytest.raises(ArchiveMalformed):
        load_bundle(b"definitely not a zip")


def test_bundle_keeps_raw_texts():
    bundle = make_bundle()
    assert bundle.files.proto == PROTO_XY
    again = load_bundle(save_bundle(bundle))
    assert again.files == bundle.files
    assert again.schema.source_hash == bundle.schema.source_hash
