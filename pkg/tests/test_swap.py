import json
import threading

import pytest

from modelrunner import (
    ArtifactStore,
    SwapManager,
    decode_stream,
    find_message,
    serve_prediction,
)
from modelrunner.errors import (
    CrossValidationError,
    ConfigError,
    NotInitialized,
    PostSwapRequestError,
    UnknownOperation,
)

from conftest import PROTO_XY, linear_ppf, make_bundle, metadata_text

PROTO_DISJOINT = (
    'syntax = "proto3";\n'
    "message DataFrame { double a = 1; double b = 2; double c = 3; "
    "double d = 4; double e = 5; }\n"
    "message Prediction { double prediction = 1; }\n"
)


@pytest.fixture
def manager(tmp_path, bundle_xy):
    return SwapManager(ArtifactStore(tmp_path / "store"), bundle_xy)


def test_snapshot_after_init(manager, bundle_xy):
    snap = manager.snapshot()
    assert snap.epoch == 0
    assert snap.bundle is bundle_xy
    assert manager.snapshot().epoch == snap.epoch


def test_uninitialized(tmp_path):
    manager = SwapManager(ArtifactStore(tmp_path / "store"))
    with pytest.raises(NotInitialized):
        manager.snapshot()
    assert manager.status()["epoch"] is None
    # the first installed bundle becomes epoch 0, with no history entry
    assert manager.swap_bundle(make_bundle()) == 0
    assert manager.status()["history"] == []


def test_swap_bundle_increments_epoch(manager):
    new = make_bundle(ppf=linear_ppf([9.0, 9.0]))
    assert manager.swap_bundle(new) == 1
    snap = manager.snapshot()
    assert snap.epoch == 1
    assert snap.bundle is new


def test_swap_archives_the_replaced_bundle(manager, bundle_xy, tmp_path):
    manager.swap_bundle(make_bundle(ppf=linear_ppf([9.0, 9.0])))
    store = ArtifactStore(tmp_path / "store")
    versions = store.list_versions("demo")
    assert [v.version for v in versions] == [1]
    from modelrunner import load_bundle
    assert load_bundle(store.get_version("demo", 1)) == bundle_xy


def test_history_grows_per_swap(manager):
    for i in range(3):
        manager.swap_bundle(make_bundle(ppf=linear_ppf([float(i), 1.0])))
    status = manager.status()
    assert status["epoch"] == 3
    assert [h["epoch"] for h in status["history"]] == [1, 2, 3]
    assert [h["version"] for h in status["history"]] == [1, 2, 3]


def test_swap_proto_compatible_change(manager):
    epoch = manager.swap_proto(PROTO_XY + "message Extra { string note = 1; }")
    assert epoch == 1
    assert manager.status()["history"][0]["swap_kind"] == "proto"


def test_swap_proto_incompatible_is_noop(manager):
    before = manager.snapshot()
    with pytest.raises(CrossValidationError):
        manager.swap_proto('syntax="proto3"; message DataFrame { double x = 1; } '
                           "message Prediction { double prediction = 1; }")
    assert manager.snapshot() is before
    assert manager.status()["epoch"] == 0
    assert manager.status()["history"] == []


def test_swap_config(manager):
    cfg = json.dumps({"operations": {"predict": "prediction",
                                     "score": "prediction"}})
    assert manager.swap_config(cfg) == 1
    assert "score" in manager.snapshot().bundle.config.operations


def test_swap_config_rejects_missing_message(manager):
    with pytest.raises(CrossValidationError):
        manager.swap_config('{"output_message": "Gone"}')
    assert manager.status()["epoch"] == 0


def test_swap_config_rejects_dropping_predict(manager):
    with pytest.raises(ConfigError):
        manager.swap_config('{"operations": {"score": "prediction"}}')
    assert manager.status()["epoch"] == 0


def test_swap_predictor_bare(manager):
    assert manager.swap_predictor(linear_ppf([5.0, 5.0])) == 1
    out_desc = find_message(manager.snapshot().bundle.schema, "Prediction")
    body = serve_prediction(manager.snapshot().bundle, "x,y\n1,1", "csv")
    assert decode_stream(body, out_desc)[0].get("prediction") == 10.0


def test_transform_installs_and_predicts(manager):
    body, epoch = manager.transform("x,y\n1,1", "csv", PROTO_XY,
                                    linear_ppf([5.0, 5.0]))
    assert epoch == 1
    assert manager.snapshot().epoch == 1
    out_desc = find_message(manager.snapshot().bundle.schema, "Prediction")
    assert decode_stream(body, out_desc)[0].get("prediction") == 10.0
    # the installed model now answers default requests identically
    again = serve_prediction(manager.snapshot().bundle, "x,y\n1,1", "csv")
    assert again == body


def test_transform_validation_failure_does_not_install(manager):
    with pytest.raises(CrossValidationError):
        manager.transform("x,y\n1,1", "csv", PROTO_XY,
                          linear_ppf([1.0], inputs=("zz",)))
    assert manager.status()["epoch"] == 0


def test_transform_data_failure_keeps_install(manager):
    with pytest.raises(PostSwapRequestError) as exc_info:
        manager.transform("x,y\nbad,1", "csv", PROTO_XY, linear_ppf([5.0, 5.0]))
    assert exc_info.value.epoch == 1
    assert manager.status()["epoch"] == 1


def test_repurpose_to_disjoint_schema(manager):
    new = make_bundle(
        proto=PROTO_DISJOINT,
        ppf=json.dumps({
            "format_version": "ppf-1",
            "kind": "tree_ensemble",
            "input_fields": ["a", "b", "c", "d", "e"],
            "output_field": "prediction",
            "params": {"init": 0.0, "aggregate": "mean",
                       "trees": [{"nodes": [{"value": 1.0}]}]},
        }),
        metadata=metadata_text(name="anomaly-detector"),
    )
    assert manager.swap_bundle(new) == 1
    status = manager.status()
    assert status["model_name"] == "anomaly-detector"
    body = serve_prediction(manager.snapshot().bundle, "a,b,c,d,e\n1,2,3,4,5",
                            "csv")
    out_desc = find_message(new.schema, "Prediction")
    assert decode_stream(body, out_desc)[0].get("prediction") == 1.0


def test_unknown_operation(manager):
    with pytest.raises(UnknownOperation):
        serve_prediction(manager.snapshot().bundle, "x,y\n1,1", "csv",
                         operation="explain")


def test_status_fields(manager, bundle_xy):
    status = manager.status()
    assert status["epoch"] == 0
    assert status["model_name"] == "demo"
    assert status["input_message"] == "DataFrame"
    assert status["output_message"] == "Prediction"
    assert status["schema_hash"] == bundle_xy.schema.source_hash
    assert status["history"] == []


def test_status_history_tail_capped_at_20(manager):
    for i in range(25):
        manager.swap_predictor(linear_ppf([float(i + 1), 1.0]))
    history = manager.status()["history"]
    assert len(history) == 20
    assert history[-1]["epoch"] == 25
    epochs = [h["epoch"] for h in history]
    assert epochs == sorted(epochs)


def test_concurrent_snapshots_are_consistent(manager):
    # readers racing swaps must always observe a coherent (epoch, bundle) pair
    stop = threading.Event()
    failures = []

    def reader():
        while not stop.is_set():
            snap = manager.snapshot()
            body = serve_prediction(snap.bundle, "x,y\n1,1", "csv")
            out = decode_stream(body, find_message(snap.bundle.schema,
                                                   "Prediction"))
            if len(out) != 1:
                failures.append("bad row count")

    threads = [threading.Thread(target=reader) for _ in range(4)]
    for t in threads:
        t.start()
    for i in range(5):
        manager.swap_predictor(linear_ppf([float(i), 1.0], intercept=1.0))
    stop.set()
    for t in threads:
        t.join()
    assert not failures
    assert manager.status()["epoch"] == 5
