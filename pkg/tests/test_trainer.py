"""Training loop, early stopping, evaluation and checkpoint I/O."""

import json
import struct

import numpy as np
import pytest

from graphpine.exceptions import CorruptManifest, EmptyDataset, VersionMismatch
from graphpine.model import GraphPineModel, loss, predict
from graphpine.train import (
    CHECKPOINT_MAGIC,
    EarlyStopper,
    TrainConfig,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    train,
)

from conftest import random_graph, random_sample


@pytest.fixture(scope="module")
def toy_data():
    g = random_graph(6, 14, seed=0)
    train_set = [random_sample(g, seed=i, label=i % 2) for i in range(8)]
    val_set = [random_sample(g, seed=100 + i, label=i % 2) for i in range(4)]
    return train_set, val_set


def small_model(seed=0, **kw):
    kw.setdefault("layers", 1)
    kw.setdefault("hidden", 4)
    kw.setdefault("dropout", 0.0)
    return GraphPineModel.build(seed=seed, **kw)


# --- config and stopper ---------------------------------------------------------


def test_train_config_validation():
    for bad in (
        dict(epochs=0),
        dict(batch_size=0),
        dict(patience=0),
        dict(lr=0.0),
        dict(min_delta=-1e-9),
    ):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def stopper_oracle(losses, patience, min_delta):
    """Plain counter walk; returns (stop_epoch or None, best_epoch, flags)."""
    best = float("inf")
    best_epoch = 0
    remaining = patience
    flags = []
    for epoch, val in enumerate(losses, start=1):
        if best - val >= min_delta:
            best, best_epoch, remaining = val, epoch, patience
            flags.append(True)
        else:
            remaining -= 1
            flags.append(False)
            if remaining <= 0:
                return epoch, best_epoch, best, flags
    return None, best_epoch, best, flags


def test_early_stopper_matches_counter_simulation():
    rng = np.random.default_rng(0)
    for trial in range(20):
        patience = int(rng.integers(1, 6))
        min_delta = float(rng.choice([0.0, 1e-4, 0.05]))
        losses = np.round(rng.random(30), 3).tolist()
        want_stop, want_best_epoch, want_best, want_flags = stopper_oracle(
            losses, patience, min_delta
        )
        stopper = EarlyStopper(patience, min_delta)
        got_stop = None
        got_flags = []
        for epoch, val in enumerate(losses, start=1):
            stop = stopper.update(val)
            got_flags.append(stopper.improved)
            if stop:
                got_stop = epoch
                break
        assert got_stop == want_stop
        assert stopper.best_epoch == want_best_epoch
        assert stopper.best_loss == want_best
        assert got_flags == want_flags[: len(got_flags)]


def test_early_stopper_constant_loss_stops_after_patience_plus_one():
    stopper = EarlyStopper(patience=5, min_delta=1e-4)
    stops = [stopper.update(1.0) for _ in range(6)]
    assert stops == [False] * 5 + [True]  # epoch 1 improves from inf, then 5 burn
    assert stopper.best_epoch == 1


def test_early_stopper_min_delta_boundary():
    # powers of two keep the subtraction exact, so the boundary is testable
    stopper = EarlyStopper(patience=3, min_delta=0.25)
    stopper.update(1.0)
    assert stopper.update(0.75) is False and stopper.improved  # exactly delta
    assert stopper.update(0.625) is False and not stopper.improved  # short by half


def test_early_stopper_rejects_bad_patience():
    with pytest.raises(ValueError):
        EarlyStopper(patience=0, min_delta=0.0)


# --- train ------------------------------------------------------------------------


def test_train_restores_best_epoch_parameters(toy_data):
    train_set, val_set = toy_data
    model = small_model(seed=1)
    cfg = TrainConfig(epochs=15, batch_size=4, lr=0.05, patience=15, seed=1)
    model, log = train(model, train_set, val_set, cfg)
    assert log.records, "no epochs ran"
    # returned parameters are the best-epoch snapshot: recomputing the
    # validation loss must reproduce the recorded best exactly
    val_loss, _ = evaluate(model, val_set)
    assert val_loss == log.best_val_loss
    assert log.records[log.best_epoch - 1].val_loss == log.best_val_loss
    lows = min(r.val_loss for r in log.records)
    assert log.best_val_loss <= lows + cfg.min_delta


def test_train_stop_reasons(toy_data):
    train_set, val_set = toy_data
    # giant min_delta: epoch 1 improves from inf, nothing else can
    cfg = TrainConfig(epochs=50, batch_size=4, lr=0.01, patience=2, min_delta=10.0, seed=2)
    _, log = train(small_model(seed=2), train_set, val_set, cfg)
    assert log.stop_reason == "early_stop"
    assert len(log.records) == 3  # 1 improving + 2 patience
    assert log.best_epoch == 1

    cfg = TrainConfig(epochs=3, batch_size=4, lr=0.01, patience=30, seed=2)
    _, log = train(small_model(seed=2), train_set, val_set, cfg)
    assert log.stop_reason == "max_epochs"
    assert len(log.records) == 3


def test_train_rejects_empty_splits(toy_data):
    train_set, val_set = toy_data
    cfg = TrainConfig(epochs=1)
    with pytest.raises(EmptyDataset):
        train(small_model(), [], val_set, cfg)
    with pytest.raises(EmptyDataset):
        train(small_model(), train_set, [], cfg)


def test_train_is_seed_deterministic(toy_data):
    train_set, val_set = toy_data
    cfg = TrainConfig(epochs=5, batch_size=3, lr=0.02, patience=10, seed=7)
    logs = []
    for _ in range(2):
        model = small_model(seed=3, dropout=0.3)
        _, log = train(model, train_set, val_set, cfg)
        logs.append(log.to_jsonl())
    assert logs[0] == logs[1]  # byte-identical replay

    other = small_model(seed=3, dropout=0.3)
    _, log3 = train(
        other, train_set, val_set, TrainConfig(epochs=5, batch_size=3, lr=0.02, patience=10, seed=8)
    )
    assert log3.to_jsonl() != logs[0]


def test_train_log_serialization_shape(toy_data):
    train_set, val_set = toy_data
    cfg = TrainConfig(epochs=4, batch_size=4, lr=0.01, patience=10, seed=4)
    _, log = train(small_model(seed=4), train_set, val_set, cfg)
    lines = log.to_jsonl().strip().split("\n")
    assert len(lines) == len(log.records) + 1
    first = json.loads(lines[0])
    assert first["epoch"] == 1
    assert set(first) == {"epoch", "train_loss", "val_loss", "improved", "patience_left", "best_epoch"}
    summary = json.loads(lines[-1])
    assert summary["best_epoch"] == log.best_epoch
    assert summary["best_val_loss"] == log.best_val_loss
    assert summary["stop_reason"] in ("early_stop", "max_epochs")
    assert "time" not in log.to_jsonl().lower()


def test_train_sets_node_count(toy_data):
    train_set, val_set = toy_data
    model = small_model(seed=5)
    assert model.node_count is None
    model, _ = train(model, train_set, val_set, TrainConfig(epochs=1, seed=5))
    assert model.node_count == train_set[0].graph.node_count


# --- evaluate ----------------------------------------------------------------------


def test_evaluate_matches_per_sample_loop(toy_data):
    train_set, val_set = toy_data
    model = small_model(seed=6)
    got_loss, report = evaluate(model, val_set)
    want = np.mean([loss(predict(s, model), s.label, model) for s in val_set])
    assert got_loss == pytest.approx(want, abs=1e-12)
    assert report.accuracy is not None
    assert 0.0 <= report.roc_auc <= 1.0


def test_evaluate_rejects_empty():
    with pytest.raises(EmptyDataset):
        evaluate(small_model(), [])


# --- checkpoints ---------------------------------------------------------------------


@pytest.fixture()
def trained(toy_data, tmp_path):
    train_set, val_set = toy_data
    model = small_model(seed=8, layers=2, hidden=6, heads=2, dropout=0.1)
    model, _ = train(model, train_set, val_set, TrainConfig(epochs=2, batch_size=4, seed=8))
    path = tmp_path / "model.gpine"
    save_checkpoint(model, path)
    return model, path, val_set


def test_checkpoint_round_trip(trained):
    model, path, val_set = trained
    loaded = load_checkpoint(path)
    assert loaded.hyperparameters == model.hyperparameters
    assert loaded.node_count == model.node_count
    for s in val_set:
        a, b = predict(s, model), predict(s, loaded)
        # storage is float32, so agreement is close, not exact
        assert b.prob == pytest.approx(a.prob, rel=1e-5, abs=1e-6)
    # a second save of the quantized model is byte-identical
    again = path.with_suffix(".again")
    save_checkpoint(loaded, again)
    assert load_checkpoint(again).params["readout.w_f"].data.tobytes() == \
        loaded.params["readout.w_f"].data.tobytes()


def test_checkpoint_quantization_is_idempotent(trained):
    _, path, _ = trained
    loaded = load_checkpoint(path)
    second = path.with_suffix(".2")
    save_checkpoint(loaded, second)
    # manifests share the checksum because re-quantizing f32 values is a no-op
    assert _manifest(path)["checksum"] == _manifest(second)["checksum"]


def _manifest(path):
    blob = path.read_bytes()
    (n,) = struct.unpack_from("<Q", blob, len(CHECKPOINT_MAGIC))
    start = len(CHECKPOINT_MAGIC) + 8
    return json.loads(blob[start : start + n])


def _rewrite(path, out, mutate):
    """Parse, let ``mutate`` edit the manifest dict, reserialize."""
    blob = path.read_bytes()
    (n,) = struct.unpack_from("<Q", blob, len(CHECKPOINT_MAGIC))
    start = len(CHECKPOINT_MAGIC) + 8
    manifest = json.loads(blob[start : start + n])
    payload = blob[start + n :]
    mutate(manifest)
    body = json.dumps(manifest, sort_keys=True).encode()
    out.write_bytes(CHECKPOINT_MAGIC + struct.pack("<Q", len(body)) + body + payload)


def test_checkpoint_rejects_bad_magic(trained, tmp_path):
    _, path, _ = trained
    bad = tmp_path / "bad.gpine"
    bad.write_bytes(b"NOTGPN" + path.read_bytes()[6:])
    with pytest.raises(CorruptManifest):
        load_checkpoint(bad)


def test_checkpoint_rejects_truncation(trained, tmp_path):
    _, path, _ = trained
    blob = path.read_bytes()
    for cut in (4, 10, len(blob) // 2):
        bad = tmp_path / f"cut{cut}.gpine"
        bad.write_bytes(blob[:cut])
        with pytest.raises(CorruptManifest):
            load_checkpoint(bad)


def test_checkpoint_rejects_payload_tamper(trained, tmp_path):
    _, path, _ = trained
    blob = bytearray(path.read_bytes())
    blob[-1] ^= 0xFF
    bad = tmp_path / "flip.gpine"
    bad.write_bytes(bytes(blob))
    with pytest.raises(CorruptManifest):
        load_checkpoint(bad)


def test_checkpoint_rejects_garbage_manifest(trained, tmp_path):
    _, path, _ = trained
    body = b"{not json"
    bad = tmp_path / "json.gpine"
    bad.write_bytes(CHECKPOINT_MAGIC + struct.pack("<Q", len(body)) + body + b"\x00" * 8)
    with pytest.raises(CorruptManifest):
        load_checkpoint(bad)


def test_checkpoint_rejects_wrong_version(trained, tmp_path):
    _, path, _ = trained
    bad = tmp_path / "v99.gpine"
    _rewrite(path, bad, lambda m: m.update(format_version=99))
    with pytest.raises(VersionMismatch):
        load_checkpoint(bad)


def test_checkpoint_rejects_doctored_shape(trained, tmp_path):
    _, path, _ = trained
    bad = tmp_path / "shape.gpine"

    def mutate(m):
        entry = next(e for e in m["tensors"] if e["name"] == "readout.w_f")
        entry["shape"] = [2, 3]

    _rewrite(path, bad, mutate)
    with pytest.raises(VersionMismatch) as err:
        load_checkpoint(bad)
    msg = str(err.value)
    assert "(2, 3)" in msg and "(6,)" in msg  # names both shapes


def test_checkpoint_rejects_renamed_tensor(trained, tmp_path):
    _, path, _ = trained
    bad = tmp_path / "rename.gpine"
    _rewrite(path, bad, lambda m: m["tensors"][0].update(name="who.knows"))
    with pytest.raises(VersionMismatch):
        load_checkpoint(bad)


def test_checkpoint_rejects_missing_hyperparameter(trained, tmp_path):
    _, path, _ = trained
    bad = tmp_path / "hp.gpine"
    _rewrite(path, bad, lambda m: m["hyperparameters"].pop("hidden"))
    with pytest.raises(CorruptManifest):
        load_checkpoint(bad)


def test_checkpoint_rejects_block_overrun(trained, tmp_path):
    _, path, _ = trained
    bad = tmp_path / "overrun.gpine"
    _rewrite(path, bad, lambda m: m["tensors"][-1].update(offset=10**9))
    with pytest.raises(CorruptManifest):
        load_checkpoint(bad)
