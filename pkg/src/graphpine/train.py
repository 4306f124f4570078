"""Adam training loop with early stopping, plus checkpoint persistence.

Batching is gradient accumulation over the shared graph: each batch builds
one mean-loss tape over its samples and takes a single Adam step. Early
stopping tracks the best validation loss; an epoch counts as an improvement
only when it beats the best by at least ``min_delta``, and only those
epochs refresh the snapshot that is ultimately returned.

Checkpoints are a single file: a JSON manifest (format version, model
hyperparameters, tensor index with shapes and byte offsets, payload
checksum) followed by raw little-endian float32 tensor blocks.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import adam_step, compute_gradients
from .dataset import SampleTensor
from .exceptions import (
    CorruptManifest,
    DivergedLoss,
    EmptyDataset,
    IoFailure,
    NonFiniteLoss,
    NonFiniteValue,
    VersionMismatch,
)
from .metrics import MetricsReport, compute_report
from .model import GraphPineModel, forward_tensors, loss, loss_tensor, predict

CHECKPOINT_MAGIC = b"GPINE\n"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for one training run."""

    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    patience: int = 30
    min_delta: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ValueError("epochs, batch_size and patience must be positive")
        if self.lr <= 0 or self.min_delta < 0:
            raise ValueError("lr must be positive and min_delta non-negative")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    improved: bool
    patience_left: int
    best_epoch: int


@dataclass
class TrainLog:
    """Per-epoch history plus the stopping outcome.

    Serialization is deliberately timestamp-free so identical seeds produce
    byte-identical logs.
    """

    records: list[EpochRecord] = field(default_factory=list)
    stop_reason: str = ""
    best_epoch: int = 0
    best_val_loss: float = float("inf")

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {
                    "epoch": r.epoch,
                    "train_loss": r.train_loss,
                    "val_loss": r.val_loss,
                    "improved": r.improved,
                    "patience_left": r.patience_left,
                    "best_epoch": r.best_epoch,
                },
                sort_keys=True,
            )
            for r in self.records
        ]
        lines.append(
            json.dumps(
                {
                    "stop_reason": self.stop_reason,
                    "best_epoch": self.best_epoch,
                    "best_val_loss": self.best_val_loss,
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


class EarlyStopper:
    """Patience counter over validation losses.

    ``update`` returns True when training should stop. An epoch improves
    only if it undercuts the best loss by at least ``min_delta``; improving
    epochs reset the counter and move the best marker, all others burn one
    unit of patience.
    """

    def __init__(self, patience: int, min_delta: float) -> None:
        if patience < 1:
            raise ValueError(f"patience must be positive, got {patience}")
        self.patience = patience
        self.min_delta = min_delta
        self.best_loss = float("inf")
        self.best_epoch = 0
        self.remaining = patience
        self.epoch = 0
        self.improved = False

    def update(self, val_loss: float) -> bool:
        self.epoch += 1
        if self.best_loss - val_loss >= self.min_delta:
            self.best_loss = val_loss
            self.best_epoch = self.epoch
            self.remaining = self.patience
            self.improved = True
            return False
        self.improved = False
        self.remaining -= 1
        return self.remaining <= 0


def _mean_loss(model: GraphPineModel, samples: Sequence[SampleTensor]) -> float:
    total = 0.0
    for sample in samples:
        total += loss(predict(sample, model), sample.label, model)
    return total / len(samples)


def train(
    model: GraphPineModel,
    train_set: Sequence[SampleTensor],
    val_set: Sequence[SampleTensor],
    config: TrainConfig,
) -> tuple[GraphPineModel, TrainLog]:
    """Train in place and return (model restored to best epoch, log).

    One seeded generator drives both the per-epoch shuffle and the dropout
    masks, so runs with equal seeds are bit-identical.
    """
    if not train_set or not val_set:
        raise EmptyDataset(f"train={len(train_set)}, val={len(val_set)} samples")
    rng = np.random.default_rng(config.seed)
    stopper = EarlyStopper(config.patience, config.min_delta)
    log = TrainLog()
    model.node_count = train_set[0].graph.node_count
    best_params = model.params.snapshot()
    stop_reason = "max_epochs"

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        epoch_total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [train_set[i] for i in order[start : start + config.batch_size]]
            losses = []
            for sample in batch:
                prob, importance = forward_tensors(sample, model, train_mode=True, rng=rng)
                losses.append(loss_tensor(prob, importance, sample.label, model))
            batch_loss = losses[0] if len(losses) == 1 else sum(losses[1:], start=losses[0])
            batch_loss = batch_loss * (1.0 / len(losses))
            try:
                grads = compute_gradients(batch_loss, model.params)
            except (NonFiniteValue, NonFiniteLoss) as err:
                raise DivergedLoss(f"epoch {epoch}: {err}") from err
            adam_step(model.params, grads, lr=config.lr)
            epoch_total += batch_loss.item() * len(batch)
        train_loss = epoch_total / len(train_set)
        val_loss = _mean_loss(model, val_set)
        if not np.isfinite(val_loss):
            raise DivergedLoss(f"epoch {epoch}: validation loss is not finite")
        should_stop = stopper.update(val_loss)
        if stopper.improved:
            best_params = model.params.snapshot()
        log.records.append(
            EpochRecord(
                epoch=epoch,
                train_loss=train_loss,
                val_loss=val_loss,
                improved=stopper.improved,
                patience_left=stopper.remaining,
                best_epoch=stopper.best_epoch,
            )
        )
        if should_stop:
            stop_reason = "early_stop"
            break

    model.params.restore(best_params)
    log.stop_reason = stop_reason
    log.best_epoch = stopper.best_epoch
    log.best_val_loss = stopper.best_loss
    return model, log


def evaluate(
    model: GraphPineModel,
    samples: Sequence[SampleTensor],
) -> tuple[float, MetricsReport]:
    """Mean per-sample loss and a full metrics report on a dataset."""
    if not samples:
        raise EmptyDataset("evaluate needs at least one sample")
    labels: list[int] = []
    scores: list[float] = []
    total = 0.0
    for sample in samples:
        pred = predict(sample, model)
        total += loss(pred, sample.label, model)
        labels.append(sample.label)
        scores.append(pred.prob)
    return total / len(samples), compute_report(labels, scores)


# --- checkpoints -----------------------------------------------------------


def save_checkpoint(model: GraphPineModel, path: str | Path) -> None:
    """Write the model as one file: JSON manifest plus float32 blocks."""
    names = model.params.names()
    blocks: list[bytes] = []
    index: list[dict] = []
    offset = 0
    for name in names:
        data = model.params[name].data
        raw = np.ascontiguousarray(data, dtype="<f4").tobytes()
        index.append(
            {
                "name": name,
                "shape": list(data.shape),
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blocks.append(raw)
        offset += len(raw)
    payload = b"".join(blocks)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "hyperparameters": model.hyperparameters,
        "tensors": index,
        "checksum": hashlib.sha256(payload).hexdigest(),
    }
    body = json.dumps(manifest, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<Q", len(body)))
            fh.write(body)
            fh.write(payload)
    except OSError as err:
        raise IoFailure(f"cannot write checkpoint {path}: {err}") from err


def load_checkpoint(path: str | Path) -> GraphPineModel:
    """Rebuild a model from a checkpoint, verifying layout and checksum.

    Raises :class:`VersionMismatch` when the format version or any tensor
    shape disagrees with the manifest's own hyperparameters, and
    :class:`CorruptManifest` for truncation, bad JSON or checksum failures.
    """
    try:
        blob = Path(path).read_bytes()
    except OSError as err:
        raise IoFailure(f"cannot read checkpoint {path}: {err}") from err
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise CorruptManifest("not a checkpoint file (bad magic)")
    header_end = len(CHECKPOINT_MAGIC) + 8
    if len(blob) < header_end:
        raise CorruptManifest("checkpoint truncated before manifest length")
    (manifest_len,) = struct.unpack_from("<Q", blob, len(CHECKPOINT_MAGIC))
    manifest_end = header_end + manifest_len
    if len(blob) < manifest_end:
        raise CorruptManifest("checkpoint truncated inside manifest")
    try:
        manifest = json.loads(blob[header_end:manifest_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CorruptManifest(f"manifest is not valid JSON: {err}") from None

    version = manifest.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise VersionMismatch(f"checkpoint format {version!r}, expected {CHECKPOINT_VERSION}")
    payload = blob[manifest_end:]
    if hashlib.sha256(payload).hexdigest() != manifest.get("checksum"):
        raise CorruptManifest("tensor payload checksum mismatch")

    hp = manifest.get("hyperparameters", {})
    try:
        model = GraphPineModel.build(
            layers=hp["layers"],
            hidden=hp["hidden"],
            heads=hp["heads"],
            alpha=hp["alpha"],
            theta=hp["theta"],
            dropout=hp["dropout"],
            w_bce=hp["w_bce"],
            w_imp=hp["w_imp"],
            gate_enabled=hp["gate_enabled"],
            seed=0,
        )
    except KeyError as err:
        raise CorruptManifest(f"manifest missing hyperparameter {err}") from None
    model.node_count = hp.get("node_count")

    index = manifest.get("tensors", [])
    stored = {entry["name"]: entry for entry in index}
    if set(stored) != set(model.params.names()):
        raise VersionMismatch(
            f"checkpoint tensors {sorted(stored)} do not match model parameters"
        )
    for name in model.params.names():
        entry = stored[name]
        tensor = model.params[name]
        expected_shape = tuple(tensor.data.shape)
        got_shape = tuple(entry["shape"])
        if got_shape != expected_shape:
            raise VersionMismatch(
                f"tensor {name!r} has shape {got_shape}, model built from this "
                f"manifest expects {expected_shape}"
            )
        start = entry["offset"]
        end = start + entry["nbytes"]
        if end > len(payload) or entry["nbytes"] != int(np.prod(got_shape)) * 4:
            raise CorruptManifest(f"tensor {name!r} block exceeds payload")
        data = np.frombuffer(payload[start:end], dtype="<f4").reshape(got_shape)
        tensor.data = data.astype(np.float64)
    return model
