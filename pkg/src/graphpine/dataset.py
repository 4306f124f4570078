"""Sample tensors and the on-disk dataset bundle format.

A bundle directory holds:

- ``manifest.json``: counts, seed, fractions, threshold, and a file index
  with shapes and sha256 checksums (plus a ``created_utc`` stamp that is
  excluded from reproducibility comparisons);
- ``nodes.txt`` and ``edges.tsv``: the gene graph;
- ``samples.tsv``: drug, cell, label and split per sample;
- ``features.bin`` / ``importance.bin``: little-endian float32 tensors,
  row-major, with a small shape header.

Tensors are quantized to float32 when a sample is assembled, so a bundle
round-trips bit-identically.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .exceptions import CorruptManifest, DimensionMismatch, IoFailure, MalformedRecord
from .graph import GeneGraph, build_graph, load_edge_tsv, load_node_list
from .preprocess import SplitPlan

MANIFEST_VERSION = 1
TENSOR_MAGIC = b"GPTN"

SPLIT_NAMES = ("train", "val", "test")


@dataclass(eq=False)
class SampleTensor:
    """Input bundle for one (drug, cell line) pair.

    ``features`` is the nodes x 4 omics matrix, ``importance`` the initial
    per-gene importance vector; both are float32-exact values held as
    float64 arrays. The graph is shared across samples, never copied.
    """

    drug_id: str
    cell_id: str
    features: np.ndarray
    importance: np.ndarray
    label: int
    graph: GeneGraph

    def __post_init__(self) -> None:
        n = self.graph.node_count
        feats = np.asarray(self.features, dtype=np.float64)
        imp = np.asarray(self.importance, dtype=np.float64)
        if feats.shape != (n, 4):
            raise DimensionMismatch(f"features {feats.shape} vs {n} graph nodes x 4 sources")
        if imp.shape != (n,):
            raise DimensionMismatch(f"importance {imp.shape} vs {n} graph nodes")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        self.features = feats
        self.importance = imp


def assemble_sample(
    drug_id: str,
    cell_id: str,
    features: np.ndarray,
    dti_scores: np.ndarray,
    label: int,
    graph: GeneGraph,
) -> SampleTensor:
    """Build a sample, quantizing tensors to float32-representable values."""
    return SampleTensor(
        drug_id=drug_id,
        cell_id=cell_id,
        features=np.asarray(features, dtype=np.float32).astype(np.float64),
        importance=np.asarray(dti_scores, dtype=np.float32).astype(np.float64),
        label=int(label),
        graph=graph,
    )


@dataclass
class Bundle:
    """A loaded dataset bundle: shared graph, ordered samples, split tags."""

    graph: GeneGraph
    samples: list[SampleTensor]
    split_of: list[str]  # one of SPLIT_NAMES per sample
    manifest: dict

    def subset(self, split: str) -> list[SampleTensor]:
        if split not in SPLIT_NAMES:
            raise ValueError(f"unknown split {split!r}")
        return [s for s, tag in zip(self.samples, self.split_of) if tag == split]


# --- binary tensor files ----------------------------------------------------


def write_tensor(path: Path, array: np.ndarray) -> None:
    """Write magic, uint32 ndim, uint32 dims, then float32 LE row-major data."""
    arr = np.asarray(array)
    header = TENSOR_MAGIC + struct.pack("<I", arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    path.write_bytes(header + payload)


def read_tensor(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    if blob[:4] != TENSOR_MAGIC:
        raise CorruptManifest(f"{path.name}: bad tensor magic")
    (ndim,) = struct.unpack_from("<I", blob, 4)
    shape = struct.unpack_from(f"<{ndim}I", blob, 8)
    offset = 8 + 4 * ndim
    expected = int(np.prod(shape)) * 4
    if len(blob) - offset != expected:
        raise CorruptManifest(f"{path.name}: payload is {len(blob) - offset} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=offset).reshape(shape)
    return data.astype(np.float64)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# --- bundle write / load ------------------------------------------------------


def write_bundle(
    out_dir: str | Path,
    graph: GeneGraph,
    samples: Sequence[SampleTensor],
    split: SplitPlan,
    meta: Optional[Mapping[str, object]] = None,
) -> Path:
    """Write a dataset bundle; returns the manifest path.

    Samples must cover exactly the pairs of the split plan; their stored
    order is train, then val, then test, preserving within-split order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    by_pair = {(s.drug_id, s.cell_id): s for s in samples}
    if len(by_pair) != len(samples):
        raise MalformedRecord("duplicate (drug, cell) samples")
    ordered: list[SampleTensor] = []
    split_of: list[str] = []
    for tag, pairs in zip(SPLIT_NAMES, (split.train, split.val, split.test)):
        for pair in pairs:
            if pair not in by_pair:
                raise MalformedRecord(f"split pair {pair} has no sample")
            ordered.append(by_pair[pair])
            split_of.append(tag)
    if len(ordered) != len(samples):
        raise MalformedRecord("samples outside the split plan")

    try:
        (out / "nodes.txt").write_text("".join(g + "\n" for g in graph.node_ids), encoding="utf-8")
        (out / "edges.tsv").write_text(
            "".join(f"{s}\t{t}\t{d}\n" for s, t, d in graph.typed_edges()), encoding="utf-8"
        )
        (out / "samples.tsv").write_text(
            "drug_id\tcell_id\tlabel\tsplit\n"
            + "".join(
                f"{s.drug_id}\t{s.cell_id}\t{s.label}\t{tag}\n"
                for s, tag in zip(ordered, split_of)
            ),
            encoding="utf-8",
        )
        features = np.stack([s.features for s in ordered]) if ordered else np.zeros((0, graph.node_count, 4))
        importance = np.stack([s.importance for s in ordered]) if ordered else np.zeros((0, graph.node_count))
        write_tensor(out / "features.bin", features)
        write_tensor(out / "importance.bin", importance)

        manifest = {
            "format_version": MANIFEST_VERSION,
            "created_utc": datetime.now(timezone.utc).isoformat(),
            "seed": split.seed,
            "counts": {
                "genes": graph.node_count,
                "edges": graph.edge_count,
                "samples": len(ordered),
                "train": len(split.train),
                "val": len(split.val),
                "test": len(split.test),
                "drugs": len({s.drug_id for s in ordered}),
                "cells": len({s.cell_id for s in ordered}),
            },
            "files": {
                "nodes": {"path": "nodes.txt", "sha256": _sha256(out / "nodes.txt")},
                "edges": {"path": "edges.tsv", "sha256": _sha256(out / "edges.tsv")},
                "samples": {"path": "samples.tsv", "sha256": _sha256(out / "samples.tsv")},
                "features": {
                    "path": "features.bin",
                    "shape": list(features.shape),
                    "sha256": _sha256(out / "features.bin"),
                },
                "importance": {
                    "path": "importance.bin",
                    "shape": list(importance.shape),
                    "sha256": _sha256(out / "importance.bin"),
                },
            },
        }
        if meta:
            manifest["meta"] = dict(meta)
        manifest_path = out / "manifest.json"
        manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as err:
        raise IoFailure(f"cannot write bundle under {out}: {err}") from err
    return manifest_path


def load_bundle(bundle_dir: str | Path) -> Bundle:
    """Load and self-check a bundle against its manifest."""
    root = Path(bundle_dir)
    manifest_path = root / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except OSError as err:
        raise IoFailure(f"cannot read {manifest_path}: {err}") from err
    except json.JSONDecodeError as err:
        raise CorruptManifest(f"{manifest_path}: invalid JSON: {err}") from None

    if manifest.get("format_version") != MANIFEST_VERSION:
        raise CorruptManifest(
            f"manifest format_version {manifest.get('format_version')!r}, expected {MANIFEST_VERSION}"
        )
    files = manifest.get("files")
    counts = manifest.get("counts")
    if not isinstance(files, dict) or not isinstance(counts, dict):
        raise CorruptManifest("manifest missing files or counts")

    for name, entry in files.items():
        fp = root / entry["path"]
        if not fp.exists():
            raise CorruptManifest(f"manifest lists missing file {entry['path']!r}")
        if _sha256(fp) != entry["sha256"]:
            raise CorruptManifest(f"checksum mismatch for {entry['path']!r}")

    graph = build_graph(
        load_node_list(root / files["nodes"]["path"]),
        load_edge_tsv(root / files["edges"]["path"]),
    )
    features = read_tensor(root / files["features"]["path"])
    importance = read_tensor(root / files["importance"]["path"])
    if list(features.shape) != files["features"]["shape"]:
        raise CorruptManifest(
            f"features shape {list(features.shape)} vs manifest {files['features']['shape']}"
        )
    if list(importance.shape) != files["importance"]["shape"]:
        raise CorruptManifest(
            f"importance shape {list(importance.shape)} vs manifest {files['importance']['shape']}"
        )

    header, body = _read_samples_tsv(root / files["samples"]["path"])
    if len(body) != counts["samples"] or features.shape[0] != counts["samples"]:
        raise CorruptManifest(
            f"sample rows {len(body)} / tensors {features.shape[0]} vs manifest {counts['samples']}"
        )
    if graph.node_count != counts["genes"] or graph.edge_count != counts["edges"]:
        raise CorruptManifest("graph counts disagree with manifest")

    samples: list[SampleTensor] = []
    split_of: list[str] = []
    for i, row in enumerate(body):
        drug, cell, label, tag = row
        if tag not in SPLIT_NAMES:
            raise CorruptManifest(f"samples.tsv row {i + 2}: unknown split {tag!r}")
        samples.append(
            SampleTensor(
                drug_id=drug,
                cell_id=cell,
                features=features[i],
                importance=importance[i],
                label=int(label),
                graph=graph,
            )
        )
        split_of.append(tag)
    for tag, count_key in zip(SPLIT_NAMES, ("train", "val", "test")):
        if split_of.count(tag) != counts[count_key]:
            raise CorruptManifest(f"{count_key} count disagrees with manifest")
    return Bundle(graph=graph, samples=samples, split_of=split_of, manifest=manifest)


def _read_samples_tsv(path: Path) -> tuple[list[str], list[list[str]]]:
    lines = path.read_text(encoding="utf-8").splitlines()
    rows = [line.split("\t") for line in lines if line.strip()]
    if not rows or rows[0] != ["drug_id", "cell_id", "label", "split"]:
        raise CorruptManifest(f"{path.name}: unexpected header")
    for i, row in enumerate(rows[1:]):
        if len(row) != 4:
            raise CorruptManifest(f"{path.name}: row {i + 2} has {len(row)} fields")
    return rows[0], rows[1:]
