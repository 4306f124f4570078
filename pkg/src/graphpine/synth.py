"""Synthetic dataset generator with a planted importance-feature signal.

The label of a (drug, cell) pair is 1 exactly when
``sum_i I_i * (w . X_i)`` exceeds the median over all generated pairs,
where ``I`` is the drug's sparse target-importance vector, ``X`` the cell's
node features and ``w`` a hidden weight vector drawn once per dataset. A
model can only beat chance on this signal by combining importance with
features, which is what the gated layers are for.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dataset import SampleTensor, assemble_sample
from .graph import EDGE_TYPES, GeneGraph, build_graph
from .preprocess import ResponseRecord, SplitPlan, zero_shot_split


@dataclass(frozen=True)
class SynthSpec:
    """Generator knobs; entity counts default to a roughly square grid."""

    nodes: int = 50
    samples: int = 200
    seed: int = 7
    edges: Optional[int] = None
    drugs: Optional[int] = None
    cells: Optional[int] = None
    target_density: float = 0.15
    cell_frac: float = 0.7
    drug_frac: float = 0.6
    val_frac: float = 0.2

    def __post_init__(self) -> None:
        if self.nodes < 2:
            raise ValueError(f"need at least 2 nodes, got {self.nodes}")
        if self.samples < 4:
            raise ValueError(f"need at least 4 samples, got {self.samples}")
        if not 0.0 < self.target_density <= 1.0:
            raise ValueError(f"target_density must be in (0, 1], got {self.target_density}")

    def resolved_counts(self) -> tuple[int, int, int]:
        """(edges, drugs, cells) with defaults filled in."""
        edges = self.edges if self.edges is not None else 4 * self.nodes
        cells = self.cells if self.cells is not None else max(4, math.ceil(math.sqrt(self.samples / 2)))
        drugs = self.drugs if self.drugs is not None else max(4, math.ceil(self.samples / cells))
        return edges, drugs, cells


def generate(spec: SynthSpec) -> tuple[GeneGraph, list[SampleTensor], SplitPlan]:
    """Generate a graph, labelled samples and a zero-shot split plan."""
    rng = np.random.default_rng(spec.seed)
    n_edges, n_drugs, n_cells = spec.resolved_counts()
    if n_drugs * n_cells < spec.samples:
        raise ValueError(
            f"{n_drugs} drugs x {n_cells} cells cannot cover {spec.samples} samples"
        )

    genes = tuple(f"G{i:04d}" for i in range(spec.nodes))
    drugs = [f"D{i:03d}" for i in range(n_drugs)]
    cells = [f"C{i:03d}" for i in range(n_cells)]

    # Distinct (src, dst, type) triples, no self-edges.
    max_triples = spec.nodes * (spec.nodes - 1) * len(EDGE_TYPES)
    n_edges = min(n_edges, max_triples)
    triples: set[tuple[int, int, int]] = set()
    while len(triples) < n_edges:
        src = int(rng.integers(spec.nodes))
        dst = int(rng.integers(spec.nodes))
        if src == dst:
            continue
        triples.add((src, dst, int(rng.integers(len(EDGE_TYPES)))))
    typed_edges = [(genes[s], EDGE_TYPES[t], genes[d]) for s, d, t in sorted(triples)]
    graph = build_graph(genes, typed_edges)

    # Per-cell features and per-drug sparse target importance in {0} u [0.5, 1].
    features = {c: rng.standard_normal((spec.nodes, 4)) for c in cells}
    importance: dict[str, np.ndarray] = {}
    for d in drugs:
        mask = rng.random(spec.nodes) < spec.target_density
        while mask.sum() < 2:  # every drug keeps at least two known targets
            mask[int(rng.integers(spec.nodes))] = True
        vec = np.zeros(spec.nodes)
        vec[mask] = 0.5 + 0.5 * rng.random(int(mask.sum()))
        importance[d] = vec

    hidden_w = rng.standard_normal(4)

    grid = [(d, c) for d in drugs for c in cells]
    if len(grid) > spec.samples:
        chosen = rng.choice(len(grid), size=spec.samples, replace=False)
        grid = [grid[i] for i in np.sort(chosen)]

    signal = np.array([float(importance[d] @ (features[c] @ hidden_w)) for d, c in grid])
    cut = float(np.median(signal))
    labels = (signal > cut).astype(int)

    responses = [
        ResponseRecord(drug_id=d, cell_id=c, log_ic50=float(s), label=int(y))
        for (d, c), s, y in zip(grid, signal, labels)
    ]
    split = zero_shot_split(
        responses,
        cell_frac=spec.cell_frac,
        drug_frac=spec.drug_frac,
        val_frac=spec.val_frac,
        seed=spec.seed,
    )
    kept = set(split.train) | set(split.val) | set(split.test)
    samples = [
        assemble_sample(d, c, features[c], importance[d], int(y), graph)
        for (d, c), y in zip(grid, labels)
        if (d, c) in kept
    ]
    return graph, samples, split
