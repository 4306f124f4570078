"""Immutable gene-gene interaction graph with typed, one-hot encoded edges."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import (
    DimensionMismatch,
    DuplicateEdge,
    DuplicateGeneId,
    GraphTooSmall,
    IndexOutOfRange,
    MalformedRecord,
    UnknownEdgeType,
    UnknownGene,
)

EDGE_TYPES: tuple[str, ...] = (
    "catalysis-precedes",
    "controls-expression-of",
    "controls-phosphorylation-of",
    "controls-state-change-of",
    "controls-transport-of",
    "in-complex-with",
    "interacts-with",
)
"""Recognized interaction types, in one-hot index order."""

EDGE_TYPE_INDEX: dict[str, int] = {name: i for i, name in enumerate(EDGE_TYPES)}

NUM_EDGE_TYPES = len(EDGE_TYPES)


@dataclass(frozen=True, eq=False)
class GeneGraph:
    """Directed multigraph over a fixed, ordered gene list.

    The order of ``node_ids`` is the canonical index order used by feature
    matrices, importance vectors and every export. Parallel edges between the
    same endpoints are allowed as long as their types differ; exact
    (src, dst, type) duplicates are rejected. Instances are immutable and can
    be shared freely between samples and worker processes.
    """

    node_ids: tuple[str, ...]
    edges: tuple[tuple[int, int], ...]
    edge_attr: np.ndarray  # (E, 7) one-hot rows, float64

    def __post_init__(self) -> None:
        index = {g: i for i, g in enumerate(self.node_ids)}
        if len(index) != len(self.node_ids):
            seen: set[str] = set()
            dup = next(g for g in self.node_ids if g in seen or seen.add(g))
            raise DuplicateGeneId(f"gene id {dup!r} appears more than once")
        n = len(self.node_ids)
        attr = np.asarray(self.edge_attr, dtype=np.float64)
        if attr.shape != (len(self.edges), NUM_EDGE_TYPES):
            raise DimensionMismatch(
                f"edge_attr shape {attr.shape} does not match "
                f"expected {(len(self.edges), NUM_EDGE_TYPES)}"
            )
        seen_edges: set[tuple[int, int, int]] = set()
        for (src, dst), row in zip(self.edges, attr):
            if not (0 <= src < n and 0 <= dst < n):
                raise IndexOutOfRange(f"edge ({src}, {dst}) outside [0, {n})")
            hot = np.flatnonzero(row)
            if hot.size != 1 or row[hot[0]] != 1.0:
                raise UnknownEdgeType(f"edge ({src}, {dst}) attribute row is not one-hot")
            key = (src, dst, int(hot[0]))
            if key in seen_edges:
                raise DuplicateEdge(
                    f"duplicate edge {self.node_ids[src]} -[{EDGE_TYPES[key[2]]}]-> "
                    f"{self.node_ids[dst]}"
                )
            seen_edges.add(key)
        attr.setflags(write=False)
        object.__setattr__(self, "edge_attr", attr)
        object.__setattr__(self, "_index", index)
        src_idx = np.fromiter((e[0] for e in self.edges), dtype=np.int64, count=len(self.edges))
        dst_idx = np.fromiter((e[1] for e in self.edges), dtype=np.int64, count=len(self.edges))
        object.__setattr__(self, "_src", src_idx)
        object.__setattr__(self, "_dst", dst_idx)

    @property
    def node_count(self) -> int:
        return len(self.node_ids)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def src_indices(self) -> np.ndarray:
        return self._src  # type: ignore[attr-defined]

    @property
    def dst_indices(self) -> np.ndarray:
        return self._dst  # type: ignore[attr-defined]

    def index_of(self, gene_id: str) -> int:
        try:
            return self._index[gene_id]  # type: ignore[attr-defined]
        except KeyError:
            raise UnknownGene(f"gene {gene_id!r} is not in the graph") from None

    def __contains__(self, gene_id: str) -> bool:
        return gene_id in self._index  # type: ignore[attr-defined]

    def edge_type_indices(self) -> np.ndarray:
        """One-hot column index of each edge, in edge order."""
        return np.argmax(self.edge_attr, axis=1)

    def typed_edges(self) -> list[tuple[str, str, str]]:
        """Edges as (src_gene, type_name, dst_gene) in insertion order."""
        types = self.edge_type_indices()
        return [
            (self.node_ids[s], EDGE_TYPES[t], self.node_ids[d])
            for (s, d), t in zip(self.edges, types)
        ]


def build_graph(
    node_ids: Sequence[str],
    typed_edges: Iterable[tuple[str, str, str]],
) -> GeneGraph:
    """Build a :class:`GeneGraph` from gene ids and (src, type, dst) triples.

    Raises :class:`UnknownGene` for endpoints missing from ``node_ids``,
    :class:`UnknownEdgeType` for types outside :data:`EDGE_TYPES`,
    :class:`DuplicateEdge` for repeated triples and :class:`DuplicateGeneId`
    for a repeated node id.
    """
    ids = tuple(node_ids)
    index: dict[str, int] = {}
    for g in ids:
        if g in index:
            raise DuplicateGeneId(f"gene id {g!r} appears more than once")
        index[g] = len(index)

    edges: list[tuple[int, int]] = []
    rows: list[np.ndarray] = []
    seen: set[tuple[int, int, int]] = set()
    for src_id, type_name, dst_id in typed_edges:
        if src_id not in index:
            raise UnknownGene(f"edge source {src_id!r} is not in the node list")
        if dst_id not in index:
            raise UnknownGene(f"edge target {dst_id!r} is not in the node list")
        if type_name not in EDGE_TYPE_INDEX:
            raise UnknownEdgeType(f"unknown interaction type {type_name!r}")
        t = EDGE_TYPE_INDEX[type_name]
        key = (index[src_id], index[dst_id], t)
        if key in seen:
            raise DuplicateEdge(f"duplicate edge {src_id} -[{type_name}]-> {dst_id}")
        seen.add(key)
        edges.append((key[0], key[1]))
        row = np.zeros(NUM_EDGE_TYPES, dtype=np.float64)
        row[t] = 1.0
        rows.append(row)

    attr = np.stack(rows) if rows else np.zeros((0, NUM_EDGE_TYPES), dtype=np.float64)
    return GeneGraph(node_ids=ids, edges=tuple(edges), edge_attr=attr)


def degree_centrality(graph: GeneGraph) -> np.ndarray:
    """Distinct-neighbor degree of each node, scaled by 1 / (|V| - 1).

    A neighbor is any other gene connected in either direction; parallel
    edges between the same pair count once.
    """
    n = graph.node_count
    if n < 2:
        raise GraphTooSmall(f"degree centrality needs at least 2 nodes, got {n}")
    neighbors: list[set[int]] = [set() for _ in range(n)]
    for src, dst in graph.edges:
        if src != dst:
            neighbors[src].add(dst)
            neighbors[dst].add(src)
    counts = np.fromiter((len(s) for s in neighbors), dtype=np.float64, count=n)
    return counts / (n - 1)


def induced_subgraph(graph: GeneGraph, keep: Iterable[int]) -> GeneGraph:
    """Subgraph on ``keep`` node indices, preserving original node order.

    Keeps exactly the edges whose endpoints both survive, with their
    attribute rows, and reindexes nodes onto the compacted order.
    """
    keep_set = set(int(i) for i in keep)
    n = graph.node_count
    for i in keep_set:
        if not (0 <= i < n):
            raise IndexOutOfRange(f"node index {i} outside [0, {n})")
    kept = sorted(keep_set)
    remap = {old: new for new, old in enumerate(kept)}
    node_ids = tuple(graph.node_ids[i] for i in kept)
    edges: list[tuple[int, int]] = []
    rows: list[np.ndarray] = []
    for (src, dst), row in zip(graph.edges, graph.edge_attr):
        if src in keep_set and dst in keep_set:
            edges.append((remap[src], remap[dst]))
            rows.append(np.asarray(row, dtype=np.float64))
    attr = np.stack(rows) if rows else np.zeros((0, NUM_EDGE_TYPES), dtype=np.float64)
    return GeneGraph(node_ids=node_ids, edges=tuple(edges), edge_attr=attr)


def load_node_list(path: str | Path) -> list[str]:
    """Read one gene id per line, ignoring blank lines."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line.strip() for line in lines if line.strip()]


def load_edge_tsv(path: str | Path) -> list[tuple[str, str, str]]:
    """Read headerless src<TAB>type<TAB>dst rows."""
    out: list[tuple[str, str, str]] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 3:
            raise MalformedRecord(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        out.append((parts[0], parts[1], parts[2]))
    return out
