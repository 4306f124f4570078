"""Quantifying how propagation reshapes importance, plus explanation export.

Comparisons are always "before" (the initial drug-target scores fed into
the model) against "after" (the final propagated importance the model
returns). Spearman correlations use average ranks; the rank-shift view uses
a strict ranking (rank 1 is the highest value, ties break toward the lower
node index) so every node has a definite position.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import EmptyInput, LengthMismatch, TooFewNonzero, ZeroVector
from .graph import GeneGraph, induced_subgraph
from .metrics import average_ranks


@dataclass(frozen=True)
class RankShiftStats:
    """How far nodes moved in the importance ranking."""

    pct_rank_changed: float  # percent of nodes whose rank moved at all
    avg_abs_shift: float
    max_up: int  # most positions gained (>= 0)
    max_down: int  # most positions lost, as a negative number (<= 0)


@dataclass(frozen=True)
class PropagationStats:
    """Aggregate before/after comparison over a set of samples.

    Correlation fields are ``None`` when undefined for every pair (for
    example a constant importance vector has no rank variance).
    """

    cosine: Optional[float]
    spearman_all: Optional[float]
    spearman_nonzero: Optional[float]
    pct_rank_changed: float
    avg_abs_shift: float
    max_up: int
    max_down: int
    density_before: float
    density_after: float
    mean_interactions_before: float
    mean_interactions_after: float

    def to_dict(self) -> dict:
        return {
            "cosine": self.cosine,
            "spearman_all": self.spearman_all,
            "spearman_nonzero": self.spearman_nonzero,
            "pct_rank_changed": self.pct_rank_changed,
            "avg_abs_shift": self.avg_abs_shift,
            "max_up": self.max_up,
            "max_down": self.max_down,
            "density_before": self.density_before,
            "density_after": self.density_after,
            "mean_interactions_before": self.mean_interactions_before,
            "mean_interactions_after": self.mean_interactions_after,
        }


def _as_pair(before, after) -> tuple[np.ndarray, np.ndarray]:
    b = np.asarray(before, dtype=np.float64)
    a = np.asarray(after, dtype=np.float64)
    if b.shape != a.shape or b.ndim != 1:
        raise LengthMismatch(f"before {b.shape} vs after {a.shape}")
    if b.size == 0:
        raise EmptyInput("empty importance vectors")
    return b, a


def _pearson(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        return None
    return float((xc * yc).sum() / denom)


def _spearman(x: np.ndarray, y: np.ndarray) -> Optional[float]:
    return _pearson(average_ranks(x), average_ranks(y))


def compare_importance(
    before: Sequence[float],
    after: Sequence[float],
) -> tuple[float, Optional[float], Optional[float]]:
    """Cosine and Spearman similarity of one before/after pair.

    Returns (cosine, spearman over all entries, spearman restricted to the
    entries where ``before`` is nonzero). A Spearman value is ``None`` when
    either rank vector is constant. Raises :class:`ZeroVector` if either
    vector has zero norm and :class:`TooFewNonzero` when fewer than two
    entries survive the nonzero restriction.
    """
    b, a = _as_pair(before, after)
    norm_b = float(np.linalg.norm(b))
    norm_a = float(np.linalg.norm(a))
    if norm_b == 0.0 or norm_a == 0.0:
        raise ZeroVector("cosine similarity of an all-zero vector")
    cosine = float(b @ a / (norm_b * norm_a))
    nonzero = np.flatnonzero(b)
    if nonzero.size < 2:
        raise TooFewNonzero(f"only {nonzero.size} nonzero entries in before")
    return cosine, _spearman(b, a), _spearman(b[nonzero], a[nonzero])


def strict_ranks(values: np.ndarray) -> np.ndarray:
    """Rank 1 = largest value; ties break toward the smaller node index."""
    values = np.asarray(values, dtype=np.float64)
    order = np.lexsort((np.arange(values.size), -values))
    ranks = np.empty(values.size, dtype=np.int64)
    ranks[order] = np.arange(1, values.size + 1)
    return ranks


def rank_shift_stats(before: Sequence[float], after: Sequence[float]) -> RankShiftStats:
    """Per-node rank movement; positive shifts mean the node moved up."""
    b, a = _as_pair(before, after)
    shift = strict_ranks(b) - strict_ranks(a)
    return RankShiftStats(
        pct_rank_changed=float(100.0 * np.count_nonzero(shift) / shift.size),
        avg_abs_shift=float(np.abs(shift).mean()),
        max_up=int(shift.max()),
        max_down=int(shift.min()),
    )


def density_stats(
    pairs: Sequence[tuple[np.ndarray, np.ndarray]],
) -> tuple[float, float, float, float]:
    """Pooled nonzero fraction and mean nonzero count, before and after."""
    if not pairs:
        raise EmptyInput("no importance pairs")
    before = np.stack([np.asarray(b, dtype=np.float64) for b, _ in pairs])
    after = np.stack([np.asarray(a, dtype=np.float64) for _, a in pairs])
    return (
        float(np.count_nonzero(before) / before.size),
        float(np.count_nonzero(after) / after.size),
        float(np.count_nonzero(before, axis=1).mean()),
        float(np.count_nonzero(after, axis=1).mean()),
    )


def propagation_stats(pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> PropagationStats:
    """Aggregate similarity, rank-shift and density stats over many pairs.

    Correlations are averaged over the pairs where they are defined; rank
    extremes are taken over all pairs.
    """
    if not pairs:
        raise EmptyInput("no importance pairs")
    cosines: list[float] = []
    spearman_all: list[float] = []
    spearman_nonzero: list[float] = []
    pct: list[float] = []
    avg_abs: list[float] = []
    max_up = 0
    max_down = 0
    for before, after in pairs:
        try:
            cos, s_all, s_nz = compare_importance(before, after)
        except TooFewNonzero:
            # A drug with a single known target has no restricted Spearman;
            # keep its unrestricted statistics in the aggregate.
            b, a = _as_pair(before, after)
            cos = float(b @ a / (np.linalg.norm(b) * np.linalg.norm(a)))
            s_all = _spearman(b, a)
            s_nz = None
        cosines.append(cos)
        if s_all is not None:
            spearman_all.append(s_all)
        if s_nz is not None:
            spearman_nonzero.append(s_nz)
        shifts = rank_shift_stats(before, after)
        pct.append(shifts.pct_rank_changed)
        avg_abs.append(shifts.avg_abs_shift)
        max_up = max(max_up, shifts.max_up)
        max_down = min(max_down, shifts.max_down)
    d_before, d_after, i_before, i_after = density_stats(pairs)
    return PropagationStats(
        cosine=float(np.mean(cosines)),
        spearman_all=float(np.mean(spearman_all)) if spearman_all else None,
        spearman_nonzero=float(np.mean(spearman_nonzero)) if spearman_nonzero else None,
        pct_rank_changed=float(np.mean(pct)),
        avg_abs_shift=float(np.mean(avg_abs)),
        max_up=max_up,
        max_down=max_down,
        density_before=d_before,
        density_after=d_after,
        mean_interactions_before=i_before,
        mean_interactions_after=i_after,
    )


# --- explanation export -------------------------------------------------------


@dataclass(frozen=True)
class Explanation:
    """Top-k important genes for one prediction, with their local subgraph."""

    drug_id: str
    cell_id: str
    prob: float
    label: int
    rows: tuple[dict, ...]  # rank, gene, initial and final scores
    subgraph: GeneGraph
    node_attrs: dict[str, dict]

    def to_dict(self) -> dict:
        return {
            "drug_id": self.drug_id,
            "cell_id": self.cell_id,
            "prob": self.prob,
            "label": self.label,
            "genes": list(self.rows),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_dot(self) -> str:
        """Graphviz digraph of the top-k subgraph with score attributes."""

        def quote(s: str) -> str:
            return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'

        lines = ["digraph importance {"]
        for gene in self.subgraph.node_ids:
            attrs = self.node_attrs[gene]
            lines.append(
                f"  {quote(gene)} [label={quote(gene)}, "
                f"initial_score={attrs['initial_score']:.6g}, "
                f"final_score={attrs['final_score']:.6g}, "
                f"is_known_target={'true' if attrs['is_known_target'] else 'false'}];"
            )
        for src, type_name, dst in self.subgraph.typed_edges():
            lines.append(f"  {quote(src)} -> {quote(dst)} [edge_type={quote(type_name)}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def export_explanation(
    drug_id: str,
    cell_id: str,
    prob: float,
    label: int,
    initial: np.ndarray,
    final: np.ndarray,
    graph: GeneGraph,
    k: int = 20,
) -> Explanation:
    """Rank genes by final importance and package the top-k with context.

    Ties on the final score break toward the lower node index. Known
    targets are the genes whose initial score was positive.
    """
    if k < 1:
        raise ValueError(f"top-k must be positive, got {k}")
    initial = np.asarray(initial, dtype=np.float64)
    final = np.asarray(final, dtype=np.float64)
    if initial.shape != (graph.node_count,) or final.shape != (graph.node_count,):
        raise LengthMismatch(
            f"importance shapes {initial.shape}/{final.shape} vs {graph.node_count} nodes"
        )
    order = np.lexsort((np.arange(final.size), -final))
    top = order[: min(k, final.size)]
    rows = tuple(
        {
            "rank": int(rank),
            "gene": graph.node_ids[i],
            "initial_score": float(initial[i]),
            "final_score": float(final[i]),
        }
        for rank, i in enumerate(top, start=1)
    )
    sub = induced_subgraph(graph, top)
    node_attrs = {
        graph.node_ids[i]: {
            "initial_score": float(initial[i]),
            "final_score": float(final[i]),
            "is_known_target": bool(initial[i] > 0.0),
        }
        for i in top
    }
    return Explanation(
        drug_id=drug_id,
        cell_id=cell_id,
        prob=float(prob),
        label=int(label),
        rows=rows,
        subgraph=sub,
        node_attrs=node_attrs,
    )
