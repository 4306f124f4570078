"""Omics table ingestion, normalization, gene selection and response splits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .exceptions import (
    DegenerateSplit,
    DimensionMismatch,
    EmptyRecordSet,
    MalformedRecord,
    NegativeInput,
    NonFiniteInput,
    TooFewCellLines,
    UnknownCellLine,
    ZeroColumnSum,
)
from .graph import GeneGraph, degree_centrality

OMICS_SOURCES: tuple[str, ...] = ("exp", "met", "mut", "cnv")
"""Node feature column order: expression, methylation, mutation, copy number."""

IC50_THRESHOLD = -4.595
"""Default natural-log IC50 cutoff; values strictly below are responders."""


@dataclass(frozen=True)
class OmicsMatrix:
    """One omics modality as a genes x cell-lines matrix."""

    source: str
    values: np.ndarray
    gene_ids: tuple[str, ...]
    cell_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.source not in OMICS_SOURCES:
            raise ValueError(f"unknown omics source {self.source!r}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (len(self.gene_ids), len(self.cell_ids)):
            raise DimensionMismatch(
                f"{self.source}: values {vals.shape} vs "
                f"{len(self.gene_ids)} genes x {len(self.cell_ids)} cells"
            )
        if not np.isfinite(vals).all():
            raise NonFiniteInput(f"{self.source}: matrix contains non-finite values")
        if len(set(self.gene_ids)) != len(self.gene_ids):
            raise MalformedRecord(f"{self.source}: duplicate gene rows")
        if len(set(self.cell_ids)) != len(self.cell_ids):
            raise MalformedRecord(f"{self.source}: duplicate cell columns")
        if self.source == "mut" and not np.isin(vals, (0.0, 1.0)).all():
            raise MalformedRecord("mut: mutation calls must be 0 or 1")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "_gene_index", {g: i for i, g in enumerate(self.gene_ids)})
        object.__setattr__(self, "_cell_index", {c: i for i, c in enumerate(self.cell_ids)})

    def gene_row(self, gene_id: str) -> Optional[int]:
        return self._gene_index.get(gene_id)  # type: ignore[attr-defined]

    def cell_column(self, cell_id: str) -> int:
        try:
            return self._cell_index[cell_id]  # type: ignore[attr-defined]
        except KeyError:
            raise UnknownCellLine(f"cell line {cell_id!r} missing from {self.source}") from None


@dataclass(frozen=True)
class DtiRecord:
    """One drug-gene interaction row with its literature support count."""

    drug_id: str
    gene_id: str
    pubmed_count: int
    in_database: bool

    def __post_init__(self) -> None:
        if self.pubmed_count < 0:
            raise MalformedRecord(f"{self.drug_id}/{self.gene_id}: negative pubmed count")
        if self.pubmed_count > 0 and not self.in_database:
            raise MalformedRecord(
                f"{self.drug_id}/{self.gene_id}: literature support implies database membership"
            )


@dataclass(frozen=True)
class ResponseRecord:
    """One (drug, cell line) response measurement on the log IC50 scale."""

    drug_id: str
    cell_id: str
    log_ic50: float
    label: Optional[int] = None


@dataclass(frozen=True)
class SplitPlan:
    """Disjoint train/val/test pair lists from a zero-shot split."""

    train: tuple[tuple[str, str], ...]
    val: tuple[tuple[str, str], ...]
    test: tuple[tuple[str, str], ...]
    seed: int


# --- expression normalization -------------------------------------------


def tpm_normalize(values: np.ndarray) -> np.ndarray:
    """Scale each cell-line column to parts-per-million of its column sum."""
    vals = np.asarray(values, dtype=np.float64)
    if not np.isfinite(vals).all():
        raise NonFiniteInput("expression matrix contains non-finite values")
    if (vals < 0).any():
        raise NegativeInput("expression matrix contains negative values")
    sums = vals.sum(axis=0)
    zero = np.flatnonzero(sums == 0.0)
    if zero.size:
        raise ZeroColumnSum(f"column {int(zero[0])} sums to zero")
    return vals / sums * 1e6


def preprocess_expression(matrix: OmicsMatrix) -> OmicsMatrix:
    """TPM-scale, log2(x+1) transform, then winsorize at global percentiles.

    Winsorization clips to the 0.1 and 99.9 linear-interpolation percentiles
    of the whole log matrix, computed once over all entries.
    """
    if matrix.source != "exp":
        raise ValueError(f"expected expression matrix, got {matrix.source!r}")
    tpm = tpm_normalize(matrix.values)
    logged = np.log2(tpm + 1.0)
    lo, hi = np.percentile(logged, (0.1, 99.9))
    clipped = np.clip(logged, lo, hi)
    return OmicsMatrix(
        source="exp", values=clipped, gene_ids=matrix.gene_ids, cell_ids=matrix.cell_ids
    )


# --- gene statistics and selection -----------------------------------------


@dataclass(frozen=True)
class GeneStatsTable:
    """Per-gene selection statistics, aligned to the graph node order."""

    gene_ids: tuple[str, ...]
    variance: dict[str, np.ndarray]  # per omics source
    centrality: np.ndarray
    dti_freq: np.ndarray


def compute_gene_stats(
    omics: Mapping[str, OmicsMatrix],
    graph: GeneGraph,
    dti_records: Sequence[DtiRecord],
) -> GeneStatsTable:
    """Variance per source, degree centrality and DTI frequency per gene.

    Variance uses the unbiased 1/(c-1) estimator over cell lines and needs
    at least two columns. Genes absent from a source get variance 0.
    """
    genes = graph.node_ids
    variance: dict[str, np.ndarray] = {}
    for source in OMICS_SOURCES:
        m = omics[source]
        if len(m.cell_ids) < 2:
            raise TooFewCellLines(f"{source}: variance needs >= 2 cell lines")
        per_gene = np.zeros(len(genes), dtype=np.float64)
        row_var = m.values.var(axis=1, ddof=1)
        for i, gene in enumerate(genes):
            row = m.gene_row(gene)
            if row is not None:
                per_gene[i] = row_var[row]
        variance[source] = per_gene

    freq = np.zeros(len(genes), dtype=np.float64)
    for record in dti_records:
        if record.gene_id in graph:
            freq[graph.index_of(record.gene_id)] += 1.0

    return GeneStatsTable(
        gene_ids=genes,
        variance=variance,
        centrality=degree_centrality(graph),
        dti_freq=freq,
    )


def select_genes(stats: GeneStatsTable, k: int) -> set[str]:
    """Union of the top-k genes per criterion (4 variances, centrality, DTI).

    Ties on a criterion value break toward the lexicographically smaller
    gene id, so selection is independent of input row order.
    """
    if k < 1:
        raise ValueError(f"top-k must be positive, got {k}")

    def top_k(values: np.ndarray) -> set[str]:
        ranked = sorted(zip(stats.gene_ids, values), key=lambda gv: (-gv[1], gv[0]))
        return {gene for gene, _ in ranked[:k]}

    selected: set[str] = set()
    for source in OMICS_SOURCES:
        selected |= top_k(stats.variance[source])
    selected |= top_k(stats.centrality)
    selected |= top_k(stats.dti_freq)
    return selected


# --- drug-target importance ---------------------------------------------


def compute_dti_score(records: Sequence[DtiRecord], gene_order: Sequence[str]) -> np.ndarray:
    """Initial importance per gene for one drug.

    Genes with any database support map to [0.5, 1] by min-max scaling of
    log(1 + pubmed_count) over the drug's in-database records; unsupported
    genes stay at 0. A degenerate range collapses to 1.0 when literature
    support exists, else to 0.5 (pure membership).
    """
    drugs = {r.drug_id for r in records}
    if len(drugs) > 1:
        raise ValueError(f"records span multiple drugs: {sorted(drugs)}")
    supported = [r for r in records if r.in_database]
    if not supported:
        raise EmptyRecordSet("drug has no in-database target records")
    log_counts = {r.gene_id: math.log(1.0 + r.pubmed_count) for r in supported}
    lo = min(log_counts.values())
    hi = max(log_counts.values())
    scores = np.zeros(len(gene_order), dtype=np.float64)
    for i, gene in enumerate(gene_order):
        if gene not in log_counts:
            continue
        if hi == lo:
            scores[i] = 1.0 if hi > 0.0 else 0.5
        else:
            scores[i] = 0.5 + 0.5 * (log_counts[gene] - lo) / (hi - lo)
    return scores


# --- responses -----------------------------------------------------------


def binarize_ic50(log_ic50: float, threshold: float = IC50_THRESHOLD) -> int:
    """1 for a responder (strictly below threshold), else 0."""
    if not math.isfinite(log_ic50):
        raise NonFiniteInput(f"log IC50 is not finite: {log_ic50!r}")
    return 1 if log_ic50 < threshold else 0


def assemble_node_features(
    omics: Mapping[str, OmicsMatrix],
    gene_order: Sequence[str],
    cell_id: str,
) -> np.ndarray:
    """Per-gene [exp, met, mut, cnv] feature rows for one cell line.

    The cell line must be present in every source; genes missing from a
    source contribute 0 for that column.
    """
    out = np.zeros((len(gene_order), len(OMICS_SOURCES)), dtype=np.float64)
    for col, source in enumerate(OMICS_SOURCES):
        m = omics[source]
        cell_col = m.cell_column(cell_id)
        for i, gene in enumerate(gene_order):
            row = m.gene_row(gene)
            if row is not None:
                out[i, col] = m.values[row, cell_col]
    return out


# --- zero-shot split -------------------------------------------------------


def zero_shot_split(
    responses: Sequence[ResponseRecord],
    cell_frac: float = 0.7,
    drug_frac: float = 0.6,
    val_frac: float = 0.2,
    seed: int = 0,
) -> SplitPlan:
    """Entity-disjoint split: test pairs share no drug or cell with train/val.

    Selects ceil(cell_frac * #cells) cells and ceil(drug_frac * #drugs)
    drugs uniformly at random. Pairs with both entities selected form the
    train/val pool (floor(val_frac * pool) go to val); pairs with both
    entities unselected form the test set; mixed pairs are discarded. The
    validation set may come out empty at very small scales, but an empty
    train or test set raises :class:`DegenerateSplit`.
    """
    for name, frac in (("cell_frac", cell_frac), ("drug_frac", drug_frac)):
        if not 0.0 < frac < 1.0:
            raise ValueError(f"{name} must be in (0, 1), got {frac}")
    if not 0.0 <= val_frac < 1.0:
        raise ValueError(f"val_frac must be in [0, 1), got {val_frac}")

    pairs: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    for r in responses:
        key = (r.drug_id, r.cell_id)
        if key not in seen:
            seen.add(key)
            pairs.append(key)
    drugs = sorted({d for d, _ in pairs})
    cells = sorted({c for _, c in pairs})
    if len(drugs) < 2 or len(cells) < 2:
        raise DegenerateSplit(f"need >= 2 drugs and >= 2 cells, got {len(drugs)} / {len(cells)}")

    rng = np.random.default_rng(seed)
    n_cells = math.ceil(cell_frac * len(cells))
    n_drugs = math.ceil(drug_frac * len(drugs))
    sel_cells = set(np.asarray(cells, dtype=object)[rng.permutation(len(cells))[:n_cells]])
    sel_drugs = set(np.asarray(drugs, dtype=object)[rng.permutation(len(drugs))[:n_drugs]])

    pool = [p for p in pairs if p[0] in sel_drugs and p[1] in sel_cells]
    test = [p for p in pairs if p[0] not in sel_drugs and p[1] not in sel_cells]
    if not pool or not test:
        raise DegenerateSplit(
            f"split left pool={len(pool)} test={len(test)}; adjust fractions or data"
        )
    order = rng.permutation(len(pool))
    n_val = math.floor(val_frac * len(pool))
    val = [pool[i] for i in order[:n_val]]
    train = [pool[i] for i in order[n_val:]]
    if not train:
        raise DegenerateSplit("validation fraction consumed the whole training pool")
    return SplitPlan(train=tuple(train), val=tuple(val), test=tuple(test), seed=seed)


# --- TSV readers -------------------------------------------------------------


def _read_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    rows = [line.split("\t") for line in lines if line.strip()]
    if not rows:
        raise MalformedRecord(f"{path}: empty table")
    return rows[0], rows[1:]


def read_omics_tsv(path: str | Path, source: str) -> OmicsMatrix:
    """Read a gene-by-cell TSV with a header row of cell ids."""
    header, body = _read_table(path)
    cell_ids = tuple(header[1:])
    gene_ids: list[str] = []
    values = np.zeros((len(body), len(cell_ids)), dtype=np.float64)
    for i, row in enumerate(body):
        if len(row) != len(cell_ids) + 1:
            raise MalformedRecord(f"{path}: row {i + 2} has {len(row)} fields")
        gene_ids.append(row[0])
        try:
            values[i] = [float(v) for v in row[1:]]
        except ValueError as err:
            raise MalformedRecord(f"{path}: row {i + 2}: {err}") from None
    return OmicsMatrix(source=source, values=values, gene_ids=tuple(gene_ids), cell_ids=cell_ids)


def read_dti_tsv(path: str | Path) -> list[DtiRecord]:
    """Read drug<TAB>gene<TAB>pubmed_count<TAB>in_database rows (headered)."""
    _, body = _read_table(path)
    records: list[DtiRecord] = []
    for i, row in enumerate(body):
        if len(row) != 4:
            raise MalformedRecord(f"{path}: row {i + 2} has {len(row)} fields")
        try:
            records.append(
                DtiRecord(
                    drug_id=row[0],
                    gene_id=row[1],
                    pubmed_count=int(row[2]),
                    in_database=bool(int(row[3])),
                )
            )
        except ValueError as err:
            raise MalformedRecord(f"{path}: row {i + 2}: {err}") from None
    return records


def read_responses_tsv(path: str | Path) -> list[ResponseRecord]:
    """Read drug<TAB>cell<TAB>log_ic50 rows (headered)."""
    _, body = _read_table(path)
    records: list[ResponseRecord] = []
    for i, row in enumerate(body):
        if len(row) != 3:
            raise MalformedRecord(f"{path}: row {i + 2} has {len(row)} fields")
        try:
            records.append(ResponseRecord(drug_id=row[0], cell_id=row[1], log_ic50=float(row[2])))
        except ValueError as err:
            raise MalformedRecord(f"{path}: row {i + 2}: {err}") from None
    return records
