"""Exception hierarchy shared by all graphpine modules.

Every error raised on purpose by this package derives from
:class:`GraphPineError`, so callers (including the CLI) can catch one type.
"""

from __future__ import annotations


class GraphPineError(Exception):
    """Base class for all errors raised by graphpine."""


# --- graph construction -------------------------------------------------


class UnknownGene(GraphPineError):
    """An edge or lookup referenced a gene id that is not in the node list."""


class UnknownEdgeType(GraphPineError):
    """An edge used an interaction type outside the fixed catalog."""


class DuplicateEdge(GraphPineError):
    """The same (src, dst, type) triple appeared more than once."""


class DuplicateGeneId(GraphPineError):
    """The node list contains a repeated gene id."""


class GraphTooSmall(GraphPineError):
    """The operation needs at least two nodes."""


class IndexOutOfRange(GraphPineError):
    """A node index fell outside [0, node_count)."""


class MalformedRecord(GraphPineError):
    """A text input row could not be parsed."""


# --- data preparation ----------------------------------------------------


class ZeroColumnSum(GraphPineError):
    """A cell-line column summed to zero, so TPM scaling is undefined."""


class NegativeInput(GraphPineError):
    """Expression input contained negative values."""


class UnknownCellLine(GraphPineError):
    """A requested cell line is missing from an omics matrix."""


class EmptyRecordSet(GraphPineError):
    """No usable records were supplied (e.g. a drug with no known targets)."""


class TooFewCellLines(GraphPineError):
    """Variance needs at least two cell-line columns."""


class NonFiniteInput(GraphPineError):
    """A numeric input was NaN or infinite."""


class DegenerateSplit(GraphPineError):
    """The requested split left a required subset empty."""


class DimensionMismatch(GraphPineError):
    """Tensor dimensions disagree with the graph or with each other."""


# --- differentiation engine ----------------------------------------------


class ShapeMismatch(GraphPineError):
    """Operands have incompatible shapes for the requested operation."""


class UnsupportedOperator(GraphPineError):
    """The computation tape contains an operator outside the supported set."""


class NonFiniteValue(GraphPineError):
    """An operation produced NaN or infinity."""


class NonFiniteLoss(GraphPineError):
    """The loss value is NaN or infinite, so gradients are meaningless."""


class NonFiniteEvaluation(GraphPineError):
    """A finite-difference probe evaluated to a non-finite value."""


# --- training and persistence ---------------------------------------------


class EmptyDataset(GraphPineError):
    """Training or evaluation was asked to run on zero samples."""


class DivergedLoss(GraphPineError):
    """Training produced a non-finite loss."""


class IoFailure(GraphPineError):
    """A file could not be read or written."""


class VersionMismatch(GraphPineError):
    """A checkpoint disagrees with the expected format or tensor layout."""


class CorruptManifest(GraphPineError):
    """A manifest failed validation against its own payload."""


class ConfigError(GraphPineError):
    """A run configuration contained unknown or invalid entries."""


# --- metrics ----------------------------------------------------------------


class LengthMismatch(GraphPineError):
    """Label and score sequences have different lengths."""


class EmptyInput(GraphPineError):
    """A metric was asked to summarize zero observations."""


class SingleClass(GraphPineError):
    """Ranking metrics need both classes present."""


class NoPositives(GraphPineError):
    """Precision-recall summaries need at least one positive label."""


# --- importance analysis ----------------------------------------------------


class ZeroVector(GraphPineError):
    """Cosine similarity is undefined for an all-zero vector."""


class TooFewNonzero(GraphPineError):
    """The restricted correlation needs at least two nonzero entries."""
