"""Input validation helpers shared by the estimator and pipeline entry points."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .dataset import SampleTensor
from .exceptions import DimensionMismatch, EmptyDataset


def check_samples(samples: Sequence[SampleTensor]) -> list[SampleTensor]:
    """Verify a sample collection is non-empty and shares one graph."""
    out = list(samples)
    if not out:
        raise EmptyDataset("no samples")
    for s in out:
        if not isinstance(s, SampleTensor):
            raise TypeError(f"expected SampleTensor, got {type(s).__name__}")
    first = out[0].graph
    for s in out[1:]:
        if s.graph is not first and s.graph.node_ids != first.node_ids:
            raise DimensionMismatch("samples reference different graphs")
    return out


def check_labels(y, n: int) -> np.ndarray:
    """Coerce labels to a 0/1 int array of length n."""
    arr = np.asarray(y)
    if arr.shape != (n,):
        raise DimensionMismatch(f"labels shape {arr.shape}, expected ({n},)")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return arr.astype(np.int64)


def resolve_labels(samples: Sequence[SampleTensor], y: Optional[Sequence[int]]) -> np.ndarray:
    """Labels from ``y`` when given, else from the samples themselves."""
    if y is None:
        return np.array([s.label for s in samples], dtype=np.int64)
    return check_labels(y, len(samples))
