"""Shared builders for the test suite.

Everything here is deliberately small and deterministic; tests that need a
specific topology or size build their own graph inline instead.
"""

from pathlib import Path

import numpy as np
import pytest

from graphpine.dataset import SampleTensor, assemble_sample
from graphpine.graph import EDGE_TYPES, GeneGraph, build_graph

FIXTURES = Path(__file__).parent / "fixtures" / "tiny"


def random_graph(n_nodes: int, n_edges: int, seed: int) -> GeneGraph:
    """Random multigraph with distinct (src, dst, type) triples, no self-edges."""
    rng = np.random.default_rng(seed)
    triples: set[tuple[int, int, int]] = set()
    limit = min(n_edges, n_nodes * (n_nodes - 1) * len(EDGE_TYPES))
    while len(triples) < limit:
        src = int(rng.integers(n_nodes))
        dst = int(rng.integers(n_nodes))
        if src != dst:
            triples.add((src, dst, int(rng.integers(len(EDGE_TYPES)))))
    genes = [f"G{i:03d}" for i in range(n_nodes)]
    return build_graph(genes, [(genes[s], EDGE_TYPES[t], genes[d]) for s, d, t in sorted(triples)])


def random_sample(graph: GeneGraph, seed: int, label: int = 1) -> SampleTensor:
    """One sample with N(0,1) features and sparse importance in {0} u [0.5, 1]."""
    rng = np.random.default_rng(seed)
    n = graph.node_count
    importance = np.zeros(n)
    hot = rng.permutation(n)[: max(2, n // 4)]
    importance[hot] = 0.5 + 0.5 * rng.random(hot.size)
    return assemble_sample(
        f"D{seed:03d}", f"C{seed:03d}", rng.standard_normal((n, 4)), importance, label, graph
    )


@pytest.fixture
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture
def small_graph() -> GeneGraph:
    return build_graph(
        ["TP53", "MDM2", "EGFR", "BRCA1"],
        [
            ("TP53", "controls-expression-of", "MDM2"),
            ("MDM2", "controls-state-change-of", "TP53"),
            ("EGFR", "interacts-with", "TP53"),
            ("EGFR", "in-complex-with", "BRCA1"),
            ("BRCA1", "interacts-with", "MDM2"),
        ],
    )
