import numpy as np
import pytest

from graphpine.exceptions import (
    DimensionMismatch,
    DuplicateEdge,
    DuplicateGeneId,
    GraphTooSmall,
    IndexOutOfRange,
    MalformedRecord,
    UnknownEdgeType,
    UnknownGene,
)
from graphpine.graph import (
    EDGE_TYPES,
    NUM_EDGE_TYPES,
    GeneGraph,
    build_graph,
    degree_centrality,
    induced_subgraph,
    load_edge_tsv,
    load_node_list,
)

from conftest import random_graph


def test_edge_type_catalog():
    assert NUM_EDGE_TYPES == 7
    assert len(set(EDGE_TYPES)) == 7
    assert EDGE_TYPES[0] == "catalysis-precedes"
    assert EDGE_TYPES[-1] == "interacts-with"


def test_build_graph_basic(small_graph):
    assert small_graph.node_count == 4
    assert small_graph.edge_count == 5
    assert small_graph.index_of("TP53") == 0
    assert small_graph.index_of("BRCA1") == 3
    assert "EGFR" in small_graph
    assert "NRAS" not in small_graph
    # one-hot rows, one per edge, in insertion order
    assert small_graph.edge_attr.shape == (5, 7)
    assert (small_graph.edge_attr.sum(axis=1) == 1.0).all()
    assert small_graph.edges[0] == (0, 1)


def test_typed_edges_round_trip(small_graph):
    triples = small_graph.typed_edges()
    rebuilt = build_graph(small_graph.node_ids, triples)
    assert rebuilt.edges == small_graph.edges
    assert np.array_equal(rebuilt.edge_attr, small_graph.edge_attr)


def test_index_of_unknown_gene(small_graph):
    with pytest.raises(UnknownGene):
        small_graph.index_of("NRAS")


def test_build_graph_rejects_duplicate_node():
    with pytest.raises(DuplicateGeneId):
        build_graph(["A", "B", "A"], [])


def test_build_graph_rejects_unknown_endpoint():
    with pytest.raises(UnknownGene):
        build_graph(["A", "B"], [("A", "interacts-with", "C")])


def test_build_graph_rejects_unknown_type():
    with pytest.raises(UnknownEdgeType):
        build_graph(["A", "B"], [("A", "binds", "B")])


def test_build_graph_rejects_duplicate_triple():
    edges = [("A", "interacts-with", "B"), ("A", "interacts-with", "B")]
    with pytest.raises(DuplicateEdge):
        build_graph(["A", "B"], edges)


def test_parallel_edges_with_distinct_types_allowed():
    g = build_graph(
        ["A", "B"],
        [("A", "interacts-with", "B"), ("A", "in-complex-with", "B")],
    )
    assert g.edge_count == 2
    assert g.edges == ((0, 1), (0, 1))


def test_constructor_validates_attr_shape():
    with pytest.raises(DimensionMismatch):
        GeneGraph(node_ids=("A", "B"), edges=((0, 1),), edge_attr=np.zeros((2, 7)))


def test_constructor_rejects_non_one_hot_row():
    attr = np.zeros((1, 7))
    attr[0, :2] = 1.0
    with pytest.raises(UnknownEdgeType):
        GeneGraph(node_ids=("A", "B"), edges=((0, 1),), edge_attr=attr)


def test_constructor_rejects_out_of_range_index():
    attr = np.zeros((1, 7))
    attr[0, 0] = 1.0
    with pytest.raises(IndexOutOfRange):
        GeneGraph(node_ids=("A", "B"), edges=((0, 5),), edge_attr=attr)


def test_edge_attr_is_read_only(small_graph):
    with pytest.raises(ValueError):
        small_graph.edge_attr[0, 0] = 2.0


# --- degree centrality ------------------------------------------------------


def centrality_oracle(graph):
    """Distinct neighbors either direction, self excluded, over n - 1."""
    n = graph.node_count
    neighbors = {i: set() for i in range(n)}
    for src, _, dst in graph.typed_edges():
        i, j = graph.index_of(src), graph.index_of(dst)
        if i != j:
            neighbors[i].add(j)
            neighbors[j].add(i)
    return np.array([len(neighbors[i]) / (n - 1) for i in range(n)])


def test_degree_centrality_hand_counts(small_graph):
    # TP53: MDM2, EGFR -> 2/3; MDM2: TP53, BRCA1 -> 2/3;
    # EGFR: TP53, BRCA1 -> 2/3; BRCA1: EGFR, MDM2 -> 2/3
    got = degree_centrality(small_graph)
    assert np.allclose(got, [2 / 3, 2 / 3, 2 / 3, 2 / 3])


def test_degree_centrality_parallel_edges_count_once():
    g = build_graph(
        ["A", "B", "C"],
        [
            ("A", "interacts-with", "B"),
            ("A", "in-complex-with", "B"),
            ("B", "interacts-with", "A"),
        ],
    )
    assert np.allclose(degree_centrality(g), [0.5, 0.5, 0.0])


def test_degree_centrality_matches_oracle_on_random_graphs():
    for seed in range(10):
        g = random_graph(n_nodes=12, n_edges=40, seed=seed)
        assert np.array_equal(degree_centrality(g), centrality_oracle(g))


def test_degree_centrality_needs_two_nodes():
    g = build_graph(["A"], [])
    with pytest.raises(GraphTooSmall):
        degree_centrality(g)


# --- induced subgraph --------------------------------------------------------


def test_induced_subgraph_keeps_order_and_edges(small_graph):
    sub = induced_subgraph(small_graph, [3, 0, 1])  # order of keep must not matter
    assert sub.node_ids == ("TP53", "MDM2", "BRCA1")
    kept = set(sub.typed_edges())
    assert kept == {
        ("TP53", "controls-expression-of", "MDM2"),
        ("MDM2", "controls-state-change-of", "TP53"),
        ("BRCA1", "interacts-with", "MDM2"),
    }


def test_induced_subgraph_full_keep_is_identity(small_graph):
    sub = induced_subgraph(small_graph, range(small_graph.node_count))
    assert sub.node_ids == small_graph.node_ids
    assert sub.typed_edges() == small_graph.typed_edges()


def test_induced_subgraph_rejects_bad_index(small_graph):
    with pytest.raises(IndexOutOfRange):
        induced_subgraph(small_graph, [0, 9])


def test_induced_subgraph_no_surviving_edges(small_graph):
    sub = induced_subgraph(small_graph, [0])
    assert sub.node_count == 1
    assert sub.edge_count == 0
    assert sub.edge_attr.shape == (0, 7)


# --- file loaders ------------------------------------------------------------


def test_load_fixture_files(fixture_dir):
    nodes = load_node_list(fixture_dir / "nodes.txt")
    edges = load_edge_tsv(fixture_dir / "edges.tsv")
    assert nodes == ["TP53", "MDM2", "EGFR", "BRCA1", "KRAS"]
    assert len(edges) == 6
    g = build_graph(nodes, edges)
    assert g.node_count == 5
    assert g.edge_count == 6


def test_load_edge_tsv_rejects_bad_row(tmp_path):
    p = tmp_path / "edges.tsv"
    p.write_text("A\tinteracts-with\n")
    with pytest.raises(MalformedRecord):
        load_edge_tsv(p)


def test_load_node_list_skips_blank_lines(tmp_path):
    p = tmp_path / "nodes.txt"
    p.write_text("A\n\nB\n  \nC\n")
    assert load_node_list(p) == ["A", "B", "C"]
