import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cfrca.errors import ValidationError
from cfrca.graph import LaggedDag, Node, shd
from cfrca.simulator import ground_truth_graph


def test_ground_truth_shape():
    g = ground_truth_graph()
    assert len(g.edges) == 9
    y = Node("Y", 0)
    assert g.in_degree(y) == 3 and g.children(y) == []
    assert all(b.lag == 0 for _, b in g.edges)
    assert nx.is_directed_acyclic_graph(g.to_networkx())


def test_rejects_edges_into_the_past():
    with pytest.raises(ValidationError):
        LaggedDag(("A", "B"), 1, frozenset({(Node("A", 0), Node("B", 1))}))


def test_rejects_contemporaneous_cycle():
    edges = {(Node("A", 0), Node("B", 0)), (Node("B", 0), Node("A", 0))}
    with pytest.raises(ValidationError):
        LaggedDag(("A", "B"), 0, frozenset(edges))


def test_json_roundtrip_and_sorted():
    g = ground_truth_graph()
    text = g.dumps()
    assert LaggedDag.loads(text) == g
    assert LaggedDag.loads(text).dumps() == text


def test_label():
    assert Node("X2", 1).label() == "X2(t-1)"
    assert Node("Y", 0).label() == "Y(t)"


def test_shd_identity():
    g = ground_truth_graph()
    assert shd(g, g) == 0


def test_shd_insertion():
    g = ground_truth_graph()
    assert shd(g, g.with_edges(g.edges | {(Node("X1", 1), Node("X1", 0))})) == 1


def test_shd_reversal_counts_two():
    g = ground_truth_graph()
    edge = (Node("X1", 0), Node("Y", 0))
    flipped = (g.edges - {edge}) | {(Node("Y", 0), Node("X1", 0))}
    assert shd(g, g.with_edges(flipped)) == 2


def test_shd_needs_same_nodes():
    with pytest.raises(ValidationError):
        shd(ground_truth_graph(), LaggedDag(("X1",), 0))


_ALL_EDGES = [(Node(a, lag), Node(b, 0)) for a in "ABC" for b in "ABC" for lag in (1, 2)]


@given(st.sets(st.sampled_from(_ALL_EDGES)), st.sets(st.sampled_from(_ALL_EDGES)), st.sets(st.sampled_from(_ALL_EDGES)))
def test_shd_is_a_metric(e1, e2, e3):
    g1, g2, g3 = (LaggedDag(("A", "B", "C"), 2, frozenset(e)) for e in (e1, e2, e3))
    assert shd(g1, g2) == shd(g2, g1) == len(e1 ^ e2)
    assert shd(g1, g3) <= shd(g1, g2) + shd(g2, g3)
