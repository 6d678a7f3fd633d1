"""Time-explicit DAG over (variable, lag) nodes."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import networkx as nx
import numpy as np

from .errors import ValidationError


class Node(NamedTuple):
    var: str
    lag: int

    def label(self) -> str:
        return f"{self.var}(t)" if self.lag == 0 else f"{self.var}(t-{self.lag})"

    def to_json(self) -> dict:
        return {"var": self.var, "lag": self.lag}

    @classmethod
    def from_json(cls, obj) -> Node:
        return cls(str(obj["var"]), int(obj["lag"]))


Edge = tuple[Node, Node]


@dataclass(frozen=True)
class LaggedDag:
    """Edges always end at a lag-0 node; the node set is the full variable x lag grid."""

    variables: tuple[str, ...]
    max_lag: int
    edges: frozenset = frozenset()
    metadata: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(sorted(self.variables)))
        object.__setattr__(self, "edges", frozenset((Node(*a), Node(*b)) for a, b in self.edges))
        if self.max_lag < 0:
            raise ValidationError("max_lag must be >= 0")
        if len(set(self.variables)) != len(self.variables):
            raise ValidationError("variable names must be unique")
        nodes = set(self.nodes)
        for a, b in self.edges:
            if a not in nodes or b not in nodes:
                raise ValidationError(f"edge {a}->{b} references a node outside the graph")
            if b.lag != 0:
                raise ValidationError(f"edge {a}->{b} must target a lag-0 node")
            if a == b:
                raise ValidationError(f"self-loop on {a}")
        contemporaneous = nx.DiGraph([(a, b) for a, b in self.edges if a.lag == 0])
        if not nx.is_directed_acyclic_graph(contemporaneous):
            raise ValidationError("contemporaneous subgraph has a cycle")

    @property
    def nodes(self) -> list[Node]:
        return [Node(v, lag) for v in self.variables for lag in range(self.max_lag + 1)]

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def parents(self, node: Node) -> list[Node]:
        return sorted(a for a, b in self.edges if b == node)

    def children(self, node: Node) -> list[Node]:
        return sorted(b for a, b in self.edges if a == node)

    def in_degree(self, node: Node) -> int:
        return sum(1 for _, b in self.edges if b == node)

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.sorted_edges())
        return g

    def adjacency(self) -> np.ndarray:
        index = {n: i for i, n in enumerate(self.nodes)}
        a = np.zeros((len(index), len(index)), dtype=np.int8)
        for u, v in self.edges:
            a[index[u], index[v]] = 1
        return a

    def with_edges(self, edges: Iterable[Edge]) -> LaggedDag:
        return LaggedDag(self.variables, self.max_lag, frozenset(edges))

    def to_json(self) -> dict:
        out = {
            "max_lag": self.max_lag,
            "nodes": [n.to_json() for n in sorted(self.nodes)],
            "edges": [[a.to_json(), b.to_json()] for a, b in self.sorted_edges()],
        }
        if self.metadata:
            out["metadata"] = self.metadata
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, obj: dict) -> LaggedDag:
        nodes = [Node.from_json(n) for n in obj["nodes"]]
        variables = tuple(sorted({n.var for n in nodes}))
        edges = frozenset((Node.from_json(a), Node.from_json(b)) for a, b in obj["edges"])
        g = cls(variables, int(obj["max_lag"]), edges, dict(obj.get("metadata", {})))
        if set(nodes) != set(g.nodes):
            raise ValidationError("node list does not match the variable x lag grid")
        return g

    @classmethod
    def loads(cls, text: str) -> LaggedDag:
        return cls.from_json(json.loads(text))


def shd(g1: LaggedDag, g2: LaggedDag) -> int:
    """Structural Hamming distance: differing cells of the directed adjacency matrices.

    A reversed edge differs in two cells and so counts 2.
    """
    if set(g1.nodes) != set(g2.nodes):
        raise ValidationError("graphs must share the same node set")
    return int(np.sum(g1.adjacency() != g2.adjacency()))
