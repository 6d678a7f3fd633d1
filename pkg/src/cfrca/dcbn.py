"""Dynamic causal Bayesian network: discretization, CPT learning, exact inference.

Inference enumerates the full joint table, which costs O(K**n) memory for n
model nodes. That is fine for the desk-scale graphs here (n <= ~12, K = 3).
"""

from __future__ import annotations

import functools
import json
import string
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import networkx as nx
import numpy as np

from .errors import ValidationError
from .events import CountPanel
from .graph import LaggedDag, Node

DEFAULT_LABELS = {2: ("L", "H"), 3: ("L", "M", "H")}
EPS = 1e-6

State = Union[int, str]


def state_labels(K: int) -> tuple[str, ...]:
    return DEFAULT_LABELS.get(K, tuple(f"S{k}" for k in range(K)))


@dataclass(frozen=True)
class Discretizer:
    edges: Mapping[str, tuple[float, ...]]
    K: int = 3

    def __post_init__(self):
        object.__setattr__(self, "edges", {v: tuple(float(e) for e in es) for v, es in self.edges.items()})
        for v, es in self.edges.items():
            if len(es) != self.K - 1:
                raise ValidationError(f"{v}: expected {self.K - 1} edges, got {len(es)}")
            if any(b <= a for a, b in zip(es, es[1:])):
                raise ValidationError(f"{v}: edges must be strictly ascending, got {es}")

    @property
    def labels(self) -> tuple[str, ...]:
        return state_labels(self.K)

    def states(self, var: str, values) -> np.ndarray:
        """State index per value: ``x < e1`` -> 0, ``e1 <= x < e2`` -> 1, ..."""
        if var not in self.edges:
            raise ValidationError(f"no discretizer edges for variable {var!r}")
        return np.searchsorted(np.asarray(self.edges[var]), np.asarray(values, dtype=float), side="right")

    def state(self, var: str, value: float) -> int:
        return int(self.states(var, [value])[0])

    def to_json(self) -> dict:
        return {"K": self.K, "labels": list(self.labels), "edges": {v: list(es) for v, es in sorted(self.edges.items())}}

    @classmethod
    def from_json(cls, obj: dict) -> Discretizer:
        return cls({v: tuple(es) for v, es in obj["edges"].items()}, int(obj["K"]))


def quantile_edges(values: np.ndarray, K: int, name: str = "") -> tuple[float, ...]:
    """Edges at the k/K quantiles, placed midway between adjacent observed values.

    Values at or below a quantile stay in the lower state. When quantiles
    collide the edge moves to the next free midpoint; when those run out the
    edges are spread by EPS and a warning is issued.
    """
    x = np.asarray(values, dtype=float)
    distinct = np.unique(x)
    midpoints = (distinct[:-1] + distinct[1:]) / 2
    edges: list[float] = []
    widened = False
    for k in range(1, K):
        q = np.quantile(x, k / K)
        lo = distinct[np.searchsorted(distinct, q, side="right") - 1]
        candidates = midpoints[midpoints > lo]
        if edges:
            candidates = candidates[candidates > edges[-1]]
        if candidates.size:
            edges.append(float(candidates[0]))
        else:
            widened = True
            edges.append((edges[-1] if edges else float(distinct[-1])) + EPS)
    if widened:
        warnings.warn(f"{name or 'variable'} has too few distinct values for {K} states; edges widened by {EPS}",
                      RuntimeWarning, stacklevel=3)
    return tuple(edges)


def _normal_regime_panels(data) -> list[CountPanel]:
    if hasattr(data, "instances"):
        return [inst.panel.slice(0, inst.true_poif) for inst in data.instances]
    return list(data)


def _training_panels(data) -> list[CountPanel]:
    if hasattr(data, "instances"):
        return [inst.window() for inst in data.instances]
    return list(data)


def fit_discretizer(data, K: int = 3, variables: Sequence[str] | None = None) -> Discretizer:
    """Quantile edges over normal-regime slots.

    ``data`` is a Dataset (only pre-PoIF slots are used) or a sequence of
    CountPanels taken to be entirely nominal.
    """
    if K < 2:
        raise ValidationError("K must be >= 2")
    panels = [p for p in _normal_regime_panels(data) if p.n_slots]
    if not panels:
        raise ValidationError("no normal-regime data to fit the discretizer")
    variables = panels[0].variables if variables is None else variables
    edges = {v: quantile_edges(np.concatenate([p[v] for p in panels]), K, v) for v in variables}
    return Discretizer(edges, K)


@dataclass
class Cpt:
    """``table[s_1, ..., s_m, :]`` is the distribution of ``node`` given parent states."""

    node: Node
    parents: tuple[Node, ...]
    table: np.ndarray

    def row(self, parent_states: Sequence[int]) -> np.ndarray:
        return self.table[tuple(parent_states)]

    def rows(self) -> np.ndarray:
        return self.table.reshape(-1, self.table.shape[-1])


@dataclass(frozen=True)
class Query:
    query: Mapping[Node, State]
    evidence: Mapping[Node, State] = field(default_factory=dict)

    def __post_init__(self):
        overlap = set(map(Node._make, self.query)) & set(map(Node._make, self.evidence))
        if overlap:
            raise ValidationError(f"query and evidence overlap on {sorted(overlap)}")


@dataclass
class ProbSeries:
    values: np.ndarray
    start_slot: int

    def __len__(self):
        return len(self.values)

    @property
    def slots(self) -> np.ndarray:
        return np.arange(self.start_slot, self.start_slot + len(self.values))


@dataclass(eq=False)
class Dcbn:
    graph: LaggedDag
    discretizer: Discretizer
    cpts: dict[Node, Cpt]
    priors: dict[Node, np.ndarray]
    failure_var: str
    smoothing: float = 1.0

    @property
    def K(self) -> int:
        return self.discretizer.K

    @property
    def labels(self) -> tuple[str, ...]:
        return self.discretizer.labels

    @functools.cached_property
    def nodes(self) -> tuple[Node, ...]:
        """Lagged roots first (sorted), then present-time nodes in topological order."""
        present = nx.DiGraph()
        present.add_nodes_from(self.cpts)
        present.add_edges_from((p, n) for n, c in self.cpts.items() for p in c.parents if p.lag == 0)
        order = list(nx.lexicographical_topological_sort(present))
        return tuple(sorted(self.priors)) + tuple(order)

    @property
    def failure_node(self) -> Node:
        return Node(self.failure_var, 0)

    def state_index(self, s: State) -> int:
        if isinstance(s, str):
            try:
                return self.labels.index(s)
            except ValueError:
                raise ValidationError(f"unknown state label {s!r}; expected one of {self.labels}") from None
        s = int(s)
        if not 0 <= s < self.K:
            raise ValidationError(f"state index {s} outside 0..{self.K - 1}")
        return s

    def parents(self, node: Node) -> tuple[Node, ...]:
        return self.cpts[node].parents if node in self.cpts else ()

    def children(self, node: Node) -> list[Node]:
        return [n for n, c in self.cpts.items() if node in c.parents]

    @functools.cached_property
    def joint(self) -> np.ndarray:
        """Full joint table over ``nodes``, axis order as in ``nodes``."""
        axes = {n: string.ascii_letters[i] for i, n in enumerate(self.nodes)}
        if len(axes) > len(string.ascii_letters):
            raise ValidationError("too many nodes for exact enumeration")
        operands, subscripts = [], []
        for n, prior in self.priors.items():
            operands.append(prior)
            subscripts.append(axes[n])
        for n, cpt in self.cpts.items():
            operands.append(cpt.table)
            subscripts.append("".join(axes[p] for p in cpt.parents) + axes[n])
        out = "".join(axes[n] for n in self.nodes)
        return np.einsum(",".join(subscripts) + "->" + out, *operands)

    def joint_probability(self, assignment: Mapping[Node, State]) -> float:
        """Product of all factors at one full assignment."""
        s = {Node._make(n): self.state_index(v) for n, v in assignment.items()}
        p = 1.0
        for n, prior in self.priors.items():
            p *= prior[s[n]]
        for n, cpt in self.cpts.items():
            p *= cpt.row([s[q] for q in cpt.parents])[s[n]]
        return p

    def to_json(self) -> dict:
        return {
            "failure_var": self.failure_var,
            "smoothing": self.smoothing,
            "discretizer": self.discretizer.to_json(),
            "graph": self.graph.to_json(),
            "cpts": [
                {"node": n.to_json(), "parents": [p.to_json() for p in c.parents], "table": c.table.tolist()}
                for n, c in sorted(self.cpts.items())
            ],
            "priors": [{"node": n.to_json(), "table": t.tolist()} for n, t in sorted(self.priors.items())],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, obj: dict) -> Dcbn:
        cpts = {}
        for c in obj["cpts"]:
            node = Node.from_json(c["node"])
            cpts[node] = Cpt(node, tuple(Node.from_json(p) for p in c["parents"]), np.array(c["table"], dtype=float))
        priors = {Node.from_json(p["node"]): np.array(p["table"], dtype=float) for p in obj["priors"]}
        return cls(
            LaggedDag.from_json(obj["graph"]),
            Discretizer.from_json(obj["discretizer"]),
            cpts,
            priors,
            obj["failure_var"],
            float(obj["smoothing"]),
        )

    @classmethod
    def loads(cls, text: str) -> Dcbn:
        return cls.from_json(json.loads(text))

    def __eq__(self, other):
        if not isinstance(other, Dcbn):
            return NotImplemented
        return (
            self.graph == other.graph
            and self.discretizer == other.discretizer
            and self.failure_var == other.failure_var
            and self.smoothing == other.smoothing
            and self.cpts.keys() == other.cpts.keys()
            and all(
                self.cpts[n].parents == other.cpts[n].parents and np.array_equal(self.cpts[n].table, other.cpts[n].table)
                for n in self.cpts
            )
            and self.priors.keys() == other.priors.keys()
            and all(np.array_equal(self.priors[n], other.priors[n]) for n in self.priors)
        )


# ---------------------------------------------------------------------------
# learning


def _state_rows(panel: CountPanel, disc: Discretizer, nodes: Iterable[Node], max_lag: int) -> np.ndarray:
    """One row of node states per present slot t >= max_lag."""
    n = panel.n_slots - max_lag
    cols = []
    for node in nodes:
        states = disc.states(node.var, panel[node.var])
        cols.append(states[max_lag - node.lag : max_lag - node.lag + n])
    return np.column_stack(cols) if cols else np.zeros((max(n, 0), 0), dtype=int)


def model_nodes(graph: LaggedDag) -> tuple[list[Node], list[Node]]:
    """(lagged nodes with children, present-time nodes)."""
    lagged = sorted({a for a, _ in graph.edges if a.lag > 0})
    present = [Node(v, 0) for v in graph.variables]
    return lagged, present


def default_failure_var(graph: LaggedDag) -> str:
    sinks = [v for v in graph.variables if not graph.children(Node(v, 0)) and graph.parents(Node(v, 0))]
    if len(sinks) != 1:
        raise ValidationError(f"cannot infer the failure variable; candidate sinks: {sinks}")
    return sinks[0]


def fit_cpts(
    graph: LaggedDag,
    data,
    disc: Discretizer,
    smoothing: float = 1.0,
    failure_var: str | None = None,
) -> Dcbn:
    """Smoothed maximum-likelihood CPTs pooled over panels and slots.

    ``data`` is a Dataset (each instance is cut at its crash slot) or a
    sequence of CountPanels.
    """
    if not smoothing > 0:
        raise ValidationError("smoothing must be positive; zero cells would break abduction")
    panels = _training_panels(data)
    if not panels:
        raise ValidationError("no training panels")
    for p in panels:
        missing = set(graph.variables) - set(p.variables)
        if missing:
            raise ValidationError(f"panel lacks graph variables {sorted(missing)}")
    missing = set(graph.variables) - set(disc.edges)
    if missing:
        raise ValidationError(f"discretizer lacks graph variables {sorted(missing)}")
    K = disc.K
    lagged, present = model_nodes(graph)
    nodes = lagged + present
    col = {n: i for i, n in enumerate(nodes)}
    rows = np.vstack([_state_rows(p, disc, nodes, graph.max_lag) for p in panels if p.n_slots > graph.max_lag])

    priors = {}
    for n in lagged:
        counts = np.bincount(rows[:, col[n]], minlength=K).astype(float) + smoothing
        priors[n] = counts / counts.sum()
    cpts = {}
    for n in present:
        parents = tuple(graph.parents(n))
        counts = np.full((K,) * len(parents) + (K,), smoothing, dtype=float)
        index = tuple(rows[:, col[p]] for p in parents) + (rows[:, col[n]],)
        np.add.at(counts, index, 1.0)
        cpts[n] = Cpt(n, parents, counts / counts.sum(axis=-1, keepdims=True))
    failure_var = default_failure_var(graph) if failure_var is None else failure_var
    if failure_var not in graph.variables:
        raise ValidationError(f"failure variable {failure_var!r} not in graph")
    return Dcbn(graph, disc, cpts, priors, failure_var, float(smoothing))


# ---------------------------------------------------------------------------
# inference


def _index(model: Dcbn, assignment: Mapping[Node, State]) -> tuple:
    pos = {n: i for i, n in enumerate(model.nodes)}
    idx: list = [slice(None)] * len(model.nodes)
    for node, s in assignment.items():
        node = Node._make(node)
        if node not in pos:
            raise ValidationError(f"node {node} is not part of the model")
        idx[pos[node]] = model.state_index(s)
    return tuple(idx)


def query_prob(model: Dcbn, q: Query) -> float:
    """P(query | evidence) by enumeration of the full joint table."""
    joint = model.joint
    p_evidence = float(joint[_index(model, q.evidence)].sum())
    if p_evidence <= 0:
        raise ValidationError("impossible evidence")
    p_both = float(joint[_index(model, {**q.evidence, **q.query})].sum())
    return min(1.0, max(0.0, p_both / p_evidence))


def observed_states(model: Dcbn, panel: CountPanel, slot: int, nodes: Iterable[Node] | None = None) -> dict[Node, int]:
    """Discretized state of each node at absolute ``slot``; node (v, lag) reads slot - lag."""
    nodes = model.nodes if nodes is None else nodes
    rel = slot - panel.first_slot
    out = {}
    for n in nodes:
        t = rel - n.lag
        if not 0 <= t < panel.n_slots:
            raise ValidationError(f"slot {slot} with lag {n.lag} falls outside the panel")
        out[n] = model.discretizer.state(n.var, panel[n.var][t])
    return out


def predict_failure_prob(model: Dcbn, panel: CountPanel) -> ProbSeries:
    """P(failure = top state | observed parents) for every slot with a full lag window."""
    lag = model.graph.max_lag
    if panel.n_slots < lag + 1:
        raise ValidationError(f"panel needs at least {lag + 1} slots, has {panel.n_slots}")
    cpt = model.cpts[model.failure_node]
    for p in cpt.parents:
        if p.var not in panel.variables:
            raise ValidationError(f"panel lacks failure parent variable {p.var!r}")
    states = _state_rows(panel, model.discretizer, cpt.parents, lag)
    values = cpt.table[tuple(states.T)][..., model.K - 1] if cpt.parents else np.full(states.shape[0], cpt.table[-1])
    return ProbSeries(np.asarray(values, dtype=float), panel.first_slot + lag)


def prediction_rmse(predicted: ProbSeries, panel: CountPanel, failure_var: str) -> float:
    actual = normalized_actual(predicted, panel, failure_var)
    return float(np.sqrt(np.mean((predicted.values - actual) ** 2)))


def normalized_actual(predicted: ProbSeries, panel: CountPanel, failure_var: str) -> np.ndarray:
    """Observed failure counts aligned with ``predicted``, min-max scaled to [0, 1].

    A constant window has no range; it is divided by its peak instead, so a
    flat positive series maps to 1 and an all-zero one to 0.
    """
    lo = predicted.start_slot - panel.first_slot
    if lo < 0 or lo + len(predicted) > panel.n_slots:
        raise ValidationError("prediction and panel are not aligned")
    actual = panel[failure_var][lo : lo + len(predicted)].astype(float)
    if not actual.size:
        return actual
    span = actual.max() - actual.min()
    if span > 0:
        return (actual - actual.min()) / span
    return actual / actual.max() if actual.max() > 0 else actual


def heldout_rmse(model: Dcbn, panels: Sequence[CountPanel]) -> float:
    """Mean of per-panel RMSEs between P_F and the min-max scaled failure counts."""
    scores = [prediction_rmse(predict_failure_prob(model, p), p, model.failure_var) for p in panels]
    if not scores:
        raise ValidationError("no panels to score")
    return float(np.mean(scores))
