"""PoIF detection, causal path ranking and counterfactual recourse."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import networkx as nx
import numpy as np

from .dcbn import Dcbn, ProbSeries, Query, State, observed_states, predict_failure_prob, query_prob
from .errors import ValidationError
from .events import CountPanel
from .graph import LaggedDag, Node

DEFAULT_THETA = 0.05
STATUS_OK = "ok"
STATUS_NO_DETECTION = "no incipient failure detected"


@dataclass
class PoifResult:
    T: int | None
    theta: float
    second_derivative: np.ndarray
    start_slot: int = 0

    @property
    def detected(self) -> bool:
        return self.T is not None

    def curvature_at(self, slot: int) -> float:
        return float(self.second_derivative[slot - self.start_slot])


@dataclass
class CausalPath:
    nodes: tuple[Node, ...]
    likelihood: float = math.nan

    def label(self) -> str:
        return " -> ".join(n.label() for n in self.nodes)

    def channel_node(self, failure_var: str) -> Node:
        """Present-time node closest to the sink that is not the failure variable itself."""
        inner = [n for n in self.nodes if n.var != failure_var]
        present = [n for n in inner if n.lag == 0]
        return present[-1] if present else inner[-1]


@dataclass
class RecourseResult:
    node: Node
    alpha: float | str
    alpha_state: int
    distribution: np.ndarray
    mean: float
    sd: float

    @property
    def p_low(self) -> float:
        return float(self.distribution[0])


def detect_poif(series: ProbSeries | Sequence[float], theta: float = DEFAULT_THETA) -> PoifResult:
    """First slot whose curvature exceeds ``theta``.

    The series is smoothed with a centered 3-point mean and differenced twice
    with unit spacing. Only points with a full stencil get a value; the two
    slots at each end are NaN.
    """
    if isinstance(series, ProbSeries):
        values, start = np.asarray(series.values, dtype=float), series.start_slot
    else:
        values, start = np.asarray(series, dtype=float), 0
    if values.size < 5:
        raise ValidationError(f"series length must be >= 5, got {values.size}")
    if not theta > 0:
        raise ValidationError("theta must be positive")
    smooth = np.full(values.size, np.nan)
    smooth[1:-1] = (values[:-2] + values[1:-1] + values[2:]) / 3
    d2 = np.full(values.size, np.nan)
    d2[2:-2] = smooth[1:-3] - 2 * smooth[2:-2] + smooth[3:-1]
    hits = np.flatnonzero(np.nan_to_num(d2, nan=-np.inf) > theta)
    T = int(start + hits[0]) if hits.size else None
    return PoifResult(T, float(theta), d2, start)


def enumerate_paths(graph: LaggedDag, sink: str) -> list[CausalPath]:
    """All directed paths from an in-degree-0 node to ``sink`` at lag 0, lexicographically ordered."""
    target = Node(sink, 0)
    if target not in graph.nodes:
        raise ValidationError(f"sink {sink!r} not in graph")
    g = graph.to_networkx()
    paths = []
    for root in sorted(n for n in g.nodes if g.in_degree(n) == 0 and n != target):
        paths.extend(tuple(p) for p in nx.all_simple_paths(g, root, target))
    return [CausalPath(p) for p in sorted(paths)]


def rank_paths(model: Dcbn, panel: CountPanel, T: int, ascending: bool = False) -> list[CausalPath]:
    """Score each root-to-failure path by P(path states | all other model nodes) at slot ``T``.

    Descending order puts the most likely explanation first; ``ascending``
    gives the least likely (most irregular) first.
    """
    lag = model.graph.max_lag
    rel = T - panel.first_slot
    if not lag <= rel < panel.n_slots:
        raise ValidationError(f"slot {T} outside the usable range of the panel")
    obs = observed_states(model, panel, T)
    ranked = []
    for path in enumerate_paths(model.graph, model.failure_var):
        on_path = set(path.nodes)
        q = Query({n: obs[n] for n in path.nodes}, {n: s for n, s in obs.items() if n not in on_path})
        ranked.append(CausalPath(path.nodes, query_prob(model, q)))
    sign = 1 if ascending else -1
    ranked.sort(key=lambda p: (sign * p.likelihood, p.nodes))
    return ranked


# ---------------------------------------------------------------------------
# counterfactuals


def _cdf(row: np.ndarray) -> np.ndarray:
    c = np.cumsum(row)
    c[-1] = 1.0
    return c


def _row(model: Dcbn, node: Node, states: Mapping[Node, int]) -> np.ndarray:
    if node in model.priors:
        return model.priors[node]
    cpt = model.cpts[node]
    return cpt.row([states[p] for p in cpt.parents])


def mechanism(model: Dcbn, node: Node, states: Mapping[Node, int], u: float) -> int:
    """Inverse-CDF mechanism: the state whose CDF interval [C(x-1), C(x)) holds ``u``."""
    return int(np.searchsorted(_cdf(_row(model, node, states)), u, side="right"))


def _complete(model: Dcbn, evidence: Mapping[Node, State]) -> dict[Node, int]:
    ev = {Node._make(n): model.state_index(s) for n, s in evidence.items()}
    missing = [n for n in model.nodes if n not in ev]
    if missing:
        raise ValidationError(f"evidence is incomplete; missing nodes: {[n.label() for n in missing]}")
    return ev


def abduct(model: Dcbn, evidence: Mapping[Node, State]) -> dict[Node, tuple[float, float]]:
    """Posterior noise of each node: uniform on ``[C(x-1 | pa), C(x | pa))``."""
    ev = _complete(model, evidence)
    out = {}
    for n in model.nodes:
        c = _cdf(_row(model, n, ev))
        x = ev[n]
        out[n] = (float(c[x - 1]) if x else 0.0, float(c[x]))
    return out


def _ancestors(model: Dcbn, node: Node) -> set[Node]:
    seen, stack = set(), [node]
    while stack:
        for p in model.parents(stack.pop()):
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def _alpha_state(model: Dcbn, node: Node, alpha: State | float) -> int:
    if isinstance(alpha, str):
        return model.state_index(alpha)
    return model.discretizer.state(node.var, float(alpha))


def counterfactual_distribution(
    model: Dcbn, evidence: Mapping[Node, State], interventions: Mapping[Node, int]
) -> dict[tuple[int, ...], float]:
    """Exact joint distribution of all model nodes in the counterfactual world.

    Abduction fixes each noise to its posterior interval, the action pins the
    intervened nodes, and prediction integrates every noise interval against
    the new parent states (interval overlap, no sampling).
    """
    factual = _complete(model, evidence)
    noise = abduct(model, factual)
    worlds: dict[tuple[int, ...], float] = {(): 1.0}
    order = model.nodes
    for i, n in enumerate(order):
        nxt: dict[tuple[int, ...], float] = {}
        lo, hi = noise[n]
        for assignment, p in worlds.items():
            if n in interventions:
                branches = [(interventions[n], 1.0)]
            else:
                states = dict(zip(order[:i], assignment))
                c = _cdf(_row(model, n, states))
                lower = np.concatenate(([0.0], c[:-1]))
                overlap = np.clip(np.minimum(hi, c) - np.maximum(lo, lower), 0.0, None) / (hi - lo)
                branches = [(x, w) for x, w in enumerate(overlap) if w > 0]
            for x, w in branches:
                key = assignment + (x,)
                nxt[key] = nxt.get(key, 0.0) + p * w
        worlds = nxt
    return worlds


def counterfactual(
    model: Dcbn, evidence: Mapping[Node, State], node: Node, alpha: State | float
) -> RecourseResult:
    """Failure-state distribution had ``node`` been ``alpha``.

    ``alpha`` is a state label (str) or a raw count, which is discretized.
    """
    node = Node._make(node)
    if node == model.failure_node:
        raise ValidationError("cannot intervene on the failure node itself")
    if node not in model.nodes:
        raise ValidationError(f"node {node} is not part of the model")
    if node not in _ancestors(model, model.failure_node):
        raise ValidationError(f"{node.label()} is not an ancestor of the failure node")
    a = _alpha_state(model, node, alpha)
    worlds = counterfactual_distribution(model, evidence, {node: a})
    fpos = model.nodes.index(model.failure_node)
    dist = np.zeros(model.K)
    for assignment, p in worlds.items():
        dist[assignment[fpos]] += p
    k = np.arange(model.K)
    mean = float(dist @ k)
    sd = float(np.sqrt(max(0.0, dist @ (k - mean) ** 2)))
    return RecourseResult(node, alpha, a, dist, mean, sd)


def recourse_sweep(
    model: Dcbn, evidence: Mapping[Node, State], node: Node, alphas: Sequence[State | float]
) -> list[RecourseResult]:
    if len(alphas) == 0:
        raise ValidationError("alpha range is empty")
    return [counterfactual(model, evidence, node, a) for a in alphas]


# ---------------------------------------------------------------------------
# end-to-end report


@dataclass
class DiagnosisReport:
    status: str
    poif: PoifResult
    pf: ProbSeries
    ranked_paths: list[CausalPath] = field(default_factory=list)
    recourse_sweep: list[RecourseResult] = field(default_factory=list)
    eval_slot: int | None = None
    recourse_node: Node | None = None

    def to_json(self) -> dict:
        def num(x):
            return None if x is None or (isinstance(x, float) and math.isnan(x)) else x

        return {
            "status": self.status,
            "poif": {
                "T": self.poif.T,
                "theta": self.poif.theta,
                "start_slot": self.poif.start_slot,
                "second_derivative": [num(float(v)) for v in self.poif.second_derivative],
            },
            "pf": {"start_slot": self.pf.start_slot, "values": [float(v) for v in self.pf.values]},
            "eval_slot": self.eval_slot,
            "recourse_node": self.recourse_node.to_json() if self.recourse_node else None,
            "paths": [{"nodes": [n.to_json() for n in p.nodes], "likelihood": p.likelihood} for p in self.ranked_paths],
            "recourse": [
                {
                    "alpha": r.alpha,
                    "alpha_state": r.alpha_state,
                    "distribution": [float(v) for v in r.distribution],
                    "mean": r.mean,
                    "sd": r.sd,
                    "p_low": r.p_low,
                }
                for r in self.recourse_sweep
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, obj: dict) -> DiagnosisReport:
        pj = obj["poif"]
        d2 = np.array([math.nan if v is None else v for v in pj["second_derivative"]], dtype=float)
        node = Node.from_json(obj["recourse_node"]) if obj.get("recourse_node") else None
        return cls(
            status=obj["status"],
            poif=PoifResult(pj["T"], float(pj["theta"]), d2, int(pj["start_slot"])),
            pf=ProbSeries(np.array(obj["pf"]["values"], dtype=float), int(obj["pf"]["start_slot"])),
            ranked_paths=[CausalPath(tuple(Node.from_json(n) for n in p["nodes"]), p["likelihood"]) for p in obj["paths"]],
            recourse_sweep=[
                RecourseResult(node, r["alpha"], int(r["alpha_state"]), np.array(r["distribution"], dtype=float),
                               float(r["mean"]), float(r["sd"]))
                for r in obj["recourse"]
            ],
            eval_slot=obj.get("eval_slot"),
            recourse_node=node,
        )

    @classmethod
    def loads(cls, text: str) -> DiagnosisReport:
        return cls.from_json(json.loads(text))


def alpha_grid(panel: CountPanel, var: str, size: int) -> list[float]:
    """Evenly spaced raw counts spanning the observed range of ``var``."""
    if size < 1:
        raise ValidationError("alpha grid size must be >= 1")
    x = panel[var]
    return [float(a) for a in np.linspace(float(x.min()), float(x.max()), size)]


def diagnose(model: Dcbn, panel: CountPanel, theta: float = DEFAULT_THETA, grid_size: int = 11) -> DiagnosisReport:
    """Predict P_F, locate the PoIF, rank paths right after it and sweep recourse on the top channel."""
    pf = predict_failure_prob(model, panel)
    poif = detect_poif(pf, theta)
    if not poif.detected:
        return DiagnosisReport(STATUS_NO_DETECTION, poif, pf)
    eval_slot = min(poif.T + 1, panel.first_slot + panel.n_slots - 1)
    ranked = rank_paths(model, panel, eval_slot)
    node = ranked[0].channel_node(model.failure_var) if ranked else None
    sweep = []
    if node is not None:
        evidence = observed_states(model, panel, eval_slot)
        sweep = recourse_sweep(model, evidence, node, alpha_grid(panel, node.var, grid_size))
    return DiagnosisReport(STATUS_OK, poif, pf, ranked, sweep, eval_slot, node)
