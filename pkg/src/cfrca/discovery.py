"""Causal structure learning on lag-augmented count data."""

from __future__ import annotations

import functools
import itertools
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import NumericError, ValidationError
from .events import CountPanel
from .graph import LaggedDag, Node, shd  # noqa: F401  (re-exported)

R_CLAMP = 1 - 1e-12


@dataclass
class LaggedDataMatrix:
    """Row r holds the present slot ``r + max_lag`` and its lagged copies."""

    columns: list[Node]
    values: np.ndarray
    max_lag: int
    _corr: np.ndarray | None = field(default=None, repr=False, compare=False)
    _constant: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def index(self, col: Node | int) -> int:
        if isinstance(col, (int, np.integer)):
            return int(col)
        return self.columns.index(Node(*col))

    def column(self, col: Node | int) -> np.ndarray:
        return self.values[:, self.index(col)]

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(c.var for c in self.columns))

    def constant_columns(self) -> np.ndarray:
        if self._constant is None:
            self._constant = np.ptp(self.values, axis=0) == 0 if self.n_rows else np.ones(len(self.columns), bool)
        return self._constant

    def correlation(self) -> np.ndarray:
        """Correlation of standardized columns; constant columns are all-zero rows."""
        if self._corr is None:
            x = self.values.astype(float)
            x = x - x.mean(axis=0)
            sd = x.std(axis=0)
            sd[sd == 0] = np.inf
            z = x / sd
            corr = z.T @ z / self.n_rows
            np.fill_diagonal(corr, np.where(np.isinf(sd), 0.0, 1.0))
            self._corr = corr
        return self._corr


@dataclass(frozen=True)
class CiTestResult:
    statistic: float
    p_value: float
    n_eff: int


def lag_augment(panel: CountPanel, max_lag: int) -> LaggedDataMatrix:
    if max_lag < 1:
        raise ValidationError("max_lag must be >= 1")
    if panel.n_slots <= max_lag:
        raise ValidationError(f"panel has {panel.n_slots} slots; need more than max_lag={max_lag}")
    n = panel.n_slots - max_lag
    columns, cols = [], []
    for v in panel.variables:
        row = panel[v]
        for lag in range(max_lag + 1):
            columns.append(Node(v, lag))
            cols.append(row[max_lag - lag : max_lag - lag + n])
    return LaggedDataMatrix(columns, np.column_stack(cols).astype(float), max_lag)


def lag_augment_many(panels: Sequence[CountPanel], max_lag: int) -> LaggedDataMatrix:
    """Stack the lag-augmented rows of several panels (no rows straddle two panels)."""
    parts = [lag_augment(p, max_lag) for p in panels if p.n_slots > max_lag]
    if not parts:
        raise ValidationError("no panel has more than max_lag slots")
    for p in parts[1:]:
        if p.columns != parts[0].columns:
            raise ValidationError("panels must share the same variables in the same order")
    return LaggedDataMatrix(parts[0].columns, np.vstack([p.values for p in parts]), max_lag)


def _partial_corr(corr: np.ndarray, i: int, j: int, cond: Sequence[int], names) -> float:
    if not cond:
        return float(corr[i, j])
    idx = [i, j, *cond]
    sub = corr[np.ix_(idx, idx)]
    if np.linalg.matrix_rank(sub[2:, 2:]) < len(cond) or np.linalg.cond(sub) > 1e12:
        raise NumericError(f"singular conditioning set for {names(i)} _|_ {names(j)} | {[names(c) for c in cond]}")
    prec = np.linalg.inv(sub)
    return float(-prec[0, 1] / np.sqrt(prec[0, 0] * prec[1, 1]))


def fisher_z_test(data: LaggedDataMatrix, i, j, cond=()) -> CiTestResult:
    """Fisher-Z test of zero partial correlation between columns ``i`` and ``j`` given ``cond``."""
    i, j = data.index(i), data.index(j)
    cond = sorted(data.index(c) for c in cond)
    if i == j:
        raise ValidationError("i and j must differ")
    if i in cond or j in cond:
        raise ValidationError("conditioning set must exclude i and j")
    n_eff = data.n_rows - len(cond) - 3
    if n_eff < 1:
        raise ValidationError(f"effective sample size {n_eff} < 1")
    i, j = min(i, j), max(i, j)
    constant = data.constant_columns()
    if constant[i] or constant[j]:
        return CiTestResult(0.0, 1.0, n_eff)
    r = _partial_corr(data.correlation(), i, j, cond, lambda k: data.columns[k])
    if abs(r) >= R_CLAMP:
        warnings.warn(f"|partial correlation| {abs(r):.15f} clamped to {R_CLAMP}", RuntimeWarning, stacklevel=2)
        r = float(np.clip(r, -R_CLAMP, R_CLAMP))
    statistic = float(np.sqrt(n_eff) * abs(np.arctanh(r)))
    p = float(min(1.0, 2 * stats.norm.sf(statistic)))
    return CiTestResult(statistic, p, n_eff)


def _ks_normal_distance(sorted_rows: np.ndarray) -> np.ndarray:
    n = sorted_rows.shape[-1]
    mean = sorted_rows.mean(axis=-1, keepdims=True)
    sd = sorted_rows.std(axis=-1, ddof=1, keepdims=True)
    cdf = stats.norm.cdf((sorted_rows - mean) / sd)
    k = np.arange(1, n + 1)
    d_plus = np.max(k / n - cdf, axis=-1)
    d_minus = np.max(cdf - (k - 1) / n, axis=-1)
    return np.maximum(d_plus, d_minus)


@functools.lru_cache(maxsize=64)
def lilliefors_null(n: int, n_mc: int = 2000, seed: int = 0) -> np.ndarray:
    """Sorted Monte Carlo draws of the Lilliefors statistic under normality."""
    rng = np.random.default_rng(seed)
    draws = np.sort(rng.standard_normal((n_mc, n)), axis=1)
    return np.sort(_ks_normal_distance(draws))


def lilliefors_test(series: Sequence[float], n_mc: int = 2000, seed: int = 0) -> CiTestResult:
    """KS distance to a fitted normal, p-value from a seeded Monte Carlo null."""
    x = np.sort(np.asarray(series, dtype=float))
    if x.size < 20:
        raise ValidationError(f"series length must be >= 20, got {x.size}")
    if np.all(x == x[0]):
        return CiTestResult(float("inf"), 0.0, x.size)
    d = float(_ks_normal_distance(x))
    null = lilliefors_null(x.size, n_mc, seed)
    exceed = null.size - np.searchsorted(null, d, side="left")
    return CiTestResult(d, float((1 + exceed) / (n_mc + 1)), x.size)


# ---------------------------------------------------------------------------
# PC-stable


def _lag0_cycle(directed: set, a: Node, b: Node) -> bool:
    """Would adding a->b close a directed cycle among the directed edges?"""
    stack, seen = [b], {b}
    while stack:
        u = stack.pop()
        if u == a:
            return True
        for x, y in directed:
            if x == u and y not in seen:
                seen.add(y)
                stack.append(y)
    return False


class _PartialGraph:
    def __init__(self, adjacent: set[frozenset]):
        self.adjacent = adjacent
        self.directed: set[tuple[Node, Node]] = set()

    def adj(self, a: Node, b: Node) -> bool:
        return frozenset((a, b)) in self.adjacent

    def undirected(self, a: Node, b: Node) -> bool:
        return self.adj(a, b) and (a, b) not in self.directed and (b, a) not in self.directed

    def neighbours(self, a: Node) -> list[Node]:
        return sorted(next(iter(e - {a})) for e in self.adjacent if a in e)

    def orient(self, a: Node, b: Node) -> bool:
        if not self.undirected(a, b) or _lag0_cycle(self.directed, a, b):
            return False
        self.directed.add((a, b))
        return True

    def undirected_edges(self) -> list[tuple[Node, Node]]:
        out = []
        for e in self.adjacent:
            a, b = sorted(e)
            if self.undirected(a, b):
                out.append((a, b))
        return sorted(out)


def _meek(g: _PartialGraph) -> None:
    changed = True
    while changed:
        changed = False
        for a, b in g.undirected_edges():
            for x, y in ((a, b), (b, a)):
                if not g.undirected(x, y):
                    continue
                nx_ = g.neighbours(x)
                # R1: w -> x - y, w and y non-adjacent
                if any((w, x) in g.directed and w != y and not g.adj(w, y) for w in nx_):
                    changed |= g.orient(x, y)
                    continue
                # R2: x -> w -> y
                if any((x, w) in g.directed and (w, y) in g.directed for w in nx_):
                    changed |= g.orient(x, y)
                    continue
                # R3: x - c -> y, x - d -> y, c and d non-adjacent
                cands = [c for c in nx_ if c != y and g.undirected(x, c) and (c, y) in g.directed]
                if any(not g.adj(c, d) for c, d in itertools.combinations(cands, 2)):
                    changed |= g.orient(x, y)


def pc_stable(
    data: LaggedDataMatrix,
    alpha: float = 0.01,
    max_depth: int = 3,
    sink: str | None = None,
) -> LaggedDag:
    """Order-independent PC with time restrictions.

    Only pairs touching a lag-0 node are candidate edges, lagged-to-present
    edges are oriented forward in time, contemporaneous edges by colliders
    and Meek rules. A ``sink`` variable gets no outgoing edges at any lag and
    its present-time edges point into it. Leftover undirected contemporaneous
    edges point at the lexicographically larger variable; those choices are
    listed in ``metadata``.
    """
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha must lie in (0, 1), got {alpha}")
    cols = data.columns
    constant = data.constant_columns()

    def allowed(a: Node, b: Node) -> bool:
        if a.lag and b.lag:
            return False
        if sink is not None:
            # the sink never causes anything, at any lag
            past = a if a.lag else b if b.lag else None
            if past is not None and past.var == sink:
                return False
        return True

    adjacent = {
        frozenset((a, b))
        for ia, a in enumerate(cols)
        for ib, b in enumerate(cols)
        if ia < ib and allowed(a, b) and not constant[ia] and not constant[ib]
    }
    sepsets: dict[frozenset, tuple[Node, ...]] = {}
    g = _PartialGraph(adjacent)

    depth = 0
    while depth <= max_depth:
        snapshot = {c: g.neighbours(c) for c in cols}
        if not any(len(v) - 1 >= depth for v in snapshot.values()):
            break
        removals = []
        for edge in sorted(tuple(sorted(e)) for e in g.adjacent):
            a, b = edge
            found = None
            for x, y in ((a, b), (b, a)):
                others = [c for c in snapshot[x] if c != y]
                for cond in itertools.combinations(others, depth):
                    if fisher_z_test(data, x, y, cond).p_value > alpha:
                        found = cond
                        break
                if found is not None:
                    break
            if found is not None:
                removals.append((frozenset(edge), found))
        for e, cond in removals:
            g.adjacent.discard(e)
            sepsets[e] = cond
        depth += 1

    for a, b in sorted(tuple(sorted(e)) for e in g.adjacent):
        if a.lag != b.lag:
            past, present = (a, b) if a.lag > b.lag else (b, a)
            g.directed.add((past, present))

    if sink is not None:
        for e in sorted(tuple(sorted(e)) for e in g.adjacent):
            a, b = e
            if b.var == sink and b.lag == 0:
                g.orient(a, b)
            elif a.var == sink and a.lag == 0:
                g.orient(b, a)

    # unshielded colliders x -> z <- y at a present-time node z
    for z in sorted(c for c in cols if c.lag == 0):
        nbrs = g.neighbours(z)
        for x, y in itertools.combinations(nbrs, 2):
            if g.adj(x, y):
                continue
            sep = sepsets.get(frozenset((x, y)))
            if sep is not None and z in sep:
                continue
            for u in (x, y):
                if u.lag == 0:
                    g.orient(u, z)

    _meek(g)
    decisions = []
    for a, b in g.undirected_edges():
        src, dst = (a, b) if a.var < b.var else (b, a)
        rule = "lexicographic"
        if not g.orient(src, dst):
            src, dst = dst, src
            rule += "-reversed-to-avoid-cycle"
            g.orient(src, dst)
        decisions.append({"edge": [src.to_json(), dst.to_json()], "rule": rule})
        _meek(g)

    variables = tuple(dict.fromkeys(c.var for c in cols))
    dag = LaggedDag(variables, data.max_lag, frozenset(g.directed))
    dag.metadata.update({"alpha": alpha, "max_depth": max_depth, "sink": sink, "tie_breaks": decisions})
    return dag


def discover(panels: Sequence[CountPanel], alpha: float = 0.01, max_lag: int = 2, max_depth: int = 3, sink=None):
    return pc_stable(lag_augment_many(panels, max_lag), alpha, max_depth, sink)
