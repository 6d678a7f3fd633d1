"""Event logs to count panels, plus the variable relevance filter."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence, TextIO

import numpy as np

from .errors import EventParseError, ValidationError

EVENT_HEADER = ("timestamp", "event_id", "channel")


@dataclass(frozen=True)
class EventRecord:
    timestamp: float
    event_id: str
    channel: str

    def __post_init__(self):
        if not math.isfinite(self.timestamp) or self.timestamp < 0:
            raise ValidationError(f"timestamp must be finite and non-negative, got {self.timestamp}")
        if not self.event_id:
            raise ValidationError("event_id must be non-empty")


@dataclass(frozen=True)
class EventLog:
    records: tuple[EventRecord, ...] = ()

    def __len__(self):
        return len(self.records)

    def channels(self) -> list[str]:
        return sorted({r.channel for r in self.records})


@dataclass
class CountPanel:
    """Integer counts, one row per variable and one column per time slot.

    ``first_slot`` is the absolute index of column 0, so windowed panels keep
    their original slot numbering.
    """

    variables: tuple[str, ...]
    counts: np.ndarray
    slot_width: float = 1.0
    start_time: float = 0.0
    first_slot: int = 0

    def __post_init__(self):
        self.variables = tuple(self.variables)
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != len(self.variables):
            raise ValidationError(
                f"counts must have shape (n_vars, n_slots); got {counts.shape} for {len(self.variables)} variables"
            )
        if len(set(self.variables)) != len(self.variables):
            raise ValidationError("variable names must be unique")
        if counts.size and (np.any(counts < 0) or not np.all(np.equal(np.mod(counts, 1), 0))):
            raise ValidationError("counts must be non-negative integers")
        if not self.slot_width > 0:
            raise ValidationError("slot_width must be positive")
        self.counts = counts.astype(np.int64)

    @property
    def n_slots(self) -> int:
        return self.counts.shape[1]

    def __len__(self):
        return self.n_slots

    def __getitem__(self, var: str) -> np.ndarray:
        try:
            return self.counts[self.variables.index(var)]
        except ValueError:
            raise ValidationError(f"unknown variable {var!r}") from None

    def __eq__(self, other):
        if not isinstance(other, CountPanel):
            return NotImplemented
        return (
            self.variables == other.variables
            and self.slot_width == other.slot_width
            and self.start_time == other.start_time
            and self.first_slot == other.first_slot
            and np.array_equal(self.counts, other.counts)
        )

    def select(self, variables: Sequence[str]) -> CountPanel:
        rows = [self[v] for v in variables]
        counts = np.vstack(rows) if rows else np.zeros((0, self.n_slots), dtype=np.int64)
        return CountPanel(tuple(variables), counts, self.slot_width, self.start_time, self.first_slot)

    def slice(self, lo: int, hi: int) -> CountPanel:
        """Columns ``lo..hi-1`` (relative indices)."""
        return CountPanel(
            self.variables,
            self.counts[:, lo:hi].copy(),
            self.slot_width,
            self.start_time + lo * self.slot_width,
            self.first_slot + lo,
        )


@dataclass
class RelevanceReport:
    retained: list[tuple[str, float, float]] = field(default_factory=list)
    dropped_irrelevant: list[tuple[str, float, float]] = field(default_factory=list)
    dropped_periodic: list[tuple[str, float]] = field(default_factory=list)

    @property
    def retained_names(self) -> list[str]:
        return [name for name, _, _ in self.retained]

    def to_dict(self) -> dict:
        return {
            "retained": [{"var": v, "mi": mi, "p_value": p} for v, mi, p in self.retained],
            "dropped_irrelevant": [{"var": v, "mi": mi, "p_value": p} for v, mi, p in self.dropped_irrelevant],
            "dropped_periodic": [{"var": v, "periodicity": s} for v, s in self.dropped_periodic],
        }


# ---------------------------------------------------------------------------
# parsing and counting


def parse_event_log(stream: TextIO | str) -> EventLog:
    """Parse ``timestamp,event_id,channel`` lines into a time-sorted log.

    A leading header line is optional. Ties keep their input order.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    records = []
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = next(csv.reader([line]))
        if lineno == 1 and tuple(f.strip() for f in fields) == EVENT_HEADER:
            continue
        if len(fields) != 3:
            raise EventParseError(lineno, f"expected 3 fields, got {len(fields)}")
        ts, event_id, channel = (f.strip() for f in fields)
        try:
            t = float(ts)
        except ValueError:
            raise EventParseError(lineno, f"timestamp {ts!r} is not a number") from None
        try:
            records.append(EventRecord(t, event_id, channel))
        except ValidationError as exc:
            raise EventParseError(lineno, str(exc)) from None
    records.sort(key=lambda r: r.timestamp)
    return EventLog(tuple(records))


def write_event_log(log: EventLog, stream: TextIO) -> None:
    stream.write(",".join(EVENT_HEADER) + "\n")
    for r in log.records:
        stream.write(f"{r.timestamp!r},{r.event_id},{r.channel}\n")


def count_transform(
    log: EventLog,
    slot_width: float,
    variables: Sequence[str],
    start_time: float | None = None,
    n_slots: int | None = None,
) -> CountPanel:
    """Tally events per channel in half-open slots ``[start + k*w, start + (k+1)*w)``.

    ``start_time`` defaults to the first timestamp rounded down to a multiple
    of ``slot_width``; ``n_slots`` defaults to covering the last event.
    """
    if not slot_width > 0:
        raise ValidationError(f"slot_width must be positive, got {slot_width}")
    if not variables:
        raise ValidationError("variables must be non-empty")
    ts = np.array([r.timestamp for r in log.records], dtype=float)
    if start_time is None:
        start_time = math.floor(ts.min() / slot_width) * slot_width if ts.size else 0.0
    if n_slots is None:
        n_slots = int(math.floor((ts.max() - start_time) / slot_width)) + 1 if ts.size else 0
    index = {v: i for i, v in enumerate(variables)}
    counts = np.zeros((len(variables), n_slots), dtype=np.int64)
    for r in log.records:
        row = index.get(r.channel)
        if row is None:
            continue
        k = math.floor((r.timestamp - start_time) / slot_width)
        if 0 <= k < n_slots:
            counts[row, k] += 1
    return CountPanel(tuple(variables), counts, float(slot_width), float(start_time))


def window_to_failure(panel: CountPanel, failure_slot: int, history_len: int) -> CountPanel:
    """Keep the ``history_len`` slots ending at ``failure_slot`` (relative index)."""
    if not 0 <= failure_slot < panel.n_slots:
        raise ValidationError(f"failure_slot {failure_slot} outside panel of {panel.n_slots} slots")
    if history_len < 1:
        raise ValidationError("history_len must be >= 1")
    available = failure_slot + 1
    if history_len > available:
        raise ValidationError(f"history_len {history_len} exceeds available past: only {available} slots available")
    return panel.slice(failure_slot - history_len + 1, failure_slot + 1)


def write_panel_csv(panel: CountPanel, stream: TextIO) -> None:
    stream.write(",".join(("slot",) + panel.variables) + "\n")
    for k in range(panel.n_slots):
        row = [str(panel.first_slot + k)] + [str(int(c)) for c in panel.counts[:, k]]
        stream.write(",".join(row) + "\n")


def read_panel_csv(stream: TextIO | str, slot_width: float = 1.0) -> CountPanel:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise ValidationError("empty panel CSV") from None
    if not header or header[0] != "slot":
        raise ValidationError("panel CSV header must start with 'slot'")
    slots, rows = [], []
    for lineno, fields in enumerate(reader, start=2):
        if not fields:
            continue
        if len(fields) != len(header):
            raise ValidationError(f"line {lineno}: expected {len(header)} fields, got {len(fields)}")
        try:
            slots.append(int(fields[0]))
            rows.append([int(x) for x in fields[1:]])
        except ValueError:
            raise ValidationError(f"line {lineno}: non-integer cell") from None
    counts = np.array(rows, dtype=np.int64).T if rows else np.zeros((len(header) - 1, 0), dtype=np.int64)
    first = slots[0] if slots else 0
    if slots != list(range(first, first + len(slots))):
        raise ValidationError("slot column must be consecutive")
    return CountPanel(tuple(header[1:]), counts, slot_width, first * slot_width, first)


# ---------------------------------------------------------------------------
# relevance filter


def default_bins(n: int) -> int:
    return int(min(16, max(2, math.floor(math.sqrt(n / 5)))))


def _equal_frequency_codes(x: np.ndarray, bins: int) -> np.ndarray:
    # Ties always share a bin, so heavily tied data may use fewer bins.
    edges = np.unique(np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1]))
    return np.searchsorted(edges, x, side="right")


def _entropy(counts: np.ndarray, n: int) -> float:
    c = np.sort(counts[counts > 0].ravel()).astype(float)
    p = c / n
    return float(-np.sum(p * np.log(p)))


def _binned_mi(ca: np.ndarray, cb: np.ndarray) -> float:
    n = ca.size
    joint = np.zeros((ca.max() + 1, cb.max() + 1), dtype=np.int64)
    np.add.at(joint, (ca, cb), 1)
    # H(a) + H(b) - H(a,b) with sorted sums keeps mi(a,b) == mi(b,a) bit-for-bit.
    mi = (_entropy(joint.sum(axis=1), n) + _entropy(joint.sum(axis=0), n)) - _entropy(joint, n)
    return max(mi, 0.0)


def mutual_information(
    a: Sequence[float],
    b: Sequence[float],
    bins: int | None = None,
    n_perm: int = 199,
    seed: int = 0,
) -> tuple[float, float]:
    """Plug-in MI (nats) on equal-frequency bins, with a permutation p-value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValidationError(f"series must be 1-D with equal length, got {a.shape} and {b.shape}")
    n = a.size
    if n < 8:
        raise ValidationError(f"series length must be >= 8, got {n}")
    bins = default_bins(n) if bins is None else bins
    if bins < 2:
        raise ValidationError("bins must be >= 2")
    if np.all(a == a[0]) or np.all(b == b[0]):
        return 0.0, 1.0
    ca = _equal_frequency_codes(a, bins)
    cb = _equal_frequency_codes(b, bins)
    observed = _binned_mi(ca, cb)
    rng = np.random.default_rng(seed)
    exceed = sum(_binned_mi(ca, rng.permutation(cb)) >= observed for _ in range(n_perm))
    return observed, (1 + exceed) / (n_perm + 1)


def periodicity_score(series: Sequence[float]) -> float:
    """Share of non-DC periodogram power held by the strongest frequency."""
    x = np.asarray(series, dtype=float)
    if x.size < 16:
        raise ValidationError(f"series length must be >= 16, got {x.size}")
    power = np.abs(np.fft.rfft(x - x.mean()))[1:] ** 2
    total = power.sum()
    if total <= 1e-12 * max(1.0, float(np.sum(x * x))):
        return 0.0
    return float(power.max() / total)


def relevance_filter(
    panel: CountPanel,
    target: str,
    alpha: float = 0.05,
    periodicity_threshold: float = 0.5,
    seed: int = 0,
) -> RelevanceReport:
    """Drop periodic and target-irrelevant variables; rank the rest by MI.

    Periodicity is checked first, so a timer lands in ``dropped_periodic``
    even though it is also independent of the target.
    """
    if target not in panel.variables:
        raise ValidationError(f"target {target!r} not in panel variables {list(panel.variables)}")
    y = panel[target]
    report = RelevanceReport()
    scored = []
    for var in panel.variables:
        if var == target:
            continue
        x = panel[var]
        score = periodicity_score(x)
        if score > periodicity_threshold:
            report.dropped_periodic.append((var, score))
            continue
        mi, p = mutual_information(x, y, seed=seed)
        if p > alpha:
            report.dropped_irrelevant.append((var, mi, p))
        else:
            scored.append((var, mi, p))
    scored.sort(key=lambda item: (-item[1], item[0]))
    mi_t, p_t = mutual_information(y, y, seed=seed)
    report.retained = [(target, mi_t, p_t)] + scored
    return report

