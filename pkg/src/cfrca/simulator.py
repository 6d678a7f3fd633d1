"""Seeded 2-out-of-3 redundant system: three message channels and one alarm."""

from __future__ import annotations

import csv
import dataclasses
import functools
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .fileio import atomic_write
from .events import CountPanel, read_panel_csv, write_panel_csv
from .graph import LaggedDag, Node
from .seeding import rng_for

CHANNELS = ("X1", "X2", "X3")
ALARM = "Y"
VARIABLES = CHANNELS + (ALARM,)
ALARM_BASE_RATE = 0.2
MIN_RATE = 0.1

# channel -> (parent channel, lag) pairs of the time-explicit ground truth
CHANNEL_PARENTS = {
    "X1": (("X3", 2), ("X2", 1)),
    "X2": (("X1", 1), ("X3", 1)),
    "X3": (("X2", 1), ("X1", 2)),
}

# seed index reserved for the long nominal run behind the crash threshold
_REFERENCE_INDEX = 0xA1A2_0000_0000
_REFERENCE_SLOTS = 20_000


@dataclass(frozen=True)
class SimConfig:
    n_slots: int = 200
    baseline_rate: float = 10.0
    coupling_weight: float = 0.3
    alarm_gain: float = 0.5
    nominal_threshold: float = 18.0
    fault_ramp: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.n_slots < 10:
            raise ValidationError(f"n_slots must be >= 10, got {self.n_slots}")
        if not (math.isfinite(self.baseline_rate) and self.baseline_rate > 0):
            raise ValidationError("baseline_rate must be positive and finite")
        for name in ("coupling_weight", "alarm_gain", "nominal_threshold", "fault_ramp"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValidationError(f"{name} must be finite and non-negative, got {value}")

    def replace(self, **changes) -> SimConfig:
        return dataclasses.replace(self, **changes)


@dataclass
class SimInstance:
    panel: CountPanel
    injected_channel: str
    true_poif: int
    crash_slot: int

    def window(self) -> CountPanel:
        """Slots up to and including the crash; nothing after it is kept."""
        return self.panel.slice(0, self.crash_slot + 1)


@dataclass
class Dataset:
    config: SimConfig
    instances: list[SimInstance] = field(default_factory=list)

    def __len__(self):
        return len(self.instances)

    def __getitem__(self, k) -> SimInstance:
        return self.instances[k]


def ground_truth_graph() -> LaggedDag:
    edges = [(Node(p, lag), Node(c, 0)) for c, parents in CHANNEL_PARENTS.items() for p, lag in parents]
    edges += [(Node(c, 0), Node(ALARM, 0)) for c in CHANNELS]
    return LaggedDag(VARIABLES, 2, frozenset(edges))


def _simulate(config: SimConfig, rng: np.random.Generator, n_slots: int, fault=None) -> CountPanel:
    """Draw one panel. ``fault`` is ``(channel, poif)`` or None."""
    b, w = config.baseline_rate, config.coupling_weight
    x = np.zeros((3, n_slots), dtype=np.int64)
    y = np.zeros(n_slots, dtype=np.int64)
    idx = {c: i for i, c in enumerate(CHANNELS)}
    parents = [[(idx[p], lag) for p, lag in CHANNEL_PARENTS[c]] for c in CHANNELS]
    fault_row = idx[fault[0]] if fault else -1
    for t in range(n_slots):
        if t < 2:
            rates = np.full(3, b)
        else:
            rates = np.array([b + w * sum(x[p, t - lag] - b for p, lag in parents[i]) for i in range(3)])
        if fault and t >= fault[1]:
            rates[fault_row] += config.fault_ramp * (t - fault[1]) ** 2
        rates = np.maximum(rates, MIN_RATE)
        x[:, t] = rng.poisson(rates)
        excess = np.maximum(0.0, x[:, t] - config.nominal_threshold).sum()
        y[t] = rng.poisson(ALARM_BASE_RATE + config.alarm_gain * excess)
    return CountPanel(VARIABLES, np.vstack([x, y[None, :]]))


def generate_normal(config: SimConfig, rng: np.random.Generator | None = None) -> CountPanel:
    """Fault-free panel; the default generator is seeded from ``config.seed``."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    return _simulate(config, rng, config.n_slots)


@functools.lru_cache(maxsize=32)
def nominal_alarm_quantile(config: SimConfig, q: float = 0.999) -> float:
    """Quantile of the alarm count under normal operation (long seeded run)."""
    ref = config.replace(n_slots=_REFERENCE_SLOTS)
    panel = _simulate(ref, rng_for(config.seed, _REFERENCE_INDEX), _REFERENCE_SLOTS)
    return float(np.quantile(panel[ALARM], q))


def find_crash(alarm: np.ndarray, poif: int, threshold: float) -> int:
    """First slot after the PoIF opening two consecutive alarm exceedances."""
    for t in range(poif + 1, alarm.size - 1):
        if alarm[t] > threshold and alarm[t + 1] > threshold:
            return t
    return alarm.size - 1


def inject_failure(
    config: SimConfig, channel: str, poif: int, rng: np.random.Generator | None = None
) -> SimInstance:
    """Add a quadratic rate ramp ``fault_ramp * (t - poif)**2`` to one channel."""
    if channel not in CHANNELS:
        raise ValidationError(f"channel must be one of {CHANNELS}, got {channel!r}")
    if not 2 <= poif < config.n_slots - 5:
        raise ValidationError(f"poif must satisfy 2 <= poif < {config.n_slots - 5}, got {poif}")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    panel = _simulate(config, rng, config.n_slots, fault=(channel, poif))
    crash = find_crash(panel[ALARM], poif, nominal_alarm_quantile(config))
    return SimInstance(panel, channel, poif, crash)


def poif_range(n_slots: int) -> tuple[int, int]:
    """Half-open range of PoIF slots: the middle 60% of the panel, clipped to the valid range."""
    lo = max(2, int(math.floor(0.2 * n_slots)))
    hi = min(n_slots - 5, int(math.ceil(0.8 * n_slots)))
    return lo, hi


def generate_instance(config: SimConfig, k: int) -> SimInstance:
    rng = rng_for(config.seed, k)
    lo, hi = poif_range(config.n_slots)
    poif = int(rng.integers(lo, hi))
    return inject_failure(config, CHANNELS[k % 3], poif, rng)


def generate_dataset(config: SimConfig, n_instances: int) -> Dataset:
    if n_instances < 1:
        raise ValidationError("n_instances must be >= 1")
    return Dataset(config, [generate_instance(config, k) for k in range(n_instances)])


def generate_nominal_instance(config: SimConfig, k: int) -> SimInstance:
    """Fault-free instance from an index space disjoint from ``generate_instance``."""
    panel = generate_normal(config, rng_for(config.seed ^ 0x5EED_0F_0000_0001, k))
    return SimInstance(panel, "", config.n_slots - 1, config.n_slots - 1)


# ---------------------------------------------------------------------------
# dataset directory layout


def save_dataset(dataset: Dataset, directory: str | os.PathLike) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "config.json", json.dumps(dataclasses.asdict(dataset.config), indent=2, sort_keys=True) + "\n")
    labels = io.StringIO()
    labels.write("instance,injected_channel,true_poif,crash_slot\n")
    for k, inst in enumerate(dataset.instances):
        buf = io.StringIO()
        write_panel_csv(inst.panel, buf)
        atomic_write(out / f"instance_{k}.csv", buf.getvalue())
        labels.write(f"{k},{inst.injected_channel},{inst.true_poif},{inst.crash_slot}\n")
    atomic_write(out / "labels.csv", labels.getvalue())
    return out


def load_dataset(directory: str | os.PathLike) -> Dataset:
    src = Path(directory)
    if not (src / "config.json").is_file() or not (src / "labels.csv").is_file():
        raise FileNotFoundError(f"{src} is not a dataset directory (config.json / labels.csv missing)")
    config = SimConfig(**json.loads((src / "config.json").read_text(encoding="utf-8")))
    instances = []
    with open(src / "labels.csv", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            k = int(row["instance"])
            with open(src / f"instance_{k}.csv", encoding="utf-8") as pf:
                panel = read_panel_csv(pf)
            instances.append(SimInstance(panel, row["injected_channel"], int(row["true_poif"]), int(row["crash_slot"])))
    return Dataset(config, instances)
