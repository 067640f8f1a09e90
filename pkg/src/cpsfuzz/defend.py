"""Learnt models as defences: a residual anomaly detector and an early-warning
monitor that flags predicted departures from the operational range."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .activefuzz import Recording
from .attack import AttackResult
from .netbus import Bus, assemble
from .sensors import SafetyRange, default_horizon, is_level

# a detector (or warning system) is only worth deploying below this FPR
MAX_USABLE_FPR = 0.05


class InsufficientCapture(ValueError):
    pass


class EmptySuite(ValueError):
    pass


@dataclass
class DetectorConfig:
    max_values: dict[str, float]
    relative: float = 0.05
    absolute: float = 5.0
    horizons: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.relative <= 0 or self.absolute <= 0:
            raise ValueError("thresholds must be positive")
        if any(v <= 0 for v in self.max_values.values()):
            raise ValueError("maximum sensor values must be positive")

    def horizon(self, sensor_id: str) -> int:
        return self.horizons.get(sensor_id, default_horizon(sensor_id))


def anomaly_check(v_p: float, v_a: float, sensor_id: str, cfg: DetectorConfig) -> bool:
    """Absolute 5-unit rule for tank levels, 5% of the sensor maximum otherwise."""
    return bool(anomaly_flags(v_p, v_a, sensor_id, cfg))


def anomaly_flags(v_p, v_a, sensor_id: str, cfg: DetectorConfig) -> np.ndarray:
    residual = np.abs(np.asarray(v_p, dtype=float) - np.asarray(v_a, dtype=float))
    if is_level(sensor_id):
        return residual > cfg.absolute
    return residual / cfg.max_values[sensor_id] > cfg.relative


def predicted_values(model, rec: Recording, sensor_id: str, horizon: int) -> np.ndarray:
    """Prediction for ticks horizon..end, made from the traffic ``horizon`` ticks
    earlier (tank levels: reading then plus the predicted change)."""
    if len(rec) <= horizon:
        raise InsufficientCapture(f"capture of {len(rec)} ticks is not longer than the horizon")
    pred = np.atleast_1d(model.predict(rec.vectors[:-horizon])).astype(float)
    if is_level(sensor_id):
        pred = pred + rec.readings[sensor_id][:-horizon]
    return pred


@dataclass
class AnomalyReport:
    sensor_id: str
    detection_rate: float
    false_positive_rate: float
    n_points: int
    n_spoofs: int

    @property
    def usable(self) -> bool:
        return self.false_positive_rate <= MAX_USABLE_FPR


def eval_anomaly_detector(model, rec: Recording, sensor_id: str, cfg: DetectorConfig,
                          n_spoofs: int, rng: np.random.Generator,
                          magnitude: tuple[float, float] | None = None) -> AnomalyReport:
    """Detection rate on spoofed readings and false-positive rate on clean ones.

    Spoofs add or subtract (uniform sign) a uniform magnitude at uniformly
    chosen points: 5-10 units for tank levels, 0.05-0.1 of the sensor
    maximum otherwise.  ``magnitude`` overrides the range (same units:
    absolute for levels, fraction of the maximum otherwise).
    """
    h = cfg.horizon(sensor_id)
    pred = predicted_values(model, rec, sensor_id, h)
    actual = rec.readings[sensor_id][h:]
    fpr = float(np.mean(anomaly_flags(pred, actual, sensor_id, cfg)))
    lo, hi = magnitude or ((5.0, 10.0) if is_level(sensor_id) else (0.05, 0.1))
    scale = 1.0 if is_level(sensor_id) else cfg.max_values[sensor_id]
    points = rng.integers(0, len(actual), size=n_spoofs)
    size = rng.uniform(lo, hi, size=n_spoofs) * scale
    sign = np.where(rng.random(n_spoofs) < 0.5, -1.0, 1.0)
    spoofed = actual[points] + sign * size
    detected = anomaly_flags(pred[points], spoofed, sensor_id, cfg)
    rate = float(np.mean(detected)) if n_spoofs else 0.0
    return AnomalyReport(sensor_id, rate, fpr, len(actual), n_spoofs)


def predict_ahead(model, vector, current: float, sensor_id: str) -> float:
    value = float(model.predict(np.asarray(vector)))
    return current + value if is_level(sensor_id) else value


def warns(predicted: float, safety: SafetyRange) -> bool:
    """Warn iff the prediction leaves the operational range (bounds inclusive)."""
    return not safety.in_operation(predicted)


def early_warning_tick(model, bus: Bus, safety: SafetyRange) -> float | None:
    """Advance one tick on a live bus; return the prediction if it warns."""
    vector = assemble(bus.step(), pick="last")
    predicted = predict_ahead(model, vector, bus.observe(safety.sensor_id), safety.sensor_id)
    return predicted if warns(predicted, safety) else None


def warning_false_positive_rate(model, rec: Recording, safety: SafetyRange) -> float:
    """Share of attack-free ticks on which the monitor warns."""
    sensor = safety.sensor_id
    pred = np.atleast_1d(model.predict(rec.vectors)).astype(float)
    if is_level(sensor):
        pred = pred + rec.readings[sensor]
    return float(np.mean((pred < safety.lo_op) | (pred > safety.hi_op)))


@dataclass
class WarningOutcome:
    warning_tick: int | None
    exit_tick: int | None

    @property
    def breached(self) -> bool:
        return self.exit_tick is not None

    @property
    def success(self) -> bool:
        return self.breached and self.warning_tick is not None and self.warning_tick < self.exit_tick


def monitor_attack(model, snapshot: Bus, attack: AttackResult, safety: SafetyRange,
                   horizon: int) -> WarningOutcome:
    """Replay an attack from its snapshot with the monitor running.

    Ticks count from the first manipulated tick; the run stops when the
    reading first leaves the operational range.
    """
    bus = snapshot.fork()
    base = bus.sniff_vector()
    vector = base.copy()
    positions = np.array(attack.flipped, dtype=np.int64)
    vector[positions] ^= 1
    first_warning = None
    for t in range(1, horizon + 1):
        traffic = bus.hold(vector, 1)[0]
        reading = bus.observe(safety.sensor_id)
        predicted = predict_ahead(model, assemble(traffic, pick="last"), reading, safety.sensor_id)
        if first_warning is None and warns(predicted, safety):
            first_warning = t
        if not safety.in_operation(reading):
            return WarningOutcome(first_warning, t)
    return WarningOutcome(first_warning, None)


@dataclass
class WarningReport:
    sensor_id: str
    successes: int
    failures: int
    never_left_range: int
    false_positive_rate: float
    outcomes: list[WarningOutcome] = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        counted = self.successes + self.failures
        return 100.0 * self.successes / counted if counted else float("nan")

    @property
    def usable(self) -> bool:
        return self.false_positive_rate <= MAX_USABLE_FPR


def eval_early_warning(model, cases: Sequence[tuple[Bus, AttackResult]], safety: SafetyRange,
                       clean: Recording, horizon: int = 2400) -> WarningReport:
    """Warning-before-exit rate over attack replays, FPR over a clean recording.

    Attacks that never leave the operational range are counted apart.
    """
    if not cases:
        raise EmptySuite("no attacks to evaluate")
    outcomes = [monitor_attack(model, snap, attack, safety, horizon) for snap, attack in cases]
    ok = sum(o.success for o in outcomes)
    breached = sum(o.breached for o in outcomes)
    return WarningReport(safety.sensor_id, ok, breached - ok, len(outcomes) - breached,
                         warning_false_positive_rate(model, clean, safety), outcomes)


def detection_table(reports: dict[str, dict[str, AnomalyReport]], sensors: Sequence[str]) -> str:
    """CSV, one row per model: detection % per sensor, '*' where FPR > 5%."""
    lines = ["row," + ",".join(sensors)]
    for label, row in reports.items():
        cells = []
        for s in sensors:
            r = row.get(s)
            cells.append("" if r is None else f"{100 * r.detection_rate:.1f}{'' if r.usable else '*'}")
        lines.append(f"{label}," + ",".join(cells))
    return "\n".join(lines) + "\n"


def detection_report_csv(reports: dict[str, dict[str, AnomalyReport]]) -> str:
    """Long-form CSV: model, sensor, detection rate, FPR and usable flag."""
    lines = ["model,sensor,detection_rate,false_positive_rate,usable"]
    for label, row in reports.items():
        for s, r in row.items():
            lines.append(f"{label},{s},{r.detection_rate:.4f},{r.false_positive_rate:.4f},"
                         f"{'yes' if r.usable else 'no'}")
    return "\n".join(lines) + "\n"


def warning_table(reports: dict[str, dict[str, WarningReport]], sensors: Sequence[str]) -> str:
    """CSV, one row per model: warning success % per sensor, '-' where FPR > 5%."""
    lines = ["row," + ",".join(sensors)]
    for label, row in reports.items():
        cells = []
        for s in sensors:
            r = row.get(s)
            if r is None:
                cells.append("")
            elif not r.usable:
                cells.append("-")
            else:
                cells.append(f"{r.success_rate:.1f}")
        lines.append(f"{label}," + ",".join(cells))
    return "\n".join(lines) + "\n"
