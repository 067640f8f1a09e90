"""Sensor roster and safety ranges.

These are the publicly known facts about the plant (names, units and the
manufacturer safety limits).  Both the simulator and the attacker-side
modules use them; nothing here describes the packet encoding.
"""

from __future__ import annotations

from dataclasses import dataclass

FLOW_SENSORS = ("FIT101", "FIT201", "FIT301", "FIT401")
PRESSURE_SENSORS = ("DPIT301",)
LEVEL_SENSORS = ("LIT101", "LIT301", "LIT401")
SENSORS = FLOW_SENSORS + PRESSURE_SENSORS + LEVEL_SENSORS

UNITS = {"flow": "m3/h", "pressure": "kPa", "level": "mm"}


def sensor_kind(sensor_id: str) -> str:
    if sensor_id in FLOW_SENSORS:
        return "flow"
    if sensor_id in PRESSURE_SENSORS:
        return "pressure"
    if sensor_id in LEVEL_SENSORS:
        return "level"
    raise KeyError(f"unknown sensor {sensor_id!r}")


def is_level(sensor_id: str) -> bool:
    return sensor_kind(sensor_id) == "level"


def default_horizon(sensor_id: str) -> int:
    """Prediction horizon in ticks: 30 for tank levels, 5 otherwise."""
    return 30 if is_level(sensor_id) else 5


@dataclass(frozen=True)
class SafetyRange:
    """Safety thresholds (low, high) around the normal operational band.

    ``low_counted`` is False where reaching the low threshold is not an
    attack (zero flow or zero differential pressure just means the line is
    idle).
    """

    sensor_id: str
    low: float
    high: float
    lo_op: float
    hi_op: float
    low_counted: bool = True

    def __post_init__(self):
        if not self.low < self.lo_op < self.hi_op < self.high:
            raise ValueError(
                f"{self.sensor_id}: need low < lo_op < hi_op < high, got "
                f"{self.low}, {self.lo_op}, {self.hi_op}, {self.high}"
            )

    def breached(self, value: float) -> bool:
        return value >= self.high or (self.low_counted and value <= self.low)

    def in_operation(self, value: float) -> bool:
        return self.lo_op <= value <= self.hi_op
