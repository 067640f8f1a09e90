"""Plant configuration (tank geometry, flows, thresholds, noise, seed)."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..sensors import FLOW_SENSORS, LEVEL_SENSORS, SafetyRange


@dataclass
class PlantConfig:
    # level change in mm/s produced by a net flow of 1 m3/h
    mm_per_s_per_m3h: float = 0.15
    nominal_flow: dict[str, float] = field(default_factory=lambda: {
        "FIT101": 2.0, "FIT201": 2.0, "FIT301": 1.5, "FIT401": 1.2})
    # multiplier applied to a line whose stage override is set
    override_gain: float = 2.0
    dpit_coeff: float = 8.0  # kPa / (m3/h)^2
    tank_max: float = 1200.0
    initial_levels: dict[str, float] = field(default_factory=lambda: {
        "LIT101": 640.0, "LIT301": 600.0, "LIT401": 700.0})
    # hysteresis setpoints of the PLC logic (inside the operational band)
    control_low: float = 550.0
    control_high: float = 750.0
    # source tanks are protected from running dry below this level
    protect_level: float = 520.0
    # hard-wired tank level switches (bypassed by a stage override)
    switch_low: float = 300.0
    switch_high: float = 1000.0
    level_range: tuple[float, float, float, float] = (250.0, 1100.0, 500.0, 800.0)
    flow_high_factor: float = 1.25
    dpit_range: tuple[float, float, float, float] = (2.0, 30.0, 4.0, 25.0)
    noise: dict[str, float] = field(default_factory=lambda: {
        "level": 1.0, "flow": 0.02, "pressure": 0.1})
    seed: int = 0

    def __post_init__(self):
        low, high, lo_op, hi_op = self.level_range
        if not low < self.switch_low < lo_op < hi_op < self.switch_high < high <= self.tank_max:
            raise ValueError("level switches must sit between the operational band and "
                             "the safety thresholds")
        if not lo_op <= self.control_low < self.control_high <= hi_op:
            raise ValueError("control setpoints must lie inside the operational band")

    def safety_ranges(self) -> dict[str, SafetyRange]:
        out = {}
        for s in FLOW_SENSORS:
            nominal = self.nominal_flow[s]
            out[s] = SafetyRange(s, 0.0, self.flow_high_factor * nominal,
                                 0.05 * nominal, 1.1 * nominal, low_counted=False)
        lo, hi, lo_op, hi_op = self.dpit_range
        out["DPIT301"] = SafetyRange("DPIT301", lo, hi, lo_op, hi_op, low_counted=False)
        lo, hi, lo_op, hi_op = self.level_range
        for s in LEVEL_SENSORS:
            out[s] = SafetyRange(s, lo, hi, lo_op, hi_op)
        return out

    def max_value(self, sensor_id: str) -> float:
        """Largest value the sensor can physically show (v_m of the detector)."""
        if sensor_id in FLOW_SENSORS:
            return self.nominal_flow[sensor_id] * self.override_gain
        if sensor_id == "DPIT301":
            return self.dpit_coeff * (self.nominal_flow["FIT301"] * self.override_gain) ** 2
        return self.tank_max

    def to_dict(self) -> dict:
        data = asdict(self)
        data["format"] = "cpsfuzz-plant-config"
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "PlantConfig":
        data = {k: v for k, v in data.items() if k != "format"}
        for key in ("level_range", "dpit_range"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "PlantConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
