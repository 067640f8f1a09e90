"""Discrete-time process model of the four-stage plant.

Three tanks in series, each flow line either off or at its nominal rate:

    mains --FIT101--> T101 --FIT201--> T301 --FIT301 (UF, DPIT301)--> T401 --FIT401--> out

Each tank has hard-wired level switches: a line stops while its destination
is at the high switch or its source at the low switch.  A stage's override
bit bypasses the switches of its line and boosts its flow.

Noise is applied on read, never to the state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .config import PlantConfig

ACTUATORS = ("MV101", "P101", "MV201", "P201", "MV301", "P301", "MV401", "P401")

# flow sensor -> (stage whose override boosts it, actuators that must all be on)
FLOW_PATHS = {
    "FIT101": (1, ("MV101",)),
    "FIT201": (2, ("P101", "MV201", "P201")),
    "FIT301": (3, ("MV301", "P301")),
    "FIT401": (4, ("MV401", "P401")),
}
# tank -> (inflow, outflow)
TANKS = {
    "LIT101": ("FIT101", "FIT201"),
    "LIT301": ("FIT201", "FIT301"),
    "LIT401": ("FIT301", "FIT401"),
}
SOURCE_TANK = {"FIT201": "LIT101", "FIT301": "LIT301", "FIT401": "LIT401"}
DEST_TANK = {"FIT101": "LIT101", "FIT201": "LIT301", "FIT301": "LIT401"}


def _all_off() -> dict[str, bool]:
    return dict.fromkeys(ACTUATORS, False)


@dataclass
class PlantState:
    levels: dict[str, float]
    flows: dict[str, float] = field(default_factory=lambda: dict.fromkeys(FLOW_PATHS, 0.0))
    pressure: float = 0.0
    commands: dict[str, bool] = field(default_factory=_all_off)  # type A
    latches: dict[str, bool] = field(default_factory=_all_off)  # type B
    overrides: dict[int, bool] = field(default_factory=lambda: dict.fromkeys((1, 2, 3, 4), False))
    tick: int = 0

    @property
    def actuator_state(self) -> dict[str, bool]:
        return {a: self.commands[a] or self.latches[a] for a in ACTUATORS}

    def copy(self) -> "PlantState":
        return replace(self, levels=dict(self.levels), flows=dict(self.flows),
                       commands=dict(self.commands), latches=dict(self.latches),
                       overrides=dict(self.overrides))

    def true_value(self, sensor_id: str) -> float:
        if sensor_id in self.levels:
            return self.levels[sensor_id]
        if sensor_id in self.flows:
            return self.flows[sensor_id]
        if sensor_id == "DPIT301":
            return self.pressure
        raise KeyError(sensor_id)


def line_flows(state: PlantState, cfg: PlantConfig) -> dict[str, float]:
    act = state.actuator_state
    flows = {}
    for sensor, (stage, gates) in FLOW_PATHS.items():
        source = SOURCE_TANK.get(sensor)
        if not all(act[a] for a in gates) or (source and state.levels[source] <= 0.0):
            flows[sensor] = 0.0
            continue
        q = cfg.nominal_flow[sensor]
        if state.overrides[stage]:
            q *= cfg.override_gain
        else:
            dest = DEST_TANK.get(sensor)
            if (dest and state.levels[dest] >= cfg.switch_high) or (
                    source and state.levels[source] <= cfg.switch_low):
                q = 0.0
        flows[sensor] = q
    return flows


def step(state: PlantState, cfg: PlantConfig, dt: int = 1) -> PlantState:
    """Advance the process by one tick using the current actuator state."""
    if dt != 1:
        raise ValueError("the plant runs on a fixed 1 s tick")
    new = state.copy()
    flows = line_flows(state, cfg)
    for tank, (q_in, q_out) in TANKS.items():
        level = state.levels[tank] + (flows[q_in] - flows[q_out]) * dt * cfg.mm_per_s_per_m3h
        new.levels[tank] = min(max(level, 0.0), cfg.tank_max)
    new.flows = flows
    new.pressure = cfg.dpit_coeff * flows["FIT301"] ** 2
    new.tick = state.tick + dt
    return new
