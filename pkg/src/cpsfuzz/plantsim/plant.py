"""The simulator owner: state, PLC logic, codec, sensors and historian."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..sensors import SENSORS, sensor_kind
from .config import PlantConfig
from .controller import Controller
from .historian import Historian, SensorReading
from .physics import ACTUATORS, PlantState, line_flows, step
from .protocol import PACKET_TYPES, STAGES, PacketRejected, ProtocolMap

_NOISE_BLOCK = 1024


@lru_cache(maxsize=64)
def _noise_block(seed: int, block: int) -> np.ndarray:
    return np.random.default_rng([seed, block]).standard_normal((_NOISE_BLOCK, len(SENSORS)))


def unit_noise(seed: int, tick: int) -> np.ndarray:
    """Standard normal draws for all sensors; a pure function of (seed, tick)."""
    if tick < 0:
        raise ValueError("negative tick")
    return _noise_block(seed, tick // _NOISE_BLOCK)[tick % _NOISE_BLOCK]


def read_sensor(state: PlantState, sensor_id: str, cfg: PlantConfig) -> SensorReading:
    """True value plus clamped Gaussian noise, deterministic in (seed, tick)."""
    sigma = cfg.noise[sensor_kind(sensor_id)]
    value = state.true_value(sensor_id)
    if sigma:
        value += sigma * float(unit_noise(cfg.seed, state.tick)[SENSORS.index(sensor_id)])
    value = max(value, 0.0)
    if sensor_kind(sensor_id) == "level":
        value = min(value, cfg.tank_max)
    return SensorReading(sensor_id, value, state.tick)


def apply_payload(state: PlantState, protocol: ProtocolMap, stage: int, ptype: str,
                  payload: bytes) -> PlantState:
    """Validate one payload and latch its command bits into a new state.

    Raises PacketRejected (state untouched) when validation fails.
    """
    values = protocol.decode(ptype, payload)
    new = state.copy()
    for (actuator, role), on in values.items():
        name = f"{actuator}{stage}01"
        if role == "command":
            new.commands[name] = on
        elif role == "latch":
            new.latches[name] = on
        elif role == "override":
            new.overrides[stage] = on
    return new


class Plant:
    """Runs the process one tick at a time.

    Per tick: ``emit`` the controllers' packets, ``receive`` whatever the bus
    delivers, then ``advance`` the physics and record every sensor.
    """

    def __init__(self, config: PlantConfig | None = None, protocol: ProtocolMap | None = None,
                 *, noiseless: bool = False):
        self.config = config or PlantConfig()
        if noiseless:
            self.config = PlantConfig.from_dict({**self.config.to_dict(),
                                                 "noise": dict.fromkeys(self.config.noise, 0.0)})
        self.protocol = protocol or ProtocolMap.load()
        self.controller = Controller(self.config)
        self.state = PlantState(levels=dict(self.config.initial_levels))
        self.historian = Historian(start=0)
        self.rejected = 0
        self._encode_cache: dict = {}
        self._decode_cache: dict = {}
        self._readings = self._read_all()
        self.historian.record(0, self._readings)
        # settle actuators to the PLC's initial decision
        for stage, types in self.emit().items():
            for ptype, payload in types.items():
                self.receive_one(stage, ptype, payload)
        self.state.flows = line_flows(self.state, self.config)

    @property
    def tick(self) -> int:
        return self.state.tick

    @property
    def protocol_digest(self) -> str:
        return self.protocol.digest

    def _read_all(self) -> tuple[float, ...]:
        return tuple(read_sensor(self.state, s, self.config).value for s in SENSORS)

    def read_sensor(self, sensor_id: str) -> SensorReading:
        return read_sensor(self.state, sensor_id, self.config)

    def latest(self) -> dict[str, float]:
        return dict(zip(SENSORS, self._readings))

    def controller_tick(self) -> dict[str, bool]:
        levels = {s: v for s, v in zip(SENSORS, self._readings) if sensor_kind(s) == "level"}
        return self.controller.decide(levels)

    def encode_stage(self, stage: int, commands: dict[str, bool]) -> dict[str, bytes]:
        key = (stage, commands[f"MV{stage}01"], commands[f"P{stage}01"])
        if key not in self._encode_cache:
            self._encode_cache[key] = self.protocol.encode(stage, commands)
        return self._encode_cache[key]

    def emit(self) -> dict[int, dict[str, bytes]]:
        """Payloads of all 16 packet types for the PLC decision this tick."""
        commands = self.controller_tick()
        return {stage: self.encode_stage(stage, commands) for stage in STAGES}

    def receive_one(self, stage: int, ptype: str, payload: bytes) -> bool:
        """Apply one delivered payload; returns False if the plant dropped it."""
        key = (stage, ptype, payload)
        values = self._decode_cache.get(key)
        if values is None:
            try:
                values = self.protocol.decode(ptype, payload)
            except PacketRejected:
                values = False
            if len(self._decode_cache) > 50000:
                self._decode_cache.clear()
            self._decode_cache[key] = values
        if values is False:
            self.rejected += 1
            return False
        st = self.state
        for (actuator, role), on in values.items():
            name = f"{actuator}{stage}01"
            if role == "command":
                st.commands[name] = on
            elif role == "latch":
                st.latches[name] = on
            else:
                st.overrides[stage] = on
        return True

    def advance(self) -> None:
        self.state = step(self.state, self.config)
        self._readings = self._read_all()
        self.historian.record(self.state.tick, self._readings)

    def run(self, ticks: int) -> None:
        """Closed-loop operation with no interference on the bus."""
        for _ in range(ticks):
            for stage, types in self.emit().items():
                for ptype in PACKET_TYPES:
                    self.receive_one(stage, ptype, types[ptype])
            self.advance()

    def fork(self) -> "Plant":
        """Independent copy from the current tick on (historian restarts here)."""
        twin = object.__new__(Plant)
        twin.config = self.config
        twin.protocol = self.protocol
        twin.controller = Controller(**{**vars(self.controller)})
        twin.state = self.state.copy()
        twin.historian = Historian(start=self.tick)
        twin.historian.record(self.tick, self._readings)
        twin.rejected = 0
        twin._encode_cache = self._encode_cache
        twin._decode_cache = self._decode_cache
        twin._readings = self._readings
        return twin

    def actuator_snapshot(self) -> dict[str, bool]:
        return {a: self.state.actuator_state[a] for a in ACTUATORS}
