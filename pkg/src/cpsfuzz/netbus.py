"""In-process Level-0 bus and the attacker's view of it.

An attacker on the bus can do three things: sniff packets, spoof packets,
and read sensor values from the historian.  Feature vectors are the
fixed-order concatenation of the first payload of each of the 16 packet
types, bytes in wire order, bits least-significant first.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .plantsim import Plant, PlantConfig

# Packet types are told apart by payload length, as an observer would.
PAYLOAD_LENGTHS = {"A": 10, "B": 32, "C": 22, "D": 22}
TYPE_KEYS = tuple((stage, ptype) for stage in (1, 2, 3, 4) for ptype in "ABCD")
FEATURE_BITS = 8 * sum(PAYLOAD_LENGTHS.values()) * 4  # 2752

_offsets = {}
_pos = 0
for _key in TYPE_KEYS:
    _offsets[_key] = _pos
    _pos += 8 * PAYLOAD_LENGTHS[_key[1]]
BIT_OFFSETS = dict(_offsets)
del _offsets, _pos, _key

CONTROLLER = "controller"
SPOOFED = "spoofed"
CAPTURE_VERSION = 1


class MissingType(LookupError):
    def __init__(self, type_key):
        super().__init__(f"no packet of type {type_key} in window")
        self.type_key = type_key


class BadLength(ValueError):
    pass


class EmptyWindow(RuntimeError):
    pass


@dataclass(frozen=True)
class PacketRecord:
    stage: int
    ptype: str
    payload: bytes
    tick: int
    direction: str = CONTROLLER

    def __post_init__(self):
        if (self.stage, self.ptype) not in BIT_OFFSETS:
            raise ValueError(f"unknown packet type {(self.stage, self.ptype)}")
        if len(self.payload) != PAYLOAD_LENGTHS[self.ptype]:
            raise ValueError(f"type {self.ptype} payload must be {PAYLOAD_LENGTHS[self.ptype]} bytes")

    @property
    def type_key(self) -> tuple[int, str]:
        return (self.stage, self.ptype)


def bit_location(index: int) -> tuple[int, str, int, int]:
    """Feature index -> (stage, type, byte, bit)."""
    if not 0 <= index < FEATURE_BITS:
        raise IndexError(index)
    for key in reversed(TYPE_KEYS):
        if index >= BIT_OFFSETS[key]:
            local = index - BIT_OFFSETS[key]
            return key[0], key[1], local // 8, local % 8
    raise AssertionError("unreachable")


def payload_bits(payload: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")


def assemble(packets: Iterable[PacketRecord], pick: str = "first") -> np.ndarray:
    """One payload per type, concatenated in (stage, type) order.

    ``pick="first"`` takes the first packet of each type (what a sniffer
    gets from the controller); ``"last"`` takes the one the plant acted on
    when spoofed packets follow the controller's within a tick.
    """
    if pick not in ("first", "last"):
        raise ValueError("pick must be 'first' or 'last'")
    chosen: dict[tuple[int, str], bytes] = {}
    for p in packets:
        if pick == "last":
            chosen[p.type_key] = p.payload
        else:
            chosen.setdefault(p.type_key, p.payload)
    for key in TYPE_KEYS:
        if key not in chosen:
            raise MissingType(key)
    return assemble_payloads(chosen)


def assemble_payloads(payloads: dict[tuple[int, str], bytes]) -> np.ndarray:
    blob = b"".join(payloads[key] for key in TYPE_KEYS)
    return np.unpackbits(np.frombuffer(blob, dtype=np.uint8), bitorder="little")


def decompose(v: np.ndarray) -> dict[tuple[int, str], bytes]:
    """Split a feature vector back into its 16 payloads."""
    v = np.asarray(v)
    if v.shape != (FEATURE_BITS,):
        raise BadLength(f"feature vector must have {FEATURE_BITS} bits, got shape {v.shape}")
    blob = np.packbits(v.astype(np.uint8), bitorder="little").tobytes()
    out = {}
    for key in TYPE_KEYS:
        start = BIT_OFFSETS[key] // 8
        out[key] = blob[start:start + PAYLOAD_LENGTHS[key[1]]]
    return out


def to_hex(v: np.ndarray) -> str:
    return np.packbits(np.asarray(v, dtype=np.uint8), bitorder="little").tobytes().hex()


def from_hex(text: str) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(bytes.fromhex(text), dtype=np.uint8), bitorder="little")
    if bits.shape != (FEATURE_BITS,):
        raise BadLength(f"hex vector decodes to {bits.size} bits")
    return bits


class Bus:
    """The simulation loop, seen from the wire.

    ``step`` runs one tick: the PLCs emit their 16 packets, spoofed packets
    queued with ``spoof`` replace the PLC's packet of the same type, the
    plant decodes what it receives, then the process advances.
    """

    def __init__(self, plant: Plant):
        self._plant = plant
        self._queued: dict[tuple[int, str], bytes] = {}

    @classmethod
    def create(cls, config: PlantConfig | None = None, protocol_path=None, *,
               noiseless: bool = False) -> "Bus":
        from .plantsim import ProtocolMap
        protocol = ProtocolMap.load(protocol_path) if protocol_path else None
        return cls(Plant(config, protocol, noiseless=noiseless))

    @property
    def tick(self) -> int:
        return self._plant.tick

    @property
    def protocol_digest(self) -> str:
        return self._plant.protocol_digest

    def fork(self) -> "Bus":
        """Independent bus + plant continuing from this tick."""
        return Bus(self._plant.fork())

    def step(self) -> list[PacketRecord]:
        plant = self._plant
        tick = plant.tick + 1
        emitted = plant.emit()
        spoofed, self._queued = self._queued, {}
        traffic = []
        for stage, types in emitted.items():
            for ptype, payload in types.items():
                traffic.append(PacketRecord(stage, ptype, payload, tick, CONTROLLER))
        for (stage, ptype), payload in spoofed.items():
            traffic.append(PacketRecord(stage, ptype, payload, tick, SPOOFED))
        for stage, types in emitted.items():
            for ptype, payload in types.items():
                plant.receive_one(stage, ptype, spoofed.get((stage, ptype), payload))
        plant.advance()
        return traffic

    def sniff_window(self, duration: int) -> list[PacketRecord]:
        traffic = []
        for _ in range(duration):
            traffic.extend(self.step())
        if duration > 0 and not traffic:
            raise EmptyWindow("no traffic on the bus")
        return traffic

    def sniff_vector(self) -> np.ndarray:
        """Advance one tick and assemble the feature vector seen on the wire."""
        return assemble(self.step())

    def spoof(self, v: np.ndarray) -> int:
        """Queue the 16 payloads of ``v`` for the next tick; returns the count."""
        payloads = decompose(v)
        self._queued.update(payloads)
        return len(payloads)

    def hold(self, v: np.ndarray, ticks: int) -> list[list[PacketRecord]]:
        """Spoof ``v`` on each of the next ``ticks`` ticks; returns each tick's traffic."""
        payloads = decompose(v)
        traffic = []
        for _ in range(ticks):
            self._queued.update(payloads)
            traffic.append(self.step())
        return traffic

    def idle(self, ticks: int) -> None:
        for _ in range(ticks):
            self.step()

    def observe(self, sensor_id: str) -> float:
        """Latest historian reading."""
        return self._plant.historian.query(sensor_id, self.tick).value

    def query(self, sensor_id: str, tick: int) -> float:
        return self._plant.historian.query(sensor_id, tick).value

    def history(self, sensor_id: str, first: int, last: int) -> list[float]:
        return self._plant.historian.series(sensor_id, first, last)


def write_capture(path: str | Path, packets: Sequence[PacketRecord], protocol_digest: str = "") -> None:
    with open(path, "w") as fh:
        fh.write(f"#cpsfuzz-capture v{CAPTURE_VERSION} protocol={protocol_digest}\n")
        for p in packets:
            fh.write(f"{p.tick},{p.stage},{p.ptype},{p.direction},{p.payload.hex()}\n")


def read_capture(path: str | Path) -> tuple[list[PacketRecord], str]:
    """Returns (packets, protocol digest); ValueError names the bad line."""
    packets = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        parts = header.split()
        if len(parts) != 3 or parts[0] != "#cpsfuzz-capture" or not parts[2].startswith("protocol="):
            raise ValueError(f"{path}:1: bad capture header {header!r}")
        if parts[1] != f"v{CAPTURE_VERSION}":
            raise ValueError(f"{path}:1: unsupported capture version {parts[1]}")
        digest = parts[2][len("protocol="):]
        for lineno, line in enumerate(fh, start=2):
            try:
                tick, stage, ptype, direction, payload = line.rstrip("\n").split(",")
                if direction not in (CONTROLLER, SPOOFED):
                    raise ValueError(f"unknown direction {direction!r}")
                packets.append(PacketRecord(int(stage), ptype, bytes.fromhex(payload),
                                            int(tick), direction))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return packets, digest
