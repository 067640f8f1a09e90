"""Level-0 payload codec.

The ProtocolMap is private to the simulator: it says where the magic
bytes and the command bits sit inside each payload.  Attacker-side code
only ever sees opaque payload bytes and the map's hash.

Bit offsets are within the payload; bit 0 is the least significant bit of
its byte.

Semantics of the command fields, per stage S:

* type A ``command`` bits drive MV{S}01 / P{S}01 directly;
* type B ``latch`` bits hold the actuator on (OR-ed with the command);
  the controller mirrors its commands into them;
* type C ``override`` forces the stage's flow line to full bore;
* type D only echoes status and is ignored by the plant.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

PACKET_TYPES = ("A", "B", "C", "D")
STAGES = (1, 2, 3, 4)
ROLES = ("command", "latch", "override")


class PacketRejected(Exception):
    """The plant dropped a malformed payload (magic mismatch or bad length)."""


@dataclass(frozen=True)
class Field:
    actuator: str  # "MV" or "P"
    role: str
    byte: int
    bit: int

    @property
    def position(self) -> int:
        return self.byte * 8 + self.bit


@dataclass(frozen=True)
class TypeLayout:
    name: str
    length: int
    magic: int
    magic_offset: int = 0
    stage_byte: int | None = None
    zero_bytes: tuple[int, ...] = ()
    fields: tuple[Field, ...] = ()
    echo: tuple[Field, ...] = ()

    def command_positions(self) -> set[int]:
        return {f.position for f in self.fields}

    def reserved_positions(self) -> list[int]:
        """Bit positions the plant never reads (everything but magic and fields)."""
        magic = set(range(self.magic_offset * 8, self.magic_offset * 8 + 8))
        used = magic | self.command_positions()
        return [i for i in range(self.length * 8) if i not in used]


@dataclass(frozen=True)
class ProtocolMap:
    types: dict[str, TypeLayout]
    filler_seed: int = 2752
    version: int = 1
    _filler: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        for layout in self.types.values():
            positions = [f.position for f in layout.fields]
            if len(set(positions)) != len(positions):
                raise ValueError(f"type {layout.name}: overlapping command bits")
            magic = range(layout.magic_offset * 8, layout.magic_offset * 8 + 8)
            if any(p in magic for p in positions):
                raise ValueError(f"type {layout.name}: command bit inside magic byte")
            if any(p >= layout.length * 8 for p in positions):
                raise ValueError(f"type {layout.name}: command bit beyond payload")
        seen = set()
        for layout in self.types.values():
            for f in layout.fields:
                key = (f.actuator, f.role)
                if key in seen:
                    raise ValueError(f"field {key} appears in more than one type")
                seen.add(key)

    @classmethod
    def from_dict(cls, data: dict) -> "ProtocolMap":
        if data.get("format") != "cpsfuzz-protocol-map":
            raise ValueError("not a protocol map file")
        types = {}
        for name, spec in data["types"].items():
            types[name] = TypeLayout(
                name=name,
                length=int(spec["length"]),
                magic=int(spec["magic"], 16),
                magic_offset=int(spec.get("magic_offset", 0)),
                stage_byte=spec.get("stage_byte"),
                zero_bytes=tuple(spec.get("zero_bytes", ())),
                fields=tuple(Field(**f) for f in spec.get("fields", ())),
                echo=tuple(Field(role="echo", **f) for f in spec.get("echo", ())),
            )
        if tuple(types) != PACKET_TYPES:
            raise ValueError(f"expected packet types {PACKET_TYPES}, got {tuple(types)}")
        return cls(types=types, filler_seed=int(data.get("filler_seed", 0)),
                   version=int(data.get("version", 1)))

    @classmethod
    def load(cls, path: str | Path | None = None) -> "ProtocolMap":
        if path is None:
            text = resources.files(__package__).joinpath("protocol_map.json").read_text()
        else:
            text = Path(path).read_text()
        return cls.from_dict(json.loads(text))

    @property
    def digest(self) -> str:
        """Short content hash; the only thing about the map that leaves the simulator."""
        canon = []
        for name, t in sorted(self.types.items()):
            canon.append([name, t.length, t.magic, t.magic_offset, t.stage_byte,
                          list(t.zero_bytes),
                          [[f.actuator, f.role, f.byte, f.bit] for f in t.fields],
                          [[f.actuator, f.byte, f.bit] for f in t.echo]])
        blob = json.dumps([self.version, self.filler_seed, canon], sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def lengths(self) -> dict[str, int]:
        return {name: t.length for name, t in self.types.items()}

    def filler(self, stage: int, ptype: str) -> bytearray:
        """Deterministic background bytes for reserved positions."""
        key = (stage, ptype)
        if key not in self._filler:
            layout = self.types[ptype]
            rng = np.random.default_rng([self.filler_seed, stage, PACKET_TYPES.index(ptype)])
            buf = bytearray(rng.integers(0, 256, size=layout.length, dtype=np.uint8).tobytes())
            buf[layout.magic_offset] = layout.magic
            if layout.stage_byte is not None:
                buf[layout.stage_byte] = stage
            for b in layout.zero_bytes:
                buf[b] = 0
            for f in layout.fields + layout.echo:
                buf[f.byte] &= ~(1 << f.bit) & 0xFF
            self._filler[key] = bytes(buf)
        return bytearray(self._filler[key])

    def encode(self, stage: int, commands: dict[str, bool],
               override: bool = False) -> dict[str, bytes]:
        """Payloads of the four packet types for one stage.

        ``commands`` maps MV{S}01 / P{S}01 to on/open (True) or off/closed.
        """
        values = {}
        for actuator in ("MV", "P"):
            name = f"{actuator}{stage}01"
            if name not in commands:
                raise KeyError(f"missing command for {name}")
            values[actuator] = bool(commands[name])
        out = {}
        for ptype, layout in self.types.items():
            buf = self.filler(stage, ptype)
            for f in layout.fields:
                on = override if f.role == "override" else values[f.actuator]
                if on:
                    buf[f.byte] |= 1 << f.bit
            for f in layout.echo:
                if values[f.actuator]:
                    buf[f.byte] |= 1 << f.bit
            out[ptype] = bytes(buf)
        return out

    def classify(self, payload: bytes) -> str:
        """Packet type from payload length and magic byte; raises PacketRejected."""
        for ptype, layout in self.types.items():
            if len(payload) == layout.length and payload[layout.magic_offset] == layout.magic:
                return ptype
        raise PacketRejected(f"payload of {len(payload)} bytes failed validation")

    def decode(self, ptype: str, payload: bytes) -> dict[tuple[str, str], bool]:
        """Read the command fields of a validated payload.

        Returns {(actuator role, field role): value}; raises PacketRejected
        when the length or magic byte does not match ``ptype``.
        """
        layout = self.types[ptype]
        if len(payload) != layout.length or payload[layout.magic_offset] != layout.magic:
            raise PacketRejected(f"type {ptype} payload failed validation")
        return {(f.actuator, f.role): bool(payload[f.byte] >> f.bit & 1)
                for f in layout.fields}
