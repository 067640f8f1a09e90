"""Time-indexed log of sensor readings."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..sensors import SENSORS


class NotRecorded(KeyError):
    pass


@dataclass(frozen=True)
class SensorReading:
    sensor_id: str
    value: float
    tick: int


class Historian:
    """Stores one row of readings per tick, starting at ``start``."""

    def __init__(self, start: int = 0):
        self.start = start
        self.rows: list[tuple[float, ...]] = []

    def record(self, tick: int, values: tuple[float, ...]) -> None:
        if tick != self.start + len(self.rows):
            raise ValueError(f"historian expected tick {self.start + len(self.rows)}, got {tick}")
        self.rows.append(values)

    @property
    def last_tick(self) -> int:
        return self.start + len(self.rows) - 1

    def query(self, sensor_id: str, tick: int) -> SensorReading:
        idx = tick - self.start
        if idx < 0 or idx >= len(self.rows):
            raise NotRecorded(f"{sensor_id} has no reading at tick {tick}")
        return SensorReading(sensor_id, self.rows[idx][SENSORS.index(sensor_id)], tick)

    def series(self, sensor_id: str, first: int | None = None, last: int | None = None) -> list[float]:
        col = SENSORS.index(sensor_id)
        lo = 0 if first is None else first - self.start
        hi = len(self.rows) if last is None else last - self.start + 1
        if lo < 0 or hi > len(self.rows):
            raise NotRecorded(f"ticks {first}..{last} outside the log")
        return [row[col] for row in self.rows[lo:hi]]

    def write(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            fh.write("tick,sensor_id,value\n")
            for i, row in enumerate(self.rows):
                for sensor, value in zip(SENSORS, row):
                    fh.write(f"{self.start + i},{sensor},{value!r}\n")

    @classmethod
    def read(cls, path: str | Path) -> "Historian":
        hist = None
        pending: dict[str, float] = {}
        tick_of_pending = None
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "tick,sensor_id,value":
                raise ValueError(f"{path}:1: unexpected header {header!r}")
            for lineno, line in enumerate(fh, start=2):
                try:
                    tick_s, sensor, value_s = line.strip().split(",")
                    tick, value = int(tick_s), float(value_s)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
                if hist is None:
                    hist = cls(start=tick)
                if tick_of_pending is not None and tick != tick_of_pending:
                    hist.record(tick_of_pending, tuple(pending[s] for s in SENSORS))
                    pending = {}
                tick_of_pending = tick
                pending[sensor] = value
        if hist is None:
            return cls()
        hist.record(tick_of_pending, tuple(pending[s] for s in SENSORS))
        return hist
