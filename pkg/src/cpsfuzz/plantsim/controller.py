"""PLC logic: hysteresis control of the three tanks."""

from __future__ import annotations

from dataclasses import dataclass

from .config import PlantConfig


def hysteresis(value: float, low: float, high: float, previous: bool) -> bool:
    """True below ``low``, False above ``high``, otherwise hold."""
    if value < low:
        return True
    if value > high:
        return False
    return previous


@dataclass
class Controller:
    """Computes actuator commands from the latest level readings.

    The PLCs keep their own memory of what they last commanded; a spoofed
    packet changes the plant but not this memory.
    """

    config: PlantConfig
    fill: bool = True  # MV101
    transfer_12: bool = True  # P101, MV201, P201
    transfer_34: bool = True  # MV301, P301
    product: bool = False  # MV401, P401
    t101_ok: bool = True
    t301_ok: bool = True

    def decide(self, levels: dict[str, float]) -> dict[str, bool]:
        cfg = self.config
        lo, hi = cfg.control_low, cfg.control_high
        lit101, lit301, lit401 = levels["LIT101"], levels["LIT301"], levels["LIT401"]
        # dry-run protection has its own small deadband
        self.t101_ok = not hysteresis(lit101, cfg.protect_level, cfg.protect_level + 20, not self.t101_ok)
        self.t301_ok = not hysteresis(lit301, cfg.protect_level, cfg.protect_level + 20, not self.t301_ok)

        self.fill = hysteresis(lit101, lo, hi, self.fill)
        self.transfer_12 = hysteresis(lit301, lo, hi, self.transfer_12)
        self.transfer_34 = hysteresis(lit401, lo, hi, self.transfer_34)
        self.product = not hysteresis(lit401, lo, hi, not self.product)

        t12 = self.transfer_12 and self.t101_ok
        t34 = self.transfer_34 and self.t301_ok
        return {
            "MV101": self.fill, "P101": t12,
            "MV201": t12, "P201": t12,
            "MV301": t34, "P301": t34,
            "MV401": self.product, "P401": self.product,
        }
