"""Simulated four-stage water-treatment plant."""

from .config import PlantConfig
from .controller import Controller, hysteresis
from .historian import Historian, NotRecorded, SensorReading
from .physics import ACTUATORS, FLOW_PATHS, TANKS, PlantState, line_flows, step
from .plant import Plant, apply_payload, read_sensor
from .protocol import PACKET_TYPES, STAGES, PacketRejected, ProtocolMap

__all__ = [
    "ACTUATORS", "FLOW_PATHS", "PACKET_TYPES", "STAGES", "TANKS",
    "Controller", "Historian", "NotRecorded", "PacketRejected", "Plant",
    "PlantConfig", "PlantState", "ProtocolMap", "SensorReading",
    "apply_payload", "hysteresis", "line_flows", "read_sensor", "step",
]
