"""Discrete-event LoRa/LoRaWAN network simulator.

Core layers (always importable): the virtual-time kernel, the shared-medium
PHY, and per-radio energy accounting.  The LoRaWAN protocol stack lives in
``lorawansim.lorawan`` and is an optional layer on top of the radio API;
custom protocols can be built directly against :class:`~lorawansim.phy.Radio`
without importing it.  Firmware-in-the-loop support lives in
``lorawansim.firmware``.
"""

from .kernel import (
    QueueTimeout,
    SimConfig,
    SimQueue,
    SimStateError,
    SimTime,
    Simulation,
    SimulationEnded,
    SimulationError,
    Task,
    TaskCancelled,
)
from .energy import PowerConsumer, PowerProfile
from .phy import (
    AirPacket,
    CollisionParams,
    Location,
    Medium,
    PathLossParams,
    Radio,
    RadioConfig,
    RadioStateError,
    Reception,
    airtime,
)

__all__ = [
    "AirPacket",
    "CollisionParams",
    "Location",
    "Medium",
    "PathLossParams",
    "PowerConsumer",
    "PowerProfile",
    "QueueTimeout",
    "Radio",
    "RadioConfig",
    "RadioStateError",
    "Reception",
    "SimConfig",
    "SimQueue",
    "SimStateError",
    "SimTime",
    "Simulation",
    "SimulationEnded",
    "SimulationError",
    "Task",
    "TaskCancelled",
    "airtime",
]

__version__ = "0.1.0"
