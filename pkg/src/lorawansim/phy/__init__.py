"""LoRa physical layer: shared medium, radios, airtime, link budget, capture."""

from .airtime import Airtime, airtime
from .collision import Outcome, RxPacketView, resolve_collision
from .link import link_budget, noise_floor_dbm, path_loss_db
from .medium import AirPacket, Medium, PHY_LOG_COLUMNS, RADIO_LOG_COLUMNS, Reception
from .params import (
    BANDWIDTHS_HZ,
    CODING_RATES,
    CollisionParams,
    Location,
    MAX_PAYLOAD_BYTES,
    PathLossParams,
    RadioConfig,
    SENSITIVITY_DBM_125KHZ,
    SPREADING_FACTORS,
    config_match,
    default_sensitivity_table,
)
from .radio import CAD, RX, Radio, RadioStateError, STANDBY, TX

__all__ = [
    "AirPacket",
    "Airtime",
    "BANDWIDTHS_HZ",
    "CAD",
    "CODING_RATES",
    "CollisionParams",
    "Location",
    "MAX_PAYLOAD_BYTES",
    "Medium",
    "Outcome",
    "PHY_LOG_COLUMNS",
    "PathLossParams",
    "RADIO_LOG_COLUMNS",
    "RX",
    "Radio",
    "RadioConfig",
    "RadioStateError",
    "Reception",
    "RxPacketView",
    "SENSITIVITY_DBM_125KHZ",
    "SPREADING_FACTORS",
    "STANDBY",
    "TX",
    "airtime",
    "config_match",
    "default_sensitivity_table",
    "link_budget",
    "noise_floor_dbm",
    "path_loss_db",
    "resolve_collision",
]
