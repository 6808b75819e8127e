"""LoRaWAN 1.0.4 protocol stack, built purely on the public radio API.

This layer is optional: the kernel and PHY work without it, and custom
protocols can drive :class:`~lorawansim.phy.Radio` directly.
"""

from .application import APP_PORT_MAX, APP_PORT_MIN, Application, check_app_port
from .device import DeviceSession, LoRaWanDevice, LoRaWanError
from .gateway import Gateway
from .network_server import NetworkServer
from .params import (
    AbpCredentials,
    DATA_RATES,
    DEMOD_FLOOR_DB,
    MulticastGroupKeys,
    OtaaCredentials,
    RxWindowParams,
    dr_for,
    sf_bw_for,
    tx_power_dbm_for_index,
)

__all__ = [
    "APP_PORT_MAX",
    "APP_PORT_MIN",
    "AbpCredentials",
    "Application",
    "DATA_RATES",
    "DEMOD_FLOOR_DB",
    "DeviceSession",
    "Gateway",
    "LoRaWanDevice",
    "LoRaWanError",
    "MulticastGroupKeys",
    "NetworkServer",
    "OtaaCredentials",
    "RxWindowParams",
    "check_app_port",
    "dr_for",
    "sf_bw_for",
    "tx_power_dbm_for_index",
]
