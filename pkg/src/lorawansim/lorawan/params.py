"""Receive-window timing, regional defaults, and activation credentials.

The shipped defaults follow an EU868-style single-channel plan: uplinks on
868.1 MHz, RX1 mirrors the uplink parameters, RX2 fixed at 869.525 MHz
SF12.  Downlinks use inverted IQ so uplink-listening radios do not hear
them.  Everything is overridable per scenario.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Tuple

from ..phy import RadioConfig

DEFAULT_UPLINK_FREQUENCY_HZ = 868_100_000

# EU868 data-rate table (DR index -> (sf, bw)).
DATA_RATES = {
    0: (12, 125_000),
    1: (11, 125_000),
    2: (10, 125_000),
    3: (9, 125_000),
    4: (8, 125_000),
    5: (7, 125_000),
    6: (7, 250_000),
}

MAX_EIRP_DBM = 16

# Demodulation-floor SNR per spreading factor, used for link margins.
DEMOD_FLOOR_DB = {7: -7.5, 8: -10.0, 9: -12.5, 10: -15.0, 11: -17.5, 12: -20.0}


def dr_for(sf: int, bw_hz: int) -> int:
    for dr, pair in DATA_RATES.items():
        if pair == (sf, bw_hz):
            return dr
    raise ValueError(f"no data rate for sf{sf}/bw{bw_hz}")


def sf_bw_for(dr: int) -> Tuple[int, int]:
    if dr not in DATA_RATES:
        raise ValueError(f"unknown data rate {dr}")
    return DATA_RATES[dr]


def tx_power_dbm_for_index(index: int) -> float:
    if not 0 <= index <= 7:
        raise ValueError("tx power index must be 0..7")
    return float(MAX_EIRP_DBM - 2 * index)


@dataclass(frozen=True)
class RxWindowParams:
    """Class A/C receive-window timing and RX2 parameters.

    `window_guard_s` opens device windows slightly early, mirroring the
    clock-error margin real devices apply; `window_extra_symbols` sets how
    long a window stays open past the expected preamble before giving up.
    """

    rx1_delay_s: float = 1.0
    rx2_delay_s: float = 2.0
    rx2_frequency_hz: int = 869_525_000
    rx2_sf: int = 12
    join_accept_delay1_s: float = 5.0
    window_guard_s: float = 0.001
    window_extra_symbols: int = 4

    def __post_init__(self):
        if self.rx1_delay_s <= 0 or self.rx2_delay_s <= self.rx1_delay_s:
            raise ValueError("need rx2_delay > rx1_delay > 0")
        if self.join_accept_delay1_s <= 0:
            raise ValueError("join_accept_delay1_s must be positive")
        if self.window_guard_s < 0:
            raise ValueError("window_guard_s must be >= 0")

    @property
    def join_accept_delay2_s(self) -> float:
        return self.join_accept_delay1_s + (self.rx2_delay_s - self.rx1_delay_s)

    def rx1_config(self, uplink: RadioConfig, tx_power_dbm: float = 14.0) -> RadioConfig:
        """RX1 mirrors the uplink parameters with downlink (inverted) IQ."""
        return replace(uplink, iq_inverted=True, tx_power_dbm=tx_power_dbm)

    def rx2_config(self, tx_power_dbm: float = 14.0) -> RadioConfig:
        return RadioConfig(
            frequency_hz=self.rx2_frequency_hz, sf=self.rx2_sf,
            bw_hz=125_000, cr=1, iq_inverted=True, tx_power_dbm=tx_power_dbm)


@dataclass(frozen=True)
class OtaaCredentials:
    app_eui: bytes
    dev_eui: bytes
    app_key: bytes

    def __post_init__(self):
        if len(self.app_eui) != 8 or len(self.dev_eui) != 8:
            raise ValueError("EUIs must be 8 bytes")
        if len(self.app_key) != 16:
            raise ValueError("app_key must be 16 bytes")


@dataclass(frozen=True)
class AbpCredentials:
    dev_addr: int
    nwk_skey: bytes
    app_skey: bytes

    def __post_init__(self):
        if not 0 <= self.dev_addr < 2**32:
            raise ValueError("dev_addr must fit in 32 bits")
        if len(self.nwk_skey) != 16 or len(self.app_skey) != 16:
            raise ValueError("session keys must be 16 bytes")


@dataclass(frozen=True)
class MulticastGroupKeys:
    """Downlink-only multicast group: address, session keys."""

    mc_addr: int
    mc_nwk_skey: bytes
    mc_app_skey: bytes

    def __post_init__(self):
        if not 0 <= self.mc_addr < 2**32:
            raise ValueError("mc_addr must fit in 32 bits")
        if len(self.mc_nwk_skey) != 16 or len(self.mc_app_skey) != 16:
            raise ValueError("multicast keys must be 16 bytes")
