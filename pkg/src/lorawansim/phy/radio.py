"""A single half-duplex LoRa transceiver attached to the shared medium."""

from __future__ import annotations

import logging
from typing import Dict, Optional

from ..energy import PowerConsumer, PowerProfile
from ..kernel import QueueTimeout, Simulation
from .medium import Medium, RADIO_LOG_COLUMNS, AirPacket, Reception
from .params import Location, RadioConfig

log = logging.getLogger(__name__)

STANDBY = "standby"
RX = "rx"
TX = "tx"
CAD = "cad"


class RadioStateError(RuntimeError):
    """Raised when a radio operation conflicts with its current activity."""


class Radio:
    """Half-duplex transceiver; transmitting aborts any ongoing reception.

    The packet log gains one row for every packet on the air from any other
    radio, whether it was delivered, missed, or lost to a collision.
    """

    def __init__(self, medium: Medium, radio_id: str, location: Location,
                 config: RadioConfig,
                 power_profile: Optional[PowerProfile] = None):
        self.medium = medium
        self.sim: Simulation = medium.sim
        self.radio_id = radio_id
        self.location = location
        self.config = config
        self.profile = power_profile or PowerProfile()
        self.state = STANDBY
        self.rx_since_ticks: Optional[int] = None
        self._pending_receives = 0
        self._rx_queue = self.sim.queue()
        self.consumer = PowerConsumer(self.sim, radio_id, self.profile.standby_w)
        self.packets_log: Dict[str, list] = {c: [] for c in RADIO_LOG_COLUMNS}
        medium.register(self)

    # -- configuration -------------------------------------------------------

    def set_config(self, config: RadioConfig) -> None:
        """Retune; restarts any receive session (in-progress packets die)."""
        if config == self.config:
            return
        if self.state == RX:
            self.medium.rx_interrupted(self)
            self.rx_since_ticks = self.sim.now_ticks
        self.config = config

    # -- state/power ----------------------------------------------------------

    def _set_state(self, new_state: str) -> None:
        if new_state == self.state:
            return
        if self.state == RX:
            self.medium.rx_interrupted(self)
            self.rx_since_ticks = None
        self.state = new_state
        if new_state == RX:
            self.rx_since_ticks = self.sim.now_ticks
            self.consumer.set_power(self.profile.rx_w)
        elif new_state == CAD:
            self.consumer.set_power(self.profile.rx_w)
        elif new_state == TX:
            self.consumer.set_power(self.profile.tx_watts(self.config.tx_power_dbm))
        else:
            self.consumer.set_power(self.profile.standby_w)

    def _settle(self) -> None:
        # After TX/CAD, fall back to RX if a receive() is still pending.
        self._set_state(RX if self._pending_receives else STANDBY)

    # -- operations -------------------------------------------------------------

    async def transmit(self, payload: bytes) -> AirPacket:
        """Send `payload` with the current config; returns at airtime end."""
        if self.state == TX:
            raise RadioStateError(f"{self.radio_id}: already transmitting")
        if self.state == CAD:
            raise RadioStateError(f"{self.radio_id}: busy with CAD scan")
        self._set_state(TX)
        try:
            packet = await self.medium.transmit(self, payload)
        finally:
            self._settle()
        return packet

    async def receive(self, timeout: Optional[float] = None) -> Optional[Reception]:
        """Next successfully received packet, or None when `timeout` elapses.

        If a receivable packet is still in the air when the timeout hits,
        the radio stays in receive mode until that packet resolves, like a
        hardware single-receive window that has detected a preamble.
        """
        if self._pending_receives:
            raise RadioStateError(f"{self.radio_id}: receive already pending")
        self._pending_receives = 1
        if self.state == STANDBY:
            self._set_state(RX)
        deadline = None
        if timeout is not None:
            if timeout < 0:
                raise ValueError("timeout must be >= 0")
            deadline = self.sim.now_ticks + self.sim.seconds_to_ticks(timeout)
        try:
            while True:
                wait_s = None
                if deadline is not None:
                    wait_s = self.sim.ticks_to_seconds(
                        max(0, deadline - self.sim.now_ticks))
                try:
                    return await self._rx_queue.get(wait_s)
                except QueueTimeout:
                    pending_end = self.medium.incoming_candidate_end(self)
                    if pending_end is None:
                        return None
                    # Hold the window open until the in-flight packet resolves.
                    deadline = pending_end + 1
        finally:
            self._pending_receives = 0
            if self.state == RX:
                self._set_state(STANDBY)

    async def cad(self) -> bool:
        """Channel-activity scan of two symbol durations at the current config."""
        if self.state != STANDBY:
            raise RadioStateError(f"{self.radio_id}: radio busy, cannot CAD")
        symbol_ticks = max(1, self.sim.seconds_to_ticks(self.config.symbol_time_s))
        start = self.sim.now_ticks
        self._set_state(CAD)
        try:
            await self.sim.sleep_ticks(2 * symbol_ticks)
            return self.medium.channel_activity(self, start, self.sim.now_ticks)
        finally:
            self._settle()

    # -- medium callbacks ----------------------------------------------------------

    def deliver(self, reception: Reception) -> None:
        self._rx_queue.put(reception)

    def log_packet(self, flight, obs, delivered: bool, collided: bool,
                   preamble_missed: bool, interrupted: bool) -> None:
        row = self.packets_log
        row["time_s"].append(self.sim.ticks_to_seconds(flight.rx_end))
        row["radio_id"].append(self.radio_id)
        row["sender_id"].append(flight.packet.sender_id)
        row["rssi_dbm"].append(obs.rssi)
        row["snr_db"].append(obs.snr)
        row["delivered"].append(delivered)
        row["collided"].append(collided)
        row["preamble_missed"].append(preamble_missed)
        row["interrupted"].append(interrupted)

    def packets_dataframe(self):
        import pandas as pd
        return pd.DataFrame(self.packets_log)

    def __repr__(self):
        return f"<Radio {self.radio_id} {self.state} sf{self.config.sf}>"
