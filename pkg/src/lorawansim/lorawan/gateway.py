"""LoRaWAN gateway: forwards uplinks to the network server, transmits
scheduled downlinks on its single half-duplex radio."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

from ..kernel import SimTime, Simulation
from ..phy import Radio, RadioConfig, airtime

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TxCommand:
    wire: bytes
    config: RadioConfig
    tx_at_ticks: int


class Gateway:
    """Single-radio gateway bridged to the network server in-process.

    While transmitting a downlink the radio cannot hear uplinks
    (half-duplex), exactly like a one-channel hardware gateway.
    """

    def __init__(self, sim: Simulation, radio: Radio, network_server,
                 listen_config: Optional[RadioConfig] = None):
        self.sim = sim
        self.radio = radio
        self.network_server = network_server
        self.listen_config = listen_config or radio.config
        self._commands = sim.queue()
        self._scheduled_until = 0
        network_server.register_gateway(self)
        sim.spawn(self._listen_loop(), name=f"{radio.radio_id}-listen")
        sim.spawn(self._tx_loop(), name=f"{radio.radio_id}-tx")

    @property
    def gateway_id(self) -> str:
        return self.radio.radio_id

    def is_free_at(self, tx_at_ticks: int) -> bool:
        return tx_at_ticks >= self._scheduled_until

    def retune(self, listen_config: RadioConfig) -> None:
        """Change the uplink listening parameters (network-operator action)."""
        self.listen_config = listen_config
        if self.radio.state != "tx":
            self.radio.set_config(listen_config)

    def schedule_tx(self, wire: bytes, config: RadioConfig,
                    tx_at_ticks: int) -> None:
        duration = self.sim.seconds_to_ticks(airtime(config, len(wire)).total_s)
        self._scheduled_until = max(self._scheduled_until,
                                    tx_at_ticks + duration)
        self._commands.put(TxCommand(wire, config, tx_at_ticks))

    async def _listen_loop(self) -> None:
        self.radio.set_config(self.listen_config)
        while True:
            reception = await self.radio.receive()
            self.network_server.deliver_uplink(self, reception)

    async def _tx_loop(self) -> None:
        while True:
            cmd = await self._commands.get()
            if cmd.tx_at_ticks > self.sim.now_ticks:
                await self.sim.sleep_until(SimTime(cmd.tx_at_ticks))
            elif cmd.tx_at_ticks < self.sim.now_ticks:
                log.debug("%s transmitting %d ticks late", self.gateway_id,
                          self.sim.now_ticks - cmd.tx_at_ticks)
            self.radio.set_config(cmd.config)
            await self.radio.transmit(cmd.wire)
            self.radio.set_config(self.listen_config)
