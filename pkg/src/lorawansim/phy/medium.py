"""Shared wireless medium with three-phase packet delivery.

Every transmission is propagated to all other registered radios.  Each
(packet, receiver) pair is evaluated in three phases:

1. receive start, at the first transmitted sample: configuration match and
   sensitivity gate, with RSSI/SNR drawn once per pair;
2. preamble end: the receiver decides whether it can lock on, requiring it
   to have listened over the final critical preamble symbols without a
   fatal co-channel overlap;
3. receive end: payload-overlap interference is resolved and the packet is
   either delivered to the radio's receive queue or recorded as lost.

Every pair produces exactly one row in the receiving radio's packet log,
whether delivered or flagged.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

from ..kernel import SimTime, Simulation
from .airtime import airtime
from .collision import RxPacketView, critical_start, resolve_collision, Outcome, _overlaps
from .link import link_budget
from .params import CollisionParams, Location, PathLossParams, RadioConfig, config_match

log = logging.getLogger(__name__)

PHY_LOG_COLUMNS = [
    "time_s", "sender_id", "frequency_hz", "sf", "bw_hz", "cr",
    "preamble_symbols", "airtime_s", "tx_power_dbm", "tx_x_m", "tx_y_m",
    "payload_hex",
]

RADIO_LOG_COLUMNS = [
    "time_s", "radio_id", "sender_id", "rssi_dbm", "snr_db",
    "delivered", "collided", "preamble_missed", "interrupted",
]


@dataclass(frozen=True)
class AirPacket:
    """One in-flight transmission, immutable once on the air."""

    payload: bytes
    config: RadioConfig
    tx_start: SimTime
    tx_location: Location
    sender_id: str
    preamble_end: SimTime
    rx_end: SimTime


@dataclass(frozen=True)
class Reception:
    """A successfully received packet with the receiver-side link metrics."""

    packet: AirPacket
    rssi_dbm: float
    snr_db: float
    collided: bool = False
    preamble_missed: bool = False
    interrupted: bool = False


class _Observation:
    """Per-(packet, receiver) state accumulated across the three phases."""

    __slots__ = ("radio", "rssi", "snr", "matched", "above_floor",
                 "rx_config", "lock_ok", "collided", "interrupted_by_radio")

    def __init__(self, radio, rssi, snr, matched, above_floor, rx_config):
        self.radio = radio
        self.rssi = rssi
        self.snr = snr
        self.matched = matched
        self.above_floor = above_floor
        self.rx_config = rx_config
        self.lock_ok: Optional[bool] = None
        self.collided = False
        self.interrupted_by_radio = False

    @property
    def candidate(self) -> bool:
        return self.matched and self.above_floor


class _Flight:
    __slots__ = ("packet", "sender", "tx_start", "preamble_end", "rx_end",
                 "symbol_ticks", "obs")

    def __init__(self, packet, sender, tx_start, preamble_end, rx_end, symbol_ticks):
        self.packet = packet
        self.sender = sender
        self.tx_start = tx_start
        self.preamble_end = preamble_end
        self.rx_end = rx_end
        self.symbol_ticks = symbol_ticks
        self.obs: Dict[str, _Observation] = {}

    def view(self, rssi: float) -> RxPacketView:
        cfg = self.packet.config
        return RxPacketView(self.tx_start, self.preamble_end, self.rx_end,
                            rssi, cfg.frequency_hz, cfg.sf, self.symbol_ticks)


class Medium:
    """The singleton-per-simulation shared channel all radios attach to."""

    def __init__(self, sim: Simulation,
                 pathloss: Optional[PathLossParams] = None,
                 collision: Optional[CollisionParams] = None):
        self.sim = sim
        self.pathloss = pathloss or PathLossParams()
        self.collision = collision or CollisionParams()
        self.radios: List = []
        self._flights: List[_Flight] = []
        self._max_airtime_ticks = 0
        self._tx_count = itertools.count()
        self.packets_log: Dict[str, list] = {c: [] for c in PHY_LOG_COLUMNS}

    def register(self, radio) -> None:
        if any(r.radio_id == radio.radio_id for r in self.radios):
            raise ValueError(f"duplicate radio id {radio.radio_id!r}")
        self.radios.append(radio)

    # -- transmission -------------------------------------------------------

    async def transmit(self, radio, payload: bytes) -> AirPacket:
        """Put `payload` on the air from `radio`; returns at receive end."""
        if radio not in self.radios:
            raise ValueError("radio is not registered with this medium")
        cfg = radio.config
        at = airtime(cfg, len(payload))
        now = self.sim.now_ticks
        preamble_ticks = self.sim.seconds_to_ticks(at.preamble_s)
        total_ticks = self.sim.seconds_to_ticks(at.total_s)
        symbol_ticks = max(1, self.sim.seconds_to_ticks(at.symbol_s))

        packet = AirPacket(
            payload=bytes(payload),
            config=cfg,
            tx_start=SimTime(now),
            tx_location=radio.location,
            sender_id=radio.radio_id,
            preamble_end=SimTime(now + preamble_ticks),
            rx_end=SimTime(now + total_ticks),
        )
        flight = _Flight(packet, radio, now, now + preamble_ticks,
                         now + total_ticks, symbol_ticks)
        self._max_airtime_ticks = max(self._max_airtime_ticks, total_ticks)
        self._prune(now)
        self._flights.append(flight)
        self._log_packet(packet, total_ticks)
        log.debug("tx start %s sf%d %.1f dBm %d B at t=%.6f",
                  radio.radio_id, cfg.sf, cfg.tx_power_dbm, len(payload),
                  self.sim.now_s)
        self.sim.start_child_task(
            self._deliver(flight), name=f"deliver-{next(self._tx_count)}")
        await self.sim.sleep_ticks(total_ticks)
        return packet

    def _log_packet(self, packet: AirPacket, total_ticks: int) -> None:
        cfg = packet.config
        row = self.packets_log
        row["time_s"].append(self.sim.ticks_to_seconds(packet.tx_start.ticks))
        row["sender_id"].append(packet.sender_id)
        row["frequency_hz"].append(cfg.frequency_hz)
        row["sf"].append(cfg.sf)
        row["bw_hz"].append(cfg.bw_hz)
        row["cr"].append(cfg.cr)
        row["preamble_symbols"].append(cfg.preamble_symbols)
        row["airtime_s"].append(self.sim.ticks_to_seconds(total_ticks))
        row["tx_power_dbm"].append(cfg.tx_power_dbm)
        row["tx_x_m"].append(packet.tx_location.x)
        row["tx_y_m"].append(packet.tx_location.y)
        row["payload_hex"].append(packet.payload.hex())

    async def _deliver(self, flight: _Flight) -> None:
        sim = self.sim
        packet = flight.packet
        cfg = packet.config
        sensitivity = self.collision.sensitivity(cfg.sf, cfg.bw_hz)
        # Phase 1: receive start.  RSSI/SNR are drawn once per receiver, in
        # registration order, so runs are reproducible for a fixed seed.
        receivers = [r for r in self.radios if r is not flight.sender]
        for radio in receivers:
            shadow = 0.0
            if self.pathloss.sigma_db > 0:
                shadow = sim.rng.gauss(0.0, self.pathloss.sigma_db)
            rssi, snr = link_budget(
                cfg.tx_power_dbm,
                radio.location.distance_to(packet.tx_location),
                cfg.bw_hz, self.pathloss, self.collision.noise_figure_db,
                shadow)
            obs = _Observation(
                radio, rssi, snr,
                matched=config_match(cfg, radio.config),
                above_floor=rssi >= sensitivity,
                rx_config=radio.config,
            )
            flight.obs[radio.radio_id] = obs

        await sim.sleep_ticks(flight.preamble_end - flight.tx_start)

        # Phase 2: preamble end; can each candidate receiver lock on?
        crit = critical_start(flight.view(0.0), self.collision)
        for radio in receivers:
            obs = flight.obs[radio.radio_id]
            if not obs.candidate:
                continue
            if not self._listening_since(radio, obs, crit):
                obs.lock_ok = False
                continue
            outcome = resolve_collision(
                flight.view(obs.rssi),
                self._interferer_views(flight, radio, crit, flight.preamble_end),
                self.collision)
            if outcome is Outcome.RECEIVED:
                obs.lock_ok = True
            else:
                obs.lock_ok = False
                obs.collided = True

        await sim.sleep_ticks(flight.rx_end - flight.preamble_end)

        # Phase 3: receive end; resolve payload overlaps and deliver.
        for radio in receivers:
            obs = flight.obs[radio.radio_id]
            self._finish(flight, radio, obs, crit)

    def _listening_since(self, radio, obs: _Observation, since_ticks: int) -> bool:
        return (radio.state == "rx"
                and radio.config == obs.rx_config
                and radio.rx_since_ticks is not None
                and radio.rx_since_ticks <= since_ticks)

    def _finish(self, flight: _Flight, radio, obs: _Observation, crit: int) -> None:
        delivered = collided = preamble_missed = interrupted = False
        if obs.candidate:
            if not obs.lock_ok:
                preamble_missed = True
                collided = obs.collided
            elif obs.interrupted_by_radio or not self._listening_since(radio, obs, crit):
                interrupted = True
            else:
                outcome = resolve_collision(
                    flight.view(obs.rssi),
                    self._interferer_views(
                        flight, radio, flight.preamble_end, flight.rx_end),
                    self.collision)
                if outcome is Outcome.RECEIVED:
                    delivered = True
                else:
                    collided = True
                    interrupted = True
        if delivered:
            reception = Reception(flight.packet, obs.rssi, obs.snr)
            radio.deliver(reception)
            log.debug("rx ok %s <- %s rssi=%.1f", radio.radio_id,
                      flight.packet.sender_id, obs.rssi)
        radio.log_packet(flight, obs, delivered, collided,
                         preamble_missed, interrupted)

    def _interferer_views(self, flight: _Flight, radio, window_start: int,
                          window_end: int) -> List[RxPacketView]:
        views = []
        cfg = flight.packet.config
        for other in self._flights:
            if other is flight or other.sender is radio:
                continue
            if not _overlaps(other.tx_start, other.rx_end, window_start, window_end):
                continue
            ocfg = other.packet.config
            if ocfg.frequency_hz != cfg.frequency_hz or ocfg.sf != cfg.sf:
                continue
            obs = other.obs.get(radio.radio_id)
            if obs is None or not obs.above_floor:
                continue
            views.append(other.view(obs.rssi))
        return views

    # -- queries used by radios ----------------------------------------------

    def incoming_candidate_end(self, radio) -> Optional[int]:
        """Latest receive-end tick among packets this radio may still receive."""
        now = self.sim.now_ticks
        best = None
        for flight in self._flights:
            # A flight resolving at the current tick still counts: its
            # delivery may land later within this same tick.
            if flight.rx_end < now or flight.sender is radio:
                continue
            obs = flight.obs.get(radio.radio_id)
            if obs is None or not obs.candidate:
                continue
            if obs.lock_ok is False or obs.interrupted_by_radio:
                continue
            if obs.rx_config != radio.config:
                continue
            if best is None or flight.rx_end > best:
                best = flight.rx_end
        return best

    def channel_activity(self, radio, start_ticks: int, end_ticks: int) -> bool:
        """Whether a matching-frequency/SF packet above sensitivity was on air
        at any instant of [start, end)."""
        cfg = radio.config
        for flight in self._flights:
            if flight.sender is radio:
                continue
            if not _overlaps(flight.tx_start, flight.rx_end, start_ticks, end_ticks):
                continue
            ocfg = flight.packet.config
            if ocfg.frequency_hz != cfg.frequency_hz or ocfg.sf != cfg.sf:
                continue
            obs = flight.obs.get(radio.radio_id)
            if obs is not None and obs.above_floor:
                return True
        return False

    def rx_interrupted(self, radio) -> None:
        """Called when `radio` leaves RX or retunes: locked receptions die."""
        now = self.sim.now_ticks
        for flight in self._flights:
            if flight.rx_end <= now:
                continue
            obs = flight.obs.get(radio.radio_id)
            if obs is not None and obs.lock_ok:
                obs.interrupted_by_radio = True

    def _prune(self, now_ticks: int) -> None:
        horizon = now_ticks - self._max_airtime_ticks - 1
        if horizon > 0:
            self._flights = [f for f in self._flights if f.rx_end >= horizon]

    # -- analysis -------------------------------------------------------------

    def packets_dataframe(self):
        import pandas as pd
        return pd.DataFrame(self.packets_log)
