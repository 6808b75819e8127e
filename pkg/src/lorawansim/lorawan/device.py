"""LoRaWAN 1.0.4 end device: activation, class A/C receive behavior, MAC."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

from ..kernel import SimTime, Simulation
from ..phy import Radio, RadioConfig, Reception, airtime
from . import crypto, frames, mac_commands
from .application import Application, check_app_port
from .params import (
    AbpCredentials,
    MulticastGroupKeys,
    OtaaCredentials,
    RxWindowParams,
    sf_bw_for,
    tx_power_dbm_for_index,
)

log = logging.getLogger(__name__)

JOIN_BACKOFF_INITIAL_S = 10.0
JOIN_BACKOFF_FACTOR = 2.0
JOIN_BACKOFF_CAP_S = 160.0
JOIN_BACKOFF_JITTER = 0.1

MAX_CONFIRMED_RETRIES = 8
CONFIRMED_RETRY_SPACING_S = 1.0


class LoRaWanError(Exception):
    """Protocol-level misuse or failure on the LoRaWAN layer."""


@dataclass
class DeviceSession:
    dev_addr: int
    nwk_skey: bytes
    app_skey: bytes
    fcnt_up: int = 0          # counter for the next uplink
    fcnt_down_last: int = -1  # last accepted downlink counter


class _McMembership:
    __slots__ = ("keys", "fcnt_last")

    def __init__(self, keys: MulticastGroupKeys):
        self.keys = keys
        self.fcnt_last = -1


class LoRaWanDevice:
    """One end device owning one radio.

    Construct with either OTAA credentials (then call :meth:`join`) or ABP
    credentials (activated immediately).  Class C devices continuously
    listen on the RX2 parameters except while transmitting.
    """

    def __init__(self, sim: Simulation, radio: Radio, *,
                 otaa: Optional[OtaaCredentials] = None,
                 abp: Optional[AbpCredentials] = None,
                 device_class: str = "A",
                 rx_params: Optional[RxWindowParams] = None,
                 battery: int = mac_commands.BATTERY_UNKNOWN):
        if (otaa is None) == (abp is None):
            raise ValueError("provide exactly one of otaa= or abp=")
        if device_class not in ("A", "C"):
            raise ValueError("device_class must be 'A' or 'C'")
        self.sim = sim
        self.radio = radio
        self.otaa = otaa
        self.device_class = device_class
        self.rx_params = rx_params or RxWindowParams()
        self.battery = battery
        self.uplink_config: RadioConfig = radio.config
        self.session: Optional[DeviceSession] = None
        self.last_link_check: Optional[Tuple[int, int]] = None
        self._apps: Dict[int, Application] = {}
        self._multicast: Dict[int, _McMembership] = {}
        self._mac_answers: deque = deque()
        self._ack_owed = False
        self._got_ack = False
        self._awaiting_ack = False
        self._ack_signal = sim.queue()
        self._last_downlink_snr: Optional[float] = None
        self._used_dev_nonces: set[int] = set()
        self._activation_signal = sim.queue()
        self.downlinks_received = 0
        if abp is not None:
            self.session = DeviceSession(abp.dev_addr, abp.nwk_skey, abp.app_skey)
            self._activation_signal.put(True)
        if device_class == "C":
            sim.spawn(self._class_c_loop(), name=f"{radio.radio_id}-classc")

    # -- public API --------------------------------------------------------

    @property
    def activated(self) -> bool:
        return self.session is not None

    @property
    def dev_addr(self) -> Optional[int]:
        return self.session.dev_addr if self.session else None

    def register_application(self, app: Application) -> None:
        port = check_app_port(app.port())
        if port in self._apps:
            raise LoRaWanError(f"an application is already registered on port {port}")
        self._apps[port] = app

    def join_multicast(self, keys: MulticastGroupKeys) -> None:
        """Join a downlink-only multicast group (Class C devices only)."""
        if self.device_class != "C":
            raise LoRaWanError("multicast membership requires a Class C device")
        self._multicast[keys.mc_addr] = _McMembership(keys)

    def request_link_check(self) -> None:
        self._mac_answers.append(mac_commands.LinkCheckReq())

    async def join(self) -> None:
        """OTAA handshake; retries with exponential backoff until joined."""
        if self.activated:
            raise LoRaWanError("device is already activated")
        if self.otaa is None:
            raise LoRaWanError("no OTAA credentials configured")
        backoff = JOIN_BACKOFF_INITIAL_S
        while True:
            dev_nonce = self._next_dev_nonce()
            request = frames.JoinRequest(self.otaa.app_eui, self.otaa.dev_eui,
                                         dev_nonce)
            request = request.with_mic(
                crypto.join_mic(self.otaa.app_key, request.body_bytes()))
            self.radio.set_config(self.uplink_config)
            await self.radio.transmit(request.to_wire())
            accept = await self._receive_windows(self.sim.now_ticks, join=True)
            if accept is not None:
                nwk_skey, app_skey = crypto.derive_session_keys(
                    self.otaa.app_key, accept.join_nonce, accept.net_id,
                    dev_nonce)
                self.session = DeviceSession(accept.dev_addr, nwk_skey, app_skey)
                self._activation_signal.put(True)
                log.info("%s joined as %08x at t=%.3f", self.radio.radio_id,
                         accept.dev_addr, self.sim.now_s)
                return
            jitter = 1.0 + self.sim.rng.uniform(-JOIN_BACKOFF_JITTER,
                                                JOIN_BACKOFF_JITTER)
            log.debug("%s join attempt failed; retrying in ~%.0f s",
                      self.radio.radio_id, backoff)
            await self.sim.sleep(backoff * jitter)
            backoff = min(backoff * JOIN_BACKOFF_FACTOR, JOIN_BACKOFF_CAP_S)

    async def send_uplink(self, fport: int, payload: bytes,
                          confirmed: bool = False) -> bool:
        """Transmit an application uplink; returns True unless a confirmed
        uplink exhausted its retries without an ACK."""
        check_app_port(fport)
        if len(payload) > frames.MAX_APP_PAYLOAD:
            raise ValueError(
                f"uplink payload of {len(payload)} bytes exceeds "
                f"{frames.MAX_APP_PAYLOAD}")
        if not self.activated:
            raise LoRaWanError("device is not activated")
        attempts = MAX_CONFIRMED_RETRIES if confirmed else 1
        while self._ack_signal.get_nowait():
            pass  # drop stale ACK signals from earlier exchanges
        for attempt in range(attempts):
            wire = self._build_uplink(fport, payload, confirmed)
            self.radio.set_config(self.uplink_config)
            self._got_ack = False
            self._awaiting_ack = confirmed
            await self.radio.transmit(wire)
            self.session.fcnt_up += 1
            rx_end = self.sim.now_ticks
            if self.device_class == "C":
                self.radio.set_config(self.rx_params.rx2_config())
                if confirmed:
                    await self._await_ack_class_c()
            else:
                await self._receive_windows(rx_end)
            if not confirmed:
                return True
            self._awaiting_ack = False
            if self._got_ack:
                return True
            await self.sim.sleep(CONFIRMED_RETRY_SPACING_S)
        log.warning("%s confirmed uplink unacknowledged after %d attempts",
                    self.radio.radio_id, attempts)
        return False

    # -- internals -----------------------------------------------------------

    def _next_dev_nonce(self) -> int:
        # Never reused across the lifetime of the device, per 1.0.4.
        while True:
            nonce = self.sim.rng.getrandbits(16)
            if nonce not in self._used_dev_nonces:
                self._used_dev_nonces.add(nonce)
                return nonce

    def _build_uplink(self, fport: Optional[int], payload: Optional[bytes],
                      confirmed: bool) -> bytes:
        session = self.session
        fopts = self._drain_mac_answers()
        frm = None
        if fport is not None:
            frm = crypto.crypt_frm_payload(
                session.app_skey, payload, crypto.UPLINK, session.dev_addr,
                session.fcnt_up)
        frame = frames.DataFrame(
            mtype=frames.MTYPE_CONFIRMED_UP if confirmed
            else frames.MTYPE_UNCONFIRMED_UP,
            dev_addr=session.dev_addr,
            fcnt=session.fcnt_up & 0xFFFF,
            ack=self._ack_owed,
            fopts=fopts,
            fport=fport,
            frm_payload=frm,
        )
        mic = crypto.data_mic(session.nwk_skey, frame.body_bytes(),
                              crypto.UPLINK, session.dev_addr, session.fcnt_up)
        self._ack_owed = False
        return frame.with_mic(mic).to_wire()

    def _drain_mac_answers(self) -> bytes:
        out = b""
        while self._mac_answers:
            candidate = out + mac_commands.encode_commands([self._mac_answers[0]])
            if len(candidate) > frames.MAX_FOPTS:
                break
            self._mac_answers.popleft()
            out = candidate
        return out

    async def _receive_windows(self, uplink_end_ticks: int, join: bool = False):
        """Class A RX1 then RX2; returns the handled result or None."""
        p = self.rx_params
        delay1 = p.join_accept_delay1_s if join else p.rx1_delay_s
        delay2 = p.join_accept_delay2_s if join else p.rx2_delay_s
        rx1_cfg = p.rx1_config(self.uplink_config)
        result = await self._open_window(uplink_end_ticks, delay1, rx1_cfg, join)
        if result is not None:
            return result
        return await self._open_window(uplink_end_ticks, delay2,
                                       p.rx2_config(), join)

    async def _open_window(self, uplink_end_ticks: int, delay_s: float,
                           cfg: RadioConfig, join: bool):
        sim = self.sim
        p = self.rx_params
        open_ticks = (uplink_end_ticks + sim.seconds_to_ticks(delay_s)
                      - sim.seconds_to_ticks(p.window_guard_s))
        if open_ticks > sim.now_ticks:
            await sim.sleep_until(SimTime(open_ticks))
        self.radio.set_config(cfg)
        at = airtime(cfg, 0)
        budget = (p.window_guard_s + at.preamble_s
                  + p.window_extra_symbols * at.symbol_s)
        reception = await self.radio.receive(timeout=budget)
        if reception is None:
            return None
        if join:
            return self._parse_join_accept(reception)
        handled = await self._handle_frame(reception)
        return True if handled else None

    async def _class_c_loop(self) -> None:
        await self._activation_signal.get()
        rxc = self.rx_params.rx2_config()
        while True:
            if self.radio.state != "tx":
                self.radio.set_config(rxc)
            reception = await self.radio.receive()
            if reception is not None:
                await self._handle_frame(reception)

    def _parse_join_accept(self, reception: Reception) -> Optional[frames.JoinAccept]:
        wire = reception.packet.payload
        if not wire or wire[0] != 0x20 or len(wire) not in (17, 33):
            return None
        plain = crypto.decrypt_join_accept(self.otaa.app_key, wire[1:])
        body, mic = plain[:-4], plain[-4:]
        if crypto.join_mic(self.otaa.app_key, wire[:1] + body) != mic:
            log.debug("%s join-accept MIC mismatch; discarding",
                      self.radio.radio_id)
            return None
        return frames.JoinAccept(
            join_nonce=int.from_bytes(body[0:3], "little"),
            net_id=int.from_bytes(body[3:6], "little"),
            dev_addr=int.from_bytes(body[6:10], "little"),
            dl_settings=body[10],
            rx_delay=body[11],
            cf_list=body[12:],
        )

    async def _await_ack_class_c(self) -> None:
        # ACKs arrive through the continuous listener; wait out roughly the
        # class A exchange budget before giving up.
        budget = self.rx_params.rx2_delay_s + 2.0
        try:
            await self._ack_signal.get(timeout=budget)
            self._got_ack = True
        except Exception:  # QueueTimeout; the retry loop handles it
            pass

    async def _handle_frame(self, reception: Reception) -> bool:
        try:
            frame = frames.decode(reception.packet.payload)
        except frames.FrameDecodeError:
            return False
        if not isinstance(frame, frames.DataFrame) or frame.is_uplink:
            return False
        if self.session and frame.dev_addr == self.session.dev_addr:
            return await self._handle_unicast(frame, reception)
        if frame.dev_addr in self._multicast:
            return await self._handle_multicast(frame, reception)
        return False

    async def _handle_unicast(self, frame: frames.DataFrame,
                              reception: Reception) -> bool:
        session = self.session
        if session.fcnt_down_last < 0:
            fcnt32 = frame.fcnt
        else:
            fcnt32 = frames.reconstruct_fcnt32(session.fcnt_down_last, frame.fcnt)
        expected = crypto.data_mic(session.nwk_skey, frame.body_bytes(),
                                   crypto.DOWNLINK, session.dev_addr, fcnt32)
        if expected != frame.mic:
            log.debug("%s downlink MIC mismatch", self.radio.radio_id)
            return False
        session.fcnt_down_last = fcnt32
        self._last_downlink_snr = reception.snr_db
        if frame.ack:
            self._got_ack = True
            if self._awaiting_ack:
                self._ack_signal.put(True)
        self._apply_mac_commands(
            mac_commands.decode_commands(frame.fopts, uplink=False))
        if frame.fport is not None:
            key = session.nwk_skey if frame.fport == 0 else session.app_skey
            plain = crypto.crypt_frm_payload(
                key, frame.frm_payload, crypto.DOWNLINK, session.dev_addr,
                fcnt32)
            if frame.fport == 0:
                self._apply_mac_commands(
                    mac_commands.decode_commands(plain, uplink=False))
            else:
                await self._dispatch_app(frame.fport, plain)
        if frame.confirmed:
            self._ack_owed = True
        return True

    async def _handle_multicast(self, frame: frames.DataFrame,
                                reception: Reception) -> bool:
        member = self._multicast[frame.dev_addr]
        if member.fcnt_last < 0:
            fcnt32 = frame.fcnt
        else:
            fcnt32 = frames.reconstruct_fcnt32(member.fcnt_last, frame.fcnt)
        expected = crypto.data_mic(member.keys.mc_nwk_skey, frame.body_bytes(),
                                   crypto.DOWNLINK, frame.dev_addr, fcnt32)
        if expected != frame.mic:
            return False
        member.fcnt_last = fcnt32
        # Multicast is downlink-only: no ACKs, no MAC answers.
        if frame.fport is not None and frame.fport != 0:
            plain = crypto.crypt_frm_payload(
                member.keys.mc_app_skey, frame.frm_payload, crypto.DOWNLINK,
                frame.dev_addr, fcnt32)
            await self._dispatch_app(frame.fport, plain)
        return True

    async def _dispatch_app(self, fport: int, payload: bytes) -> None:
        self.downlinks_received += 1
        app = self._apps.get(fport)
        if app is None:
            log.debug("%s downlink on unbound port %d dropped",
                      self.radio.radio_id, fport)
            return
        await app.on_downlink(payload)

    def _apply_mac_commands(self, commands) -> None:
        for cmd in commands:
            if isinstance(cmd, mac_commands.LinkADRReq):
                self._apply_link_adr(cmd)
            elif isinstance(cmd, mac_commands.LinkCheckAns):
                self.last_link_check = (cmd.margin_db, cmd.gw_cnt)
            elif isinstance(cmd, mac_commands.DevStatusReq):
                snr = self._last_downlink_snr or 0.0
                margin = max(-32, min(31, round(snr)))
                self._mac_answers.append(
                    mac_commands.DevStatusAns(self.battery, margin))

    def _apply_link_adr(self, cmd: mac_commands.LinkADRReq) -> None:
        try:
            sf, bw = sf_bw_for(cmd.data_rate)
            power = tx_power_dbm_for_index(cmd.tx_power)
        except ValueError:
            self._mac_answers.append(
                mac_commands.LinkADRAns(False, False, bool(cmd.ch_mask & 1)))
            return
        self.uplink_config = replace(self.uplink_config, sf=sf, bw_hz=bw,
                                     tx_power_dbm=power, ldro=None)
        self._mac_answers.append(mac_commands.LinkADRAns(True, True, True))
        log.info("%s LinkADR applied: sf%d bw%d %d dBm", self.radio.radio_id,
                 sf, bw, int(power))
