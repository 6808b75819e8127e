"""Network server: OTAA joins, dedup, counter/MIC checks, app dispatch,
downlink scheduling for class A receive windows and class C immediacy."""

from __future__ import annotations

import itertools
import logging
from collections import Counter, deque
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from ..kernel import Simulation
from ..phy import RadioConfig, Reception, airtime
from . import crypto, frames, mac_commands
from .application import Application, check_app_port
from .gateway import Gateway
from .params import DEMOD_FLOOR_DB, MulticastGroupKeys, RxWindowParams, dr_for

log = logging.getLogger(__name__)

MULTICAST_GATEWAY_GAP_S = 0.010


@dataclass
class _UplinkMeta:
    rx_end_ticks: int
    rssi_dbm: float
    snr_db: float
    config: RadioConfig
    gw_count: int


class _Session:
    def __init__(self, dev_addr: int, nwk_skey: bytes, app_skey: bytes,
                 device_class: str, dev_eui: Optional[bytes] = None):
        self.dev_addr = dev_addr
        self.nwk_skey = nwk_skey
        self.app_skey = app_skey
        self.device_class = device_class
        self.dev_eui = dev_eui
        self.fcnt_up_last = -1
        self.fcnt_down = 0
        self.pending_downlinks: deque = deque()
        self.pending_mac: deque = deque()
        self.ack_owed = False
        self.best_gateway: Optional[Gateway] = None
        self.last_uplink: Optional[_UplinkMeta] = None
        self.dev_status: Optional[Tuple[int, int]] = None
        self.link_adr_acked = False


class _OtaaRecord:
    def __init__(self, app_eui: bytes, dev_eui: bytes, app_key: bytes,
                 device_class: str):
        self.app_eui = app_eui
        self.dev_eui = dev_eui
        self.app_key = app_key
        self.device_class = device_class
        self.used_dev_nonces: set[int] = set()


class _McGroupState:
    def __init__(self, keys: MulticastGroupKeys):
        self.keys = keys
        self.fcnt_down = 0


class NetworkServer:
    """In-process LoRaWAN network server fed by registered gateways."""

    def __init__(self, sim: Simulation,
                 rx_params: Optional[RxWindowParams] = None,
                 net_id: int = 0x000013,
                 dedup_window_s: float = 0.2,
                 downlink_tx_power_dbm: float = 14.0):
        self.sim = sim
        self.rx_params = rx_params or RxWindowParams()
        self.net_id = net_id
        self.dedup_window_s = dedup_window_s
        self.downlink_tx_power_dbm = downlink_tx_power_dbm
        self.gateways: List[Gateway] = []
        self.sessions: Dict[int, _Session] = {}
        self.counters: Counter = Counter()
        self._otaa: Dict[bytes, _OtaaRecord] = {}
        self._apps: Dict[int, Application] = {}
        self._mc_groups: Dict[int, _McGroupState] = {}
        self._uplinks = sim.queue()
        self._dedup_seen: Dict[tuple, int] = {}
        self._addr_counter = itertools.count(1)
        sim.spawn(self._uplink_loop(), name="network-server")

    # -- registration -------------------------------------------------------

    def register_gateway(self, gateway: Gateway) -> None:
        self.gateways.append(gateway)

    def register_otaa_device(self, app_eui: bytes, dev_eui: bytes,
                             app_key: bytes, device_class: str = "A") -> None:
        self._otaa[bytes(dev_eui)] = _OtaaRecord(app_eui, dev_eui, app_key,
                                                 device_class)

    def register_abp_device(self, dev_addr: int, nwk_skey: bytes,
                            app_skey: bytes, device_class: str = "A") -> None:
        if dev_addr in self.sessions:
            raise ValueError(f"dev_addr {dev_addr:#010x} already registered")
        self.sessions[dev_addr] = _Session(dev_addr, nwk_skey, app_skey,
                                           device_class)

    def register_application(self, app: Application) -> None:
        port = check_app_port(app.port())
        if port in self._apps:
            raise ValueError(f"an application is already registered on port {port}")
        self._apps[port] = app

    def register_multicast_group(self, keys: MulticastGroupKeys) -> None:
        self._mc_groups[keys.mc_addr] = _McGroupState(keys)

    # -- downlink API ------------------------------------------------------------

    def queue_downlink(self, dev_addr: int, fport: int, payload: bytes,
                       confirmed: bool = False) -> None:
        """Queue an application downlink.  Class A: sent in the device's
        next receive window.  Class C: put on the air immediately."""
        check_app_port(fport)
        if len(payload) > frames.MAX_APP_PAYLOAD:
            raise ValueError(
                f"downlink payload of {len(payload)} bytes exceeds "
                f"{frames.MAX_APP_PAYLOAD}")
        session = self.sessions.get(dev_addr)
        if session is None:
            raise KeyError(f"unknown device address {dev_addr:#010x}")
        session.pending_downlinks.append((fport, bytes(payload), confirmed))
        if session.device_class == "C":
            self._send_now(session)

    def send_link_adr(self, dev_addr: int, sf: int, bw_hz: int = 125_000,
                      tx_power_index: int = 1) -> None:
        session = self._require_session(dev_addr)
        session.pending_mac.append(
            mac_commands.LinkADRReq(dr_for(sf, bw_hz), tx_power_index))
        if session.device_class == "C":
            self._send_now(session)

    def send_dev_status_req(self, dev_addr: int) -> None:
        session = self._require_session(dev_addr)
        session.pending_mac.append(mac_commands.DevStatusReq())
        if session.device_class == "C":
            self._send_now(session)

    def multicast_downlink(self, mc_addr: int, fport: int, payload: bytes,
                           gateways: Optional[List[Gateway]] = None) -> None:
        """Send one multicast frame, transmitted once per selected gateway
        (all registered gateways by default), staggered to avoid self-
        interference."""
        check_app_port(fport)
        if len(payload) > frames.MAX_APP_PAYLOAD:
            raise ValueError(
                f"multicast payload of {len(payload)} bytes exceeds "
                f"{frames.MAX_APP_PAYLOAD}")
        group = self._mc_groups.get(mc_addr)
        if group is None:
            raise KeyError(f"unknown multicast group {mc_addr:#010x}")
        keys = group.keys
        frm = crypto.crypt_frm_payload(keys.mc_app_skey, bytes(payload),
                                       crypto.DOWNLINK, mc_addr,
                                       group.fcnt_down)
        frame = frames.DataFrame(
            mtype=frames.MTYPE_UNCONFIRMED_DOWN, dev_addr=mc_addr,
            fcnt=group.fcnt_down & 0xFFFF, fport=fport, frm_payload=frm)
        mic = crypto.data_mic(keys.mc_nwk_skey, frame.body_bytes(),
                              crypto.DOWNLINK, mc_addr, group.fcnt_down)
        wire = frame.with_mic(mic).to_wire()
        group.fcnt_down += 1
        cfg = self.rx_params.rx2_config(self.downlink_tx_power_dbm)
        slot = self.sim.seconds_to_ticks(
            airtime(cfg, len(wire)).total_s + MULTICAST_GATEWAY_GAP_S)
        targets = self.gateways if gateways is None else gateways
        for i, gw in enumerate(targets):
            gw.schedule_tx(wire, cfg, self.sim.now_ticks + i * slot)
        log.info("multicast %08x fport=%d via %d gateway(s)", mc_addr, fport,
                 len(targets))

    # -- uplink path ----------------------------------------------------------------

    def deliver_uplink(self, gateway: Gateway, reception: Reception) -> None:
        self._uplinks.put((gateway, reception))

    async def _uplink_loop(self) -> None:
        while True:
            batch = [await self._uplinks.get()]
            while True:
                more = self._uplinks.get_nowait()
                if more is None:
                    break
                batch.append(more)
            await self._process_batch(batch)

    async def _process_batch(self, batch) -> None:
        groups: Dict[tuple, list] = {}
        order: List[tuple] = []
        for gateway, reception in batch:
            key = self._frame_key(reception.packet.payload)
            if key is None:
                self.counters["undecodable"] += 1
                continue
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append((gateway, reception))
        for key in order:
            copies = groups[key]
            if self._is_duplicate(key):
                self.counters["dedup_dropped"] += len(copies)
                continue
            frame = frames.decode(copies[0][1].packet.payload)
            if isinstance(frame, frames.JoinRequest):
                self._handle_join_request(frame, copies)
            else:
                await self._handle_data_uplink(frame, copies)

    def _frame_key(self, wire: bytes):
        try:
            frame = frames.decode(wire)
        except frames.FrameDecodeError:
            return None
        if isinstance(frame, frames.JoinRequest):
            return ("join", frame.dev_eui, frame.dev_nonce, frame.mic)
        if frame.is_uplink:
            return ("data", frame.dev_addr, frame.fcnt, frame.mic)
        return None

    def _is_duplicate(self, key: tuple) -> bool:
        now = self.sim.now_ticks
        window = self.sim.seconds_to_ticks(self.dedup_window_s)
        if len(self._dedup_seen) > 4096:
            self._dedup_seen = {k: t for k, t in self._dedup_seen.items()
                                if now - t <= window}
        seen_at = self._dedup_seen.get(key)
        self._dedup_seen[key] = now
        return seen_at is not None and now - seen_at <= window

    @staticmethod
    def _best_copy(copies) -> Tuple[Gateway, Reception]:
        return max(copies, key=lambda pair: pair[1].rssi_dbm)

    def _meta_from(self, copies) -> _UplinkMeta:
        _, best = self._best_copy(copies)
        return _UplinkMeta(
            rx_end_ticks=best.packet.rx_end.ticks,
            rssi_dbm=best.rssi_dbm,
            snr_db=best.snr_db,
            config=best.packet.config,
            gw_count=len({gw.gateway_id for gw, _ in copies}),
        )

    def _handle_join_request(self, frame: frames.JoinRequest, copies) -> None:
        record = self._otaa.get(bytes(frame.dev_eui))
        if record is None:
            self.counters["join_unknown_device"] += 1
            return
        expected = crypto.join_mic(record.app_key, frame.body_bytes())
        if expected != frame.mic:
            self.counters["join_mic_failures"] += 1
            return
        if frame.dev_nonce in record.used_dev_nonces:
            self.counters["join_nonce_replays"] += 1
            return
        record.used_dev_nonces.add(frame.dev_nonce)

        dev_addr = 0x26000000 | next(self._addr_counter)
        join_nonce = self.sim.rng.getrandbits(24)
        nwk_skey, app_skey = crypto.derive_session_keys(
            record.app_key, join_nonce, self.net_id, frame.dev_nonce)
        session = _Session(dev_addr, nwk_skey, app_skey, record.device_class,
                           dev_eui=record.dev_eui)
        gateway, _ = self._best_copy(copies)
        session.best_gateway = gateway
        session.last_uplink = self._meta_from(copies)
        self.sessions[dev_addr] = session

        accept = frames.JoinAccept(
            join_nonce=join_nonce, net_id=self.net_id, dev_addr=dev_addr,
            dl_settings=0, rx_delay=max(1, int(self.rx_params.rx1_delay_s)))
        body = accept.body_bytes()
        mic = crypto.join_mic(record.app_key, b"\x20" + body)
        wire = b"\x20" + crypto.encrypt_join_accept(record.app_key, body + mic)
        cfg = self.rx_params.rx1_config(session.last_uplink.config,
                                        self.downlink_tx_power_dbm)
        tx_at = (session.last_uplink.rx_end_ticks
                 + self.sim.seconds_to_ticks(self.rx_params.join_accept_delay1_s))
        gateway.schedule_tx(wire, cfg, tx_at)
        self.counters["joins_accepted"] += 1
        log.info("join accept for %s as %08x", record.dev_eui.hex(), dev_addr)

    async def _handle_data_uplink(self, frame: frames.DataFrame, copies) -> None:
        session = self.sessions.get(frame.dev_addr)
        if session is None:
            self.counters["unknown_dev_addr"] += 1
            return
        if session.fcnt_up_last < 0:
            fcnt32 = frame.fcnt
        else:
            fcnt32 = frames.reconstruct_fcnt32(session.fcnt_up_last, frame.fcnt)
        expected = crypto.data_mic(session.nwk_skey, frame.body_bytes(),
                                   crypto.UPLINK, frame.dev_addr, fcnt32)
        if expected != frame.mic:
            self.counters["mic_failures"] += 1
            return
        session.fcnt_up_last = fcnt32
        gateway, _ = self._best_copy(copies)
        session.best_gateway = gateway
        session.last_uplink = self._meta_from(copies)
        if frame.confirmed:
            session.ack_owed = True
        self.counters["uplinks_accepted"] += 1

        self._handle_mac_uplink(
            session, mac_commands.decode_commands(frame.fopts, uplink=True))
        if frame.fport is not None:
            key = session.nwk_skey if frame.fport == 0 else session.app_skey
            plain = crypto.crypt_frm_payload(key, frame.frm_payload,
                                             crypto.UPLINK, frame.dev_addr,
                                             fcnt32)
            if frame.fport == 0:
                self._handle_mac_uplink(
                    session, mac_commands.decode_commands(plain, uplink=True))
            else:
                app = self._apps.get(frame.fport)
                if app is not None:
                    await app.on_uplink(frame.dev_addr, plain)
                else:
                    self.counters["uplinks_unrouted"] += 1
        if (session.pending_downlinks or session.pending_mac
                or session.ack_owed):
            if session.device_class == "C":
                self._send_now(session)
            else:
                self._schedule_class_a_response(session)

    def _handle_mac_uplink(self, session: _Session, commands) -> None:
        for cmd in commands:
            if isinstance(cmd, mac_commands.LinkCheckReq):
                meta = session.last_uplink
                floor = DEMOD_FLOOR_DB[meta.config.sf]
                margin = max(0, min(254, round(meta.snr_db - floor)))
                session.pending_mac.append(
                    mac_commands.LinkCheckAns(margin, meta.gw_count))
            elif isinstance(cmd, mac_commands.LinkADRAns):
                session.link_adr_acked = (cmd.power_ack and cmd.data_rate_ack
                                          and cmd.ch_mask_ack)
            elif isinstance(cmd, mac_commands.DevStatusAns):
                session.dev_status = (cmd.battery, cmd.margin_db)

    # -- downlink build/scheduling ------------------------------------------------

    def _require_session(self, dev_addr: int) -> _Session:
        session = self.sessions.get(dev_addr)
        if session is None:
            raise KeyError(f"unknown device address {dev_addr:#010x}")
        return session

    def _build_downlink(self, session: _Session) -> bytes:
        fopts = b""
        while session.pending_mac:
            candidate = fopts + mac_commands.encode_commands(
                [session.pending_mac[0]])
            if len(candidate) > frames.MAX_FOPTS:
                break
            session.pending_mac.popleft()
            fopts = candidate
        fport = frm = None
        confirmed = False
        if session.pending_downlinks:
            fport, payload, confirmed = session.pending_downlinks.popleft()
            frm = crypto.crypt_frm_payload(session.app_skey, payload,
                                           crypto.DOWNLINK, session.dev_addr,
                                           session.fcnt_down)
        frame = frames.DataFrame(
            mtype=frames.MTYPE_CONFIRMED_DOWN if confirmed
            else frames.MTYPE_UNCONFIRMED_DOWN,
            dev_addr=session.dev_addr,
            fcnt=session.fcnt_down & 0xFFFF,
            ack=session.ack_owed,
            fpending=bool(session.pending_downlinks),
            fopts=fopts,
            fport=fport,
            frm_payload=frm,
        )
        mic = crypto.data_mic(session.nwk_skey, frame.body_bytes(),
                              crypto.DOWNLINK, session.dev_addr,
                              session.fcnt_down)
        session.ack_owed = False
        session.fcnt_down += 1
        return frame.with_mic(mic).to_wire()

    def _pick_gateway(self, session: _Session) -> Optional[Gateway]:
        if session.best_gateway is not None:
            return session.best_gateway
        return self.gateways[0] if self.gateways else None

    def _send_now(self, session: _Session) -> None:
        """Class C: transmit whatever is pending, immediately, on RX2."""
        if not (session.pending_downlinks or session.pending_mac
                or session.ack_owed):
            return
        gateway = self._pick_gateway(session)
        if gateway is None:
            log.warning("no gateway available for class C downlink")
            return
        wire = self._build_downlink(session)
        cfg = self.rx_params.rx2_config(self.downlink_tx_power_dbm)
        gateway.schedule_tx(wire, cfg, self.sim.now_ticks)

    def _schedule_class_a_response(self, session: _Session) -> None:
        gateway = self._pick_gateway(session)
        if gateway is None or session.last_uplink is None:
            return
        wire = self._build_downlink(session)
        meta = session.last_uplink
        rx1_at = meta.rx_end_ticks + self.sim.seconds_to_ticks(
            self.rx_params.rx1_delay_s)
        if gateway.is_free_at(rx1_at):
            cfg = self.rx_params.rx1_config(meta.config,
                                            self.downlink_tx_power_dbm)
            gateway.schedule_tx(wire, cfg, rx1_at)
        else:
            # RX1 slot already taken on this gateway: fall back to RX2.
            rx2_at = meta.rx_end_ticks + self.sim.seconds_to_ticks(
                self.rx_params.rx2_delay_s)
            cfg = self.rx_params.rx2_config(self.downlink_tx_power_dbm)
            gateway.schedule_tx(wire, cfg, rx2_at)
