"""Scenario orchestration: build the network, run it, export the tables."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional

import pandas as pd

from .kernel import SimConfig, Simulation
from .phy import Medium, RADIO_LOG_COLUMNS, Radio
from .lorawan import (
    Application,
    Gateway,
    LoRaWanDevice,
    NetworkServer,
)
from .scenario import DeviceSpec, ScenarioSpec, ServerAppSpec, TrafficSpec

log = logging.getLogger(__name__)

ENERGY_LOG_COLUMNS = ["time_s", "radio_id", "power_w", "cumulative_j"]
APP_LOG_COLUMNS = ["time_s", "device_id", "direction", "fport", "payload_hex"]
SUMMARY_COLUMNS = ["device_id", "sent", "delivered", "pdr", "mean_snr_db",
                   "energy_j"]

TABLE_FILES = {
    "phy_packets": "phy_packets.csv",
    "radio_receptions": "radio_receptions.csv",
    "energy_events": "energy_events.csv",
}


@dataclass
class RunOutputs:
    phy_packets: pd.DataFrame
    radio_receptions: pd.DataFrame
    energy_events: pd.DataFrame
    app_messages: pd.DataFrame
    summary: pd.DataFrame


class _MessageRecorder:
    """Collects decrypted application-level traffic for the run report."""

    def __init__(self, sim: Simulation):
        self.sim = sim
        self.rows: Dict[str, list] = {c: [] for c in APP_LOG_COLUMNS}

    def record(self, device_id: str, direction: str, fport: int,
               payload: bytes) -> None:
        self.rows["time_s"].append(self.sim.now_s)
        self.rows["device_id"].append(device_id)
        self.rows["direction"].append(direction)
        self.rows["fport"].append(fport)
        self.rows["payload_hex"].append(payload.hex())


class _ServerApp(Application):
    """Scenario-declared server application: records, optionally replies."""

    def __init__(self, ns: NetworkServer, spec: ServerAppSpec,
                 recorder: _MessageRecorder, resolve):
        self.ns = ns
        self.spec = spec
        self.recorder = recorder
        self.resolve = resolve
        self.match = bytes.fromhex(spec.match_hex) if spec.match_hex else None
        self.reply = bytes.fromhex(spec.reply_hex) if spec.reply_hex else None

    def port(self) -> int:
        return self.spec.fport

    async def on_uplink(self, dev_addr: int, payload: bytes) -> None:
        self.recorder.record(self.resolve(dev_addr), "up", self.spec.fport,
                             payload)
        if self.spec.type == "reply" and (self.match is None
                                          or payload == self.match):
            self.ns.queue_downlink(dev_addr, fport=self.spec.fport,
                                   payload=self.reply)


class _DeviceApp(Application):
    """Device-side recorder for downlinks on the device's traffic port."""

    def __init__(self, device_id: str, fport: int, recorder: _MessageRecorder):
        self.device_id = device_id
        self.fport = fport
        self.recorder = recorder

    def port(self) -> int:
        return self.fport

    async def on_downlink(self, payload: bytes) -> None:
        self.recorder.record(self.device_id, "down", self.fport, payload)


def run_scenario(spec: ScenarioSpec,
                 firmware_root: Optional[Path] = None) -> RunOutputs:
    """Build the network described by `spec`, run it, and snapshot tables.

    Table conversion happens exactly once, in an end-of-run hook.
    """
    sim = Simulation(SimConfig(tick_duration=spec.tick_s, seed=spec.seed,
                               length=spec.length_s))
    medium = Medium(sim, pathloss=spec.pathloss, collision=spec.collision)
    ns = NetworkServer(sim, rx_params=spec.rx_windows)

    for gw_spec in spec.gateways:
        radio = Radio(medium, gw_spec.id, gw_spec.location, spec.uplink)
        Gateway(sim, radio, ns)

    recorder = _MessageRecorder(sim)
    abp_addr_to_id: Dict[int, str] = {}

    def resolve(dev_addr: int) -> str:
        if dev_addr in abp_addr_to_id:
            return abp_addr_to_id[dev_addr]
        session = ns.sessions.get(dev_addr)
        if session is not None and session.dev_eui is not None:
            return eui_to_id.get(bytes(session.dev_eui), f"{dev_addr:08x}")
        return f"{dev_addr:08x}"

    eui_to_id: Dict[bytes, str] = {}
    device_radios: Dict[str, Radio] = {}
    devices_by_id: Dict[str, LoRaWanDevice] = {}
    firmware_instances = []

    for dev_spec in spec.devices:
        radio = Radio(medium, dev_spec.id, dev_spec.location, spec.uplink)
        device_radios[dev_spec.id] = radio
        if dev_spec.firmware is not None:
            firmware_instances.append(
                _start_firmware(sim, radio, dev_spec, firmware_root))
            continue
        device = _build_device(sim, ns, radio, dev_spec, spec, recorder,
                               eui_to_id, abp_addr_to_id)
        devices_by_id[dev_spec.id] = device
        if dev_spec.traffic is not None:
            sim.create_task(_traffic_loop(sim, device, dev_spec.traffic),
                            name=f"{dev_spec.id}-traffic")

    for app_spec in spec.server_apps:
        ns.register_application(_ServerApp(ns, app_spec, recorder, resolve))

    for group in spec.multicast_groups:
        ns.register_multicast_group(group.keys)
        for member_id in group.members:
            devices_by_id[member_id].join_multicast(group.keys)

    snapshot: Dict[str, pd.DataFrame] = {}

    def take_snapshot():
        snapshot["phy_packets"] = medium.packets_dataframe()
        snapshot["radio_receptions"] = _merged_table(
            [(r.radio_id, r.packets_log) for r in medium.radios],
            RADIO_LOG_COLUMNS)
        snapshot["energy_events"] = _energy_table(medium.radios)
        snapshot["app_messages"] = pd.DataFrame(recorder.rows)

    sim.on_sim_end(take_snapshot)
    sim.run(spec.length_s)

    for instance in firmware_instances:
        instance.stop()

    gateway_ids = {g.id for g in spec.gateways}
    summary = _summarize(spec, snapshot["phy_packets"],
                         snapshot["radio_receptions"], gateway_ids,
                         device_radios)
    return RunOutputs(
        phy_packets=snapshot["phy_packets"],
        radio_receptions=snapshot["radio_receptions"],
        energy_events=snapshot["energy_events"],
        app_messages=snapshot["app_messages"],
        summary=summary,
    )


def _build_device(sim, ns, radio, dev_spec: DeviceSpec, spec: ScenarioSpec,
                  recorder, eui_to_id, abp_addr_to_id) -> LoRaWanDevice:
    if dev_spec.otaa is not None:
        ns.register_otaa_device(dev_spec.otaa.app_eui, dev_spec.otaa.dev_eui,
                                dev_spec.otaa.app_key,
                                device_class=dev_spec.device_class)
        eui_to_id[bytes(dev_spec.otaa.dev_eui)] = dev_spec.id
    else:
        ns.register_abp_device(dev_spec.abp.dev_addr, dev_spec.abp.nwk_skey,
                               dev_spec.abp.app_skey,
                               device_class=dev_spec.device_class)
        abp_addr_to_id[dev_spec.abp.dev_addr] = dev_spec.id
    device = LoRaWanDevice(sim, radio, otaa=dev_spec.otaa, abp=dev_spec.abp,
                           device_class=dev_spec.device_class,
                           rx_params=spec.rx_windows)
    if dev_spec.traffic is not None:
        device.register_application(
            _DeviceApp(dev_spec.id, dev_spec.traffic.fport, recorder))
    return device


def _start_firmware(sim, radio, dev_spec: DeviceSpec, firmware_root):
    from .firmware import FirmwareImage, load_firmware

    path = Path(dev_spec.firmware)
    if firmware_root is not None and not path.is_absolute():
        path = Path(firmware_root) / path
    instance = load_firmware(FirmwareImage(path=path), sim)
    instance.start(radio)
    return instance


async def _traffic_loop(sim: Simulation, device: LoRaWanDevice,
                        traffic: TrafficSpec) -> None:
    await sim.sleep(traffic.first_delay_s)
    if device.otaa is not None and not device.activated:
        await device.join()
    payload = traffic.payload
    while sim.is_running():
        await device.send_uplink(traffic.fport, payload,
                                 confirmed=traffic.confirmed)
        await sim.sleep(traffic.period_s)


def _merged_table(named_logs, columns) -> pd.DataFrame:
    frames = []
    for _, log_dict in named_logs:
        if log_dict["time_s"]:
            frames.append(pd.DataFrame(log_dict))
    if not frames:
        return pd.DataFrame({c: [] for c in columns})
    merged = pd.concat(frames, ignore_index=True)
    return merged.sort_values("time_s", kind="stable", ignore_index=True)


def _energy_table(radios) -> pd.DataFrame:
    frames = []
    for radio in radios:
        events = radio.consumer.events
        if not events["time_s"]:
            continue
        frame = pd.DataFrame(events)
        frame.insert(1, "radio_id", radio.radio_id)
        frames.append(frame)
    if not frames:
        return pd.DataFrame({c: [] for c in ENERGY_LOG_COLUMNS})
    merged = pd.concat(frames, ignore_index=True)
    return merged.sort_values("time_s", kind="stable", ignore_index=True)


def _summarize(spec: ScenarioSpec, phy: pd.DataFrame, receptions: pd.DataFrame,
               gateway_ids, device_radios) -> pd.DataFrame:
    rows = {c: [] for c in SUMMARY_COLUMNS}
    for dev_spec in spec.devices:
        sent = int((phy["sender_id"] == dev_spec.id).sum()) if len(phy) else 0
        delivered = 0
        mean_snr = math.nan
        if len(receptions):
            mask = ((receptions["sender_id"] == dev_spec.id)
                    & receptions["radio_id"].isin(gateway_ids)
                    & receptions["delivered"])
            at_gw = receptions[mask]
            delivered = int(at_gw.drop_duplicates(
                subset=["sender_id", "time_s"]).shape[0])
            if len(at_gw):
                mean_snr = float(at_gw["snr_db"].mean())
        radio = device_radios[dev_spec.id]
        rows["device_id"].append(dev_spec.id)
        rows["sent"].append(sent)
        rows["delivered"].append(delivered)
        rows["pdr"].append(delivered / sent if sent else math.nan)
        rows["mean_snr_db"].append(mean_snr)
        rows["energy_j"].append(radio.consumer.total_energy())
    return pd.DataFrame(rows)


# -- export -----------------------------------------------------------------------


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.6g}"
    return str(value)


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, quoting=csv.QUOTE_MINIMAL)
        writer.writerow(frame.columns)
        for row in frame.itertuples(index=False):
            writer.writerow([_format_cell(v) for v in row])


def export_tables(outputs: RunOutputs, directory) -> List[Path]:
    """Write the three packet/energy tables as CSV; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for attr, filename in TABLE_FILES.items():
        path = directory / filename
        _write_csv(getattr(outputs, attr), path)
        written.append(path)
    return written


def export_run(outputs: RunOutputs, directory) -> List[Path]:
    """Full export: the three core tables plus app messages and summary."""
    directory = Path(directory)
    written = export_tables(outputs, directory)
    for attr, filename in (("app_messages", "app_messages.csv"),
                           ("summary", "summary.csv")):
        path = directory / filename
        _write_csv(getattr(outputs, attr), path)
        written.append(path)
    return written
