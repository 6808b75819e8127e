"""Declarative scenario files: parsing, validation, rendering.

Scenarios are YAML documents with a top-level ``version`` field.  Unknown
keys are rejected, and every validation error names the path of the
offending field (e.g. ``devices[2].traffic.period_s``).  Credentials may
be omitted; they are then derived deterministically from the device id so
that runs stay reproducible.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Tuple

import yaml

from .phy import CollisionParams, Location, PathLossParams, RadioConfig
from .lorawan import (
    AbpCredentials,
    MulticastGroupKeys,
    OtaaCredentials,
    RxWindowParams,
)
from .lorawan.frames import MAX_APP_PAYLOAD

SCENARIO_VERSION = 1

DEFAULT_APP_EUI = bytes.fromhex("0102030405060708")


class ScenarioError(ValueError):
    """Invalid scenario content; the message carries the field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class TrafficSpec:
    period_s: float
    fport: int = 1
    payload_hex: str = "70696e67"  # "ping"
    first_delay_s: float = 1.0
    confirmed: bool = False

    @property
    def payload(self) -> bytes:
        return bytes.fromhex(self.payload_hex)


@dataclass(frozen=True)
class GatewaySpec:
    id: str
    location: Location


@dataclass(frozen=True)
class DeviceSpec:
    id: str
    location: Location
    device_class: str = "A"
    activation: str = "otaa"
    otaa: Optional[OtaaCredentials] = None
    abp: Optional[AbpCredentials] = None
    traffic: Optional[TrafficSpec] = None
    firmware: Optional[str] = None


@dataclass(frozen=True)
class ServerAppSpec:
    fport: int
    type: str = "reply"
    match_hex: Optional[str] = None
    reply_hex: Optional[str] = None


@dataclass(frozen=True)
class MulticastGroupSpec:
    keys: MulticastGroupKeys
    members: Tuple[str, ...] = ()


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int = 0
    length_s: float = 60.0
    tick_s: float = 1e-6
    pathloss: PathLossParams = field(default_factory=PathLossParams)
    collision: CollisionParams = field(default_factory=CollisionParams)
    rx_windows: RxWindowParams = field(default_factory=RxWindowParams)
    uplink: RadioConfig = field(default_factory=lambda: RadioConfig(
        frequency_hz=868_100_000, sf=7))
    gateways: Tuple[GatewaySpec, ...] = ()
    devices: Tuple[DeviceSpec, ...] = ()
    server_apps: Tuple[ServerAppSpec, ...] = ()
    multicast_groups: Tuple[MulticastGroupSpec, ...] = ()


def derive_key(label: str, device_id: str) -> bytes:
    return hashlib.sha256(f"{label}:{device_id}".encode()).digest()[:16]


def derive_eui(label: str, device_id: str) -> bytes:
    return hashlib.sha256(f"{label}:{device_id}".encode()).digest()[:8]


def derive_dev_addr(index: int) -> int:
    return 0x11000000 + index


# -- parsing helpers -----------------------------------------------------------


class _Node:
    """A mapping node being validated, with path tracking."""

    def __init__(self, data, path: str):
        if not isinstance(data, dict):
            raise ScenarioError(path, f"expected a mapping, got {type(data).__name__}")
        self.data = data
        self.path = path
        self._taken: set = set()

    def take(self, key: str, default=None, required: bool = False):
        self._taken.add(key)
        if key not in self.data:
            if required:
                raise ScenarioError(f"{self.path}.{key}", "missing required field")
            return default
        return self.data[key]

    def finish(self) -> None:
        unknown = set(self.data) - self._taken
        if unknown:
            name = sorted(unknown)[0]
            raise ScenarioError(f"{self.path}.{name}", "unknown key")


def _typed(value, types, path: str, kind: str):
    if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
        raise ScenarioError(path, f"expected {kind}")
    if not isinstance(value, types):
        raise ScenarioError(path, f"expected {kind}, got {type(value).__name__}")
    return value


def _number(value, path) -> float:
    return float(_typed(value, (int, float), path, "a number"))


def _integer(value, path) -> int:
    return _typed(value, int, path, "an integer")


def _string(value, path) -> str:
    return _typed(value, str, path, "a string")


def _boolean(value, path) -> bool:
    return _typed(value, bool, path, "a boolean")


def _hex_bytes(value, path, length: Optional[int] = None) -> bytes:
    text = _string(value, path)
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        raise ScenarioError(path, "invalid hex string") from None
    if length is not None and len(raw) != length:
        raise ScenarioError(path, f"expected {length} bytes, got {len(raw)}")
    return raw


def _location(data, path) -> Location:
    node = _Node(data, path)
    loc = Location(
        x=_number(node.take("x", required=True), f"{path}.x"),
        y=_number(node.take("y", required=True), f"{path}.y"),
        z=_number(node.take("z", 0.0), f"{path}.z"),
    )
    node.finish()
    return loc


def _dataclass_section(node: _Node, key: str, cls, defaults, numeric_fields,
                       int_fields=()):
    raw = node.take(key)
    if raw is None:
        return defaults
    sub = _Node(raw, f"{node.path}.{key}" if node.path else key)
    kwargs = {}
    for name in numeric_fields:
        value = sub.take(name)
        if value is not None:
            kwargs[name] = _number(value, f"{sub.path}.{name}")
    for name in int_fields:
        value = sub.take(name)
        if value is not None:
            kwargs[name] = _integer(value, f"{sub.path}.{name}")
    sub.finish()
    try:
        return cls(**{**_dataclass_values(defaults), **kwargs})
    except ValueError as exc:
        raise ScenarioError(sub.path, str(exc)) from None


def _dataclass_values(obj) -> dict:
    import dataclasses
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


# -- top-level parse -------------------------------------------------------------


def parse_scenario(text: str) -> ScenarioSpec:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioError("<document>", f"not valid YAML: {exc}") from None
    if data is None:
        data = {}
    root = _Node(data, "")

    version = root.take("version", SCENARIO_VERSION)
    if version != SCENARIO_VERSION:
        raise ScenarioError("version", f"unsupported version {version!r}")

    seed = _integer(root.take("seed", 0), "seed")
    if not 0 <= seed < 2**64:
        raise ScenarioError("seed", "must fit in 64 bits")
    length_s = _number(root.take("length_s", 60.0), "length_s")
    if length_s < 0:
        raise ScenarioError("length_s", "must be >= 0")
    tick_s = _number(root.take("tick_s", 1e-6), "tick_s")
    if tick_s <= 0:
        raise ScenarioError("tick_s", "must be > 0")

    phy_raw = root.take("phy")
    pathloss = PathLossParams()
    collision = CollisionParams()
    if phy_raw is not None:
        phy = _Node(phy_raw, "phy")
        pathloss = _dataclass_section(
            phy, "pathloss", PathLossParams, pathloss,
            ("pl0_db", "d0_m", "gamma", "sigma_db"))
        collision = _parse_collision(phy, collision)
        phy.finish()

    rx_windows = _dataclass_section(
        root, "rx_windows", RxWindowParams, RxWindowParams(),
        ("rx1_delay_s", "rx2_delay_s", "join_accept_delay1_s",
         "window_guard_s"),
        int_fields=("rx2_frequency_hz", "rx2_sf", "window_extra_symbols"))

    uplink = _parse_uplink(root)

    gateways = _parse_gateways(root)
    devices = _parse_devices(root)
    server_apps = _parse_server_apps(root)
    groups = _parse_multicast(root, devices)
    root.finish()

    ids = [g.id for g in gateways] + [d.id for d in devices]
    dupes = {i for i in ids if ids.count(i) > 1}
    if dupes:
        raise ScenarioError("devices", f"duplicate id {sorted(dupes)[0]!r}")

    return ScenarioSpec(
        seed=seed, length_s=length_s, tick_s=tick_s,
        pathloss=pathloss, collision=collision, rx_windows=rx_windows,
        uplink=uplink, gateways=gateways, devices=devices,
        server_apps=server_apps, multicast_groups=groups)


def _parse_collision(phy: _Node, defaults: CollisionParams) -> CollisionParams:
    raw = phy.take("collision")
    if raw is None:
        return defaults
    node = _Node(raw, "phy.collision")
    kwargs = {}
    for name in ("capture_threshold_db", "noise_figure_db"):
        value = node.take(name)
        if value is not None:
            kwargs[name] = _number(value, f"{node.path}.{name}")
    value = node.take("critical_preamble_symbols")
    if value is not None:
        kwargs["critical_preamble_symbols"] = _integer(
            value, f"{node.path}.critical_preamble_symbols")
    sens = node.take("sensitivity_dbm")
    if sens is not None:
        table = dict(defaults.sensitivity_dbm)
        if not isinstance(sens, list):
            raise ScenarioError(f"{node.path}.sensitivity_dbm", "expected a list")
        for i, entry in enumerate(sens):
            e = _Node(entry, f"{node.path}.sensitivity_dbm[{i}]")
            sf = _integer(e.take("sf", required=True), f"{e.path}.sf")
            bw = _integer(e.take("bw_hz", 125_000), f"{e.path}.bw_hz")
            dbm = _number(e.take("dbm", required=True), f"{e.path}.dbm")
            e.finish()
            table[(sf, bw)] = dbm
        kwargs["sensitivity_dbm"] = table
    node.finish()
    try:
        return CollisionParams(**{**_dataclass_values(defaults), **kwargs})
    except ValueError as exc:
        raise ScenarioError(node.path, str(exc)) from None


def _parse_uplink(root: _Node) -> RadioConfig:
    raw = root.take("uplink")
    defaults = dict(frequency_hz=868_100_000, sf=7, bw_hz=125_000, cr=1,
                    preamble_symbols=8, tx_power_dbm=14.0)
    if raw is None:
        return RadioConfig(**defaults)
    node = _Node(raw, "uplink")
    for name in ("frequency_hz", "sf", "bw_hz", "cr", "preamble_symbols"):
        value = node.take(name)
        if value is not None:
            defaults[name] = _integer(value, f"uplink.{name}")
    value = node.take("tx_power_dbm")
    if value is not None:
        defaults["tx_power_dbm"] = _number(value, "uplink.tx_power_dbm")
    node.finish()
    try:
        return RadioConfig(**defaults)
    except ValueError as exc:
        raise ScenarioError("uplink", str(exc)) from None


def _parse_gateways(root: _Node) -> Tuple[GatewaySpec, ...]:
    raw = root.take("gateways", [])
    if not isinstance(raw, list):
        raise ScenarioError("gateways", "expected a list")
    out = []
    for i, entry in enumerate(raw):
        node = _Node(entry, f"gateways[{i}]")
        gw = GatewaySpec(
            id=_string(node.take("id", f"gw-{i}"), f"{node.path}.id"),
            location=_location(node.take("location", required=True),
                               f"{node.path}.location"),
        )
        node.finish()
        out.append(gw)
    return tuple(out)


def _parse_devices(root: _Node) -> Tuple[DeviceSpec, ...]:
    raw = root.take("devices", [])
    if not isinstance(raw, list):
        raise ScenarioError("devices", "expected a list")
    out = []
    for i, entry in enumerate(raw):
        node = _Node(entry, f"devices[{i}]")
        device_id = _string(node.take("id", f"dev-{i}"), f"{node.path}.id")
        location = _location(node.take("location", required=True),
                             f"{node.path}.location")
        device_class = _string(node.take("class", "A"), f"{node.path}.class")
        if device_class not in ("A", "C"):
            raise ScenarioError(f"{node.path}.class", "must be 'A' or 'C'")
        activation = _string(node.take("activation", "otaa"),
                             f"{node.path}.activation")
        if activation not in ("otaa", "abp"):
            raise ScenarioError(f"{node.path}.activation",
                                "must be 'otaa' or 'abp'")
        firmware = node.take("firmware")
        if firmware is not None:
            firmware = _string(firmware, f"{node.path}.firmware")
        otaa = abp = None
        creds_raw = node.take("credentials")
        if firmware is None:
            otaa, abp = _parse_credentials(creds_raw, node.path, activation,
                                           device_id, i)
        elif creds_raw is not None:
            raise ScenarioError(f"{node.path}.credentials",
                                "firmware devices drive the radio directly")
        traffic = _parse_traffic(node, firmware)
        node.finish()
        out.append(DeviceSpec(
            id=device_id, location=location, device_class=device_class,
            activation=activation, otaa=otaa, abp=abp, traffic=traffic,
            firmware=firmware))
    return tuple(out)


def _parse_credentials(raw, path: str, activation: str, device_id: str,
                       index: int):
    if activation == "otaa":
        app_eui, dev_eui = DEFAULT_APP_EUI, derive_eui("deveui", device_id)
        app_key = derive_key("appkey", device_id)
        if raw is not None:
            node = _Node(raw, f"{path}.credentials")
            value = node.take("app_eui")
            if value is not None:
                app_eui = _hex_bytes(value, f"{node.path}.app_eui", 8)
            value = node.take("dev_eui")
            if value is not None:
                dev_eui = _hex_bytes(value, f"{node.path}.dev_eui", 8)
            value = node.take("app_key")
            if value is not None:
                app_key = _hex_bytes(value, f"{node.path}.app_key", 16)
            node.finish()
        return OtaaCredentials(app_eui, dev_eui, app_key), None
    dev_addr = derive_dev_addr(index)
    nwk = derive_key("nwkskey", device_id)
    app = derive_key("appskey", device_id)
    if raw is not None:
        node = _Node(raw, f"{path}.credentials")
        value = node.take("dev_addr")
        if value is not None:
            dev_addr = int.from_bytes(
                _hex_bytes(value, f"{node.path}.dev_addr", 4), "big")
        value = node.take("nwk_skey")
        if value is not None:
            nwk = _hex_bytes(value, f"{node.path}.nwk_skey", 16)
        value = node.take("app_skey")
        if value is not None:
            app = _hex_bytes(value, f"{node.path}.app_skey", 16)
        node.finish()
    return None, AbpCredentials(dev_addr, nwk, app)


def _parse_traffic(node: _Node, firmware: Optional[str]) -> Optional[TrafficSpec]:
    raw = node.take("traffic")
    if raw is None:
        return None
    if firmware is not None:
        raise ScenarioError(f"{node.path}.traffic",
                            "firmware devices drive their own traffic")
    sub = _Node(raw, f"{node.path}.traffic")
    period = _number(sub.take("period_s", required=True), f"{sub.path}.period_s")
    if period <= 0:
        raise ScenarioError(f"{sub.path}.period_s", "must be > 0")
    fport = _integer(sub.take("fport", 1), f"{sub.path}.fport")
    if not 1 <= fport <= 223:
        raise ScenarioError(f"{sub.path}.fport", "must be 1..223")
    payload_hex = _string(sub.take("payload_hex", "70696e67"),
                          f"{sub.path}.payload_hex")
    payload = _hex_bytes(payload_hex, f"{sub.path}.payload_hex")
    if len(payload) > MAX_APP_PAYLOAD:
        raise ScenarioError(
            f"{sub.path}.payload_hex",
            f"application payload longer than {MAX_APP_PAYLOAD} bytes")
    first = _number(sub.take("first_delay_s", 1.0), f"{sub.path}.first_delay_s")
    if first < 0:
        raise ScenarioError(f"{sub.path}.first_delay_s", "must be >= 0")
    confirmed = _boolean(sub.take("confirmed", False), f"{sub.path}.confirmed")
    sub.finish()
    return TrafficSpec(period_s=period, fport=fport, payload_hex=payload_hex,
                       first_delay_s=first, confirmed=confirmed)


def _parse_server_apps(root: _Node) -> Tuple[ServerAppSpec, ...]:
    raw = root.take("server_apps", [])
    if not isinstance(raw, list):
        raise ScenarioError("server_apps", "expected a list")
    out = []
    for i, entry in enumerate(raw):
        node = _Node(entry, f"server_apps[{i}]")
        fport = _integer(node.take("fport", required=True), f"{node.path}.fport")
        if not 1 <= fport <= 223:
            raise ScenarioError(f"{node.path}.fport", "must be 1..223")
        app_type = _string(node.take("type", "reply"), f"{node.path}.type")
        if app_type not in ("reply", "sink"):
            raise ScenarioError(f"{node.path}.type",
                                "must be 'reply' or 'sink'")
        match_hex = node.take("match_hex")
        if match_hex is not None:
            _hex_bytes(match_hex, f"{node.path}.match_hex")
        reply_hex = node.take("reply_hex")
        if reply_hex is not None:
            _hex_bytes(reply_hex, f"{node.path}.reply_hex")
        if app_type == "reply" and reply_hex is None:
            raise ScenarioError(f"{node.path}.reply_hex",
                                "required for type 'reply'")
        node.finish()
        out.append(ServerAppSpec(fport=fport, type=app_type,
                                 match_hex=match_hex, reply_hex=reply_hex))
    return tuple(out)


def _parse_multicast(root: _Node, devices) -> Tuple[MulticastGroupSpec, ...]:
    raw = root.take("multicast_groups", [])
    if not isinstance(raw, list):
        raise ScenarioError("multicast_groups", "expected a list")
    device_ids = {d.id for d in devices}
    out = []
    for i, entry in enumerate(raw):
        node = _Node(entry, f"multicast_groups[{i}]")
        mc_addr = int.from_bytes(
            _hex_bytes(node.take("mc_addr", required=True),
                       f"{node.path}.mc_addr", 4), "big")
        nwk = _hex_bytes(node.take("nwk_skey", required=True),
                         f"{node.path}.nwk_skey", 16)
        app = _hex_bytes(node.take("app_skey", required=True),
                         f"{node.path}.app_skey", 16)
        members_raw = node.take("members", [])
        if not isinstance(members_raw, list):
            raise ScenarioError(f"{node.path}.members", "expected a list")
        members = []
        for j, member in enumerate(members_raw):
            member = _string(member, f"{node.path}.members[{j}]")
            if member not in device_ids:
                raise ScenarioError(f"{node.path}.members[{j}]",
                                    f"unknown device {member!r}")
            members.append(member)
        node.finish()
        out.append(MulticastGroupSpec(
            keys=MulticastGroupKeys(mc_addr, nwk, app), members=tuple(members)))
    return tuple(out)


# -- rendering --------------------------------------------------------------------


def render_scenario(spec: ScenarioSpec) -> str:
    """Dump a spec back to YAML such that parse(render(s)) == s."""
    doc = {
        "version": SCENARIO_VERSION,
        "seed": spec.seed,
        "length_s": spec.length_s,
        "tick_s": spec.tick_s,
        "phy": {
            "pathloss": {
                "pl0_db": spec.pathloss.pl0_db,
                "d0_m": spec.pathloss.d0_m,
                "gamma": spec.pathloss.gamma,
                "sigma_db": spec.pathloss.sigma_db,
            },
            "collision": {
                "capture_threshold_db": spec.collision.capture_threshold_db,
                "critical_preamble_symbols": spec.collision.critical_preamble_symbols,
                "noise_figure_db": spec.collision.noise_figure_db,
                "sensitivity_dbm": [
                    {"sf": sf, "bw_hz": bw, "dbm": dbm}
                    for (sf, bw), dbm in sorted(spec.collision.sensitivity_dbm.items())
                ],
            },
        },
        "rx_windows": {
            "rx1_delay_s": spec.rx_windows.rx1_delay_s,
            "rx2_delay_s": spec.rx_windows.rx2_delay_s,
            "rx2_frequency_hz": spec.rx_windows.rx2_frequency_hz,
            "rx2_sf": spec.rx_windows.rx2_sf,
            "join_accept_delay1_s": spec.rx_windows.join_accept_delay1_s,
            "window_guard_s": spec.rx_windows.window_guard_s,
            "window_extra_symbols": spec.rx_windows.window_extra_symbols,
        },
        "uplink": {
            "frequency_hz": spec.uplink.frequency_hz,
            "sf": spec.uplink.sf,
            "bw_hz": spec.uplink.bw_hz,
            "cr": spec.uplink.cr,
            "preamble_symbols": spec.uplink.preamble_symbols,
            "tx_power_dbm": spec.uplink.tx_power_dbm,
        },
        "gateways": [
            {"id": g.id, "location": {"x": g.location.x, "y": g.location.y,
                                      "z": g.location.z}}
            for g in spec.gateways
        ],
        "devices": [_render_device(d) for d in spec.devices],
        "server_apps": [
            {k: v for k, v in (("fport", a.fport), ("type", a.type),
                               ("match_hex", a.match_hex),
                               ("reply_hex", a.reply_hex)) if v is not None}
            for a in spec.server_apps
        ],
        "multicast_groups": [
            {
                "mc_addr": g.keys.mc_addr.to_bytes(4, "big").hex(),
                "nwk_skey": g.keys.mc_nwk_skey.hex(),
                "app_skey": g.keys.mc_app_skey.hex(),
                "members": list(g.members),
            }
            for g in spec.multicast_groups
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False)


def _render_device(d: DeviceSpec) -> dict:
    out: dict = {
        "id": d.id,
        "location": {"x": d.location.x, "y": d.location.y, "z": d.location.z},
        "class": d.device_class,
        "activation": d.activation,
    }
    if d.firmware is not None:
        out["firmware"] = d.firmware
    elif d.otaa is not None:
        out["credentials"] = {
            "app_eui": d.otaa.app_eui.hex(),
            "dev_eui": d.otaa.dev_eui.hex(),
            "app_key": d.otaa.app_key.hex(),
        }
    elif d.abp is not None:
        out["credentials"] = {
            "dev_addr": d.abp.dev_addr.to_bytes(4, "big").hex(),
            "nwk_skey": d.abp.nwk_skey.hex(),
            "app_skey": d.abp.app_skey.hex(),
        }
    if d.traffic is not None:
        out["traffic"] = {
            "period_s": d.traffic.period_s,
            "fport": d.traffic.fport,
            "payload_hex": d.traffic.payload_hex,
            "first_delay_s": d.traffic.first_delay_s,
            "confirmed": d.traffic.confirmed,
        }
    return out
