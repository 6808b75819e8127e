"""The supported MAC-command subset: LinkCheck, LinkADR, DevStatus."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Union

log = logging.getLogger(__name__)

CID_LINK_CHECK = 0x02
CID_LINK_ADR = 0x03
CID_DEV_STATUS = 0x06

BATTERY_EXTERNAL = 0
BATTERY_UNKNOWN = 255


@dataclass(frozen=True)
class LinkCheckReq:
    pass


@dataclass(frozen=True)
class LinkCheckAns:
    margin_db: int  # dB above the demodulation floor, 0..254
    gw_cnt: int

    def __post_init__(self):
        if not 0 <= self.margin_db <= 254:
            raise ValueError("margin must be 0..254")
        if not 0 <= self.gw_cnt <= 255:
            raise ValueError("gw_cnt must be 0..255")


@dataclass(frozen=True)
class LinkADRReq:
    data_rate: int   # regional DR index
    tx_power: int    # regional power index
    ch_mask: int = 0x0001
    redundancy: int = 0x01  # ChMaskCntl=0, NbTrans=1

    def __post_init__(self):
        if not 0 <= self.data_rate <= 15 or not 0 <= self.tx_power <= 15:
            raise ValueError("data_rate and tx_power are 4-bit fields")


@dataclass(frozen=True)
class LinkADRAns:
    power_ack: bool = True
    data_rate_ack: bool = True
    ch_mask_ack: bool = True


@dataclass(frozen=True)
class DevStatusReq:
    pass


@dataclass(frozen=True)
class DevStatusAns:
    battery: int     # 0 external, 1..254 level, 255 unknown
    margin_db: int   # SNR of the last received DevStatusReq, -32..31

    def __post_init__(self):
        if not 0 <= self.battery <= 255:
            raise ValueError("battery must be 0..255")
        if not -32 <= self.margin_db <= 31:
            raise ValueError("margin must be -32..31")


MacCommand = Union[LinkCheckReq, LinkCheckAns, LinkADRReq, LinkADRAns,
                   DevStatusReq, DevStatusAns]

_UPLINK_LENGTHS = {CID_LINK_CHECK: 0, CID_LINK_ADR: 1, CID_DEV_STATUS: 2}
_DOWNLINK_LENGTHS = {CID_LINK_CHECK: 2, CID_LINK_ADR: 4, CID_DEV_STATUS: 0}


def encode_commands(commands: List[MacCommand]) -> bytes:
    out = bytearray()
    for cmd in commands:
        if isinstance(cmd, LinkCheckReq):
            out.append(CID_LINK_CHECK)
        elif isinstance(cmd, LinkCheckAns):
            out += bytes([CID_LINK_CHECK, cmd.margin_db, cmd.gw_cnt])
        elif isinstance(cmd, LinkADRReq):
            out += bytes([CID_LINK_ADR,
                          ((cmd.data_rate & 0xF) << 4) | (cmd.tx_power & 0xF)])
            out += cmd.ch_mask.to_bytes(2, "little")
            out.append(cmd.redundancy & 0xFF)
        elif isinstance(cmd, LinkADRAns):
            out += bytes([CID_LINK_ADR,
                          (cmd.power_ack << 2) | (cmd.data_rate_ack << 1)
                          | cmd.ch_mask_ack])
        elif isinstance(cmd, DevStatusReq):
            out.append(CID_DEV_STATUS)
        elif isinstance(cmd, DevStatusAns):
            out += bytes([CID_DEV_STATUS, cmd.battery, cmd.margin_db & 0x3F])
        else:
            raise TypeError(f"unknown MAC command {cmd!r}")
    return bytes(out)


def decode_commands(data: bytes, uplink: bool) -> List[MacCommand]:
    """Parse a MAC-command stream; an unknown CID ends parsing with a log
    entry, since its payload length cannot be known."""
    lengths = _UPLINK_LENGTHS if uplink else _DOWNLINK_LENGTHS
    commands: List[MacCommand] = []
    i = 0
    while i < len(data):
        cid = data[i]
        i += 1
        if cid not in lengths:
            log.warning("unknown MAC command CID 0x%02x; skipping the rest", cid)
            break
        n = lengths[cid]
        if len(data) - i < n:
            log.warning("truncated MAC command 0x%02x; skipping the rest", cid)
            break
        arg = data[i:i + n]
        i += n
        if cid == CID_LINK_CHECK:
            commands.append(LinkCheckReq() if uplink
                            else LinkCheckAns(arg[0], arg[1]))
        elif cid == CID_LINK_ADR:
            if uplink:
                commands.append(LinkADRAns(bool(arg[0] & 0x04),
                                           bool(arg[0] & 0x02),
                                           bool(arg[0] & 0x01)))
            else:
                commands.append(LinkADRReq(arg[0] >> 4, arg[0] & 0x0F,
                                           int.from_bytes(arg[1:3], "little"),
                                           arg[3]))
        elif cid == CID_DEV_STATUS:
            if uplink:
                margin = arg[1] & 0x3F
                if margin >= 32:
                    margin -= 64
                commands.append(DevStatusAns(arg[0], margin))
            else:
                commands.append(DevStatusReq())
    return commands
