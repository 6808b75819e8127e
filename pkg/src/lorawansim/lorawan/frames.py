"""LoRaWAN 1.0.4 wire-frame codec.

All multi-byte fields are little-endian on the wire.  EUIs are stored
big-endian (the human-readable order) in frame objects and reversed at the
wire boundary.  Data-frame objects carry the 16-bit wire FCnt; the 32-bit
counter used for MIC and encryption lives in session state.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

MTYPE_JOIN_REQUEST = 0
MTYPE_JOIN_ACCEPT = 1
MTYPE_UNCONFIRMED_UP = 2
MTYPE_UNCONFIRMED_DOWN = 3
MTYPE_CONFIRMED_UP = 4
MTYPE_CONFIRMED_DOWN = 5

_DATA_MTYPES = (MTYPE_UNCONFIRMED_UP, MTYPE_UNCONFIRMED_DOWN,
                MTYPE_CONFIRMED_UP, MTYPE_CONFIRMED_DOWN)
_UPLINK_MTYPES = (MTYPE_UNCONFIRMED_UP, MTYPE_CONFIRMED_UP)

MIC_LEN = 4
MAX_FOPTS = 15
MAX_FPORT = 223
# Largest application payload that always fits a 255-byte frame, even with
# a full FOpts field riding along.
MAX_APP_PAYLOAD = 255 - (1 + 7 + MAX_FOPTS + 1 + MIC_LEN)


class FrameDecodeError(ValueError):
    """Malformed wire input; the message names the offending field."""


def _mhdr(mtype: int) -> int:
    return (mtype << 5) & 0xE0  # major = 0


@dataclass(frozen=True)
class DataFrame:
    mtype: int
    dev_addr: int
    fcnt: int  # 16-bit wire counter
    adr: bool = False
    adr_ack_req: bool = False
    ack: bool = False
    fpending: bool = False
    fopts: bytes = b""
    fport: Optional[int] = None
    frm_payload: Optional[bytes] = None
    mic: bytes = b"\x00" * MIC_LEN

    def __post_init__(self):
        if self.mtype not in _DATA_MTYPES:
            raise ValueError(f"not a data mtype: {self.mtype}")
        if not 0 <= self.dev_addr < 2**32:
            raise ValueError("dev_addr must fit in 32 bits")
        if not 0 <= self.fcnt < 2**16:
            raise ValueError("wire fcnt must fit in 16 bits")
        if len(self.fopts) > MAX_FOPTS:
            raise ValueError(f"fopts longer than {MAX_FOPTS} bytes")
        if (self.fport is None) != (self.frm_payload is None):
            raise ValueError("fport and frm_payload must be present together")
        if self.fport is not None and not 0 <= self.fport <= MAX_FPORT:
            raise ValueError(f"fport must be 0..{MAX_FPORT}")
        if len(self.mic) != MIC_LEN:
            raise ValueError("mic must be 4 bytes")

    @property
    def is_uplink(self) -> bool:
        return self.mtype in _UPLINK_MTYPES

    @property
    def confirmed(self) -> bool:
        return self.mtype in (MTYPE_CONFIRMED_UP, MTYPE_CONFIRMED_DOWN)

    def body_bytes(self) -> bytes:
        """Everything the MIC covers: MHDR through FRMPayload."""
        fctrl = ((self.adr << 7) | (self.adr_ack_req << 6) | (self.ack << 5)
                 | (self.fpending << 4) | len(self.fopts))
        out = bytearray([_mhdr(self.mtype)])
        out += self.dev_addr.to_bytes(4, "little")
        out.append(fctrl)
        out += self.fcnt.to_bytes(2, "little")
        out += self.fopts
        if self.fport is not None:
            out.append(self.fport)
            out += self.frm_payload
        return bytes(out)

    def to_wire(self) -> bytes:
        return self.body_bytes() + self.mic

    def with_mic(self, mic: bytes) -> "DataFrame":
        return replace(self, mic=mic)


@dataclass(frozen=True)
class JoinRequest:
    app_eui: bytes  # big-endian, as printed
    dev_eui: bytes
    dev_nonce: int
    mic: bytes = b"\x00" * MIC_LEN

    def __post_init__(self):
        if len(self.app_eui) != 8 or len(self.dev_eui) != 8:
            raise ValueError("EUIs must be 8 bytes")
        if not 0 <= self.dev_nonce < 2**16:
            raise ValueError("dev_nonce must fit in 16 bits")

    def body_bytes(self) -> bytes:
        return (bytes([_mhdr(MTYPE_JOIN_REQUEST)]) + self.app_eui[::-1]
                + self.dev_eui[::-1] + self.dev_nonce.to_bytes(2, "little"))

    def to_wire(self) -> bytes:
        return self.body_bytes() + self.mic

    def with_mic(self, mic: bytes) -> "JoinRequest":
        return replace(self, mic=mic)


@dataclass(frozen=True)
class JoinAccept:
    join_nonce: int  # 24-bit server nonce
    net_id: int
    dev_addr: int
    dl_settings: int = 0
    rx_delay: int = 1
    cf_list: bytes = b""

    def __post_init__(self):
        if not 0 <= self.join_nonce < 2**24:
            raise ValueError("join_nonce must fit in 24 bits")
        if not 0 <= self.net_id < 2**24:
            raise ValueError("net_id must fit in 24 bits")
        if len(self.cf_list) not in (0, 16):
            raise ValueError("cf_list must be empty or 16 bytes")

    def body_bytes(self) -> bytes:
        return (self.join_nonce.to_bytes(3, "little")
                + self.net_id.to_bytes(3, "little")
                + self.dev_addr.to_bytes(4, "little")
                + bytes([self.dl_settings & 0xFF, self.rx_delay & 0xFF])
                + self.cf_list)


def decode(wire: bytes) -> Union[DataFrame, JoinRequest]:
    """Parse a plaintext-header frame (join-accepts need the AppKey; see
    lorawan.crypto and decode_join_accept)."""
    if len(wire) < 1 + MIC_LEN:
        raise FrameDecodeError("frame shorter than MHDR + MIC")
    mhdr = wire[0]
    if mhdr & 0x03 != 0:
        raise FrameDecodeError(f"unsupported major version {mhdr & 0x03}")
    mtype = mhdr >> 5
    if mtype == MTYPE_JOIN_REQUEST:
        return _decode_join_request(wire)
    if mtype in _DATA_MTYPES:
        return _decode_data(wire, mtype)
    raise FrameDecodeError(f"unsupported mtype {mtype}")


def _decode_join_request(wire: bytes) -> JoinRequest:
    if len(wire) != 23:
        raise FrameDecodeError(
            f"join-request must be 23 bytes, got {len(wire)}")
    return JoinRequest(
        app_eui=wire[1:9][::-1],
        dev_eui=wire[9:17][::-1],
        dev_nonce=int.from_bytes(wire[17:19], "little"),
        mic=wire[19:23],
    )


def _decode_data(wire: bytes, mtype: int) -> DataFrame:
    if len(wire) < 12:
        raise FrameDecodeError(
            f"data frame needs at least 12 bytes (got {len(wire)}): fhdr truncated")
    fctrl = wire[5]
    fopts_len = fctrl & 0x0F
    header_end = 8 + fopts_len
    if len(wire) < header_end + MIC_LEN:
        raise FrameDecodeError(
            f"fopts_len={fopts_len} but only {len(wire) - 12} fopts bytes present")
    fopts = wire[8:header_end]
    rest = wire[header_end:-MIC_LEN]
    fport: Optional[int] = None
    frm: Optional[bytes] = None
    if rest:
        fport = rest[0]
        if fport > MAX_FPORT:
            raise FrameDecodeError(f"fport {fport} outside 0..{MAX_FPORT}")
        frm = rest[1:]
    return DataFrame(
        mtype=mtype,
        dev_addr=int.from_bytes(wire[1:5], "little"),
        adr=bool(fctrl & 0x80),
        adr_ack_req=bool(fctrl & 0x40),
        ack=bool(fctrl & 0x20),
        fpending=bool(fctrl & 0x10),
        fcnt=int.from_bytes(wire[6:8], "little"),
        fopts=fopts,
        fport=fport,
        frm_payload=frm,
        mic=wire[-MIC_LEN:],
    )


def reconstruct_fcnt32(last_fcnt32: int, wire_fcnt: int) -> int:
    """Smallest 32-bit counter above `last_fcnt32` whose low 16 bits match."""
    candidate = (last_fcnt32 & 0xFFFF0000) | wire_fcnt
    if candidate <= last_fcnt32:
        candidate += 0x10000
    return candidate & 0xFFFFFFFF
