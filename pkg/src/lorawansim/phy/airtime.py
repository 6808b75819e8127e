"""LoRa time-on-air computation (Semtech AN1200.22 closed form)."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .params import MAX_PAYLOAD_BYTES, RadioConfig


@dataclass(frozen=True)
class Airtime:
    preamble_s: float
    total_s: float
    symbol_s: float
    payload_symbols: int


def airtime(config: RadioConfig, payload_len: int) -> Airtime:
    """Preamble and total on-air duration for a payload of `payload_len` bytes.

    preamble = (n_preamble + 4.25) * Tsym
    payload  = (8 + max(ceil((8L - 4SF + 28 + 16CRC - 20IH) / (4(SF - 2DE)))
               * (CR + 4), 0)) * Tsym
    with Tsym = 2^SF / BW, IH = 1 for implicit header, DE = 1 with LDRO.
    """
    if payload_len < 0:
        raise ValueError("payload length must be >= 0")
    if payload_len > MAX_PAYLOAD_BYTES:
        raise ValueError(
            f"payload length {payload_len} exceeds {MAX_PAYLOAD_BYTES} bytes")

    tsym = config.symbol_time_s
    preamble_s = (config.preamble_symbols + 4.25) * tsym

    crc = 1 if config.crc_on else 0
    implicit = 0 if config.explicit_header else 1
    de = 1 if config.ldro else 0
    numerator = 8 * payload_len - 4 * config.sf + 28 + 16 * crc - 20 * implicit
    denominator = 4 * (config.sf - 2 * de)
    n_payload = 8 + max(math.ceil(numerator / denominator) * (config.cr + 4), 0)

    total_s = preamble_s + n_payload * tsym
    return Airtime(preamble_s, total_s, tsym, n_payload)
