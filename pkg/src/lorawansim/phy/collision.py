"""Capture-effect resolution over packet overlap intervals.

A candidate packet survives interference iff, over the window spanning its
last `critical_preamble_symbols` preamble symbols through the end of its
payload, its RSSI exceeds the RSSI of every overlapping co-channel
(same frequency, same SF) packet by at least the capture threshold.
Overlap confined to the earlier preamble symbols is harmless; packets at a
different SF are ignored (orthogonality assumption).

Intervals are half-open tick ranges [start, end), so packets that merely
touch at a boundary instant do not overlap.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable

from .params import CollisionParams


class Outcome(enum.Enum):
    RECEIVED = "received"
    LOST_PREAMBLE = "lost_preamble"
    LOST_PAYLOAD = "lost_payload"


@dataclass(frozen=True)
class RxPacketView:
    """One packet as seen by a specific receiver, in kernel ticks."""

    tx_start: int
    preamble_end: int
    rx_end: int
    rssi_dbm: float
    frequency_hz: int
    sf: int
    symbol_ticks: int

    def __post_init__(self):
        if not self.tx_start < self.preamble_end < self.rx_end:
            raise ValueError("packet phases must be strictly ordered")


def _overlaps(a_start: int, a_end: int, b_start: int, b_end: int) -> bool:
    return a_start < b_end and b_start < a_end


def critical_start(candidate: RxPacketView, params: CollisionParams) -> int:
    return candidate.preamble_end - params.critical_preamble_symbols * candidate.symbol_ticks


def resolve_collision(candidate: RxPacketView,
                      interferers: Iterable[RxPacketView],
                      params: CollisionParams) -> Outcome:
    """Outcome for `candidate` given co-located `interferers`.

    Callers must pass only packets that config-match the receiver and are
    above its sensitivity; different-SF or different-frequency entries are
    filtered out here as a second line of defense.
    """
    window_start = critical_start(candidate, params)
    window_end = candidate.rx_end
    preamble_lost = False
    payload_lost = False
    for other in interferers:
        if other.frequency_hz != candidate.frequency_hz or other.sf != candidate.sf:
            continue
        if not _overlaps(other.tx_start, other.rx_end, window_start, window_end):
            continue
        if candidate.rssi_dbm - other.rssi_dbm >= params.capture_threshold_db:
            continue  # candidate captures over this interferer
        if _overlaps(other.tx_start, other.rx_end,
                     window_start, candidate.preamble_end):
            preamble_lost = True
        else:
            payload_lost = True
    if preamble_lost:
        return Outcome.LOST_PREAMBLE
    if payload_lost:
        return Outcome.LOST_PAYLOAD
    return Outcome.RECEIVED
