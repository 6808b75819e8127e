"""Link-budget arithmetic: log-distance path loss and thermal noise floor."""

from __future__ import annotations

import math
from typing import Tuple

from .params import PathLossParams

THERMAL_NOISE_DBM_PER_HZ = -174.0


def path_loss_db(params: PathLossParams, distance_m: float,
                 shadow_db: float = 0.0) -> float:
    """Log-distance loss; distances below d0 (incl. coincident) clamp to d0."""
    d = max(distance_m, params.d0_m)
    return params.pl0_db + 10.0 * params.gamma * math.log10(d / params.d0_m) + shadow_db


def noise_floor_dbm(bw_hz: int, noise_figure_db: float) -> float:
    return THERMAL_NOISE_DBM_PER_HZ + 10.0 * math.log10(bw_hz) + noise_figure_db


def link_budget(tx_power_dbm: float, distance_m: float, bw_hz: int,
                params: PathLossParams, noise_figure_db: float,
                shadow_db: float = 0.0) -> Tuple[float, float]:
    """(rssi_dbm, snr_db) for one transmitter-receiver link."""
    rssi = tx_power_dbm - path_loss_db(params, distance_m, shadow_db)
    snr = rssi - noise_floor_dbm(bw_hz, noise_figure_db)
    return rssi, snr
