"""Per-consumer power-state accounting.

Every power-state change is recorded as one event row carrying the new
draw in watts and the cumulative energy in joules consumed up to that
instant.  Integration is exact over the piecewise-constant power curve:
cumulative energy at event k is the sum of power*dt over all earlier
intervals, with dt measured in whole kernel ticks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict

from .kernel import Simulation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PowerProfile:
    """Representative transceiver-class draws; all overridable.

    ``tx_w`` maps transmit power in dBm to watts; lookups fall back to the
    nearest configured dBm level.
    """

    sleep_w: float = 1.5e-6
    standby_w: float = 1.6e-3
    rx_w: float = 14.4e-3
    tx_w: Dict[int, float] = field(default_factory=lambda: {14: 0.120})

    def __post_init__(self):
        for value in (self.sleep_w, self.standby_w, self.rx_w, *self.tx_w.values()):
            if value < 0:
                raise ValueError("power draws must be >= 0")
        if not self.tx_w:
            raise ValueError("tx_w must contain at least one entry")

    def tx_watts(self, tx_power_dbm: float) -> float:
        if tx_power_dbm in self.tx_w:
            return self.tx_w[tx_power_dbm]
        nearest = min(self.tx_w, key=lambda dbm: abs(dbm - tx_power_dbm))
        return self.tx_w[nearest]


class PowerConsumer:
    """Tracks the power draw of one component and integrates its energy."""

    def __init__(self, sim: Simulation, consumer_id: str,
                 initial_power_w: float = 0.0):
        self._sim = sim
        self.consumer_id = consumer_id
        self._power_w = 0.0
        self._last_ticks = sim.now_ticks
        self._cumulative_j = 0.0
        # Column-oriented event log; one row per transition.
        self.events: Dict[str, list] = {
            "time_s": [], "power_w": [], "cumulative_j": []}
        self.set_power(initial_power_w)

    def _accrue(self) -> None:
        now = self._sim.now_ticks
        dt = (now - self._last_ticks) * self._sim.config.tick_duration
        self._cumulative_j += self._power_w * dt
        self._last_ticks = now

    def set_power(self, power_w: float) -> None:
        """Record a transition to `power_w`; redundant transitions are kept."""
        if power_w < 0:
            raise ValueError(f"power must be >= 0, got {power_w}")
        self._accrue()
        self._power_w = power_w
        self.events["time_s"].append(self._sim.now_s)
        self.events["power_w"].append(power_w)
        self.events["cumulative_j"].append(self._cumulative_j)

    @property
    def power_w(self) -> float:
        return self._power_w

    def total_energy(self) -> float:
        """Energy in joules through now, including the open interval."""
        elapsed = (self._sim.now_ticks - self._last_ticks) * self._sim.config.tick_duration
        return self._cumulative_j + self._power_w * elapsed
