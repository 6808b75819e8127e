"""Shared helpers for the test suite."""

from lorawansim import PathLossParams

# Fixed 60 dB loss at the reference distance: received power is simply
# tx_power - 60 for co-located radios, making link math exact in tests.
FLAT = PathLossParams(pl0_db=60.0, d0_m=40.0, gamma=2.0, sigma_db=0.0)
