"""Post-run report figures rendered from the exported tables.

Figures are generated from either an in-memory :class:`RunOutputs` or a
directory of previously exported CSVs, so reports can be (re)built without
re-running a simulation.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import List, Optional, Union

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

from .runner import RunOutputs, TABLE_FILES

log = logging.getLogger(__name__)

FIGURE_DPI = 150


_BOOL_COLUMNS = ("delivered", "collided", "preamble_missed", "interrupted")


def _coerce_bools(frame: pd.DataFrame) -> pd.DataFrame:
    # The CSV writer emits lowercase true/false, which read_csv leaves as
    # strings; map them back so boolean masks behave.
    for column in _BOOL_COLUMNS:
        if column in frame.columns and frame[column].dtype == object:
            frame[column] = frame[column].map({"true": True, "false": False})
    return frame


def _load_tables(source: Union[RunOutputs, str, Path]):
    if isinstance(source, RunOutputs):
        return source.phy_packets, source.radio_receptions, source.energy_events
    directory = Path(source)
    frames = []
    for name in ("phy_packets", "radio_receptions", "energy_events"):
        path = directory / TABLE_FILES[name]
        if not path.exists():
            raise FileNotFoundError(f"missing table {path}")
        frames.append(_coerce_bools(pd.read_csv(path)))
    return tuple(frames)


def render_figures(source: Union[RunOutputs, str, Path],
                   out_dir: Union[str, Path]) -> List[Path]:
    """Render the standard report figures as PNG files; returns the paths."""
    phy, receptions, energy = _load_tables(source)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    written.append(_timeline_figure(phy, out / "packet_timeline.png"))
    written.append(_link_quality_figure(receptions, out / "link_quality.png"))
    written.append(_energy_figure(energy, out / "energy.png"))
    written.append(_pdr_figure(phy, receptions, out / "delivery.png"))
    return [p for p in written if p is not None]


def _save(fig, path: Path) -> Path:
    fig.savefig(path, dpi=FIGURE_DPI, bbox_inches="tight")
    plt.close(fig)
    log.info("wrote %s", path)
    return path


def _timeline_figure(phy: pd.DataFrame, path: Path) -> Optional[Path]:
    fig, ax = plt.subplots(figsize=(9, 4))
    if len(phy):
        senders = sorted(phy["sender_id"].unique())
        index = {s: i for i, s in enumerate(senders)}
        ys = phy["sender_id"].map(index)
        scatter = ax.scatter(phy["time_s"], ys, c=phy["sf"], cmap="viridis",
                             s=14, vmin=7, vmax=12)
        ax.set_yticks(range(len(senders)))
        ax.set_yticklabels(senders, fontsize=7)
        fig.colorbar(scatter, ax=ax, label="spreading factor")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("transmitter")
    ax.set_title("Transmissions over time")
    return _save(fig, path)


def _link_quality_figure(receptions: pd.DataFrame, path: Path) -> Optional[Path]:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if len(receptions):
        delivered = receptions[receptions["delivered"] == True]  # noqa: E712
        lost = receptions[receptions["delivered"] == False]  # noqa: E712
        ax.scatter(lost["rssi_dbm"], lost["snr_db"], s=10, alpha=0.4,
                   color="tab:red", label="not delivered")
        ax.scatter(delivered["rssi_dbm"], delivered["snr_db"], s=10,
                   alpha=0.6, color="tab:green", label="delivered")
        ax.legend(loc="best", fontsize=8)
    ax.set_xlabel("RSSI [dBm]")
    ax.set_ylabel("SNR [dB]")
    ax.set_title("Reception quality")
    return _save(fig, path)


def _energy_figure(energy: pd.DataFrame, path: Path) -> Optional[Path]:
    fig, ax = plt.subplots(figsize=(9, 4))
    if len(energy):
        for radio_id, group in energy.groupby("radio_id", sort=True):
            ax.step(group["time_s"], group["cumulative_j"], where="post",
                    label=str(radio_id), linewidth=1.0)
        if energy["radio_id"].nunique() <= 12:
            ax.legend(fontsize=7, ncols=2)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("cumulative energy [J]")
    ax.set_title("Per-radio energy")
    return _save(fig, path)


def _pdr_figure(phy: pd.DataFrame, receptions: pd.DataFrame,
                path: Path) -> Optional[Path]:
    fig, ax = plt.subplots(figsize=(7, 4))
    if len(phy):
        sent = phy.groupby("sender_id").size()
        if len(receptions):
            ok = receptions[receptions["delivered"] == True]  # noqa: E712
            delivered = (ok.drop_duplicates(subset=["sender_id", "time_s"])
                         .groupby("sender_id").size())
        else:
            delivered = pd.Series(dtype=int)
        senders = sorted(sent.index)
        ratios = [delivered.get(s, 0) / sent[s] for s in senders]
        ax.bar(range(len(senders)), ratios, color="tab:blue")
        ax.set_xticks(range(len(senders)))
        ax.set_xticklabels(senders, rotation=45, ha="right", fontsize=7)
        ax.set_ylim(0, 1.05)
    ax.set_ylabel("delivered / sent")
    ax.set_title("Delivery ratio (any receiver)")
    return _save(fig, path)
