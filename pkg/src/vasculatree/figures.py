"""Matplotlib figures written next to the CSV/SVG report outputs."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .morphometry import GenerationProfile  # noqa: E402
from .project import Polyline2D, style_table  # noqa: E402

# strip volatile metadata so repeated runs write identical files
_METADATA = {".png": {"Software": None}, ".svg": {"Date": None, "Creator": None}, ".pdf": {"CreationDate": None}}

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "svg.hashsalt": "vasculatree",
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150, bbox_inches="tight", metadata=_METADATA.get(path.suffix.lower()))
    plt.close(fig)
    return path


def plot_generation_profile(profile: GenerationProfile, path: str | Path, cutoff: int | None = None) -> Path:
    """Segment count, volume and volume-per-segment against generation."""
    gen = np.arange(len(profile))
    with plt.rc_context(RC):
        fig, axes = plt.subplots(3, 1, figsize=(4.0, 6.0), sharex=True)
        series = [
            (profile.count, "segments $n$"),
            (profile.volume, "volume $v$ (mm$^3$)"),
            (profile.density, "$v/n$ (mm$^3$)"),
        ]
        for ax, (y, label) in zip(axes, series):
            ax.plot(gen, y, "o-", color="k", lw=1.0, ms=3)
            ax.set_ylabel(label)
            if cutoff is not None:
                ax.axvline(cutoff, color="tab:red", lw=0.8, ls="--")
        axes[-1].set_xlabel("generation")
        fig.align_ylabels(axes)
        return _save(fig, path)


def plot_polylines(
    polylines: Sequence[Polyline2D],
    path: str | Path,
    style: str = "generation",
    projection: str = "mercator",
) -> Path:
    table = style_table(polylines, style)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.0, 5.0))
        for p in sorted(polylines, key=lambda p: p.segment_id):
            colour, rel = table[getattr(p, style)]
            ax.plot(p.points[:, 0], p.points[:, 1], color=colour, lw=0.6 * rel, solid_capstyle="round")
        if projection == "mercator":
            ax.set_xlabel("longitude (rad)")
            ax.set_ylabel("Mercator ordinate")
        else:
            ax.set_xlabel("mm")
            ax.set_ylabel("mm")
            ax.set_aspect("equal")
        return _save(fig, path)


def plot_strahler_counts(counts: dict, path: str | Path) -> Path:
    orders = sorted(int(k) for k in counts)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(4.0, 3.0))
        ax.bar(orders, [counts[str(k)] for k in orders], color="0.3")
        ax.set_yscale("log")
        ax.set_xlabel("Strahler order")
        ax.set_ylabel("segments")
        ax.set_xticks(orders)
        return _save(fig, path)
