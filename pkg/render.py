"""
Region exports: CSV tables (pandas) and 2-simplex drawings (matplotlib SVG).
"""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

from equilibria.region_analysis import RegionMask


# Component colours by label order; labels past the eighth wrap around.
PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#ff7f0e",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#17becf",
)
OUTLINE = "#333333"
SQRT3_2 = math.sqrt(3.0) / 2.0


def mask_frame(mask: RegionMask) -> pd.DataFrame:
    t = mask.grid.dimension
    lattice = mask.grid.lattice
    points = mask.grid.points
    columns = {f"k_{j + 1}": lattice[:, j] for j in range(t)}
    columns.update({f"p_{j + 1}": points[:, j] for j in range(t)})
    columns["member"] = mask.bits.astype(int)
    columns["component"] = mask.labels
    columns["regret"] = mask.values
    return pd.DataFrame(columns)


def write_mask_csv(mask: RegionMask, path: Path) -> Path:
    mask_frame(mask).to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
    return Path(path)


def to_cartesian(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertex 1 at the top, then counterclockwise: vertex 2 bottom left, vertex 3 bottom right."""
    points = np.asarray(points, dtype=float)
    x = 0.5 * points[:, 0] + points[:, 2]
    y = SQRT3_2 * points[:, 0]
    return x, y


def write_simplex_svg(
    mask: RegionMask,
    path: Path,
    *,
    vertex_labels: Sequence[str] = ("1", "2", "3"),
    title: str = "",
) -> Path:
    if mask.grid.dimension != 3:
        raise ValueError(f"SVG rendering needs a 2-simplex, got dimension {mask.grid.dimension}")

    plt.rcParams["svg.hashsalt"] = "cpt-equilibria"
    plt.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=(5.0, 4.6))
    try:
        ax.set_aspect("equal")
        ax.axis("off")
        ax.set_xlim(-0.08, 1.08)
        ax.set_ylim(-0.08, SQRT3_2 + 0.08)

        x, y = to_cartesian(mask.grid.points)
        members = mask.bits
        if members.any():
            colors = [PALETTE[int(k) % len(PALETTE)] for k in mask.labels[members]]
            # one marker per lattice cell, sized from the grid spacing in points
            spacing = 5.0 * 72.0 / (1.16 * mask.grid.resolution)
            ax.scatter(x[members], y[members], c=colors, s=(1.15 * spacing) ** 2, marker="h", linewidths=0)

        corners = np.array([[0.5, SQRT3_2], [0.0, 0.0], [1.0, 0.0], [0.5, SQRT3_2]])
        ax.plot(corners[:, 0], corners[:, 1], color=OUTLINE, linewidth=1.0)
        offsets = ((0.0, 0.04), (-0.04, -0.04), (0.04, -0.04))
        for (cx, cy), (dx, dy), label in zip(corners[:3], offsets, vertex_labels):
            ax.text(cx + dx, cy + dy, label, ha="center", va="center", fontsize=10)
        if title:
            ax.set_title(title, fontsize=10)

        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return Path(path)
