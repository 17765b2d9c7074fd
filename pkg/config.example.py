"""
Example configuration for the CPT equilibrium toolkit.
Copy this file to config.py and adjust the defaults for your runs.

Command-line flags (--tolerance, -n, --out, --formats) override these per run.
"""
import os
from dataclasses import dataclass, field
from pathlib import Path


OUTPUT_FORMATS = ("csv", "json", "svg")


def _threads_from_env() -> int | None:
    raw = os.environ.get("CPT_EQ_THREADS", "").strip()
    if not raw:
        return None
    try:
        return max(1, int(raw))
    except ValueError:
        return None


@dataclass(frozen=True)
class RunConfig:
    # Membership
    tolerance: float = 1e-9  # slack >= -tolerance counts as satisfied
    fuzzy_band: float = 1e-4  # |regret| below this is reported as boundary-grazing

    # Grids
    grid_resolution: int = 200  # n; must be >= 10
    max_grid_points: int = 5_000_000  # larger grids need --force

    # Output
    output_dir: Path = Path("runs")  # events.jsonl and artifacts are written here
    formats: tuple[str, ...] = OUTPUT_FORMATS  # e.g. ("csv", "json") to skip SVG

    # Parallelism
    # Rasterization thread cap. Export CPT_EQ_THREADS=4 instead of editing this.
    threads: int | None = field(default_factory=_threads_from_env)

    # Smaller grids for quick checks:
    # grid_resolution: int = 50

    def __post_init__(self):
        if self.grid_resolution < 10:
            raise ValueError(f"grid resolution must be at least 10, got {self.grid_resolution}")
        if not self.tolerance > 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        formats = tuple(f.lower() for f in self.formats if f.lower() in OUTPUT_FORMATS)
        object.__setattr__(self, "formats", formats)
        object.__setattr__(self, "output_dir", Path(self.output_dir))

    def as_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "fuzzy_band": self.fuzzy_band,
            "grid_resolution": self.grid_resolution,
            "max_grid_points": self.max_grid_points,
            "output_dir": str(self.output_dir),
            "formats": list(self.formats),
            "threads": self.threads,
        }


CONFIG = RunConfig()
