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
    # A deviation inequality counts as satisfied when its slack is >= -tolerance.
    tolerance: float = 1e-9
    # Points with |regret| below this are counted as grazing the region boundary.
    fuzzy_band: float = 1e-4

    # Grids
    # Lattice points are k/n with sum(k) = n; 200 resolves two-decimal thresholds.
    grid_resolution: int = 200
    # Refuse larger grids unless the caller forces it.
    max_grid_points: int = 5_000_000

    # Output
    output_dir: Path = Path("runs")
    # Any subset of csv / json / svg; unknown names are dropped.
    formats: tuple[str, ...] = OUTPUT_FORMATS

    # Parallelism
    # None = single-threaded. Read from CPT_EQ_THREADS when the config is built.
    threads: int | None = field(default_factory=_threads_from_env)

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
