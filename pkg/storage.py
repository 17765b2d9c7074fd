import json
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np


def _now_iso() -> str:
    return datetime.now().isoformat(timespec="seconds")


def format_float(x: float) -> str:
    """12 significant digits; integral values print without a decimal point."""
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.12g}"


def _rounded(obj: Any) -> Any:
    # numpy scalars/arrays and tuples are normalised so json.dumps sees plain types
    if isinstance(obj, np.ndarray):
        return _rounded(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if not math.isfinite(x):
            return format_float(x)
        return float(format_float(x))
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, dict):
        return {str(k): _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return obj


def dumps(payload: Any) -> str:
    return json.dumps(_rounded(payload), indent=2, sort_keys=True)


class RunStore:
    def __init__(self, base_dir: Path):
        self.base_dir = Path(base_dir)
        self.base_dir.mkdir(parents=True, exist_ok=True)
        self.events_path = self.base_dir / "events.jsonl"

    def path(self, name: str) -> Path:
        return self.base_dir / name

    def write_json(self, name: str, payload: Any) -> Path:
        target = self.path(name)
        target.write_text(dumps(payload) + "\n", encoding="utf-8")
        return target

    def log_event(self, event_type: str, payload: Optional[Dict[str, Any]] = None) -> None:
        row = {
            "time": _now_iso(),
            "type": event_type,
            "payload": _rounded(payload or {}),
        }
        with self.events_path.open("a", encoding="utf-8") as f:
            f.write(json.dumps(row) + "\n")
