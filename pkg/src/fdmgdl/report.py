"""Run report container shared by the training drivers and the CLI."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any


@dataclass
class CurveRow:
    grade: int
    epoch: int
    loss: float
    lr: float
    elapsed_seconds: float


@dataclass
class RunReport:
    config: dict[str, Any] = field(default_factory=dict)
    method: str = ""
    status: str = "ok"
    error: str | None = None
    grades: list[dict[str, Any]] = field(default_factory=list)
    metrics: dict[str, Any] = field(default_factory=dict)
    curves: list[CurveRow] = field(default_factory=list)

    def ac_times(self) -> list[float]:
        """Accumulated training time after each grade."""
        out, total = [], 0.0
        for g in self.grades:
            total += float(g.get("wall_time", 0.0))
            out.append(total)
        return out

    def to_json_dict(self) -> dict[str, Any]:
        body = asdict(self)
        body.pop("curves")
        for g, ac in zip(body["grades"], self.ac_times()):
            g["ac_time"] = ac
        return _jsonable(body)

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "RunReport":
        body = json.loads(Path(path).read_text())
        for g in body.get("grades", []):
            g.pop("ac_time", None)
        return cls(config=body.get("config", {}), method=body.get("method", ""), status=body.get("status", "ok"),
                   error=body.get("error"), grades=body.get("grades", []), metrics=body.get("metrics", {}))


def _jsonable(obj):
    # json has no inf/nan; keep them readable as strings
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return _jsonable(obj.item())
    return obj
