"""Structured verification records and their JSON form."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _plain(value):
    """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        v = float(value)
        if math.isfinite(v):
            return v
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return value


@dataclass
class Report:
    """Outcome of one check: ``lhs`` compared against ``rhs`` or ``bound``.

    ``details`` carries any extra per-check quantities (per-run series,
    status strings, ...); it is serialized verbatim.
    """

    check_name: str
    lhs: float | None
    rhs: float | None
    bound: float | None
    tolerance: float | None
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "check_name": self.check_name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "bound": self.bound,
            "tolerance": self.tolerance,
            "pass": bool(self.passed),
        }
        if self.details:
            out["details"] = self.details
        return _plain(out)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "Report":
        return cls(
            check_name=data["check_name"],
            lhs=data.get("lhs"),
            rhs=data.get("rhs"),
            bound=data.get("bound"),
            tolerance=data.get("tolerance"),
            passed=bool(data["pass"]),
            details=data.get("details", {}),
        )

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        parts = [f"[{status}] {self.check_name}"]
        for name in ("lhs", "rhs", "bound", "tolerance"):
            v = getattr(self, name)
            if v is not None:
                parts.append(f"{name}={v:.6g}")
        return " ".join(parts)

    def __bool__(self) -> bool:
        return bool(self.passed)


def relative_gap(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def equality_report(name: str, lhs: float, rhs: float, tolerance: float, **details) -> Report:
    """Report for ``lhs == rhs`` up to relative ``tolerance``."""
    gap = relative_gap(lhs, rhs)
    return Report(name, float(lhs), float(rhs), None, tolerance, gap <= tolerance,
                  {"relative_gap": gap, **details})


def write_reports(path, reports) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n")


def read_reports(path) -> list[Report]:
    return [Report.from_dict(d) for d in json.loads(Path(path).read_text())]
