"""Deterministic JSON reports, CSV tables and the runtime sidecar."""
from __future__ import annotations

import csv
import io
import json
import math
import platform
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any

import numpy as np

SIG_DIGITS = 12


def _round(x: float) -> float | str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.{SIG_DIGITS}g}")


def normalize(obj: Any) -> Any:
    """Plain JSON types with floats rounded to a fixed number of significant digits."""
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _round(float(obj))
    if isinstance(obj, np.ndarray):
        return normalize(obj.tolist())
    if isinstance(obj, dict):
        return {str(k): normalize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [normalize(v) for v in obj]
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def versions() -> dict[str, str]:
    out = {"python": platform.python_version()}
    for dist, key in (("artifact", "stablegauge"), ("numpy", "numpy"), ("scipy", "scipy"),
                      ("mpmath", "mpmath")):
        try:
            out[key] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[key] = "unknown"
    return out


@dataclass
class CheckRecord:
    name: str
    anchor: str
    status: str
    metrics: dict[str, Any]
    error_bars: dict[str, Any]
    note: str = ""
    tables: dict[str, tuple[list[str], list[list[Any]]]] = field(default_factory=dict, repr=False)
    runtime: float = 0.0


@dataclass
class Report:
    config: dict[str, Any]
    seed: int
    checks: list[CheckRecord]

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if c.status == "fail"]

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "seed": self.seed,
            "versions": versions(),
            "checks": [{"name": c.name, "anchor": c.anchor, "status": c.status, "metrics": c.metrics,
                        "error_bars": c.error_bars, "note": c.note, "tables": sorted(c.tables)}
                       for c in self.checks],
            "summary": {s: sum(c.status == s for c in self.checks)
                        for s in ("pass", "fail", "skipped", "diagnostic")},
        }
        return json.dumps(normalize(doc), indent=2, sort_keys=False) + "\n"

    def timings_json(self) -> str:
        return json.dumps({c.name: round(c.runtime, 3) for c in self.checks}, indent=2) + "\n"


def _cell(v: Any) -> str:
    v = normalize(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def table_csv(header: list[str], rows: list[list[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def write_report(report: Report, out_dir: str | Path) -> list[Path]:
    """Write report.json, one CSV per table and timings.json; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    p = out / "report.json"
    p.write_bytes(report.to_json().encode())
    written.append(p)
    for c in report.checks:
        for tname, (header, rows) in sorted(c.tables.items()):
            p = out / f"{c.name}__{tname}.csv"
            p.write_bytes(table_csv(header, rows).encode())
            written.append(p)
    p = out / "timings.json"
    p.write_bytes(report.timings_json().encode())
    written.append(p)
    return written
