"""Result tables with unit-labelled columns and a provenance block (CSV / JSON)."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, field

from . import __version__


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def provenance(command: str, config: dict, seed=None) -> dict:
    return {
        "command": command,
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "version": __version__,
    }


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    return str(value)


def _plain(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if hasattr(value, "item"):
        return value.item()
    return value


@dataclass
class ResultTable:
    """Rows of values under ``(name, unit)`` columns.

    Every column carries a unit; dimensionless quantities use ``1`` and flags use
    ``bool``.
    """

    columns: list
    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, unit in self.columns:
            if not unit:
                raise ValueError(f"column {name!r} has no unit")

    @property
    def header(self) -> list:
        return [f"{name}[{unit}]" for name, unit in self.columns]

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        self.rows.append([_plain(v) for v in values])

    def column(self, name: str) -> list:
        idx = [c[0] for c in self.columns].index(name)
        return [row[idx] for row in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in ("command", "config_hash", "seed", "version"):
            if key in self.provenance:
                buf.write(f"# {key}: {self.provenance[key]}\n")
        if "config" in self.provenance:
            buf.write(f"# config: {json.dumps(self.provenance['config'], sort_keys=True)}\n")
        for key, value in self.summary.items():
            buf.write(f"# summary.{key}: {_cell(_plain(value))}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "provenance": self.provenance,
            "summary": {k: _plain(v) for k, v in self.summary.items()},
            "columns": self.header,
            "rows": [[None if isinstance(v, float) and math.isnan(v) else v for v in row] for row in self.rows],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def render(self, fmt: str) -> str:
        if fmt == "csv":
            return self.to_csv()
        if fmt == "json":
            return self.to_json()
        raise ValueError(f"unknown format {fmt!r}")
