"""Run records and their JSON/CSV serialization.

Floats are written with 17 significant digits so that every value
round-trips exactly; CSV uses '.' as decimal separator regardless of locale.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np


def fmt_float(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def to_plain(obj):
    """Convert numpy scalars/arrays and tuples into JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj, indent=1, level=0) -> str:
    """JSON text with floats at 17 significant digits and sorted keys."""
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {dumps(v, indent, level + 1)}" for k, v in sorted(obj.items())]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(dumps(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    return json.dumps(obj)


@dataclass
class RunResult:
    subcommand: str
    config: dict
    seeds: dict
    outputs: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    wall_clock: float | None = None

    def as_dict(self):
        d = {
            "subcommand": self.subcommand,
            "config": self.config,
            "seeds": self.seeds,
            "outputs": self.outputs,
            "warnings": self.warnings,
        }
        if self.wall_clock is not None:
            d["wall_clock"] = self.wall_clock
        return to_plain(d)

    def to_json(self) -> str:
        return dumps(self.as_dict()) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunResult":
        d = json.loads(text)
        return cls(d["subcommand"], d["config"], d["seeds"], d.get("outputs", {}), d.get("warnings", []),
                   d.get("wall_clock"))

    def tables(self):
        """Output entries that are lists of flat row dicts."""
        for name, val in self.outputs.items():
            if isinstance(val, list) and val and all(isinstance(r, dict) for r in val):
                yield name, val


def table_csv(rows) -> str:
    rows = to_plain(rows)
    cols = list(rows[0].keys())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        out = []
        for c in cols:
            v = r.get(c)
            if isinstance(v, bool) or v is None:
                out.append("" if v is None else str(v).lower())
            elif isinstance(v, float):
                out.append(fmt_float(v))
            elif isinstance(v, list):
                out.append(" ".join(fmt_float(x) if isinstance(x, float) else str(x) for x in v))
            else:
                out.append(str(v))
        w.writerow(out)
    return buf.getvalue()


def write(result: RunResult, out_dir, fmt="json", extra_tables=None) -> list:
    """Write ``<sub>.json`` and, for csv format, one CSV per table.  Returns paths."""
    os.makedirs(out_dir, exist_ok=True)
    base = result.subcommand.replace("-", "_")
    paths = []
    p = os.path.join(out_dir, f"{base}.json")
    with open(p, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result.to_json())
    paths.append(p)
    if fmt == "csv":
        tables = dict(result.tables())
        tables.update(extra_tables or {})
        for name, rows in sorted(tables.items()):
            p = os.path.join(out_dir, f"{base}_{name}.csv")
            with open(p, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(table_csv(rows))
            paths.append(p)
    return paths
