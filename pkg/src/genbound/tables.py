"""Column tables with deterministic CSV and JSON rendering."""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field


def format_value(v) -> str:
    """Render a cell: floats with 9 significant digits, booleans in lower case."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".9g")
    try:
        import numpy as np

        if isinstance(v, np.integer):
            return str(int(v))
        if isinstance(v, np.floating):
            return format_value(float(v))
        if isinstance(v, np.bool_):
            return format_value(bool(v))
    except ImportError:  # pragma: no cover
        pass
    return str(v)


def _json_value(v):
    s = format_value(v)
    if isinstance(v, bool) or v is None:
        return v
    if isinstance(v, str):
        return v
    if s in ("nan", "inf", "-inf"):
        return s
    try:
        return int(s) if s.lstrip("-").isdigit() else float(s)
    except ValueError:
        return s


@dataclass
class Table:
    columns: list[str]
    rows: list[dict] = field(default_factory=list)

    def column(self, name: str) -> list:
        return [r.get(name) for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(self.columns) + "\n")
        for r in self.rows:
            buf.write(",".join(_csv_cell(format_value(r.get(c))) for c in self.columns) + "\n")
        return buf.getvalue()

    def to_json(self) -> list[dict]:
        """Rows as JSON objects; numbers pass through the same 9-digit rounding as the CSV."""
        return [{c: _json_value(r.get(c)) for c in self.columns} for r in self.rows]

    def write(self, path, also_json: bool = False) -> list[str]:
        from pathlib import Path

        p = Path(path)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_csv())
        written = [str(p)]
        if also_json:
            jp = p.with_suffix(".json")
            with open(jp, "w", encoding="utf-8", newline="\n") as fh:
                json.dump(self.to_json(), fh, indent=2, sort_keys=False)
                fh.write("\n")
            written.append(str(jp))
        return written


def _csv_cell(s: str) -> str:
    if any(ch in s for ch in ',"\n'):
        return '"' + s.replace('"', '""') + '"'
    return s
