"""Newline-delimited JSON record streams and their tabular export."""
from __future__ import annotations

import json
import math
from collections import OrderedDict
from pathlib import Path

FIELDS = ("t", "name", "value", "tolerance", "pass", "ref", "config_hash")


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    return x


class RecordWriter:
    """Single writer; one JSON object per line with a fixed key order."""

    def __init__(self, path, config_hash: str = ""):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", encoding="utf-8")
        self.config_hash = config_hash
        self.count = 0

    def emit(self, name: str, value, t=None, tolerance=None, passed=None, ref: str = "") -> dict:
        rec = OrderedDict(
            t=None if t is None else float(t),
            name=name,
            value=_clean(float(value)) if isinstance(value, (int, float)) and not isinstance(value, bool)
            else value,
            tolerance=None if tolerance is None else float(tolerance),
        )
        rec["pass"] = None if passed is None else bool(passed)
        rec["ref"] = ref
        rec["config_hash"] = self.config_hash
        self._fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
        self.count += 1
        return rec

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_records(path) -> list:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no record stream at {p}")
    out = []
    with open(p, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{p}:{lineno}: corrupt record ({exc.msg})") from None
            if not isinstance(rec, dict) or "name" not in rec or "value" not in rec:
                raise ValueError(f"{p}:{lineno}: record lacks name/value")
            out.append(rec)
    return out


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def export_tables(run_dir, out_dir=None) -> list:
    """Write one tab-separated table per diagnostic group.

    A record named 'group.column' becomes a column of group.tsv, one row per
    distinct t in first-seen order.  Records without a dot form a group of
    their own with a single 'value' column.  Returns the written paths.
    """
    run_dir = Path(run_dir)
    if not run_dir.is_dir():
        raise FileNotFoundError(f"run directory {run_dir} does not exist")
    recs = read_records(run_dir / "records.ndjson")
    if not recs:
        raise ValueError(f"{run_dir}: record stream is empty")
    groups: dict = OrderedDict()
    for r in recs:
        group, _, col = r["name"].partition(".")
        col = col or "value"
        g = groups.setdefault(group, {"cols": [], "rows": OrderedDict()})
        if col not in g["cols"]:
            g["cols"].append(col)
        g["rows"].setdefault(r["t"], {})[col] = r["value"]
    out_dir = Path(out_dir) if out_dir else run_dir / "tables"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for group in sorted(groups):
        g = groups[group]
        cols = sorted(g["cols"])
        lines = ["\t".join(["t"] + cols)]
        for t, row in g["rows"].items():
            lines.append("\t".join([_fmt(t)] + [_fmt(row.get(c)) for c in cols]))
        path = out_dir / f"{group}.tsv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)
    return written
