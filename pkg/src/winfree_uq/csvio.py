"""Deterministic CSV output.

All result files share the same shape: `#`-prefixed metadata lines (sorted by
key so reruns are byte-identical), one header row, then data rows with floats
printed at full precision (%.17g round-trips IEEE doubles exactly). No
timestamps or hostnames — identical inputs must produce identical files.
"""

from __future__ import annotations

import hashlib
import json


def fmt_value(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, (int,)):
        return str(v)
    try:
        import numpy as np
        if isinstance(v, np.floating):
            return format(float(v), ".17g")
        if isinstance(v, np.integer):
            return str(int(v))
    except ImportError:  # pragma: no cover
        pass
    return str(v)


def config_digest(mapping) -> str:
    """Stable short hash of a config mapping (order-independent)."""
    blob = json.dumps(mapping, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_csv(path, columns, rows, meta) -> None:
    lines = []
    for key in sorted(meta):
        lines.append(f"# {key} = {fmt_value(meta[key])}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(fmt_value(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path):
    """Inverse of write_csv: returns (meta, columns, rows-as-float-or-str)."""
    meta = {}
    columns = None
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                key, _, val = line[1:].partition("=")
                meta[key.strip()] = val.strip()
                continue
            parts = line.split(",")
            if columns is None:
                columns = parts
                continue
            parsed = []
            for p in parts:
                try:
                    parsed.append(float(p))
                except ValueError:
                    parsed.append(p)
            rows.append(parsed)
    return meta, columns or [], rows
