"""Artifact writers: CSV tables and JSON reports with embedded run metadata.

Every artifact carries the resolved configuration and library version so a
run can be reproduced from any of its outputs.  CSV files embed the
metadata as a single ``# {json}`` comment line above the header; JSON files
carry it under the ``meta`` key.  Formatting is deterministic: identical
runs produce bit-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path


def run_metadata(command: str, resolved_config: dict, version: str) -> dict:
    return {"command": command, "version": version, "config": resolved_config}


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_csv(path, columns, rows, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# " + json.dumps(meta, sort_keys=True)]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json(path, payload: dict, meta: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"meta": meta}
    doc.update(payload)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def read_csv_meta(path) -> dict:
    """Recover the embedded metadata from a CSV artifact."""
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("# "):
        raise ValueError(f"{path}: no embedded metadata line")
    return json.loads(first[2:])
