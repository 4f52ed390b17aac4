"""CSV and metadata output for experiment runs.

CSV files are UTF-8, '.'-decimal, header row mandatory; floats are printed
with repr (shortest round-trip) so reruns are byte-identical. Each run also
gets a JSON sidecar echoing the full config, its content hash, and the files
written. Sidecars carry no timestamps: a rerun must reproduce them exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .experiments import Table, config_hash

__all__ = ["format_cell", "write_csv", "write_run"]


def format_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, table: Table) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.columns)
        for row in table.rows:
            writer.writerow([format_cell(v) for v in row])


def write_run(out_dir, experiment: str, cfg, tables: dict, extra_meta: dict | None = None,
              svg_files: dict | None = None) -> list:
    """Write every table plus the metadata sidecar; returns the paths written.

    svg_files maps filename -> svg text for plots rendered by the caller.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for name, table in tables.items():
            path = out / f"{name}.csv"
            write_csv(path, table)
            written.append(path)
        for name, text in (svg_files or {}).items():
            path = out / name
            path.write_text(text, encoding="utf-8")
            written.append(path)
        meta = {
            "experiment": experiment,
            "config": asdict(cfg),
            "config_hash": config_hash(cfg),
            "csv_files": {name: f"{name}.csv" for name in tables},
            "columns": {name: list(t.columns) for name, t in tables.items()},
        }
        if extra_meta:
            meta.update(extra_meta)
        meta_path = out / f"{experiment}_meta.json"
        meta_path.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n",
                             encoding="utf-8")
        written.append(meta_path)
    except BaseException:
        for p in written:
            try:
                Path(p).unlink()
            except OSError:
                pass
        raise
    return written
