"""Deterministic report files: CSV tables, a JSON summary and gnuplot data."""

import json
import math
from pathlib import Path

import numpy as np

FLOAT_FMT = "{:.12e}"


def _fmt(v):
    if v is None:
        return "nan"
    v = float(v)
    if math.isnan(v):
        return "nan"
    return FLOAT_FMT.format(v)


def _plain(obj):
    """Recursively convert numpy scalars/arrays for JSON output."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if math.isnan(v) or math.isinf(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def emit_report(report, out_dir, name="report", formats=("csv", "json")):
    """Write ``report.tables()`` and ``report.summary()`` under ``out_dir``.

    Returns the list of written paths.  Column order, row order and float
    formatting are fixed so identical reports give identical bytes.
    """
    out = Path(out_dir)
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        tables = report.tables() if hasattr(report, "tables") else {}
        for tname in sorted(tables):
            header, cols = tables[tname]
            rows = list(zip(*[list(c) for c in cols]))
            if "csv" in formats:
                path = out / f"{name}_{tname}.csv"
                with open(path, "w", newline="\n") as fh:
                    fh.write(",".join(header) + "\n")
                    for row in rows:
                        fh.write(",".join(_fmt(v) for v in row) + "\n")
                written.append(path)
            if "dat" in formats:
                path = out / f"{name}_{tname}.dat"
                with open(path, "w", newline="\n") as fh:
                    fh.write("# " + " ".join(header) + "\n")
                    for row in rows:
                        fh.write(" ".join(_fmt(v) for v in row) + "\n")
                written.append(path)
        if "json" in formats:
            path = out / f"{name}_summary.json"
            with open(path, "w", newline="\n") as fh:
                json.dump(_plain(report.summary()), fh, sort_keys=True, indent=2)
                fh.write("\n")
            written.append(path)
    except OSError as exc:
        raise OSError(f"failed writing report to {exc.filename or out}: {exc.strerror}") from exc
    return written
