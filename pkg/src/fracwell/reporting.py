"""Machine-readable outputs: JSON manifests and plot-ready CSV tables.

Floats are printed with 17 significant digits so every value round-trips
bit-exactly; files use comma separators, a header row, UTF-8 and LF endings.
"""

from __future__ import annotations

import json
import os
from typing import Iterable, Sequence

import numpy as np

__all__ = ["fmt", "write_csv", "write_json", "experiment_filename"]


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    return obj


def write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def experiment_filename(experiment: str, d: int, s: float, theta: float,
                        n, ext: str) -> str:
    ntag = n if not isinstance(n, (list, tuple)) else "-".join(str(v) for v in n)
    return f"{experiment}_{d}d_s{s:g}_theta{theta:g}_n{ntag}.{ext}"
