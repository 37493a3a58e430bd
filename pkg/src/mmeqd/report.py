"""CSV and metadata writers shared by the harness and the CLI.

CSV files start with ``#`` metadata lines, then a header row; numbers carry
12 significant digits and lines end with ``\\n``.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from typing import Any, Iterable, Mapping, Optional, Sequence

from . import __version__

DIGITS = 12


def fmt(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.{DIGITS}g}"
    return str(value)


def meta_lines(meta: Mapping[str, Any]) -> list:
    lines = [f"# mmeqd {__version__}"]
    for key in sorted(meta):
        lines.append(f"# {key}={_meta_value(meta[key])}")
    return lines


def _meta_value(v: Any) -> str:
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(_meta_value(x) for x in v) + "]"
    return fmt(v)


def render_csv(columns: Sequence[str], rows: Iterable[Sequence[Any]],
               meta: Optional[Mapping[str, Any]] = None) -> str:
    buf = io.StringIO()
    for line in meta_lines(meta or {}):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence[Any]],
              meta: Optional[Mapping[str, Any]] = None) -> None:
    text = render_csv(columns, rows, meta)
    if path is None or str(path) == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", newline="") as fh:
        fh.write(text)


def csv_body(text: str) -> str:
    """Drop the ``#`` metadata lines."""
    return "".join(line for line in text.splitlines(keepends=True) if not line.startswith("#"))


def write_metadata(path, meta: Mapping[str, Any]) -> None:
    with open(path, "w", newline="") as fh:
        json.dump(_jsonable(meta), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(v):
    if isinstance(v, Mapping):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return fmt(v)
    if hasattr(v, "item"):
        return v.item()
    return v
