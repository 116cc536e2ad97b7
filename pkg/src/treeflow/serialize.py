"""Byte-stable JSON and CSV output."""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


def _float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return "%.17g" % x


def to_json(obj: Any, indent: int = 2) -> str:
    """JSON with sorted keys and 17 significant digits for every float."""
    out: list[str] = []
    _write(obj, out, indent, 0)
    return "".join(out) + "\n"


def _write(obj, out, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if hasattr(obj, "to_record"):
        obj = obj.to_record()
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if obj is None or isinstance(obj, (bool, np.bool_)):
        out.append("null" if obj is None else ("true" if obj else "false"))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = sorted((str(k), v) for k, v in obj.items())
        for n, (k, v) in enumerate(items):
            out.append(f"{pad}{json.dumps(k)}: ")
            _write(v, out, indent, level + 1)
            out.append(",\n" if n < len(items) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool) for x in obj):
            out.append("[")
            for n, x in enumerate(obj):
                _write(x, out, indent, level + 1)
                if n < len(obj) - 1:
                    out.append(", ")
            out.append("]")
            return
        out.append("[\n")
        for n, x in enumerate(obj):
            out.append(pad)
            _write(x, out, indent, level + 1)
            out.append(",\n" if n < len(obj) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_float(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def emit(report: Any, fmt: str = "json", path: str | Path | None = None,
         header: Sequence[str] | None = None) -> str:
    """Render ``report`` and write it to ``path`` (stdout when None).

    For CSV, ``report`` is an iterable of rows and ``header`` names the columns.
    """
    if fmt == "json":
        text = to_json(report)
    elif fmt == "csv":
        if header is None:
            raise ValueError("CSV output needs a header")
        text = to_csv(header, report)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"{path}: {exc.strerror or exc}") from exc
    return text
