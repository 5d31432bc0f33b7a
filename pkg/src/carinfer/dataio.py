"""CSV reading and writing for trial datasets.

Columns: id, site, baseline, sex (M/F), and optionally arm, y, time, event.
Floats are written with ``repr`` so a write/read round trip is exact.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .data import Dataset

REQUIRED = ("id", "site", "baseline", "sex")
OPTIONAL = ("arm", "y", "time", "event")


class DatasetFormatError(ValueError):
    pass


def _open(source):
    if isinstance(source, (str, Path)):
        return open(source, newline="")
    return source


def read_dataset(source, require=()) -> Dataset:
    """Read a dataset from a path or text stream.

    ``require`` names optional columns that must be present (for instance
    ``("arm", "y")`` for a normal-outcome analysis).
    """
    fh = _open(source)
    try:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in (*REQUIRED, *require) if c not in header]
        if missing:
            raise DatasetFormatError(f"missing required column(s): {', '.join(missing)}")
        rows = [{k.strip(): (v or "").strip() for k, v in row.items() if k is not None}
                for row in reader]
    finally:
        if fh is not source:
            fh.close()

    def column(name, convert):
        out = []
        for lineno, row in enumerate(rows, start=2):
            try:
                out.append(convert(row[name]))
            except (ValueError, KeyError) as exc:
                raise DatasetFormatError(
                    f"line {lineno}: bad value {row.get(name)!r} in column {name!r}") from exc
        return out

    def sex(v):
        if v not in ("M", "F"):
            raise ValueError(v)
        return v == "M"

    def binary(v):
        if v not in ("0", "1"):
            raise ValueError(v)
        return int(v)

    cols = {
        "id": np.array(column("id", int), dtype=np.int64),
        "site": np.array(column("site", int), dtype=np.int64),
        "baseline": np.array(column("baseline", float)),
        "male": np.array(column("sex", sex), dtype=bool),
    }
    if "arm" in header:
        cols["arm"] = np.array(column("arm", binary), dtype=np.int64)
    if "y" in header:
        cols["y"] = np.array(column("y", float))
    if "time" in header:
        cols["time"] = np.array(column("time", float))
    if "event" in header:
        cols["event"] = np.array(column("event", binary), dtype=np.int64)
    site = cols["site"]
    if site.size and (site.min() < 1 or site.max() > 10):
        raise DatasetFormatError("column 'site' must hold values in 1..10")
    return Dataset(**cols)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(int(v)) if isinstance(v, (bool, np.bool_, np.integer, int)) else str(v)


def write_dataset(dataset: Dataset, target=None) -> str | None:
    """Write ``dataset`` as CSV to a path or stream; return the text if
    ``target`` is None."""
    names = list(REQUIRED) + [c for c in OPTIONAL if getattr(dataset, c) is not None]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for i in range(dataset.n):
        row = []
        for name in names:
            if name == "sex":
                row.append("M" if dataset.male[i] else "F")
            else:
                row.append(_cell(getattr(dataset, name)[i]))
        w.writerow(row)
    text = buf.getvalue()
    if target is None:
        return text
    if isinstance(target, (str, Path)):
        Path(target).write_text(text)
    else:
        target.write(text)
    return None
