"""CSV/JSON emission of flat record tables."""

import csv
import io
import json
import math
from pathlib import Path

from .errors import InvalidInputError

SIG_DIGITS = 9


def fmt_float(x):
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return format(x, f".{SIG_DIGITS}g")
    return str(x)


def _round(x):
    # JSON mirror of the CSV text: floats carry the same 9 significant digits
    if isinstance(x, float):
        return None if math.isnan(x) else float(format(x, f".{SIG_DIGITS}g"))
    if isinstance(x, dict):
        return {k: _round(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v) for v in x]
    return x


def columns_of(records):
    cols = []
    for rec in records:
        for key in rec:
            if key not in cols:
                cols.append(key)
    return cols


def to_csv_text(records, columns=None):
    columns = columns or columns_of(records)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for rec in records:
        writer.writerow([fmt_float(rec.get(c)) for c in columns])
    return buf.getvalue()


def report_emit(records, fmt, path, config=None, seeds=None, extra=None):
    """Write ``records`` (list of flat dicts) as CSV or JSON.

    Column order is first-seen key order. The JSON form additionally echoes
    ``config``, ``seeds`` and any ``extra`` top-level entries.
    """
    records = list(records)
    if not records:
        raise InvalidInputError("refusing to emit an empty record set")
    if fmt not in ("csv", "json"):
        raise InvalidInputError(f"unknown report format {fmt!r}")
    path = Path(path)
    columns = columns_of(records)
    if fmt == "csv":
        text = to_csv_text(records, columns)
    else:
        doc = {
            "unit": "nats",
            "config": _round(config),
            "seeds": seeds,
            "columns": columns,
            "records": [_round({c: rec.get(c) for c in columns}) for rec in records],
        }
        doc.update(_round(extra or {}))
        text = json.dumps(doc, indent=1, sort_keys=False) + "\n"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _parse(value):
    if value == "":
        return None
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    return value


def read_csv_records(path):
    """Parse a CSV written by :func:`report_emit` back into typed dicts."""
    with open(path, newline="") as fh:
        return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]
