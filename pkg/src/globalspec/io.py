"""Record CSV reading and writing.

The format is UTF-8 text with header ``record_id,time_kyr,value`` and
one sample per row, rows sorted by time within each record.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .core import MissamplingField, Record, RecordSet, SinusoidModel
from .exceptions import DataError

HEADER = ["record_id", "time_kyr", "value"]


def parse_records_csv(text: str, require_values=True) -> RecordSet:
    """Parse Record CSV text into a :class:`RecordSet`.

    With ``require_values=False`` the value column may be empty (sampling
    patterns only); missing values are read as 0.
    """
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows or all(not any(c.strip() for c in r) for r in rows):
        raise DataError("empty file", line=1)
    header = [c.strip() for c in rows[0]]
    if header != HEADER:
        raise DataError(f"expected header {','.join(HEADER)}, got {','.join(header)}", line=1)

    groups: dict[str, tuple[list, list, list]] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != 3:
            raise DataError(f"expected 3 fields, got {len(row)}", line=lineno)
        rid = row[0].strip()
        if not rid:
            raise DataError("empty record_id", line=lineno)
        try:
            t = float(row[1])
        except ValueError:
            raise DataError(f"bad time value {row[1]!r}", line=lineno) from None
        vtxt = row[2].strip()
        if vtxt == "" and not require_values:
            v = 0.0
        else:
            try:
                v = float(vtxt)
            except ValueError:
                raise DataError(f"bad measurement value {row[2]!r}", line=lineno) from None
        if not (math.isfinite(t) and math.isfinite(v)):
            raise DataError("non-finite number", line=lineno)
        ts, vs, lines = groups.setdefault(rid, ([], [], []))
        if ts and t <= ts[-1]:
            raise DataError(
                f"record {rid!r}: time {t} not after previous {ts[-1]}", line=lineno
            )
        ts.append(t)
        vs.append(v)
        lines.append(lineno)

    if not groups:
        raise DataError("no data rows", line=2)
    records = []
    for rid, (ts, vs, lines) in groups.items():
        try:
            records.append(Record(rid, ts, vs))
        except DataError as exc:
            raise DataError(str(exc), line=lines[0]) from None
    return RecordSet(tuple(records))


def read_records_csv(path, require_values=True) -> RecordSet:
    return parse_records_csv(Path(path).read_text(encoding="utf-8"), require_values)


def format_records_csv(records: RecordSet) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for r in records:
        for t, v in zip(r.times, r.values):
            w.writerow([r.id, repr(float(t)), repr(float(v))])
    return buf.getvalue()


def write_records_csv(path, records: RecordSet):
    Path(path).write_text(format_records_csv(records), encoding="utf-8")


def truth_to_dict(records, truth: SinusoidModel, missampling: MissamplingField, noise_var):
    return {
        "record_ids": records.ids,
        "truth": truth.to_dict(),
        "missampling": [o.tolist() for o in missampling.offsets],
        "noise_var": float(noise_var),
    }


def write_truth_json(path, records, truth, missampling, noise_var):
    Path(path).write_text(
        json.dumps(truth_to_dict(records, truth, missampling, noise_var), indent=1),
        encoding="utf-8",
    )


def read_truth_json(path):
    """Return ``(record_ids, truth, missampling, noise_var)`` from a sidecar file."""
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        truth = SinusoidModel.from_dict(d["truth"])
        miss = MissamplingField(tuple(np.asarray(o, dtype=float) for o in d["missampling"]))
        return list(d["record_ids"]), truth, miss, float(d["noise_var"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"invalid truth JSON: {exc}") from None
