"""CSV ingestion and emission.

The long format has one observation per row with columns ``id``, ``time``,
``value`` and optionally ``label``. The wide format has the id in the first
column and one column per shared observation time; its headers must parse as
numbers. Numbers are written with 17 significant digits, which round-trips
binary64 exactly.
"""

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from fbtc.errors import DatasetValidationError, FBTCError, ParseError
from fbtc.trajectory import Trajectory, validate_trajectory

LONG_REQUIRED = ("id", "time", "value")


def fmt(x) -> str:
    return format(float(x), ".17g")


def _parse_float(text, row, column):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ParseError(f"not a number: {text!r}", row=row, column=column) from None
    return v


def _maybe_int(labels):
    """Labels that all look like integers become ints, otherwise stay strings."""
    try:
        return [int(x) for x in labels]
    except ValueError:
        return list(labels)


def _build(groups, order, labels_by_id):
    trajectories, failures = [], []
    for tid in order:
        times, values = groups[tid]
        t = np.asarray(times, dtype=np.float64)
        y = np.asarray(values, dtype=np.float64)
        idx = np.argsort(t, kind="stable")
        try:
            trajectories.append(validate_trajectory(t[idx], y[idx], id=tid))
        except FBTCError as exc:
            exc.trajectory_id = tid
            failures.append((tid, exc))
    if failures:
        raise DatasetValidationError(failures)
    labels = None
    if labels_by_id is not None:
        labels = _maybe_int([labels_by_id[tid] for tid in order])
    return trajectories, labels


def _read_rows(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not valid UTF-8 ({exc.reason})") from None
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from None
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: empty file", row=1)
    return rows


def _load_long(rows):
    header = [h.strip() for h in rows[0]]
    col = {h: i for i, h in enumerate(header)}
    label_col = col.get("label")
    groups, labels_by_id = {}, ({} if label_col is not None else None)
    for r, raw in enumerate(rows[1:], start=2):
        if len(raw) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(raw)}", row=r)
        tid = raw[col["id"]].strip()
        if not tid:
            raise ParseError("empty id", row=r, column="id")
        t = _parse_float(raw[col["time"]], r, "time")
        y = _parse_float(raw[col["value"]], r, "value")
        times, values = groups.setdefault(tid, ([], []))
        times.append(t)
        values.append(y)
        if label_col is not None:
            lab = raw[label_col].strip()
            prev = labels_by_id.setdefault(tid, lab)
            if prev != lab:
                raise ParseError(f"id {tid!r} has labels {prev!r} and {lab!r}", row=r, column="label")
    return _build(groups, list(groups), labels_by_id)


def _load_wide(rows):
    header = [h.strip() for h in rows[0]]
    times = [_parse_float(h, 1, h) for h in header[1:]]
    if not times:
        raise ParseError("wide format needs at least one time column", row=1)
    groups, order = {}, []
    for r, raw in enumerate(rows[1:], start=2):
        if len(raw) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(raw)}", row=r)
        tid = raw[0].strip()
        if tid in groups:
            raise ParseError(f"duplicate id {tid!r}", row=r, column=header[0])
        # Blank cells are missing observations; the trajectory keeps the rest.
        pairs = [(t, _parse_float(v, r, h)) for t, v, h in zip(times, raw[1:], header[1:]) if v.strip()]
        groups[tid] = ([p[0] for p in pairs], [p[1] for p in pairs])
        order.append(tid)
    return _build(groups, order, None)


def load_long_csv(path):
    """Read trajectories from a CSV file.

    Returns ``(trajectories, labels)`` with ``labels`` None when the file has
    no ``label`` column. Trajectories come in order of first appearance and
    each is sorted by time. Files whose header lacks ``time`` and ``value``
    are read as wide format.

    Raises
    ------
    ParseError
        Malformed file; carries the 1-based row and the column name.
    DatasetValidationError
        One or more trajectories failed validation; lists every failing id.
    """
    rows = _read_rows(path)
    header = {h.strip() for h in rows[0]}
    if set(LONG_REQUIRED) <= header:
        return _load_long(rows)
    if {"time", "value"} & header:
        missing = [c for c in LONG_REQUIRED if c not in header]
        raise ParseError(f"missing required column(s): {', '.join(missing)}", row=1)
    return _load_wide(rows)


def _atomic_write(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in row])
    return buf.getvalue()


def long_csv_text(trajectories: Sequence[Trajectory], labels: Optional[Sequence] = None) -> str:
    header = ["id", "time", "value"] + (["label"] if labels is not None else [])
    rows = []
    for k, tr in enumerate(trajectories):
        extra = [labels[k]] if labels is not None else []
        for t, y in zip(tr.times, tr.values):
            rows.append([tr.id, float(t), float(y)] + extra)
    return csv_text(header, rows)


def write_long_csv(path, trajectories: Sequence[Trajectory], labels: Optional[Sequence] = None) -> None:
    _atomic_write(path, long_csv_text(trajectories, labels))


def write_text_atomic(path, text: str) -> None:
    _atomic_write(path, text)
