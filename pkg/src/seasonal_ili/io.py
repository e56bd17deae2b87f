"""CSV/JSON ingestion and serialization.

File formats (UTF-8, comma separated, header row required):

* ILI:     ``date,ili`` then one ``yyyy-mm-dd,value`` row per week;
* panel:   ``date,<query 1>,...,<query Q>``; names are CSV-quoted when they
  contain commas or quotes;
* labels:  ``query,relevant`` with ``relevant`` in {0, 1}.

Dates must be strictly ascending and exactly 7 days apart. They are turned
into integer week ordinals at the boundary, counted from an epoch date, so
everything past ingestion is calendar-free. Machine outputs print floats
with 17 significant digits, which round-trips every float64 exactly, and
every file is written to a temporary sibling and renamed into place, so a
failed run never leaves a half-written output behind.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
import math
import os
import tempfile
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .errors import DateGap, LabelMismatch, ParseError, SpanMismatch
from .timeseries import QueryPanel, WeeklySeries, normalize_columns

DEFAULT_EPOCH = dt.date(2004, 1, 5)


def fmt(value: float) -> str:
    """Round-trip-safe float text; non-finite values become an empty cell."""
    value = float(value)
    return format(value, ".17g") if math.isfinite(value) else ""


def week_date(epoch: dt.date, week: int) -> str:
    return (epoch + dt.timedelta(days=7 * int(week))).isoformat()


# ---------------------------------------------------------------- reading


def _read_rows(path):
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh, strict=True))
    except csv.Error as exc:
        raise ParseError(str(exc), path) from exc
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", path) from exc
    # drop trailing blank lines, keep line numbers of the rest
    numbered = [(i + 1, row) for i, row in enumerate(rows) if row]
    if not numbered:
        raise ParseError("file is empty", path, 1)
    return path, numbered


def _parse_date(text: str, path, line: int, column: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise ParseError(f"bad date {text!r}, expected yyyy-mm-dd", path, line, column) from None


def _parse_float(text: str, path, line: int, column: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"bad number {text!r}", path, line, column) from None
    if not math.isfinite(value):
        raise ParseError(f"non-finite value {text!r}", path, line, column)
    return value


def _check_dates(dates, lines, path) -> None:
    for k in range(1, len(dates)):
        step = (dates[k] - dates[k - 1]).days
        if step == 7:
            continue
        if step > 7 and step % 7 == 0:
            missing = dates[k - 1] + dt.timedelta(days=7)
            raise DateGap(f"{path}: line {lines[k]}: week {missing.isoformat()} is missing", missing)
        raise ParseError(
            f"date {dates[k].isoformat()} is not 7 days after {dates[k - 1].isoformat()}", path, lines[k], 1
        )


def read_ili_csv(path):
    """``(dates, values)`` from an ILI file."""
    path, rows = _read_rows(path)
    line, header = rows[0]
    if [h.strip().lower() for h in header] != ["date", "ili"]:
        raise ParseError(f"header must be 'date,ili', got {','.join(header)!r}", path, line, 1)
    dates, values, lines = [], [], []
    for line, row in rows[1:]:
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, found {len(row)}", path, line, min(len(row), 2) + 1)
        dates.append(_parse_date(row[0], path, line, 1))
        values.append(_parse_float(row[1], path, line, 2))
        lines.append(line)
    if not dates:
        raise ParseError("no data rows", path, rows[0][0] + 1)
    _check_dates(dates, lines, path)
    return dates, np.array(values)


def read_panel_csv(path):
    """``(dates, names, matrix)`` from a query panel file."""
    path, rows = _read_rows(path)
    line, header = rows[0]
    if not header or header[0].strip().lower() != "date":
        raise ParseError("first header cell must be 'date'", path, line, 1)
    names = header[1:]
    if not names:
        raise ParseError("panel has no query columns", path, line, 2)
    seen = set()
    for k, name in enumerate(names):
        if name in seen:
            raise ParseError(f"duplicate query name {name!r}", path, line, k + 2)
        seen.add(name)
    width = len(header)
    dates, values, lines = [], [], []
    for line, row in rows[1:]:
        if len(row) != width:
            raise ParseError(f"expected {width} columns, found {len(row)}", path, line, min(len(row), width) + 1)
        dates.append(_parse_date(row[0], path, line, 1))
        values.append([_parse_float(cell, path, line, k + 2) for k, cell in enumerate(row[1:])])
        lines.append(line)
    if not dates:
        raise ParseError("no data rows", path, rows[0][0] + 1)
    _check_dates(dates, lines, path)
    return dates, names, np.array(values, dtype=np.float64)


def read_labels_csv(path) -> dict:
    """``{query name: relevant}`` from a labels file."""
    path, rows = _read_rows(path)
    line, header = rows[0]
    if [h.strip().lower() for h in header] != ["query", "relevant"]:
        raise ParseError(f"header must be 'query,relevant', got {','.join(header)!r}", path, line, 1)
    labels = {}
    for line, row in rows[1:]:
        if len(row) != 2:
            raise ParseError(f"expected 2 columns, found {len(row)}", path, line, min(len(row), 2) + 1)
        flag = row[1].strip()
        if flag not in ("0", "1"):
            raise ParseError(f"relevant must be 0 or 1, got {row[1]!r}", path, line, 2)
        if row[0] in labels:
            raise ParseError(f"duplicate query name {row[0]!r}", path, line, 1)
        labels[row[0]] = flag == "1"
    return labels


class Ingested(NamedTuple):
    ili: WeeklySeries
    panel: QueryPanel
    epoch: dt.date


def ingest(ili_path, panel_path, labels_path=None, normalize: bool = False) -> Ingested:
    """Read, align and convert an ILI file and a panel file to week ordinals.

    Both are trimmed to the weeks they share; week 0 is the first shared
    date (returned as ``epoch``). Labels, when given, must name exactly the
    panel's queries. ``normalize`` standardizes every panel column over the
    aligned span.
    """
    ili_dates, ili_values = read_ili_csv(ili_path)
    panel_dates, names, matrix = read_panel_csv(panel_path)
    offset = (panel_dates[0] - ili_dates[0]).days
    if offset % 7 != 0:
        raise SpanMismatch(f"ILI dates start {ili_dates[0]} and panel dates start {panel_dates[0]} are not whole weeks apart")
    first = max(ili_dates[0], panel_dates[0])
    last = min(ili_dates[-1], panel_dates[-1])
    if last < first:
        raise SpanMismatch(
            f"ILI ({ili_dates[0]}..{ili_dates[-1]}) and panel ({panel_dates[0]}..{panel_dates[-1]}) do not overlap"
        )
    n = (last - first).days // 7 + 1
    i0 = (first - ili_dates[0]).days // 7
    p0 = (first - panel_dates[0]).days // 7
    ili = WeeklySeries(0, ili_values[i0 : i0 + n])
    labels = None
    if labels_path is not None:
        table = read_labels_csv(labels_path)
        missing = [q for q in names if q not in table]
        extra = [q for q in table if q not in set(names)]
        if missing or extra:
            raise LabelMismatch(f"labels do not match panel queries (missing {missing[:3]}, unknown {extra[:3]})")
        labels = [table[q] for q in names]
    panel = QueryPanel(0, names, matrix[p0 : p0 + n], labels)
    if normalize:
        panel = normalize_columns(panel)
    return Ingested(ili, panel, first)


# ---------------------------------------------------------------- writing


def atomic_write(path, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_outputs(outputs: dict) -> None:
    """Write several ``{path: text}`` outputs, only after all were rendered."""
    for path, text in outputs.items():
        atomic_write(path, text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _json_clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_clean(v) for v in value]
    if isinstance(value, np.generic):
        return _json_clean(value.item())
    return value


def json_text(data) -> str:
    return json.dumps(_json_clean(data), indent=2, allow_nan=False) + "\n"


def ili_csv(series: WeeklySeries, epoch: dt.date = DEFAULT_EPOCH) -> str:
    return _csv_text(["date", "ili"], [[week_date(epoch, w), fmt(v)] for w, v in zip(series.weeks, series.values)])


def panel_csv(panel: QueryPanel, epoch: dt.date = DEFAULT_EPOCH) -> str:
    rows = [[week_date(epoch, panel.start + i)] + [fmt(v) for v in panel.matrix[i]] for i in range(panel.n_weeks)]
    return _csv_text(["date"] + list(panel.names), rows)


def labels_csv(panel: QueryPanel) -> str:
    if panel.labels is None:
        raise LabelMismatch("panel carries no labels to write")
    return _csv_text(["query", "relevant"], [[q, int(bool(r))] for q, r in zip(panel.names, panel.labels)])


def ranking_json(ranking, names) -> str:
    return json_text(ranking.to_dict(names))


def relevance_csv(curve) -> str:
    return _csv_text(["n", "count", "fraction"], [[n, c, fmt(f)] for n, c, f in curve.rows()])


def estimates_csv(estimates: WeeklySeries, observed: WeeklySeries, epoch: dt.date = DEFAULT_EPOCH) -> str:
    rows = [
        [int(w), week_date(epoch, w), fmt(observed.at(int(w))), fmt(v)]
        for w, v in zip(estimates.weeks, estimates.values)
    ]
    return _csv_text(["week", "date", "observed", "estimated"], rows)


def report_csv(report) -> str:
    rows = []
    for r in report.records:
        d = r.to_dict()
        rows.append(
            [
                d["selection"],
                d["method"],
                d["estimator"],
                "" if d["n"] is None else d["n"],
                "" if d["rmse"] is None else fmt(d["rmse"]),
                "" if d["pearson"] is None else fmt(d["pearson"]),
            ]
        )
    return _csv_text(["selection", "method", "estimator", "n", "rmse", "pearson"], rows)


def report_json(report) -> str:
    return json_text(report.to_dict())


def sweeps_csv(report) -> str:
    rows = [[m, e, n, fmt(r), fmt(p)] for m, e, n, r, p in report.sweep_rows()]
    return _csv_text(["method", "estimator", "n", "rmse", "pearson"], rows)


def seasonal_fit_json(fit, model_kind, train_span) -> str:
    data = {"model": getattr(model_kind, "value", model_kind), "train_range": [train_span.first, train_span.last]}
    data.update(fit.to_dict())
    return json_text(data)


def residual_csv(observed: WeeklySeries, decomposition, epoch: dt.date = DEFAULT_EPOCH) -> str:
    pred = decomposition.prediction
    res = decomposition.residual
    rows = [
        [int(w), week_date(epoch, w), fmt(observed.at(int(w))), fmt(pred.at(int(w))), fmt(res.at(int(w)))]
        for w in pred.weeks
    ]
    return _csv_text(["week", "date", "observed", "prediction", "residual"], rows)


def write_dataset(directory, ili: WeeklySeries, panel: QueryPanel, epoch: dt.date = DEFAULT_EPOCH, extra: Optional[dict] = None):
    """Write ``ili.csv``, ``panel.csv``, ``labels.csv`` (when labelled) and extra JSON files."""
    directory = Path(directory)
    outputs = {directory / "ili.csv": ili_csv(ili, epoch), directory / "panel.csv": panel_csv(panel, epoch)}
    if panel.labels is not None:
        outputs[directory / "labels.csv"] = labels_csv(panel)
    for name, data in (extra or {}).items():
        outputs[directory / name] = json_text(data)
    write_outputs(outputs)
    return sorted(outputs)
