"""File formats: header-checked CSV schemas and 17-significant-digit JSON.

Input schemas (header row required, extra columns tolerated):

    level stream   t,beta
    score stream   t,score
    series         t,y,point_pred[,scale]
    panel          t,unit,y,y_hat,y_lag

Outputs are written atomically and every float is rendered with 17
significant digits so a replay parses to bitwise-identical values.  Missing
values (not-applicable columns) are empty CSV fields.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
import tempfile

import numpy as np

from .streams import BetaStream, PanelData, ScoreStream, SeriesStream

__all__ = [
    "StreamFormatError",
    "format_float",
    "dumps_json",
    "atomic_write_text",
    "load_stream",
    "load_panel_csv",
    "load_steps_csv",
    "steps_csv_text",
    "beta_csv_text",
    "score_csv_text",
    "series_csv_text",
    "panel_csv_text",
]


class StreamFormatError(ValueError):
    """Malformed stream file: wrong header, bad row, or unparsable value."""


def format_float(x: float) -> str:
    if isinstance(x, float) and math.isnan(x):
        return ""
    return "%.17g" % x


def _json_fragment(obj) -> str:
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "NaN"
        if math.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return "%.17g" % x
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = ", ".join(f"{json.dumps(str(k))}: {_json_fragment(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json_fragment(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj) -> str:
    """JSON text with every float at 17 significant digits."""
    return _json_fragment(obj) + "\n"


def atomic_write_text(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _parse_rows(text: str, required: tuple[str, ...], kind: str) -> dict[str, list[str]]:
    reader = csv.reader(_io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise StreamFormatError(f"empty {kind} file: a header row is required") from None
    header = [h.strip() for h in header]
    missing = [c for c in required if c not in header]
    if missing:
        raise StreamFormatError(
            f"{kind} header must contain columns {list(required)}, missing {missing} (got {header})"
        )
    cols: dict[str, list[str]] = {h: [] for h in header}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise StreamFormatError(f"{kind} line {lineno}: expected {len(header)} fields, got {len(row)}")
        for h, v in zip(header, row):
            cols[h].append(v)
    return cols


def _floats(values: list[str], column: str, kind: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in values], dtype=np.float64)
    except ValueError as exc:
        raise StreamFormatError(f"{kind} column {column!r}: {exc}") from None


def _ints(values: list[str], column: str, kind: str) -> np.ndarray:
    try:
        return np.array([int(v) for v in values], dtype=np.int64)
    except ValueError as exc:
        raise StreamFormatError(f"{kind} column {column!r}: {exc}") from None


def load_stream(text: str) -> BetaStream | ScoreStream | SeriesStream:
    """Parse a stream CSV, inferring its kind from the header."""
    reader = csv.reader(_io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise StreamFormatError("empty stream file: a header row is required") from None
    if "beta" in header:
        cols = _parse_rows(text, ("t", "beta"), "level stream")
        star = _floats(cols["alpha_star"], "alpha_star", "level stream") if "alpha_star" in cols else None
        return BetaStream(t=_ints(cols["t"], "t", "level stream"), beta=_floats(cols["beta"], "beta", "level stream"), alpha_star=star)
    if "score" in header:
        cols = _parse_rows(text, ("t", "score"), "score stream")
        return ScoreStream(t=_ints(cols["t"], "t", "score stream"), score=_floats(cols["score"], "score", "score stream"))
    if "y" in header and "point_pred" in header:
        cols = _parse_rows(text, ("t", "y", "point_pred"), "series")
        scale = _floats(cols["scale"], "scale", "series") if "scale" in cols else None
        return SeriesStream(
            t=_ints(cols["t"], "t", "series"),
            y=_floats(cols["y"], "y", "series"),
            point_pred=_floats(cols["point_pred"], "point_pred", "series"),
            scale=scale,
        )
    raise StreamFormatError(
        f"unrecognized stream header {header}: expected t,beta or t,score or t,y,point_pred[,scale]"
    )


def load_panel_csv(text: str) -> PanelData:
    cols = _parse_rows(text, ("t", "unit", "y", "y_hat", "y_lag"), "panel")
    return PanelData(
        t=_ints(cols["t"], "t", "panel"),
        unit=np.array([u.strip() for u in cols["unit"]], dtype=object),
        y=_floats(cols["y"], "y", "panel"),
        y_hat=_floats(cols["y_hat"], "y_hat", "panel"),
        y_lag=_floats(cols["y_lag"], "y_lag", "panel"),
    )


def load_steps_csv(text: str) -> dict[str, np.ndarray]:
    """Columns of a previously written step file needed to recompute metrics."""
    cols = _parse_rows(text, ("t", "alpha_t", "err_t"), "steps")
    out = {
        "t": _ints(cols["t"], "t", "steps"),
        "alpha_t": _floats(cols["alpha_t"], "alpha_t", "steps"),
        "err_t": _floats(cols["err_t"], "err_t", "steps"),
    }
    if "width" in cols:
        out["width"] = np.array([float(v) if v != "" else math.nan for v in cols["width"]])
    if "unit" in cols:
        out["unit"] = np.array([u.strip() for u in cols["unit"]], dtype=object)
    return out


def _csv_text(header: list[str], columns: list[list[str]]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*columns):
        w.writerow(row)
    return buf.getvalue()


def steps_csv_text(table) -> str:
    """Render a step table; integer columns stay integers, absent values are empty."""
    header = ["t", "alpha_t", "beta_t", "err_t", "interval_lo", "interval_hi", "width", "eta_t", "selected_expert"]
    cols: list[list[str]] = [
        [str(int(x)) for x in table.t],
        [format_float(x) for x in table.alpha],
        [format_float(x) for x in table.beta],
        [str(int(x)) for x in table.err],
        [format_float(x) for x in table.lo],
        [format_float(x) for x in table.hi],
        [format_float(x) for x in table.width],
        [format_float(x) for x in table.eta],
        ["" if x < 0 else str(int(x)) for x in table.selected],
    ]
    if table.unit is not None:
        header.insert(1, "unit")
        cols.insert(1, [str(u) for u in table.unit])
    if table.expert_alpha is not None:
        k = table.expert_alpha.shape[1]
        for i in range(k):
            header.append(f"expert_alpha_{i}")
            cols.append([format_float(x) for x in table.expert_alpha[:, i]])
    return _csv_text(header, cols)


def beta_csv_text(t: np.ndarray, beta: np.ndarray, alpha_star: np.ndarray | None = None) -> str:
    cols = [[str(int(x)) for x in t], [format_float(x) for x in beta]]
    header = ["t", "beta"]
    if alpha_star is not None:
        header.append("alpha_star")
        cols.append([format_float(x) for x in alpha_star])
    return _csv_text(header, cols)


def score_csv_text(t: np.ndarray, score: np.ndarray) -> str:
    return _csv_text(["t", "score"], [[str(int(x)) for x in t], [format_float(x) for x in score]])


def series_csv_text(t: np.ndarray, y: np.ndarray, point_pred: np.ndarray, scale: np.ndarray | None = None) -> str:
    header = ["t", "y", "point_pred"]
    cols = [[str(int(x)) for x in t], [format_float(x) for x in y], [format_float(x) for x in point_pred]]
    if scale is not None:
        header.append("scale")
        cols.append([format_float(x) for x in scale])
    return _csv_text(header, cols)


def panel_csv_text(panel: PanelData) -> str:
    return _csv_text(
        ["t", "unit", "y", "y_hat", "y_lag"],
        [
            [str(int(x)) for x in panel.t],
            [str(u) for u in panel.unit],
            [format_float(x) for x in panel.y],
            [format_float(x) for x in panel.y_hat],
            [format_float(x) for x in panel.y_lag],
        ],
    )
