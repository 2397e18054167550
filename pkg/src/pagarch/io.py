"""
Panel CSV ingestion and serialization, key-value config files and result documents.

Panels are stored in long format with one row per ``(unit_id, time)`` cell::

    unit_id,time,y,x1,x2
    a,0,0.31,1.2,-0.4
    ...

Ingestion sorts units lexicographically and times ascending, so the N x T
layout does not depend on row order in the file. Floats are written with
``repr``, the shortest string that parses back to the same double, so a
write/read cycle is exact.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from pagarch.errors import ConfigError, PanelDataError
from pagarch.model import ModelOrders, PanelData

log = logging.getLogger(__name__)

__all__ = [
    "MAX_LISTED_CELLS",
    "ResultDocument",
    "format_float",
    "parse_keyvalue",
    "read_keyvalue",
    "read_panel",
    "write_panel",
    "write_rows",
]

MAX_LISTED_CELLS = 20
_X_COLUMN = re.compile(r"x(\d+)$")


def format_float(value) -> str:
    """Shortest round-trip decimal form of a float (at most 17 significant digits)."""
    return repr(float(value))


# ------------------------------------------------------------ panel CSV


def _numeric(text, lineno, column):
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise PanelDataError(f"line {lineno}: non-numeric {column} value {text!r}") from None
    if not math.isfinite(value):
        raise PanelDataError(f"line {lineno}: non-finite {column} value {text!r}")
    return value


def _integer(text, lineno):
    try:
        return int(text)
    except (TypeError, ValueError):
        raise PanelDataError(f"line {lineno}: time must be an integer, got {text!r}") from None


def _x_columns(header):
    xs = {}
    for name in header:
        m = _X_COLUMN.match(name)
        if m:
            xs[int(m.group(1))] = name
    dx = len(xs)
    if sorted(xs) != list(range(1, dx + 1)):
        raise PanelDataError(f"regressor columns must be x1..xD, got {sorted(xs.values())}")
    return [xs[j] for j in range(1, dx + 1)]


def read_panel(path, return_times: bool = False):
    """Read a long-format panel CSV into :class:`~pagarch.model.PanelData`.

    Parameters
    ----------
    path : str or Path
        File with header ``unit_id,time,y[,x1,...,xD]``.
    return_times : bool
        Also return the sorted time labels.

    Raises
    ------
    PanelDataError
        On missing or unknown columns, non-numeric fields, duplicate
        ``(unit_id, time)`` keys, non-contiguous times, or a ragged grid
        (the message lists up to 20 missing cells).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise PanelDataError(f"{path}: empty file") from None
        for required in ("unit_id", "time", "y"):
            if required not in header:
                raise PanelDataError(f"{path}: missing column {required!r}")
        x_cols = _x_columns(header)
        known = {"unit_id", "time", "y", *x_cols}
        extra = [h for h in header if h not in known]
        if extra:
            raise PanelDataError(f"{path}: unexpected columns {extra}")
        if len(set(header)) != len(header):
            raise PanelDataError(f"{path}: repeated column names")
        col = {name: header.index(name) for name in known}
        cells = {}
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not v.strip() for v in row):
                continue
            if len(row) != len(header):
                raise PanelDataError(
                    f"line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            unit = row[col["unit_id"]].strip()
            time = _integer(row[col["time"]].strip(), lineno)
            if (unit, time) in cells:
                raise PanelDataError(
                    f"line {lineno}: duplicate key (unit_id={unit!r}, time={time}), "
                    f"first seen on line {cells[(unit, time)][0]}"
                )
            values = [_numeric(row[col["y"]], lineno, "y")]
            values += [_numeric(row[col[c]], lineno, c) for c in x_cols]
            cells[(unit, time)] = (lineno, values)
    if not cells:
        raise PanelDataError(f"{path}: no data rows")
    units = sorted({u for u, _ in cells})
    times = sorted({t for _, t in cells})
    if times != list(range(times[0], times[-1] + 1)):
        gaps = sorted(set(range(times[0], times[-1] + 1)) - set(times))
        raise PanelDataError(f"time index is not contiguous; no unit has times {gaps[:20]}")
    missing = [(u, t) for u in units for t in times if (u, t) not in cells]
    if missing:
        listed = ", ".join(f"({u!r}, {t})" for u, t in missing[:MAX_LISTED_CELLS])
        more = f" and {len(missing) - MAX_LISTED_CELLS} more" if len(missing) > MAX_LISTED_CELLS else ""
        raise PanelDataError(f"ragged panel: {len(missing)} missing cells: {listed}{more}")
    n, t, dx = len(units), len(times), len(x_cols)
    data = np.array([[cells[(u, s)][1] for s in times] for u in units], dtype=float)
    panel = PanelData(data[:, :, 0], data[:, :, 1:].reshape(n, t, dx), tuple(units))
    log.info("ingested %s: N=%d, T=%d, D_x=%d", path, n, t, dx)
    return (panel, times) if return_times else panel


def write_panel(panel: PanelData, path, times=None) -> None:
    """Write ``panel`` in long format; ``times`` defaults to ``0..T-1``."""
    times = range(panel.n_periods) if times is None else list(times)
    if len(times) != panel.n_periods:
        raise PanelDataError("times length does not match T")
    header = ["unit_id", "time", "y"] + [f"x{j + 1}" for j in range(panel.n_regressors)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i, unit in enumerate(panel.unit_ids):
            for s, label in enumerate(times):
                row = [unit, label, format_float(panel.y[i, s])]
                row += [format_float(v) for v in panel.x[i, s]]
                writer.writerow(row)


def write_rows(path, header, rows) -> None:
    """CSV helper that formats floats losslessly."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_float(v) if isinstance(v, (float, np.floating)) else v for v in row]
            )


# ---------------------------------------------------------- config files


def parse_keyvalue(text: str) -> dict:
    """Flat ``key = value`` lines to a dict; ``#`` comments, ``-`` in keys becomes ``_``."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        key = key.replace("-", "_")
        if key in out:
            raise ConfigError(f"config line {lineno}: key {key!r} given twice")
        out[key] = value
    return out


def read_keyvalue(path) -> dict:
    try:
        return parse_keyvalue(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None


# ------------------------------------------------------- result document


def _plain(value):
    """Numpy scalars and arrays to JSON-ready Python values."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


@dataclass
class ResultDocument:
    """Self-describing fit result.

    ``estimates`` maps names (``lambda``, ``mu``, ``zeta``, ``omega``,
    ``varpi``) to ``{"names": [...], "value": [...], "se": [...]}`` entries;
    ``correction`` carries bias-correction metadata and ``diagnostics`` the
    optimizer status. Floats are written with ``repr`` so a dump and load
    reproduces every double exactly.
    """

    command: str
    orders: dict
    unit_ids: list
    estimates: dict = field(default_factory=dict)
    correction: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    version: str = ""
    seed: object = None
    timing: dict = field(default_factory=dict)

    @property
    def model_orders(self) -> ModelOrders:
        return ModelOrders(**self.orders)

    def to_json(self) -> str:
        return json.dumps(_plain(asdict(self)), indent=2, allow_nan=True)

    @classmethod
    def from_json(cls, text: str) -> "ResultDocument":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed result document: {exc}") from None
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown result document fields {sorted(unknown)}")
        return cls(**data)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "ResultDocument":
        return cls.from_json(Path(path).read_text())

    def value(self, name) -> np.ndarray:
        return np.asarray(self.estimates[name]["value"], dtype=float)
