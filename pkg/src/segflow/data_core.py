"""Demonstration data model, CSV ingestion, validation and resampling.

A demonstration log is a CSV file whose header declares a time column ``t``,
one or more configuration columns ``q:<name>`` and one or more wrench columns
``w:<name>``::

    t,q:x,q:y,q:z,w:fx,w:fy,w:fz
    0.000,0.51,0.02,0.30,0.01,-0.03,0.02
    0.004,0.51,0.02,0.30,0.02,-0.01,0.00

Orientation is carried as quaternion-imaginary channels (``q:qx`` etc.) and is
treated like any other real-valued channel.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import (
    DegenerateSpan,
    InvalidDemonstration,
    MissingColumn,
    NonMonotonicTime,
    NonNumericCell,
)

UNIFORM_TOL = 1e-6

_QUAT_NAME = re.compile(r"^(q[wxyz]|quat.*|rot.*)$", re.IGNORECASE)
_TORQUE_NAME = re.compile(r"^(t[xyz]|m[xyz]|torque.*|tau.*)$", re.IGNORECASE)


def default_unit(kind: str, name: str) -> str:
    """Unit tag assumed for a channel when the caller gives none."""
    if kind == "q":
        return "1" if _QUAT_NAME.match(name) else "m"
    return "N*m" if _TORQUE_NAME.match(name) else "N"


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Sample:
    t: float
    q: np.ndarray
    w: np.ndarray


@dataclass(frozen=True, eq=False)
class Demonstration:
    """Time-ordered configuration and wrench samples.

    Stored column-wise: ``t`` has shape (N,), ``q`` (N, n) and ``w`` (N, m).
    Arrays are read-only after construction.
    """

    t: np.ndarray
    q: np.ndarray
    w: np.ndarray
    q_names: tuple[str, ...]
    w_names: tuple[str, ...]
    rate_hz: float = float("nan")
    q_units: tuple[str, ...] = ()
    w_units: tuple[str, ...] = ()

    def __post_init__(self):
        t = _frozen(self.t).reshape(-1)
        q = _frozen(self.q)
        w = _frozen(self.w)
        if q.ndim == 1:
            q = _frozen(q.reshape(-1, 1))
        if w.ndim == 1:
            w = _frozen(w.reshape(-1, 1))
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "q_names", tuple(self.q_names))
        object.__setattr__(self, "w_names", tuple(self.w_names))
        if not self.q_units:
            object.__setattr__(
                self, "q_units", tuple(default_unit("q", n) for n in self.q_names)
            )
        if not self.w_units:
            object.__setattr__(
                self, "w_units", tuple(default_unit("w", n) for n in self.w_names)
            )
        object.__setattr__(self, "q_units", tuple(self.q_units))
        object.__setattr__(self, "w_units", tuple(self.w_units))
        if math.isnan(self.rate_hz):
            object.__setattr__(self, "rate_hz", infer_rate(t))

    def __len__(self):
        return len(self.t)

    @property
    def n(self) -> int:
        return self.q.shape[1]

    @property
    def m(self) -> int:
        return self.w.shape[1]

    @property
    def channel_names(self) -> list[str]:
        return [f"q:{c}" for c in self.q_names] + [f"w:{c}" for c in self.w_names]

    @property
    def units(self) -> dict[str, str]:
        names = self.channel_names
        return dict(zip(names, self.q_units + self.w_units))

    @property
    def samples(self) -> Iterator[Sample]:
        for i in range(len(self.t)):
            yield Sample(float(self.t[i]), self.q[i], self.w[i])

    @property
    def span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    @property
    def translation_mask(self) -> np.ndarray:
        return np.array([u == "m" for u in self.q_units], dtype=bool)

    @property
    def force_mask(self) -> np.ndarray:
        return np.array([u == "N" for u in self.w_units], dtype=bool)

    def replace(self, **changes) -> "Demonstration":
        fields = dict(
            t=self.t,
            q=self.q,
            w=self.w,
            q_names=self.q_names,
            w_names=self.w_names,
            rate_hz=self.rate_hz,
            q_units=self.q_units,
            w_units=self.w_units,
        )
        fields.update(changes)
        return Demonstration(**fields)

    def slice(self, t_start: float, t_end: float) -> "Demonstration":
        """Samples with ``t_start <= t <= t_end`` (both ends inclusive)."""
        eps = 1e-9
        sel = (self.t >= t_start - eps) & (self.t <= t_end + eps)
        return self.replace(t=self.t[sel], q=self.q[sel], w=self.w[sel])

    @classmethod
    def from_samples(
        cls,
        samples: Sequence[Sample],
        q_names: Sequence[str],
        w_names: Sequence[str],
        **kwargs,
    ) -> "Demonstration":
        n = {len(np.atleast_1d(s.q)) for s in samples}
        m = {len(np.atleast_1d(s.w)) for s in samples}
        if len(n) > 1 or len(m) > 1:
            raise InvalidDemonstration("samples do not share channel dimensions")
        return cls(
            t=[s.t for s in samples],
            q=[np.atleast_1d(s.q) for s in samples],
            w=[np.atleast_1d(s.w) for s in samples],
            q_names=q_names,
            w_names=w_names,
            **kwargs,
        )


def infer_rate(t: np.ndarray) -> float:
    if len(t) < 2:
        return float("nan")
    dt = np.median(np.diff(t))
    return float(1.0 / dt) if dt > 0 else float("nan")


def is_uniform(t: np.ndarray, tol: float = UNIFORM_TOL) -> bool:
    if len(t) < 3:
        return True
    d = np.diff(t)
    return bool(np.max(np.abs(d - d.mean())) <= tol)


# ---------------------------------------------------------------- ingestion


def _target_columns(header: list[str], schema: Mapping | None) -> list[list[str]]:
    """Canonical name(s) for every file column; one column may feed several."""
    schema = schema or {}
    out = []
    for col in header:
        col = col.strip()
        target = schema.get(col, col)
        if isinstance(target, str):
            target = [target]
        out.append([str(x) for x in target])
    return out


def parse_demonstration(
    text: str,
    schema: Mapping | None = None,
    units: Mapping[str, str] | None = None,
) -> Demonstration:
    """Parse CSV text in the demonstration format.

    ``schema`` maps file column names to canonical names (``t``,
    ``q:<name>``, ``w:<name>``); a value may be a list to route one file
    column into several channels. Unmapped columns keep their own name and
    columns that match none of the canonical patterns are ignored.
    """
    reader = csv.reader(io.StringIO(text.lstrip("﻿")))
    try:
        header = next(reader)
    except StopIteration:
        raise MissingColumn("empty file: no header row", column="t") from None
    targets = _target_columns(header, schema)

    t_col = None
    q_cols: list[tuple[int, str]] = []
    w_cols: list[tuple[int, str]] = []
    for j, names in enumerate(targets):
        for name in names:
            if name == "t":
                t_col = j
            elif name.startswith("q:") and len(name) > 2:
                q_cols.append((j, name[2:]))
            elif name.startswith("w:") and len(name) > 2:
                w_cols.append((j, name[2:]))
    if t_col is None:
        raise MissingColumn("header has no 't' column", column="t")
    if not q_cols:
        raise MissingColumn("header has no 'q:<name>' column", column="q:*")
    if not w_cols:
        raise MissingColumn("header has no 'w:<name>' column", column="w:*")

    rows = []
    for row_no, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(header):
            raise NonNumericCell(
                f"row {row_no}: expected {len(header)} cells, got {len(row)}",
                row=row_no,
                column=header[len(row)].strip() if len(row) < len(header) else None,
            )
        values = []
        for j, cell in enumerate(row[: len(header)]):
            try:
                values.append(float(cell))
            except ValueError:
                raise NonNumericCell(
                    f"row {row_no}, column {header[j].strip()!r}: {cell!r} is not a number",
                    row=row_no,
                    column=header[j].strip(),
                ) from None
        rows.append(values)

    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    t = data[:, t_col]
    for i in range(1, len(t)):
        if not t[i] > t[i - 1]:
            raise NonMonotonicTime(
                f"row {i + 1}: time {t[i]!r} does not increase past {t[i - 1]!r}",
                row=i + 1,
            )

    units = units or {}
    q_names = [n for _, n in q_cols]
    w_names = [n for _, n in w_cols]
    return Demonstration(
        t=t,
        q=data[:, [j for j, _ in q_cols]],
        w=data[:, [j for j, _ in w_cols]],
        q_names=q_names,
        w_names=w_names,
        q_units=tuple(units.get(f"q:{n}", default_unit("q", n)) for n in q_names),
        w_units=tuple(units.get(f"w:{n}", default_unit("w", n)) for n in w_names),
    )


def load_demonstration(
    path: str | Path,
    schema: Mapping | None = None,
    units: Mapping[str, str] | None = None,
) -> Demonstration:
    """Read a demonstration CSV; timestamps are kept as read."""
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_demonstration(fh.read(), schema=schema, units=units)


def format_demonstration(demo: Demonstration) -> str:
    """Serialize to CSV text; ``repr`` floats make the output round-trip exactly."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["t", *demo.channel_names])
    for i in range(len(demo)):
        writer.writerow(
            [repr(float(demo.t[i]))]
            + [repr(float(v)) for v in demo.q[i]]
            + [repr(float(v)) for v in demo.w[i]]
        )
    return buf.getvalue()


# ---------------------------------------------------------------- resampling


def resample_uniform(demo: Demonstration, rate_hz: float) -> Demonstration:
    """Linearly interpolate every channel onto a uniform grid.

    The grid starts at the first timestamp and steps by ``1/rate_hz`` up to
    the last timestamp (inclusive when it lands on the grid).
    """
    if len(demo) < 2:
        raise DegenerateSpan("need at least two samples to resample")
    if not rate_hz > 0:
        raise ValueError(f"rate_hz must be positive, got {rate_hz}")
    t0, t_end = demo.span
    if not t_end > t0:
        raise DegenerateSpan(f"time span [{t0}, {t_end}] is empty")
    dt = 1.0 / rate_hz
    count = int(math.floor((t_end - t0) / dt + 1e-9)) + 1
    grid = t0 + np.arange(count) * dt
    grid = np.minimum(grid, t_end)

    def interp(values):
        return np.column_stack(
            [np.interp(grid, demo.t, values[:, j]) for j in range(values.shape[1])]
        )

    return demo.replace(t=grid, q=interp(demo.q), w=interp(demo.w), rate_hz=float(rate_hz))


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class ValidationReport:
    errors: list[tuple[int, str]] = field(default_factory=list)
    warnings: list[tuple[int, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self):
        return {
            "errors": [{"index": i, "description": d} for i, d in self.errors],
            "warnings": [{"index": i, "description": d} for i, d in self.warnings],
        }


def validate(demo: Demonstration) -> ValidationReport:
    """Collect structural and numerical problems without raising."""
    errors: list[tuple[int, str]] = []
    warnings: list[tuple[int, str]] = []
    N = len(demo.t)

    if demo.q.ndim != 2 or demo.q.shape[0] != N:
        errors.append((-1, f"configuration array has shape {demo.q.shape}, expected ({N}, n)"))
    if demo.w.ndim != 2 or demo.w.shape[0] != N:
        errors.append((-1, f"wrench array has shape {demo.w.shape}, expected ({N}, m)"))
    if demo.q.ndim == 2 and demo.q.shape[1] != len(demo.q_names):
        errors.append((-1, "configuration channel count does not match channel names"))
    if demo.w.ndim == 2 and demo.w.shape[1] != len(demo.w_names):
        errors.append((-1, "wrench channel count does not match channel names"))
    if len(demo.q_units) != len(demo.q_names) or len(demo.w_units) != len(demo.w_names):
        errors.append((-1, "unit tags do not match channel names"))
    if demo.q.ndim == 2 and demo.q.shape[1] < 1:
        errors.append((-1, "no configuration channels"))
    if demo.w.ndim == 2 and demo.w.shape[1] < 1:
        errors.append((-1, "no wrench channels"))
    if N < 2:
        errors.append((-1, f"only {N} samples"))
    if errors:
        return ValidationReport(errors, warnings)

    for i in np.flatnonzero(~np.isfinite(demo.t)):
        errors.append((int(i), "non-finite time"))
    for i in np.flatnonzero(~np.isfinite(demo.q).all(axis=1)):
        errors.append((int(i), "non-finite configuration"))
    for i in np.flatnonzero(~np.isfinite(demo.w).all(axis=1)):
        errors.append((int(i), "non-finite wrench"))

    d = np.diff(demo.t)
    for i in np.flatnonzero(d == 0):
        errors.append((int(i + 1), "duplicate timestamp"))
    for i in np.flatnonzero(d < 0):
        errors.append((int(i + 1), "time decreases"))

    if not errors and not is_uniform(demo.t):
        warnings.append((0, "non-uniform sampling; resample before segmentation"))
    errors.sort(key=lambda e: e[0])
    return ValidationReport(errors, warnings)
