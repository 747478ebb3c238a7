"""Competing-risks datasets: loading, person-period expansion, event tables
and time regrouping.

A dataset stores one row per subject: observed time ``x`` (an integer on the
grid ``1..d``, or ``d + 1`` for subjects followed past the last time point
without an event), event code ``j`` (0 = censored) and covariates ``Z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from .errors import DataLoadError
from .model import TimeGrid


@dataclass(frozen=True)
class Schema:
    """Column names used when reading or writing a dataset CSV."""

    id: str = "pid"
    time: str = "X"
    event: str = "J"
    covariates: tuple | None = None

    @classmethod
    def parse(cls, text: str) -> "Schema":
        """Parse ``"id=pid,time=X,event=J"`` (unknown keys are rejected)."""
        kwargs = {}
        for part in filter(None, (s.strip() for s in text.split(","))):
            key, sep, value = part.partition("=")
            if not sep or key not in ("id", "time", "event"):
                raise ValueError(f"bad schema entry {part!r}")
            kwargs[key] = value
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    ids: np.ndarray
    x: np.ndarray
    j: np.ndarray
    Z: np.ndarray
    covariate_names: tuple
    grid: TimeGrid
    M: int

    def __post_init__(self):
        ids = np.asarray(self.ids)
        x = np.asarray(self.x)
        j = np.asarray(self.j)
        n = len(ids)
        Z = np.asarray(self.Z, dtype=float).reshape(n, -1)
        names = tuple(self.covariate_names)
        if x.shape != (n,) or j.shape != (n,):
            raise ValueError("ids, x and j must be 1-D arrays of equal length")
        if not (np.issubdtype(x.dtype, np.integer) and np.issubdtype(j.dtype, np.integer)):
            raise ValueError("x and j must be integer arrays")
        if Z.shape[1] != len(names):
            raise ValueError(f"{Z.shape[1]} covariate columns but {len(names)} names")
        if len(pd.unique(ids)) != n:
            raise ValueError("subject ids must be unique")
        d = self.grid.d
        if n and (x.min() < 1 or x.max() > d + 1):
            raise ValueError(f"observed times must lie in 1..{d + 1}")
        if n and (j.min() < 0 or j.max() > self.M):
            raise ValueError(f"event codes must lie in 0..{self.M}")
        if np.any((j > 0) & (x > d)):
            raise ValueError("events cannot occur after the last grid point")
        if not np.all(np.isfinite(Z)):
            raise ValueError("covariates must be finite")
        for name, arr in (("ids", ids), ("x", x.astype(np.int64)), ("j", j.astype(np.int64)), ("Z", Z)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return len(self.ids)

    @property
    def p(self) -> int:
        return self.Z.shape[1]

    @property
    def d(self) -> int:
        return self.grid.d

    def replace(self, **changes) -> "SurvivalDataset":
        kw = dict(ids=self.ids, x=self.x, j=self.j, Z=self.Z,
                  covariate_names=self.covariate_names, grid=self.grid, M=self.M)
        kw.update(changes)
        return SurvivalDataset(**kw)

    def subset(self, mask) -> "SurvivalDataset":
        mask = np.asarray(mask)
        return self.replace(ids=self.ids[mask], x=self.x[mask], j=self.j[mask], Z=self.Z[mask])

    def to_frame(self, schema: Schema = Schema()) -> pd.DataFrame:
        df = pd.DataFrame({schema.id: self.ids, schema.time: self.x, schema.event: self.j})
        for k, name in enumerate(self.covariate_names):
            df[name] = self.Z[:, k]
        return df


def from_arrays(x, j, Z, ids=None, covariate_names=None, d=None, M=None) -> SurvivalDataset:
    """Build a dataset, inferring the grid size and number of event types.

    ``d`` defaults to the largest event time; censored times beyond ``d`` are
    stored as ``d + 1`` (at risk over the whole grid).
    """
    x = np.asarray(x, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    Z = np.asarray(Z, dtype=float).reshape(len(x), -1)
    if ids is None:
        ids = np.arange(len(x))
    if covariate_names is None:
        covariate_names = tuple(f"Z{k + 1}" for k in range(Z.shape[1]))
    if M is None:
        M = int(j.max()) if len(j) else 1
    if d is None:
        d = int(x[j > 0].max()) if np.any(j > 0) else int(x.max())
    x = np.where((j == 0) & (x > d), d + 1, x)
    return SurvivalDataset(ids, x, j, Z, tuple(covariate_names), TimeGrid.range(d), max(int(M), 1))


def _parse_float(text):
    # pandas' fast parser is not correctly rounded; float() is
    try:
        return float(text)
    except ValueError:
        return np.nan


def _integer_column(frame, col, header_offset=2):
    raw = frame[col]
    vals = pd.to_numeric(raw, errors="coerce")
    bad = vals.isna() | (vals != np.round(vals))
    if bad.any():
        i = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataLoadError(f"column {col!r}: expected an integer, got {raw.iloc[i]!r}", row=i + header_offset)
    return vals.to_numpy().astype(np.int64)


def load_csv(path, schema: Schema = Schema(), M: int | None = None, d: int | None = None) -> SurvivalDataset:
    """Read a dataset from a CSV file with a header row.

    Row numbers in error messages are file line numbers (the header is line 1).
    Covariates default to every column other than id, time and event.
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataLoadError(f"cannot read {path}: {exc}") from exc
    covs = schema.covariates
    if covs is None:
        covs = [c for c in frame.columns if c not in (schema.id, schema.time, schema.event)]
    for col in (schema.id, schema.time, schema.event, *covs):
        if col not in frame.columns:
            raise DataLoadError(f"missing column {col!r} in {path}")
    for col in frame.columns:
        empty = frame[col].str.strip() == ""
        if empty.any():
            raise DataLoadError(f"missing value in column {col!r}", row=int(np.flatnonzero(empty.to_numpy())[0]) + 2)

    x = _integer_column(frame, schema.time)
    if np.any(x < 1):
        i = int(np.flatnonzero(x < 1)[0])
        raise DataLoadError(f"time must be >= 1, got {x[i]}", row=i + 2)
    j = _integer_column(frame, schema.event)
    if np.any(j < 0):
        i = int(np.flatnonzero(j < 0)[0])
        raise DataLoadError(f"event code must be >= 0, got {j[i]}", row=i + 2)
    if M is not None and np.any(j > M):
        i = int(np.flatnonzero(j > M)[0])
        raise DataLoadError(f"event code {j[i]} exceeds M={M}", row=i + 2)
    Z = np.empty((len(frame), len(covs)))
    for k, col in enumerate(covs):
        vals = np.array([_parse_float(v) for v in frame[col]], dtype=float)
        bad = ~np.isfinite(vals)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise DataLoadError(f"column {col!r}: unparseable number {frame[col].iloc[i]!r}", row=i + 2)
        Z[:, k] = vals
    ids = frame[schema.id].to_numpy()
    if len(pd.unique(ids)) != len(ids):
        raise DataLoadError(f"duplicate ids in column {schema.id!r}")
    if d is not None and np.any((j > 0) & (x > d)):
        i = int(np.flatnonzero((j > 0) & (x > d))[0])
        raise DataLoadError(f"event at time {x[i]} beyond d={d}", row=i + 2)
    return from_arrays(x, j, Z, ids=ids, covariate_names=covs, d=d, M=M)


def write_csv(ds: SurvivalDataset, path, schema: Schema = Schema()) -> None:
    ds.to_frame(schema).to_csv(path, index=False, float_format="%.17g")


@dataclass(frozen=True, eq=False)
class ExpandedDataset:
    """Person-period records: one row per subject per time point at risk.

    ``subject`` indexes into the source dataset, ``t`` is the 1-based time
    and ``outcome`` is the event code on the row where the event happened
    (0 everywhere else). The binary response for cause ``j`` is
    ``outcome == j``.
    """

    source: SurvivalDataset
    subject: np.ndarray
    t: np.ndarray
    outcome: np.ndarray

    def __len__(self):
        return len(self.t)

    def response(self, j: int) -> np.ndarray:
        return (self.outcome == j).astype(float)

    def to_frame(self, schema: Schema = Schema()) -> pd.DataFrame:
        df = pd.DataFrame({
            schema.id: self.source.ids[self.subject],
            "t": self.t,
            "outcome": self.outcome,
        })
        for k, name in enumerate(self.source.covariate_names):
            df[name] = self.source.Z[self.subject, k]
        return df


def expand(ds: SurvivalDataset) -> ExpandedDataset:
    """Person-period expansion; subject ``i`` contributes ``min(x_i, d)`` rows."""
    m = np.minimum(ds.x, ds.d)
    total = int(m.sum())
    subject = np.repeat(np.arange(ds.n), m)
    ends = np.cumsum(m)
    t = np.arange(total) - np.repeat(ends - m, m) + 1
    outcome = np.zeros(total, dtype=np.int64)
    hit = (ds.j > 0) & (ds.x <= ds.d)
    outcome[ends[hit] - 1] = ds.j[hit]
    return ExpandedDataset(ds, subject, t, outcome)


@dataclass(frozen=True, eq=False)
class EventTable:
    """Per-time counts: at risk ``y_t``, events ``n_tj`` and censored.

    Subjects followed past the grid (``x = d + 1``) are counted as censored
    at ``d`` so that the counts add up to ``n``.
    """

    labels: tuple
    at_risk: np.ndarray     # (d,)
    events: np.ndarray      # (d, M)
    censored: np.ndarray    # (d,)

    @property
    def d(self):
        return len(self.labels)

    @property
    def M(self):
        return self.events.shape[1]

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({"t": np.arange(1, self.d + 1), "label": list(self.labels)})
        for j in range(self.M):
            df[f"events_{j + 1}"] = self.events[:, j]
        df["censored"] = self.censored
        df["at_risk"] = self.at_risk
        return df


def event_table(ds: SurvivalDataset) -> EventTable:
    d, M = ds.d, ds.M
    x = np.minimum(ds.x, d)
    # y_t = #{x_i >= t}: reverse cumulative count of exits
    exits = np.bincount(x, minlength=d + 1)[1:]
    at_risk = exits[::-1].cumsum()[::-1]
    events = np.zeros((d, M), dtype=np.int64)
    for j in range(1, M + 1):
        events[:, j - 1] = np.bincount(x[ds.j == j], minlength=d + 1)[1:]
    censored = np.bincount(x[ds.j == 0], minlength=d + 1)[1:]
    return EventTable(ds.grid.labels, at_risk, events, censored)


def clip_tail(ds: SurvivalDataset, upper: int) -> SurvivalDataset:
    """Pool every time at or after ``upper`` into one last category ("21+")."""
    if not (1 <= upper <= ds.d):
        raise ValueError(f"upper={upper} out of range 1..{ds.d}")
    labels = list(ds.grid.labels[:upper])
    if not labels[-1].endswith("+"):
        labels[-1] = labels[-1] + "+"
    return ds.replace(x=np.minimum(ds.x, upper), grid=TimeGrid(tuple(labels)))


def merge_times(ds: SurvivalDataset, mapping: Mapping[int, int]) -> SurvivalDataset:
    """Merge each source time into an earlier target time, then renumber.

    ``{7: 6, 14: 13}`` folds day 7 into day 6 and day 14 into day 13; the
    remaining time points are relabelled ``1..d'`` and merged points get
    labels like ``"6-7"``.
    """
    mapping = {int(s): int(t) for s, t in mapping.items() if int(s) != int(t)}
    if not mapping:
        return ds
    d = ds.d
    for s, t in mapping.items():
        if not (1 <= s <= d):
            raise ValueError(f"source time {s} is not on the grid 1..{d}")
        if not (1 <= t <= d):
            raise ValueError(f"target time {t} is not on the grid 1..{d}")
        if t > s:
            raise ValueError(f"cannot map time {s} to the later time {t}")
        if t in mapping:
            raise ValueError(f"target time {t} is itself being merged away")
    target = np.arange(d + 2)
    for s, t in mapping.items():
        target[s] = t
    keep = [t for t in range(1, d + 1) if t not in mapping]
    new_index = np.zeros(d + 2, dtype=np.int64)
    new_index[keep] = np.arange(1, len(keep) + 1)
    new_index[d + 1] = len(keep) + 1
    labels = []
    for t in keep:
        members = [t] + sorted(s for s, tt in mapping.items() if tt == t)
        if len(members) == 1:
            labels.append(ds.grid.label(t))
        elif members == list(range(members[0], members[-1] + 1)):
            labels.append(f"{ds.grid.label(members[0])}-{ds.grid.label(members[-1])}")
        else:
            labels.append(",".join(ds.grid.label(s) for s in members))
    x = new_index[target[ds.x]]
    return ds.replace(x=x, grid=TimeGrid(tuple(labels)))


@dataclass(frozen=True)
class ValidationReport:
    min_events: int
    cells: list = field(default_factory=list)  # (j, t, label, count)

    @property
    def ok(self) -> bool:
        return not self.cells

    def describe(self) -> str:
        if self.ok:
            return f"every (j, t) cell has at least {self.min_events} event(s)"
        shown = ", ".join(f"(j={j}, t={lab}): {c}" for j, _, lab, c in self.cells[:20])
        more = "" if len(self.cells) <= 20 else f" and {len(self.cells) - 20} more"
        return f"{len(self.cells)} cell(s) with fewer than {self.min_events} event(s): {shown}{more}"


def validate_counts(ds: SurvivalDataset, min_events: int = 1) -> ValidationReport:
    """List every (event type, time) cell with fewer than ``min_events`` events."""
    if min_events < 1:
        raise ValueError("min_events must be >= 1")
    table = event_table(ds)
    cells = []
    for j in range(1, ds.M + 1):
        for t in range(1, ds.d + 1):
            count = int(table.events[t - 1, j - 1])
            if count < min_events:
                cells.append((j, t, ds.grid.label(t), count))
    return ValidationReport(min_events, cells)


def regroup_hint(report: ValidationReport) -> str:
    return (
        report.describe()
        + "; regroup sparse times before fitting (clip_tail for a thin tail,"
        " merge_times for isolated empty times)"
    )


def parse_merge(text: str) -> dict:
    """Parse ``"7:6,14:13"`` into ``{7: 6, 14: 13}``."""
    out = {}
    for part in filter(None, (s.strip() for s in text.split(","))):
        src, sep, dst = part.partition(":")
        if not sep:
            raise ValueError(f"bad merge entry {part!r}; expected SOURCE:TARGET")
        out[int(src)] = int(dst)
    return out


__all__: Sequence[str] = [
    "Schema", "SurvivalDataset", "from_arrays", "load_csv", "write_csv",
    "ExpandedDataset", "expand", "EventTable", "event_table", "clip_tail",
    "merge_times", "ValidationReport", "validate_counts", "parse_merge",
]
