"""Right-censored survival data, risk-set indexing and baseline hazards."""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Sequence

import numpy as np

MAX_EXP_ARG = math.log(np.finfo(float).max)


class SurvivalDataError(ValueError):
    """Base class for problems with survival input."""


class ParseError(SurvivalDataError):
    pass


class SchemaError(SurvivalDataError):
    pass


class ValidationError(SurvivalDataError):
    pass


@dataclass(frozen=True)
class SurvivalRecord:
    time: float
    status: int
    covariates: np.ndarray


class Dataset:
    """Immutable container of ``n`` subjects with ``p`` time-fixed covariates.

    Besides the raw arrays this precomputes the time-descending ordering used
    by every risk-set sweep: in that ordering the risk set of a subject is a
    prefix, ending at ``rs_end`` (the last member of its tie group).  Tied
    events share one risk set and censorings tied with an event stay in it.
    """

    def __init__(self, time, status, X, feature_names: Sequence[str] | None = None):
        time = np.asarray(time, dtype=float).ravel()
        status_raw = np.asarray(status).ravel()
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n = time.shape[0]
        if status_raw.shape[0] != n or X.shape[0] != n:
            raise SchemaError(
                f"length mismatch: time={n}, status={status_raw.shape[0]}, X rows={X.shape[0]}"
            )
        bad = ~np.isfinite(time) | (time < 0)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(f"subject {i}: time must be finite and >= 0, got {time[i]}")
        status_f = np.asarray(status_raw, dtype=float)
        bad = ~np.isin(status_f, (0.0, 1.0))
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ValidationError(f"subject {i}: status must be 0 or 1, got {status_raw[i]}")
        if not np.all(np.isfinite(X)):
            i = int(np.flatnonzero(~np.isfinite(X).all(axis=1))[0])
            raise ValidationError(f"subject {i}: covariates contain non-finite values")

        self.time = time
        self.status = status_f.astype(np.int8)
        self.X = X.copy()
        self.n, self.p = X.shape
        if feature_names is None:
            feature_names = [f"x{j + 1}" for j in range(self.p)]
        if len(feature_names) != self.p:
            raise SchemaError("feature_names length does not match covariate dimension")
        self.feature_names = tuple(feature_names)

        order = np.lexsort((np.arange(n), -time))
        ts = time[order]
        # last index of each tie group in descending-time order
        rs_end = np.empty(n, dtype=np.int64)
        last = n - 1
        for k in range(n - 1, -1, -1):
            if k < n - 1 and ts[k] != ts[k + 1]:
                last = k
            rs_end[k] = last
        self.order = order
        self.rs_end = rs_end
        self.Xs = np.asfortranarray(self.X[order])
        self.ds = self.status[order].astype(np.bool_)
        asc = np.lexsort((np.arange(n), time))
        self.event_order = asc[self.status[asc] == 1]
        self.N = int(self.status.sum())

        for arr in (self.time, self.status, self.X, self.order, self.rs_end, self.Xs,
                    self.ds, self.event_order):
            arr.flags.writeable = False

    def __repr__(self):
        return f"Dataset(n={self.n}, p={self.p}, events={self.N})"

    @property
    def records(self) -> list[SurvivalRecord]:
        return [SurvivalRecord(float(t), int(d), self.X[i])
                for i, (t, d) in enumerate(zip(self.time, self.status))]

    @cached_property
    def risk_sets(self) -> list[np.ndarray]:
        """``R_j = {i : Z_i >= t_j}`` for each event in ``event_order``."""
        return [np.flatnonzero(self.time >= self.time[i]) for i in self.event_order]

    def risk_set(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.time >= self.time[self.event_order[j]])

    @cached_property
    def risk_set_sizes(self) -> np.ndarray:
        ts = np.sort(self.time)
        return self.n - np.searchsorted(ts, self.time[self.event_order], side="left")

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        return Dataset(self.time[idx], self.status[idx], self.X[idx], self.feature_names)

    def with_covariates(self, X) -> "Dataset":
        return Dataset(self.time, self.status, X)


def ingest_csv(
    source,
    time_col: str = "time",
    status_col: str = "status",
    features: Sequence[str] | None = None,
) -> Dataset:
    """Read a CSV with a header row into a :class:`Dataset`.

    ``source`` may be a path, a binary stream or a text stream.  Feature
    columns default to every column other than the time and status columns,
    in file order.
    """
    text = _open_text(source)
    reader = csv.reader(text)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty CSV: header row required") from None
    header = [h.strip() for h in header]
    for col in (time_col, status_col):
        if col not in header:
            raise SchemaError(f"missing required column {col!r}")
    if features is None:
        features = [h for h in header if h not in (time_col, status_col)]
    missing = [f for f in features if f not in header]
    if missing:
        raise SchemaError(f"missing feature column(s): {', '.join(missing)}")
    if not features:
        raise SchemaError("at least one numeric feature column is required")
    it, st = header.index(time_col), header.index(status_col)
    fi = [header.index(f) for f in features]

    times, stats, rows = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise SchemaError(
                f"row {lineno}: expected {len(header)} columns, found {len(row)}"
            )
        try:
            t = float(row[it])
            s = float(row[st])
            x = [float(row[k]) for k in fi]
        except ValueError as exc:
            raise ParseError(f"row {lineno}: {exc}") from None
        if not math.isfinite(t) or t < 0:
            raise ValidationError(f"row {lineno}: time must be finite and >= 0, got {row[it]}")
        if s not in (0.0, 1.0):
            raise ValidationError(f"row {lineno}: status must be 0 or 1, got {row[st]}")
        if not all(math.isfinite(v) for v in x):
            raise ValidationError(f"row {lineno}: non-finite covariate")
        times.append(t)
        stats.append(int(s))
        rows.append(x)
    X = np.array(rows, dtype=float).reshape(len(rows), len(fi))
    return Dataset(times, stats, X, feature_names=list(features))


def _open_text(source) -> IO[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return io.StringIO(fh.read())
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return io.StringIO(data)


def write_csv(path, data: Dataset) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "status", *data.feature_names])
        for t, s, x in zip(data.time, data.status, data.X):
            w.writerow([repr(float(t)), int(s), *(repr(float(v)) for v in x)])


@dataclass(frozen=True)
class StepFunction:
    """Right-continuous cumulative step function ``sum_{t_j <= t} jump_j``."""

    jump_times: np.ndarray
    jump_sizes: np.ndarray
    flag: str | None = field(default=None, compare=False)

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=float)
        js = np.asarray(self.jump_sizes, dtype=float)
        if jt.shape != js.shape:
            raise ValueError("jump_times and jump_sizes differ in length")
        if np.any(np.diff(jt) <= 0):
            raise ValueError("jump_times must be strictly ascending")
        if np.any(js < 0):
            raise ValueError("jump_sizes must be nonnegative")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "jump_sizes", js)

    def __eq__(self, other):
        if not isinstance(other, StepFunction):
            return NotImplemented
        return (np.array_equal(self.jump_times, other.jump_times)
                and np.array_equal(self.jump_sizes, other.jump_sizes))

    __hash__ = None

    @property
    def empty(self) -> bool:
        return self.jump_times.size == 0

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.jump_sizes)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.jump_times, t, side="right")
        cum = np.concatenate([[0.0], self.cumulative])
        return cum[k]


def _distinct_event_times(data: Dataset):
    ev = data.time[data.status == 1]
    times, counts = np.unique(ev, return_counts=True)
    return times, counts


def nelson_aalen(data: Dataset) -> StepFunction:
    """Nelson-Aalen cumulative hazard: jump ``d_j / |R_j|`` at each failure time."""
    if data.N == 0:
        return StepFunction(np.empty(0), np.empty(0), flag="no events")
    times, d = _distinct_event_times(data)
    at_risk = data.n - np.searchsorted(np.sort(data.time), times, side="left")
    return StepFunction(times, d / at_risk)


def breslow_baseline(data: Dataset, beta) -> StepFunction:
    """Breslow estimate of the cumulative baseline hazard at ``beta``.

    The jump at a distinct failure time is ``d_j / sum_{i in R_j} exp(beta'X_i)``,
    which reduces to ``1 / sum exp`` when failure times are distinct.
    """
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != data.p:
        raise ValueError(f"beta has length {beta.shape[0]}, expected {data.p}")
    if data.N == 0:
        return StepFunction(np.empty(0), np.empty(0), flag="no events")
    eta = data.X @ beta
    big = np.flatnonzero(eta > MAX_EXP_ARG)
    if big.size:
        i = int(big[0])
        raise FloatingPointError(
            f"exp overflow: linear predictor of subject {i} is {eta[i]!r}"
        )
    times, d = _distinct_event_times(data)
    order = np.argsort(-data.time, kind="stable")
    m = eta.max()
    cum = np.cumsum(np.exp(eta[order] - m))
    ts_desc = data.time[order]
    # number of subjects with time >= t_j, counted in the descending ordering
    k = np.searchsorted(-ts_desc, -times, side="right") - 1
    denom = cum[k]
    jumps = d / denom * math.exp(-m)
    if not np.all(np.isfinite(jumps)):
        raise FloatingPointError("non-finite Breslow jump; linear predictor out of range")
    return StepFunction(times, jumps)
