"""
Survival data containers, risk-set logic and the Kaplan-Meier estimator.

Times are float64 and compared exactly; evaluation grids are always drawn from
observed times, so `T_i >= t` membership is well defined without tolerances.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from errors import DataError, DimensionMismatch, NoEvents, NonFiniteTime

logger = logging.getLogger(__name__)


def _frozen(array, dtype):
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SurvivalRecord:
    time: float
    event: bool
    covariates: Tuple[float, ...] = ()


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Observed (T_i, delta_i, X_i) triples stored column-wise."""

    time: np.ndarray
    event: np.ndarray
    X: np.ndarray = field(default=None)

    def __post_init__(self):
        time = np.atleast_1d(np.asarray(self.time, dtype=float))
        event = np.atleast_1d(np.asarray(self.event)).astype(bool)
        if self.X is None:
            X = np.zeros((time.shape[0], 0))
        else:
            X = np.asarray(self.X, dtype=float)
            if X.ndim == 1:
                X = X.reshape(-1, 1) if time.shape[0] != 1 else X.reshape(1, -1)
        object.__setattr__(self, "time", _frozen(time, float))
        object.__setattr__(self, "event", _frozen(event, bool))
        object.__setattr__(self, "X", _frozen(X, float))

    @property
    def n(self):
        return self.time.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def n_events(self):
        return int(self.event.sum())

    @property
    def records(self):
        return [
            SurvivalRecord(float(t), bool(d), tuple(float(v) for v in x))
            for t, d, x in zip(self.time, self.event, self.X)
        ]

    @classmethod
    def from_records(cls, records: Sequence[SurvivalRecord], p: Optional[int] = None):
        records = list(records)
        if p is None:
            p = len(records[0].covariates) if records else 0
        for i, record in enumerate(records):
            if len(record.covariates) != p:
                raise DimensionMismatch(
                    f"record {i} has {len(record.covariates)} covariates, dataset declares p={p}"
                )
        X = np.array([r.covariates for r in records], dtype=float).reshape(len(records), p)
        return cls(
            time=[r.time for r in records],
            event=[r.event for r in records],
            X=X,
        )

    def take(self, indices):
        indices = np.asarray(indices)
        return SurvivalDataset(self.time[indices], self.event[indices], self.X[indices])

    def with_covariates(self, X):
        return SurvivalDataset(self.time, self.event, X)

    def __len__(self):
        return self.n


@dataclass(frozen=True, eq=False)
class KaplanMeierCurve:
    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    n_events: np.ndarray

    def evaluate(self, t):
        """Right-continuous step lookup; 1 before the first event time."""
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        values = np.where(idx >= 0, self.survival[np.clip(idx, 0, None)], 1.0)
        return values if values.ndim else float(values)


def validate_dataset(ds: SurvivalDataset, require_events=True) -> SurvivalDataset:
    """
    Checks the dataset invariants and returns a copy sorted ascending by time
    (stable for ties).
    """
    if ds.event.shape[0] != ds.n or ds.X.shape[0] != ds.n:
        raise DimensionMismatch(
            f"time has {ds.n} rows, event has {ds.event.shape[0]}, covariates have {ds.X.shape[0]}"
        )
    bad = ~np.isfinite(ds.time) | (ds.time < 0)
    if bad.any():
        first = int(np.flatnonzero(bad)[0])
        raise NonFiniteTime(f"record {first} has invalid time {ds.time[first]!r}")
    if ds.X.size and not np.isfinite(ds.X).all():
        first = int(np.flatnonzero(~np.isfinite(ds.X).all(axis=1))[0])
        raise DataError(f"record {first} has a non-finite covariate")
    if require_events and not ds.event.any():
        raise NoEvents("dataset contains no observed events")
    order = np.argsort(ds.time, kind="stable")
    return ds.take(order)


def risk_set(ds: SurvivalDataset, t: float) -> np.ndarray:
    """Indices i with T_i >= t."""
    return np.flatnonzero(ds.time >= t)


def unique_event_times(ds: SurvivalDataset) -> np.ndarray:
    if not ds.event.any():
        raise NoEvents("dataset contains no observed events")
    return np.unique(ds.time[ds.event])


def kaplan_meier(ds: SurvivalDataset) -> KaplanMeierCurve:
    """
    Product-limit estimator evaluated at each unique event time. Subjects
    censored at an event time are still counted at risk there.
    """
    times = unique_event_times(ds)
    sorted_time = np.sort(ds.time)
    at_risk = ds.time.shape[0] - np.searchsorted(sorted_time, times, side="left")
    event_sorted = np.sort(ds.time[ds.event])
    n_events = np.searchsorted(event_sorted, times, side="right") - np.searchsorted(
        event_sorted, times, side="left"
    )
    survival = np.cumprod(1.0 - n_events / at_risk)
    survival = np.clip(survival, 0.0, 1.0)
    return KaplanMeierCurve(
        times=_frozen(times, float),
        survival=_frozen(survival, float),
        at_risk=_frozen(at_risk, int),
        n_events=_frozen(n_events, int),
    )


def event_time_summary(ds: SurvivalDataset) -> dict:
    """Censoring fraction and event/censoring time quantiles of one sample."""
    event_times = ds.time[ds.event]
    censor_times = ds.time[~ds.event]
    quantiles = [0.1, 0.25, 0.5, 0.75, 0.9]
    return {
        "n": ds.n,
        "n_events": int(ds.event.sum()),
        "censoring_fraction": float(1.0 - ds.event.mean()) if ds.n else float("nan"),
        "median_event_time": float(np.median(event_times)) if event_times.size else float("nan"),
        "event_time_quantiles": (
            dict(zip(quantiles, np.quantile(event_times, quantiles).tolist())) if event_times.size else {}
        ),
        "censoring_time_quantiles": (
            dict(zip(quantiles, np.quantile(censor_times, quantiles).tolist())) if censor_times.size else {}
        ),
    }
