"""Hourly aggregation of temperature/humidity sensors and iterative OLS forecasting.

A forecast row for hour ``t`` holds the ``L`` preceding values (most recent
first), optionally followed by the same-hour-of-day means over the past 3, 7
and 14 days.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Sequence

import numpy as np

HOUR = 3600
PROFILE_DAYS = (3, 7, 14)
TARGETS = ("temperature", "humidity")


class InsufficientHistory(ValueError):
    pass


@dataclass(frozen=True)
class SensorReading:
    timestamp: float
    sensor_id: str
    temperature: float
    humidity: float


def _iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class HourlySeries:
    """Consecutive hours from ``start``; NaN marks a gap hour."""

    start: int
    temperature: np.ndarray
    humidity: np.ndarray

    def __len__(self) -> int:
        return len(self.temperature)

    @property
    def hours(self) -> np.ndarray:
        return self.start + HOUR * np.arange(len(self), dtype=np.int64)

    def values(self, target: str) -> np.ndarray:
        if target not in TARGETS:
            raise ValueError(f"unknown target {target!r}")
        return self.temperature if target == "temperature" else self.humidity

    def index_of(self, hour: int) -> int:
        if (hour - self.start) % HOUR:
            raise ValueError(f"{hour} is not aligned to the series hour grid")
        return (hour - self.start) // HOUR

    def hour_at(self, index: int) -> int:
        return self.start + HOUR * index

    @property
    def gaps(self) -> np.ndarray:
        return np.isnan(self.temperature) & np.isnan(self.humidity)

    @classmethod
    def from_values(cls, start: int, temperature, humidity=None) -> HourlySeries:
        t = np.asarray(temperature, dtype=np.float64)
        h = np.asarray(humidity if humidity is not None else np.full(t.shape, np.nan), dtype=np.float64)
        return cls(int(start), t, h)


def aggregate_hourly(readings: Iterable[SensorReading]) -> HourlySeries:
    """Per sensor and hour take the mean reading; per hour take the median across sensors."""
    rows = list(readings)
    if not rows:
        return HourlySeries(0, np.empty(0), np.empty(0))
    ts = np.array([r.timestamp for r in rows], dtype=np.float64)
    hour = (np.floor(ts / HOUR) * HOUR).astype(np.int64)
    sensors = {s: i for i, s in enumerate(sorted({r.sensor_id for r in rows}))}
    sid = np.array([sensors[r.sensor_id] for r in rows], dtype=np.int64)
    temp = np.array([r.temperature for r in rows], dtype=np.float64)
    hum = np.array([r.humidity for r in rows], dtype=np.float64)

    start, stop = int(hour.min()), int(hour.max())
    n_hours = (stop - start) // HOUR + 1
    slot = (hour - start) // HOUR * len(sensors) + sid
    size = n_hours * len(sensors)
    # sums in sorted-slot order so the result does not depend on reading order
    order = np.lexsort((temp, hum, slot))
    count = np.bincount(slot, minlength=size)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_t = np.bincount(slot[order], weights=temp[order], minlength=size) / count
        mean_h = np.bincount(slot[order], weights=hum[order], minlength=size) / count
    mean_t = mean_t.reshape(n_hours, len(sensors))
    mean_h = mean_h.reshape(n_hours, len(sensors))
    out_t = np.full(n_hours, np.nan)
    out_h = np.full(n_hours, np.nan)
    for i in range(n_hours):
        present = ~np.isnan(mean_t[i])
        if present.any():
            out_t[i] = np.median(mean_t[i, present])
            out_h[i] = np.median(mean_h[i, present])
    return HourlySeries(start, out_t, out_h)


@dataclass
class ForecastModel:
    target: str
    lookback: int
    use_profile: bool
    weights: np.ndarray = field(default_factory=lambda: np.empty(0))
    intercept: float = 0.0
    rank_deficient: bool = False

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"unknown target {self.target!r}")
        if not 1 <= self.lookback <= 5:
            raise ValueError("lookback must lie in [1, 5]")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.size and self.weights.size != self.n_features:
            raise ValueError(f"expected {self.n_features} weights, got {self.weights.size}")

    @property
    def n_features(self) -> int:
        return self.lookback + (len(PROFILE_DAYS) if self.use_profile else 0)

    def predict_row(self, row: np.ndarray) -> float:
        return float(np.dot(self.weights, row) + self.intercept)

    def to_dict(self) -> dict:
        return {"target": self.target, "lookback": self.lookback, "use_profile": self.use_profile,
                "weights": [float(w) for w in self.weights], "intercept": float(self.intercept)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> ForecastModel:
        return cls(d["target"], int(d["lookback"]), bool(d["use_profile"]),
                   np.asarray(d["weights"], dtype=np.float64), float(d["intercept"]))


def _profile(values: np.ndarray, i: int) -> list[float]:
    out = []
    for days in PROFILE_DAYS:
        idx = i - 24 * np.arange(1, days + 1)
        idx = idx[idx >= 0]
        got = values[idx]
        got = got[~np.isnan(got)]
        out.append(float(got.mean()) if got.size else math.nan)
    return out


def _row(values: np.ndarray, i: int, lookback: int, use_profile: bool,
         lags: dict[int, float] | None = None) -> np.ndarray | None:
    """Feature row for index ``i``; ``lags`` overrides lag values by index (rollout)."""
    if i - lookback < 0:
        return None
    lag = []
    for k in range(1, lookback + 1):
        j = i - k
        v = lags[j] if lags is not None and j in lags else values[j]
        if math.isnan(v):
            return None
        lag.append(v)
    if not use_profile:
        return np.array(lag)
    prof = [lag[0] if math.isnan(p) else p for p in _profile(values, i)]
    return np.array(lag + prof)


def _earliest_usable(values: np.ndarray, lookback: int) -> int | None:
    ok = ~np.isnan(values)
    run = 0
    for j in range(len(values)):
        if run >= lookback:
            return j
        run = run + 1 if ok[j] else 0
    return len(values) if run >= lookback else None


def build_features(series: HourlySeries, t: int, model: ForecastModel) -> np.ndarray:
    """Feature row for forecasting hour ``t`` (epoch seconds) with ``model``'s layout."""
    values = series.values(model.target)
    i = series.index_of(t)
    row = _row(values, i, model.lookback, model.use_profile) if 0 <= i <= len(values) else None
    if row is None:
        first = _earliest_usable(values, model.lookback)
        where = _iso(series.hour_at(first)) if first is not None else "none (no run of complete hours)"
        raise InsufficientHistory(
            f"need {model.lookback} complete hours before {_iso(t)}; earliest usable hour is {where}")
    return row


@dataclass
class OLSFit:
    coef: np.ndarray
    intercept: float
    rank: int
    rank_deficient: bool


def fit_ols(rows, targets) -> OLSFit:
    """Least squares with an unpenalized intercept.

    Rank-deficient designs get the minimum-norm coefficient vector (equal
    split across duplicated columns) and are flagged.
    """
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"design {X.shape} does not match {y.shape[0]} targets")
    if X.shape[0] < X.shape[1]:
        raise ValueError(f"need at least as many rows as columns, got {X.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("design and targets must be finite")
    xm, ym = X.mean(axis=0), y.mean()
    coef, _, rank, _ = np.linalg.lstsq(X - xm, y - ym, rcond=None)
    return OLSFit(coef, float(ym - xm @ coef), int(rank), bool(rank < X.shape[1]))


def training_pairs(series: HourlySeries, model: ForecastModel, stop: int | None = None,
                   start: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """One sample per target index in [start, stop) with a complete row and an observed target."""
    values = series.values(model.target)
    stop = len(values) if stop is None else stop
    X, y = [], []
    for i in range(max(start, model.lookback), stop):
        if math.isnan(values[i]):
            continue
        row = _row(values, i, model.lookback, model.use_profile)
        if row is not None:
            X.append(row)
            y.append(values[i])
    return np.array(X).reshape(len(X), model.n_features), np.array(y)


def fit_forecast_model(series: HourlySeries, target: str, lookback: int, use_profile: bool,
                       stop: int | None = None) -> ForecastModel:
    model = ForecastModel(target, lookback, use_profile)
    X, y = training_pairs(series, model, stop)
    fit = fit_ols(X, y)
    model.weights, model.intercept, model.rank_deficient = fit.coef, fit.intercept, fit.rank_deficient
    return model


def forecast_iterative(model: ForecastModel, series: HourlySeries, t0: int, horizon: int) -> list[float]:
    """Predict hours t0 .. t0+horizon-1, feeding each prediction back as a lag.

    Profile features are always taken from observed history.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    build_features(series, t0, model)  # raises with the earliest usable hour
    values = series.values(model.target)
    i0 = series.index_of(t0)
    padded = values if i0 + horizon <= len(values) else np.concatenate(
        [values, np.full(i0 + horizon - len(values), np.nan)])
    preds: dict[int, float] = {}
    out = []
    for k in range(horizon):
        row = _row(padded, i0 + k, model.lookback, model.use_profile, preds)
        yhat = model.predict_row(row)
        preds[i0 + k] = yhat
        out.append(yhat)
    return out


def evaluate_rmse(predicted: Sequence[float], actual: Sequence[float]) -> float:
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ValueError("need at least one value")
    return float(np.sqrt(np.mean((p - a) ** 2)))


@dataclass
class GridRow:
    target: str
    use_profile: bool
    lookback: int
    horizon: int
    rmse: float
    n_test: int


def grid_search(series: HourlySeries, *, targets=TARGETS, profiles=(False, True),
                lookbacks=range(1, 6), horizons=(2, 3, 4, 5), train_fraction: float = 0.8) -> list[GridRow]:
    """Chronological train/test evaluation of every forecaster configuration.

    The RMSE at horizon ``h`` scores the h-th step of each iterative rollout,
    one rollout per test-period origin hour.
    """
    split = int(len(series) * train_fraction)
    rows = []
    for target in targets:
        values = series.values(target)
        for use_profile in profiles:
            for L in lookbacks:
                model = fit_forecast_model(series, target, L, use_profile, stop=split)
                H = max(horizons)
                preds = {h: [] for h in horizons}
                actual = {h: [] for h in horizons}
                for i0 in range(split, len(values)):
                    if _row(values, i0, L, use_profile) is None:
                        continue
                    fc = forecast_iterative(model, series, series.hour_at(i0), min(H, len(values) - i0))
                    for h in horizons:
                        if h <= len(fc) and not math.isnan(values[i0 + h - 1]):
                            preds[h].append(fc[h - 1])
                            actual[h].append(values[i0 + h - 1])
                for h in horizons:
                    rmse = evaluate_rmse(preds[h], actual[h]) if preds[h] else math.nan
                    rows.append(GridRow(target, use_profile, L, h, rmse, len(preds[h])))
    return rows


def format_grid(rows: list[GridRow]) -> str:
    """Render grid results as a table: one line per (profile, look-back), T/H per horizon."""
    horizons = sorted({r.horizon for r in rows})
    targets = [t for t in TARGETS if any(r.target == t for r in rows)]
    key = {(r.target, r.use_profile, r.lookback, r.horizon): r.rmse for r in rows}
    head = ["Model", "Profile", "Look-back"] + [f"{h}h {t[0].upper()}" for h in horizons for t in targets]
    lines = ["\t".join(head)]
    for prof in sorted({r.use_profile for r in rows}):
        for L in sorted({r.lookback for r in rows}):
            cells = [f"{key.get((t, prof, L, h), math.nan):.2f}" for h in horizons for t in targets]
            lines.append("\t".join(["Linear Regression", "yes" if prof else "no", f"{L} h"] + cells))
    return "\n".join(lines)
