"""Ten-day egg production forecasting from farm records, climate and activity indicators.

Features are computed for a forecast day ``D`` from trailing windows that
end on ``D-1``; the target is the mean per-bird lay rate over ``D+1 .. D+10``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import Callable, Iterable, Sequence

import numpy as np

from .alerting.band import IndicatorSample
from .envforecast import HOUR, HourlySeries, fit_ols

log = logging.getLogger(__name__)

N_FEATURES = 40
FEATURE_NAMES = tuple(f"f{i}" for i in range(1, N_FEATURES + 1))
USED = ("f1", "f4", "f7", "f8", "f10", "f14", "f15", "f17", "f19", "f20", "f28", "f30", "f31", "f32", "f33")
TARGET_DAYS = 10
PERIODS = ("feeding", "night", "rest")
CHANNELS = ("audio", "video")


class InsufficientHistory(ValueError):
    pass


@dataclass(frozen=True)
class DailyRecord:
    day: date
    eggs: int
    deaths: int
    flock_size: int
    age_weeks: float

    def __post_init__(self):
        if self.eggs < 0 or self.deaths < 0 or self.flock_size < 0:
            raise ValueError(f"{self.day}: counts must be non-negative")


@dataclass(frozen=True)
class EnvDay:
    day: date
    temp_avg: float
    temp_max: float
    temp_min: float
    hum_avg: float
    hum_max: float
    hum_min: float


def env_days(series: HourlySeries) -> dict[date, EnvDay]:
    """Daily mean/max/min of the hourly series, skipping gap hours."""
    out = {}
    if len(series) == 0:
        return out
    days = np.array([datetime.fromtimestamp(int(h), tz=timezone.utc).date() for h in series.hours])
    for d in sorted(set(days)):
        sel = days == d
        t = series.temperature[sel]
        h = series.humidity[sel]
        t, h = t[~np.isnan(t)], h[~np.isnan(h)]
        if len(t) and len(h):
            out[d] = EnvDay(d, float(t.mean()), float(t.max()), float(t.min()),
                            float(h.mean()), float(h.max()), float(h.min()))
    return out


def _minute(text: str) -> int:
    hh, mm = text.split(":")
    m = int(hh) * 60 + int(mm)
    if not 0 <= m <= 1440:
        raise ValueError(f"time of day {text!r} out of range")
    return m


def _in_span(m: int, start: int, end: int) -> bool:
    return start <= m < end if start <= end else (m >= start or m < end)


@dataclass(frozen=True)
class PeriodSchedule:
    """Feeding intervals and the lights-off span as ``HH:MM`` pairs; everything else is rest."""

    feeding: tuple[tuple[str, str], ...] = (("06:00", "07:00"), ("16:00", "17:00"))
    night: tuple[str, str] = ("20:00", "05:00")

    def period_of(self, minute_of_day: int) -> str:
        if any(_in_span(minute_of_day, _minute(a), _minute(b)) for a, b in self.feeding):
            return "feeding"
        if _in_span(minute_of_day, _minute(self.night[0]), _minute(self.night[1])):
            return "night"
        return "rest"

    @classmethod
    def from_dict(cls, d: dict) -> PeriodSchedule:
        sched = cls(tuple(tuple(p) for p in d.get("feeding", cls.feeding)), tuple(d.get("night", cls.night)))
        for p in list(sched.feeding) + [sched.night]:
            if len(p) != 2:
                raise ValueError(f"period {p!r} needs a start and an end")
            _minute(p[0]), _minute(p[1])
        return sched


@dataclass
class IndicatorDay:
    day: date
    values: dict[tuple[str, str], np.ndarray] = field(default_factory=dict)  # (channel, period) -> samples

    def get(self, channel: str, period: str | None = None) -> np.ndarray:
        if period is None:
            parts = [self.values.get((channel, p), np.empty(0)) for p in PERIODS]
            return np.concatenate(parts)
        return self.values.get((channel, period), np.empty(0))


def indicator_days(samples: Iterable[IndicatorSample], schedule: PeriodSchedule = PeriodSchedule()
                   ) -> dict[date, IndicatorDay]:
    buckets: dict[tuple[date, str, str], list[float]] = {}
    period_cache = {}
    for s in samples:
        dt = datetime.fromtimestamp(s.timestamp, tz=timezone.utc)
        m = dt.hour * 60 + dt.minute
        if m not in period_cache:
            period_cache[m] = schedule.period_of(m)
        buckets.setdefault((dt.date(), s.channel, period_cache[m]), []).append(s.value)
    out: dict[date, IndicatorDay] = {}
    for (d, ch, p), vals in sorted(buckets.items()):
        out.setdefault(d, IndicatorDay(d)).values[(ch, p)] = np.array(vals)
    return out


@dataclass
class ProductionData:
    records: dict[date, DailyRecord]
    env: dict[date, EnvDay] = field(default_factory=dict)
    indicators: dict[date, IndicatorDay] = field(default_factory=dict)

    @classmethod
    def build(cls, records: Sequence[DailyRecord], env=None, indicators=None) -> ProductionData:
        days = [r.day for r in records]
        if len(set(days)) != len(days):
            raise ValueError("duplicate production dates")
        if days != sorted(days):
            raise ValueError("production records must be in date order")
        return cls({r.day: r for r in records}, dict(env or {}), dict(indicators or {}))

    @property
    def days(self) -> list[date]:
        return sorted(self.records)


@dataclass
class FeatureVector:
    day: date
    values: np.ndarray  # 40 entries, NaN where absent
    reasons: dict[str, str] = field(default_factory=dict)

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])

    def select(self, names: Sequence[str]) -> np.ndarray:
        return np.array([self[n] for n in names])

    def missing(self, names: Sequence[str] = FEATURE_NAMES) -> list[str]:
        return [n for n in names if n in self.reasons]


# --- feature definitions -------------------------------------------------------

def _window(D: date, k: int) -> list[date]:
    return [D - timedelta(days=i) for i in range(k, 0, -1)]


class _Ctx:
    def __init__(self, data: ProductionData, D: date):
        self.data, self.D = data, D
        self.first = {
            "production": min(data.records) if data.records else None,
            "sensor": min(data.env) if data.env else None,
            "audio/video": min(data.indicators) if data.indicators else None,
        }

    def covered(self, source: str, k: int) -> str | None:
        first = self.first[source]
        if first is None:
            return f"no {source} data"
        if self.D - timedelta(days=k) < first:
            return f"needs {k} days of {source} history before {self.D}"
        return None


def _env(attr: str):
    def f(c: _Ctx):
        why = c.covered("sensor", 1)
        if why:
            return None, why
        e = c.data.env.get(c.D - timedelta(days=1))
        return (getattr(e, attr), None) if e else (None, f"no climate data for {c.D - timedelta(days=1)}")
    return f


def _record_mean(attr: str, k: int):
    def f(c: _Ctx):
        why = c.covered("production", k)
        if why:
            return None, why
        vals = [getattr(c.data.records[d], attr) for d in _window(c.D, k) if d in c.data.records]
        return (float(np.mean(vals)), None) if vals else (None, f"no production records in the past {k} days")
    return f


def _pooled(channel: str, k: int, period: str | None, reduce: str = "mean"):
    def f(c: _Ctx):
        why = c.covered("audio/video", k)
        if why:
            return None, why
        parts = [c.data.indicators[d].get(channel, period) for d in _window(c.D, k) if d in c.data.indicators]
        vals = np.concatenate(parts) if parts else np.empty(0)
        if len(vals) == 0:
            return None, f"no {channel} samples for {period or 'whole day'} in the past {k} days"
        if reduce == "mean":
            return float(vals.mean()), None
        s = np.sort(vals)
        return float((s[-5:] if reduce == "top5" else s[:5]).mean()), None
    return f


def _age(c: _Ctx):
    prior = [d for d in c.data.records if d < c.D]
    if not prior:
        return None, "no production record before the forecast day"
    last = max(prior)
    return c.data.records[last].age_weeks + (c.D - last).days / 7.0, None


def _flock(c: _Ctx):
    prev = c.data.records.get(c.D - timedelta(days=1))
    return (float(prev.flock_size), None) if prev else (None, f"no production record for {c.D - timedelta(days=1)}")


FeatureFn = Callable[[_Ctx], tuple]
FEATURES: dict[str, tuple[str, str, FeatureFn]] = {
    "f1": ("Avg temp (prev day)", "sensor", _env("temp_avg")),
    "f2": ("Max temp (prev day)", "sensor", _env("temp_max")),
    "f3": ("Min temp (prev day)", "sensor", _env("temp_min")),
    "f4": ("Avg humidity (prev day)", "sensor", _env("hum_avg")),
    "f5": ("Max humidity (prev day)", "sensor", _env("hum_max")),
    "f6": ("Min humidity (prev day)", "sensor", _env("hum_min")),
    "f7": ("Chicken age (weeks)", "production", _age),
    "f8": ("Avg audio (past 15 days)", "audio/video", _pooled("audio", 15, None)),
    "f9": ("Avg video (past 15 days)", "audio/video", _pooled("video", 15, None)),
    "f10": ("Avg audio (past 7 days)", "audio/video", _pooled("audio", 7, None)),
    "f11": ("Avg video (past 7 days)", "audio/video", _pooled("video", 7, None)),
    "f12": ("Avg audio (past 3 days)", "audio/video", _pooled("audio", 3, None)),
    "f13": ("Avg video (past 3 days)", "audio/video", _pooled("video", 3, None)),
    "f14": ("Egg prod avg (past 7 days)", "production", _record_mean("eggs", 7)),
    "f15": ("Egg prod avg (past 3 days)", "production", _record_mean("eggs", 3)),
    "f16": ("Dead chickens avg (past 7 days)", "production", _record_mean("deaths", 7)),
    "f17": ("Dead chickens avg (past 3 days)", "production", _record_mean("deaths", 3)),
    "f18": ("Audio during feed (past 7 days)", "audio/video", _pooled("audio", 7, "feeding")),
    "f19": ("Video during feed (past 7 days)", "audio/video", _pooled("video", 7, "feeding")),
    "f20": ("Audio during feed (past 3 days)", "audio/video", _pooled("audio", 3, "feeding")),
    "f21": ("Video during feed (past 3 days)", "audio/video", _pooled("video", 3, "feeding")),
    "f22": ("Audio at night (past 7 days)", "audio/video", _pooled("audio", 7, "night")),
    "f23": ("Video at night (past 7 days)", "audio/video", _pooled("video", 7, "night")),
    "f24": ("Audio at night (past 3 days)", "audio/video", _pooled("audio", 3, "night")),
    "f25": ("Video at night (past 3 days)", "audio/video", _pooled("video", 3, "night")),
    "f26": ("Audio at rest (past 7 days)", "audio/video", _pooled("audio", 7, "rest")),
    "f27": ("Video at rest (past 7 days)", "audio/video", _pooled("video", 7, "rest")),
    "f28": ("Audio at rest (past 3 days)", "audio/video", _pooled("audio", 3, "rest")),
    "f29": ("Video at rest (past 3 days)", "audio/video", _pooled("video", 3, "rest")),
    "f30": ("Top-5 audio feed (past 3 days)", "audio/video", _pooled("audio", 3, "feeding", "top5")),
    "f31": ("Top-5 video feed (past 3 days)", "audio/video", _pooled("video", 3, "feeding", "top5")),
    "f32": ("Low-5 audio feed (past 3 days)", "audio/video", _pooled("audio", 3, "feeding", "low5")),
    "f33": ("Low-5 video feed (past 3 days)", "audio/video", _pooled("video", 3, "feeding", "low5")),
    "f34": ("Top-5 audio night (past 3 days)", "audio/video", _pooled("audio", 3, "night", "top5")),
    "f35": ("Top-5 video night (past 3 days)", "audio/video", _pooled("video", 3, "night", "top5")),
    "f36": ("Top-5 audio rest (past 3 days)", "audio/video", _pooled("audio", 3, "rest", "top5")),
    "f37": ("Top-5 video rest (past 3 days)", "audio/video", _pooled("video", 3, "rest", "top5")),
    "f38": ("Low-5 audio rest (past 3 days)", "audio/video", _pooled("audio", 3, "rest", "low5")),
    "f39": ("Low-5 video rest (past 3 days)", "audio/video", _pooled("video", 3, "rest", "low5")),
    "f40": ("Number of chickens", "production", _flock),
}
SOURCES = ("production", "sensor", "audio/video")


def features_from(source_set: Iterable[str], mask: Sequence[str] = USED) -> tuple[str, ...]:
    allowed = set(source_set)
    return tuple(n for n in mask if FEATURES[n][1] in allowed)


def build_features(data: ProductionData, D: date, required: Sequence[str] = ()) -> FeatureVector:
    """All 40 features for forecast day ``D``; absent ones are NaN with a recorded reason.

    Raises :class:`InsufficientHistory` listing every feature in ``required``
    that could not be computed.
    """
    ctx = _Ctx(data, D)
    vals = np.full(N_FEATURES, np.nan)
    reasons = {}
    for i, name in enumerate(FEATURE_NAMES):
        v, why = FEATURES[name][2](ctx)
        if v is None:
            reasons[name] = why
        else:
            vals[i] = v
    fv = FeatureVector(D, vals, reasons)
    missing = fv.missing(required)
    if missing:
        raise InsufficientHistory("cannot compute " + "; ".join(f"{n} ({reasons[n]})" for n in missing))
    return fv


def target_rate(data: ProductionData, D: date, days: int = TARGET_DAYS) -> float | None:
    """Mean per-bird lay rate over D+1 .. D+days, over the days that have records."""
    recs = [data.records.get(D + timedelta(days=i)) for i in range(1, days + 1)]
    rates = [r.eggs / r.flock_size for r in recs if r is not None and r.flock_size > 0]
    if not rates:
        return None
    if len(rates) < days:
        log.info("target for %s averages %d of %d days", D, len(rates), days)
    return float(np.mean(rates))


@dataclass
class Sample:
    day: date
    features: FeatureVector
    target: float


def make_samples(data: ProductionData, names: Sequence[str] = USED) -> list[Sample]:
    out = []
    for D in data.days:
        try:
            fv = build_features(data, D, required=names)
        except InsufficientHistory:
            continue
        y = target_rate(data, D)
        if y is not None:
            out.append(Sample(D, fv, y))
    return out


def chronological_split(samples: Sequence[Sample], train_fraction: float = 0.8,
                        horizon: int = TARGET_DAYS) -> tuple[list[Sample], list[Sample]]:
    """First ``train_fraction`` of samples train, the rest test.

    Training samples whose target window reaches the first test day are
    dropped so no test-period day informs training.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    k = int(len(samples) * train_fraction)
    test = list(samples[k:])
    if not test:
        return list(samples), []
    first = test[0].day
    train = [s for s in samples[:k] if s.day + timedelta(days=horizon) < first]
    return train, test


# --- model ----------------------------------------------------------------------

@dataclass
class ProductionModel:
    features: tuple[str, ...]
    weights: np.ndarray
    intercept: float
    rank_deficient: bool = False

    def predict_rate(self, fv: FeatureVector) -> float:
        return float(fv.select(self.features) @ self.weights + self.intercept)

    def to_dict(self) -> dict:
        return {"features": list(self.features), "weights": [float(w) for w in self.weights],
                "intercept": self.intercept, "rank_deficient": self.rank_deficient}

    @classmethod
    def from_dict(cls, d: dict) -> ProductionModel:
        return cls(tuple(d["features"]), np.asarray(d["weights"], dtype=np.float64), float(d["intercept"]),
                   bool(d.get("rank_deficient", False)))


def fit_production_model(samples: Sequence[Sample], features: Sequence[str] = USED) -> ProductionModel:
    X = np.array([s.features.select(features) for s in samples]).reshape(len(samples), len(features))
    y = np.array([s.target for s in samples])
    fit = fit_ols(X, y)
    return ProductionModel(tuple(features), fit.coef, fit.intercept, fit.rank_deficient)


def fit_arrays(X, y, features: Sequence[str] = USED) -> ProductionModel:
    fit = fit_ols(X, y)
    return ProductionModel(tuple(features), fit.coef, fit.intercept, fit.rank_deficient)


@dataclass(frozen=True)
class Productivity:
    eggs_10day_avg: float
    per_bird: float
    anomalous: bool


def productivity_from_eggs(eggs_per_day: float, flock_size: int) -> Productivity:
    """Per-bird rate of a daily egg count; rates outside [0, 1] are flagged, not clamped."""
    if flock_size <= 0:
        raise ValueError(f"flock size must be positive, got {flock_size}")
    rate = eggs_per_day / flock_size
    return Productivity(float(eggs_per_day), float(rate), not 0.0 <= rate <= 1.0)


def predict_productivity(model: ProductionModel, features: FeatureVector, flock_size: int) -> Productivity:
    if flock_size <= 0:
        raise ValueError(f"flock size must be positive, got {flock_size}")
    return productivity_from_eggs(model.predict_rate(features) * flock_size, flock_size)


def evaluate_mae(predicted: Sequence[float], actual: Sequence[float]) -> float:
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.shape != a.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {a.shape}")
    if p.size == 0:
        raise ValueError("need at least one value")
    return float(np.mean(np.abs(p - a)))


# --- feed cost --------------------------------------------------------------------

@dataclass(frozen=True)
class FeedPurchase:
    month: str  # YYYY-MM
    kg: float
    cost: float

    def __post_init__(self):
        datetime.strptime(self.month, "%Y-%m")
        if self.kg < 0 or self.cost < 0:
            raise ValueError(f"{self.month}: quantity and cost must be non-negative")


@dataclass
class FeedLedger:
    purchases: list[FeedPurchase]
    cycle_start: date


@dataclass(frozen=True)
class CostReport:
    daily_feed_kg: float
    daily_feed_cost: float
    cost_per_egg: float | None
    status: str  # "ok" | "no-data" | "undefined"

    def to_dict(self) -> dict:
        return {"daily_feed_kg": self.daily_feed_kg, "daily_feed_cost": self.daily_feed_cost,
                "cost_per_egg": self.cost_per_egg, "status": self.status}


def cost_per_egg(ledger: FeedLedger, today: date, predicted_daily_eggs: float) -> CostReport:
    """Cycle-average daily feed use and cost; the start day counts as day one."""
    elapsed = (today - ledger.cycle_start).days + 1
    if elapsed < 1:
        raise ValueError(f"{today} precedes the cycle start {ledger.cycle_start}")
    lo, hi = ledger.cycle_start.strftime("%Y-%m"), today.strftime("%Y-%m")
    bought = [p for p in ledger.purchases if lo <= p.month <= hi]
    if not bought:
        return CostReport(0.0, 0.0, 0.0, "no-data")
    kg = sum(p.kg for p in bought) / elapsed
    cost = sum(p.cost for p in bought) / elapsed
    if predicted_daily_eggs <= 0:
        return CostReport(kg, cost, None, "undefined")
    return CostReport(kg, cost, cost / predicted_daily_eggs, "ok")


# --- data-source ablation -----------------------------------------------------------

ABLATION = (
    ("production", ("production",)),
    ("production+sensor", ("production", "sensor")),
    ("production+sensor+audio/video", SOURCES),
)


@dataclass
class AblationRow:
    data: str
    model: str
    available: dict[str, bool]
    used: dict[str, bool]
    mae: float
    n_train: int
    n_test: int

    def to_dict(self) -> dict:
        return {"data": self.data, "model": self.model, "available": self.available, "used": self.used,
                "mae": self.mae, "n_train": self.n_train, "n_test": self.n_test}


def ablation_grid(data: ProductionData, *, label: str = "dataset", mask: Sequence[str] = USED,
                  train_fraction: float = 0.8) -> list[AblationRow]:
    """Test MAE per data-source configuration on one shared chronological split.

    Samples are restricted to days where the full masked feature set exists,
    so every configuration is scored on the same test days.
    """
    samples = make_samples(data, mask)
    train, test = chronological_split(samples, train_fraction)
    if not train or not test:
        raise InsufficientHistory(f"{len(samples)} usable samples are too few for a train/test split")
    available = {"production": bool(data.records), "sensor": bool(data.env),
                 "audio/video": bool(data.indicators)}
    rows = []
    for _, used_sources in ABLATION:
        names = features_from(used_sources, mask)
        model = fit_production_model(train, names)
        mae = evaluate_mae([model.predict_rate(s.features) for s in test], [s.target for s in test])
        rows.append(AblationRow(label, "Linear Regression", dict(available),
                                {s: s in used_sources for s in SOURCES}, mae, len(train), len(test)))
    return rows


def format_ablation(rows: Sequence[AblationRow]) -> str:
    def mark(b: bool) -> str:
        return "yes" if b else "no"
    head = ["Data", "Model", "Prod avail", "Prod used", "Sensor avail", "Sensor used",
            "AV avail", "AV used", "Test MAE"]
    lines = ["\t".join(head)]
    for r in rows:
        flags = [mark(r.available[s]) + "\t" + mark(r.used[s]) for s in SOURCES]
        lines.append("\t".join([r.data, r.model] + flags + [f"{r.mae:.4f}"]))
    return "\n".join(lines)


def forecast_report(model: ProductionModel, data: ProductionData, D: date, ledger: FeedLedger | None) -> dict:
    fv = build_features(data, D, required=model.features)
    flock = int(fv["f40"]) if not math.isnan(fv["f40"]) else data.records[max(data.records)].flock_size
    prod = predict_productivity(model, fv, flock)
    out = {"day": D.isoformat(), "eggs_10day_avg": prod.eggs_10day_avg, "per_bird": prod.per_bird,
           "per_bird_anomalous": prod.anomalous, "flock_size": flock}
    if ledger is not None:
        out["feed"] = cost_per_egg(ledger, D, prod.eggs_10day_avg).to_dict()
    return out


def dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True)
