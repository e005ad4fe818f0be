"""Per-minute-of-day dynamic thresholds for audio/video activity indicators.

For minute ``m`` every sample within 60 minutes (circularly, across all days)
is pooled with weight ``1 - |dt|/60``. The band center is the weighted mean;
the upper and lower bounds are the weighted 95th and 25th percentiles of the
same pool.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .thresholds import INDICATOR_HIGH, INDICATOR_LOW, Alert

MINUTES = 1440
WINDOW = 60
UPPER_Q = 0.95
LOWER_Q = 0.25
CHANNELS = ("audio", "video")


@dataclass(frozen=True)
class IndicatorSample:
    timestamp: float
    channel: str
    value: float

    def __post_init__(self):
        if not (math.isfinite(self.value) and self.value >= 0):
            raise ValueError(f"indicator value must be finite and non-negative, got {self.value}")

    @property
    def minute(self) -> int:
        return int(self.timestamp // 60) % MINUTES


@dataclass
class DynamicBand:
    channel: str
    center: np.ndarray
    upper: np.ndarray
    lower: np.ndarray

    def to_dict(self) -> dict:
        return {"channel": self.channel,
                "center": [float(v) for v in self.center],
                "upper": [float(v) for v in self.upper],
                "lower": [float(v) for v in self.lower]}

    @classmethod
    def from_dict(cls, d: dict) -> DynamicBand:
        arrs = [np.asarray(d[k], dtype=np.float64) for k in ("center", "upper", "lower")]
        if any(a.shape != (MINUTES,) for a in arrs):
            raise ValueError(f"band arrays must have {MINUTES} entries")
        return cls(d["channel"], *arrs)


def save_bands(bands: dict[str, DynamicBand]) -> str:
    return json.dumps({"bands": {ch: b.to_dict() for ch, b in sorted(bands.items())}}, indent=1)


def load_bands(text: str) -> dict[str, DynamicBand]:
    data = json.loads(text)
    return {ch: DynamicBand.from_dict(d) for ch, d in data["bands"].items()}


def window_weight(delta_minutes) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.abs(delta_minutes) / WINDOW)


def circular_delta(a, b) -> np.ndarray:
    d = (np.asarray(a) - np.asarray(b)) % MINUTES
    return np.where(d > MINUTES // 2, d - MINUTES, d)


def weighted_percentile(values: np.ndarray, weights: np.ndarray, q: float) -> float:
    """First value (ascending) at which cumulative weight reaches ``q`` of the total."""
    order = np.lexsort((weights, values))
    v, w = values[order], weights[order]
    cum = np.cumsum(w)
    k = int(np.searchsorted(cum, q * cum[-1] * (1 - 1e-12), side="left"))
    return float(v[min(k, len(v) - 1)])


def build_dynamic_band(history: Iterable[IndicatorSample], channel: str) -> DynamicBand:
    samples = [s for s in history if s.channel == channel]
    if not samples:
        raise ValueError(f"no history for channel {channel!r}")
    minutes = np.array([s.minute for s in samples], dtype=np.int64)
    values = np.array([s.value for s in samples], dtype=np.float64)
    # one global (value, minute) order makes every per-minute sum independent of input order
    order = np.lexsort((minutes, values))
    minutes, values = minutes[order], values[order]

    kernel = window_weight(circular_delta(np.arange(MINUTES), 0))
    center = np.full(MINUTES, math.nan)
    upper = np.full(MINUTES, math.nan)
    lower = np.full(MINUTES, math.nan)
    for m in range(MINUTES):
        w = kernel[(minutes - m) % MINUTES]
        cum = np.cumsum(w)
        total = cum[-1]
        if total <= 0:
            continue
        hi = values[min(int(np.searchsorted(cum, UPPER_Q * total * (1 - 1e-12))), len(values) - 1)]
        lo = values[min(int(np.searchsorted(cum, LOWER_Q * total * (1 - 1e-12))), len(values) - 1)]
        upper[m], lower[m] = hi, lo
        # a heavily skewed pool can push the mean outside the percentile band
        center[m] = min(max(float(np.dot(values, w) / total), lo), hi)
    _fill_empty_minutes(center, upper, lower)
    return DynamicBand(channel, center, upper, lower)


def _fill_empty_minutes(*arrays: np.ndarray) -> None:
    """Minutes with no samples within the window borrow the nearest covered minute."""
    empty = np.isnan(arrays[0])
    if not empty.any():
        return
    covered = np.flatnonzero(~empty)
    for m in np.flatnonzero(empty):
        d = np.abs(circular_delta(covered, m))
        src = covered[np.lexsort((covered, d))[0]]
        for a in arrays:
            a[m] = a[src]


def check_dynamic(sample: IndicatorSample, band: DynamicBand) -> Alert | None:
    m = sample.minute
    if sample.value > band.upper[m]:
        return Alert(INDICATOR_HIGH, sample.timestamp, sample.value, float(band.upper[m]), sample.channel)
    if sample.value < band.lower[m]:
        return Alert(INDICATOR_LOW, sample.timestamp, sample.value, float(band.lower[m]), sample.channel)
    return None
