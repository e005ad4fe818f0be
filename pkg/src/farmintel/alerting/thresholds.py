from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

HEAT = "heat"
COLD = "cold"
HUMIDITY_LOW = "humidity-low"
HUMIDITY_HIGH = "humidity-high"
INDICATOR_HIGH = "indicator-high"
INDICATOR_LOW = "indicator-low"
FEEDER_ANOMALY = "feeder-anomaly"

KINDS = (HEAT, COLD, HUMIDITY_LOW, HUMIDITY_HIGH, INDICATOR_HIGH, INDICATOR_LOW, FEEDER_ANOMALY)
SOURCES = ("observed", "forecast")


def iso(ts: float) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_iso(text: str) -> float:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


@dataclass(frozen=True)
class ThresholdConfig:
    temp_high: float = 35.0
    temp_low: float = 18.0
    humidity_low: float = 40.0
    humidity_high: float = 60.0

    def __post_init__(self):
        if not self.temp_low < self.temp_high:
            raise ValueError("temp_low must be below temp_high")
        if not self.humidity_low < self.humidity_high:
            raise ValueError("humidity_low must be below humidity_high")


@dataclass(frozen=True)
class EnvValue:
    timestamp: float
    temperature: float | None
    humidity: float | None


@dataclass(frozen=True)
class Alert:
    kind: str
    timestamp: float
    value: float
    threshold: float
    channel: str | None = None
    source: str = "observed"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown alert kind {self.kind!r}")
        if self.source not in SOURCES:
            raise ValueError(f"unknown alert source {self.source!r}")

    def to_record(self) -> dict:
        return {"ts": iso(self.timestamp), "kind": self.kind, "channel": self.channel,
                "value": self.value, "threshold": self.threshold, "source": self.source}

    @classmethod
    def from_record(cls, rec: dict) -> Alert:
        return cls(rec["kind"], parse_iso(rec["ts"]), rec["value"], rec["threshold"],
                   rec.get("channel"), rec.get("source", "observed"))


def check_static(reading: EnvValue, cfg: ThresholdConfig = ThresholdConfig(),
                 source: str = "observed") -> list[Alert]:
    """One alert per violated bound; values on a bound are inside the comfort band."""
    out = []
    t, h = reading.temperature, reading.humidity
    if t is not None:
        if t > cfg.temp_high:
            out.append(Alert(HEAT, reading.timestamp, t, cfg.temp_high, source=source))
        elif t < cfg.temp_low:
            out.append(Alert(COLD, reading.timestamp, t, cfg.temp_low, source=source))
    if h is not None:
        if h < cfg.humidity_low:
            out.append(Alert(HUMIDITY_LOW, reading.timestamp, h, cfg.humidity_low, source=source))
        elif h > cfg.humidity_high:
            out.append(Alert(HUMIDITY_HIGH, reading.timestamp, h, cfg.humidity_high, source=source))
    return out


def check_forecast(values: list[EnvValue], cfg: ThresholdConfig = ThresholdConfig()) -> list[Alert]:
    """Static check over forecast steps, reporting only the earliest violation per kind."""
    seen: dict[str, Alert] = {}
    for v in sorted(values, key=lambda v: v.timestamp):
        for a in check_static(v, cfg, source="forecast"):
            seen.setdefault(a.kind, a)
    return sorted(seen.values(), key=lambda a: (a.timestamp, a.kind))
