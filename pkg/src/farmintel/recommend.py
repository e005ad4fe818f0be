"""Rule-based management recommendations from weather, farm climate forecasts,
activity alerts and predicted productivity.

Every comparison is strict: a value sitting exactly on a threshold triggers
nothing. Rules over a missing input are skipped and the omission is noted.
"""
from __future__ import annotations

import json
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from .alerting.thresholds import (COLD, HEAT, HUMIDITY_HIGH, HUMIDITY_LOW, INDICATOR_HIGH, INDICATOR_LOW,
                                  Alert, EnvValue, ThresholdConfig, check_forecast, parse_iso)

FORECAST_DAYS = 3
STALE_AFTER_S = 24 * 3600


@dataclass(frozen=True)
class WeatherRules:
    heat_c: float = 35.0
    cold_c: float = 10.0
    wind_kmh: float = 29.0
    cloud_pct: float = 70.0
    rain_pct: float = 50.0
    productivity_floor: float = 0.70


SEVERITY_RANK = {"critical": 0, "warning": 1, "advisory": 2}

CATALOG: dict[str, tuple[str, str]] = {
    "PRODUCTIVITY_WARNING": ("critical", "Egg output per hen is forecast below {threshold:.0%} over the coming days."),
    "FARM_TEMP_HIGH": ("critical", "House temperature is forecast to reach {value:.1f} °C within the hour. Start the fans."),
    "FARM_TEMP_LOW": ("critical", "House temperature is forecast to drop to {value:.1f} °C within the hour. Start the heaters."),
    "HEAT": ("warning", "Outdoor highs up to {value:.0f} °C are forecast. Inspect fans and sprayers."),
    "COLD": ("warning", "Outdoor lows down to {value:.0f} °C are forecast. Inspect the heaters."),
    "FARM_HUMIDITY_HIGH": ("warning", "House humidity is forecast at {value:.0f}% within the hour. Add fresh bedding."),
    "FARM_HUMIDITY_LOW": ("warning", "House humidity is forecast at {value:.0f}% within the hour. Run the water sprayers."),
    "INDICATOR_HIGH": ("warning", "Sound or movement in the house is above its usual level for this time of day."),
    "INDICATOR_LOW": ("warning", "The flock is quieter than usual for this time of day. Check feed and water."),
    "WIND": ("advisory", "Winds up to {value:.0f} km/h are forecast. Consider closing the windows."),
    "CLOUD": ("advisory", "Cloud cover up to {value:.0f}% is forecast. Consider switching on the house lights."),
    "RAIN": ("advisory", "Rain chance up to {value:.0f}% is forecast. Check the roof and drainage."),
}


class WeatherError(RuntimeError):
    pass


class WeatherParseError(WeatherError):
    pass


class WeatherFetchError(WeatherError):
    pass


@dataclass(frozen=True)
class WeatherDay:
    day: str
    temp_min: float
    temp_max: float
    wind_max_kmh: float
    cloud_max_pct: float
    rain_max_pct: float

    def __post_init__(self):
        if self.temp_min > self.temp_max:
            raise WeatherParseError(f"{self.day}: temp_min {self.temp_min} exceeds temp_max {self.temp_max}")
        for name in ("cloud_max_pct", "rain_max_pct"):
            v = getattr(self, name)
            if not 0 <= v <= 100:
                raise WeatherParseError(f"{self.day}: {name} {v} outside [0, 100]")


@dataclass(frozen=True)
class WeatherForecast:
    days: tuple[WeatherDay, ...]
    issued: float | None = None

    def to_dict(self) -> dict:
        return {"days": [vars(d) for d in self.days]}


@dataclass(frozen=True)
class Recommendation:
    code: str
    message: str
    severity: str
    facts: dict[str, Any]

    def to_dict(self) -> dict:
        return {"code": self.code, "severity": self.severity, "message": self.message, "facts": self.facts}


def _rec(code: str, facts: dict) -> Recommendation:
    severity, template = CATALOG[code]
    return Recommendation(code, template.format(**facts), severity, facts)


def _order(recs: Sequence[Recommendation]) -> list[Recommendation]:
    return sorted(recs, key=lambda r: (SEVERITY_RANK[r.severity], r.code))


# --- rules ---------------------------------------------------------------------------

def weather_rules(w: WeatherForecast, rules: WeatherRules = WeatherRules()) -> list[Recommendation]:
    out = []
    days = w.days[:FORECAST_DAYS]
    if not days:
        return out

    def extreme(attr, pick):
        d = pick(days, key=lambda d: getattr(d, attr))
        return getattr(d, attr), d.day

    checks = (
        ("HEAT", "temp_max", max, lambda v: v > rules.heat_c, rules.heat_c),
        ("COLD", "temp_min", min, lambda v: v < rules.cold_c, rules.cold_c),
        ("WIND", "wind_max_kmh", max, lambda v: v > rules.wind_kmh, rules.wind_kmh),
        ("CLOUD", "cloud_max_pct", max, lambda v: v > rules.cloud_pct, rules.cloud_pct),
        ("RAIN", "rain_max_pct", max, lambda v: v > rules.rain_pct, rules.rain_pct),
    )
    for code, attr, pick, fires, threshold in checks:
        v, day = extreme(attr, pick)
        if fires(v):
            out.append(_rec(code, {"metric": attr, "value": v, "threshold": threshold, "day": day}))
    return _order(out)


def productivity_rule(per_bird: float | None, rules: WeatherRules = WeatherRules()) -> Recommendation | None:
    if per_bird is None or not per_bird < rules.productivity_floor:
        return None
    return _rec("PRODUCTIVITY_WARNING", {"value": per_bird, "threshold": rules.productivity_floor})


_FARM_CODES = {HEAT: "FARM_TEMP_HIGH", COLD: "FARM_TEMP_LOW",
               HUMIDITY_HIGH: "FARM_HUMIDITY_HIGH", HUMIDITY_LOW: "FARM_HUMIDITY_LOW"}


def farm_rules(forecast: Sequence[EnvValue], cfg: ThresholdConfig = ThresholdConfig()) -> list[Recommendation]:
    out = []
    for a in check_forecast(list(forecast), cfg):
        out.append(_rec(_FARM_CODES[a.kind], {"kind": a.kind, "value": a.value, "threshold": a.threshold,
                                              "ts": a.to_record()["ts"]}))
    return _order(out)


def indicator_rules(alerts: Sequence[Alert]) -> list[Recommendation]:
    out = []
    for kind, code in ((INDICATOR_HIGH, "INDICATOR_HIGH"), (INDICATOR_LOW, "INDICATOR_LOW")):
        chans = sorted({a.channel or "" for a in alerts if a.kind == kind})
        if chans:
            out.append(_rec(code, {"kind": kind, "channels": chans}))
    return out


# --- context -------------------------------------------------------------------------

@dataclass
class RecommendationContext:
    now: float | None = None
    weather: WeatherForecast | None = None
    farm_forecast: list[EnvValue] | None = None
    alerts: list[Alert] | None = None
    productivity: float | None = None
    productivity_ts: float | None = None
    thresholds: ThresholdConfig = field(default_factory=ThresholdConfig)
    rules: WeatherRules = field(default_factory=WeatherRules)

    @classmethod
    def from_dict(cls, d: dict) -> RecommendationContext:
        ctx = cls(now=parse_iso(d["now"]) if d.get("now") else None)
        if d.get("weather") is not None:
            ctx.weather = parse_weather(d["weather"])
        if d.get("farm_forecast") is not None:
            ctx.farm_forecast = [EnvValue(parse_iso(r["ts"]), r.get("temperature"), r.get("humidity"))
                                 for r in d["farm_forecast"]]
        if d.get("alerts") is not None:
            ctx.alerts = [Alert.from_record(r) for r in d["alerts"]]
        prod = d.get("productivity")
        if prod is not None:
            ctx.productivity = float(prod["per_bird"])
            ctx.productivity_ts = parse_iso(prod["ts"]) if prod.get("ts") else None
        if d.get("thresholds"):
            ctx.thresholds = ThresholdConfig(**d["thresholds"])
        return ctx


@dataclass
class RecommendationReport:
    recommendations: list[Recommendation]
    notes: list[str]

    def codes(self) -> list[str]:
        return [r.code for r in self.recommendations]

    def to_json(self) -> str:
        return json.dumps({"recommendations": [r.to_dict() for r in self.recommendations], "notes": self.notes},
                          indent=1, sort_keys=True, ensure_ascii=False)


def recommend(ctx: RecommendationContext) -> RecommendationReport:
    recs: list[Recommendation] = []
    notes: list[str] = []

    def stale(ts: float | None, what: str) -> None:
        if ctx.now is not None and ts is not None and ctx.now - ts > STALE_AFTER_S:
            notes.append(f"{what} is more than 24 h old")

    if ctx.weather is None:
        notes.append("no weather forecast: weather rules skipped")
    else:
        stale(ctx.weather.issued, "weather forecast")
        recs += weather_rules(ctx.weather, ctx.rules)
    if ctx.productivity is None:
        notes.append("no productivity forecast: productivity rule skipped")
    else:
        stale(ctx.productivity_ts, "productivity forecast")
        r = productivity_rule(ctx.productivity, ctx.rules)
        if r:
            recs.append(r)
    if ctx.farm_forecast is None:
        notes.append("no farm climate forecast: farm rules skipped")
    else:
        if ctx.farm_forecast:
            stale(min(v.timestamp for v in ctx.farm_forecast), "farm climate forecast")
        recs += farm_rules(ctx.farm_forecast, ctx.thresholds)
    if ctx.alerts is None:
        notes.append("no activity alerts: indicator rules skipped")
    else:
        for a in ctx.alerts:
            stale(a.timestamp, f"{a.kind} alert")
        recs += indicator_rules(ctx.alerts)
    return RecommendationReport(_order(recs), notes)


# --- weather providers ----------------------------------------------------------------

_NORMALIZED = ("day", "temp_min", "temp_max", "wind_max_kmh", "cloud_max_pct", "rain_max_pct")
_OPEN_METEO = {"day": "time", "temp_min": "temperature_2m_min", "temp_max": "temperature_2m_max",
               "wind_max_kmh": "wind_speed_10m_max", "cloud_max_pct": "cloud_cover_max",
               "rain_max_pct": "precipitation_probability_max"}


def parse_weather(payload: Any) -> WeatherForecast:
    """Accept the normalized schema ``{"days": [{...}]}`` or an open-meteo ``daily`` block.

    Only the first three days are kept.
    """
    if not isinstance(payload, dict):
        raise WeatherParseError("weather payload must be a JSON object")
    issued = parse_iso(payload["issued"]) if payload.get("issued") else None
    days = []
    if "days" in payload:
        for i, d in enumerate(payload["days"][:FORECAST_DAYS]):
            missing = [k for k in _NORMALIZED if k not in d]
            if missing:
                raise WeatherParseError(f"weather day {i} is missing field {missing[0]!r}")
            days.append(WeatherDay(str(d["day"]), *(float(d[k]) for k in _NORMALIZED[1:])))
    elif "daily" in payload:
        daily = payload["daily"]
        for ours, theirs in _OPEN_METEO.items():
            if theirs not in daily:
                raise WeatherParseError(f"open-meteo payload is missing daily field {theirs!r}")
        n = min(len(daily[k]) for k in _OPEN_METEO.values())
        for i in range(min(n, FORECAST_DAYS)):
            vals = {ours: daily[theirs][i] for ours, theirs in _OPEN_METEO.items()}
            if any(v is None for v in vals.values()):
                raise WeatherParseError(f"open-meteo day {i} has null values")
            days.append(WeatherDay(str(vals["day"]), *(float(vals[k]) for k in _NORMALIZED[1:])))
    else:
        raise WeatherParseError("weather payload is missing field 'days' (or open-meteo 'daily')")
    return WeatherForecast(tuple(days), issued)


def fetch_weather(*, fixture: str | Path | None = None, url: str | None = None,
                  timeout_s: float = 10.0) -> WeatherForecast:
    if (fixture is None) == (url is None):
        raise ValueError("give exactly one of fixture or url")
    if fixture is not None:
        text = Path(fixture).read_text(encoding="utf-8")
    else:
        try:
            with urllib.request.urlopen(url, timeout=timeout_s) as resp:
                text = resp.read().decode("utf-8")
        except (urllib.error.URLError, OSError, ValueError) as e:
            raise WeatherFetchError(f"weather request to {url} failed: {e}") from e
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise WeatherParseError(f"weather payload is not valid JSON: {e}") from e
    return parse_weather(payload)


def weather_to_json(w: WeatherForecast) -> str:
    return json.dumps(w.to_dict(), indent=1, sort_keys=True)
