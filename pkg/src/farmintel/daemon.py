"""Alert pipelines and the file-tailing daemon.

``alerts run`` (batch) and ``daemon`` (tailing) share the pipelines below. The
batch command sorts all alerts by time before emitting; the daemon emits in
arrival order, stream by stream, so replaying the same files through the
daemon always yields the same log.
"""
from __future__ import annotations

import csv
import logging
import math
import signal
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .alerting.band import DynamicBand, IndicatorSample, check_dynamic
from .alerting.feeder import check_feeder, smooth_feeder
from .alerting.sink import AlertSink
from .alerting.thresholds import Alert, EnvValue, ThresholdConfig, check_forecast, check_static
from .envforecast import (HOUR, PROFILE_DAYS, HourlySeries, InsufficientHistory, SensorReading,
                          aggregate_hourly, fit_forecast_model, forecast_iterative)
from .ingest import SCHEMAS, FeederLabel, IngestError, parse_row

log = logging.getLogger(__name__)


class EnvPipeline:
    """Buckets sensor readings by hour; each completed hour is checked as observed
    and, once enough history exists, forecast ``horizon`` hours ahead.
    """

    def __init__(self, thresholds: ThresholdConfig = ThresholdConfig(), *, lookback: int = 3,
                 horizon: int = 3, use_profile: bool = True, refit_every: int = 24):
        self.thresholds = thresholds
        self.lookback, self.horizon, self.use_profile = lookback, horizon, use_profile
        self.refit_every = refit_every
        self._bucket_hour: int | None = None
        self._bucket: list[SensorReading] = []
        self._start: int | None = None
        self._temp: list[float] = []
        self._hum: list[float] = []
        self._models = None
        self._fitted_at = 0

    @property
    def min_history(self) -> int:
        need = max(PROFILE_DAYS) * 24 if self.use_profile else 0
        return need + self.lookback + 24

    def push(self, r: SensorReading) -> list[Alert]:
        hour = int(math.floor(r.timestamp / HOUR) * HOUR)
        out: list[Alert] = []
        if self._bucket_hour is not None and hour > self._bucket_hour:
            out = self._close()
        if self._bucket_hour is not None and hour < self._bucket_hour:
            log.warning("dropping out-of-order reading for %s at %s", r.sensor_id, r.timestamp)
            return out
        self._bucket_hour = hour
        self._bucket.append(r)
        return out

    def flush(self) -> list[Alert]:
        return self._close() if self._bucket else []

    def _close(self) -> list[Alert]:
        series = aggregate_hourly(self._bucket)
        hour = self._bucket_hour
        self._bucket = []
        t, h = float(series.temperature[0]), float(series.humidity[0])
        if self._start is None:
            self._start = hour
        gap = (hour - self._start) // HOUR - len(self._temp)
        self._temp += [math.nan] * gap + [t]
        self._hum += [math.nan] * gap + [h]
        alerts = check_static(EnvValue(hour, t, h), self.thresholds)
        return alerts + self._forecast()

    def _forecast(self) -> list[Alert]:
        n = len(self._temp)
        if n < self.min_history:
            return []
        series = HourlySeries(self._start, np.array(self._temp), np.array(self._hum))
        try:
            if self._models is None or n - self._fitted_at >= self.refit_every:
                self._models = [fit_forecast_model(series, tgt, self.lookback, self.use_profile)
                                for tgt in ("temperature", "humidity")]
                self._fitted_at = n
            t0 = series.hour_at(n)
            temp, hum = (forecast_iterative(m, series, t0, self.horizon) for m in self._models)
        except (InsufficientHistory, ValueError, np.linalg.LinAlgError) as e:
            log.debug("no forecast at hour %d: %s", n, e)
            return []
        values = [EnvValue(t0 + k * HOUR, temp[k], hum[k]) for k in range(self.horizon)]
        return check_forecast(values, self.thresholds)


class IndicatorPipeline:
    def __init__(self, bands: dict[str, DynamicBand]):
        self.bands = bands

    def push(self, s: IndicatorSample) -> list[Alert]:
        band = self.bands.get(s.channel)
        if band is None:
            return []
        a = check_dynamic(s, band)
        return [a] if a else []


def feeder_alerts(labels: list[FeederLabel], feeding: Iterable[tuple[str, str]], *,
                  window: int = 27, clip_seconds: float = 2.0) -> list[Alert]:
    """Smooth a contiguous feeder clip stream and compare it with the daily feeding schedule."""
    if not labels:
        return []
    labels = sorted(labels, key=lambda l: l.timestamp)
    start = labels[0].timestamp
    stop = labels[-1].timestamp + clip_seconds
    intervals = smooth_feeder([l.open for l in labels], window, start=start, clip_seconds=clip_seconds)
    schedule, spanned = [], set()
    day0 = math.floor(start / 86400) * 86400
    for d in range(int(day0) - 86400, int(stop) + 86400, 86400):
        for a, b in feeding:
            s0 = d + _hhmm(a)
            s1 = d + _hhmm(b)
            if s1 <= s0:
                s1 += 86400
            if s0 < stop and start < s1:
                schedule.append((s0, s1))
                if s0 >= start and s1 <= stop:
                    spanned.add(s0)
    alerts = check_feeder(intervals, schedule, channel="audio")
    # a feeding only partly inside the recording cannot be judged as missed
    return [al for al in alerts if al.threshold == 0.0 or al.timestamp in spanned]


def _hhmm(text: str) -> int:
    h, m = text.split(":")
    return int(h) * 3600 + int(m) * 60


@dataclass
class StreamTail:
    """Follows a growing CSV file; complete lines only, header first."""

    name: str
    path: Path
    schema: str
    offset: int = 0
    line_no: int = 0
    header: list[str] | None = None
    paused_until: float = 0.0
    rejected: int = 0
    errors: list[str] = field(default_factory=list)

    def poll(self, now: float, retry_s: float) -> list:
        if now < self.paused_until:
            return []
        try:
            with self.path.open("rb") as fh:
                fh.seek(self.offset)
                chunk = fh.read()
        except OSError as e:
            self.paused_until = now + retry_s
            self.errors.append(str(e))
            log.warning("stream %s unreadable (%s); retrying in %.1f s", self.name, e, retry_s)
            return []
        end = chunk.rfind(b"\n")
        if end < 0:
            return []
        self.offset += end + 1
        out = []
        for raw in chunk[: end + 1].decode("utf-8").splitlines():
            self.line_no += 1
            if not raw.strip():
                continue
            cells = next(csv.reader([raw]))
            if self.header is None:
                self.header = [c.strip() for c in cells]
                missing = [c for c, _ in SCHEMAS[self.schema].columns if c not in self.header]
                if missing:
                    self.paused_until = math.inf
                    log.error("stream %s header lacks column %r; stream stopped", self.name, missing[0])
                    return out
                continue
            try:
                out.append(parse_row(SCHEMAS[self.schema], dict(zip(self.header, cells)), self.path, self.line_no))
            except IngestError as e:
                self.rejected += 1
                log.warning("rejected %s", e)
        return out


class Daemon:
    """Polls every stream in a fixed order and routes records to one sink.

    Streams are independent: an unreadable or stalled file pauses only itself.
    """

    def __init__(self, sink: AlertSink, env: EnvPipeline | None, indicators: IndicatorPipeline | None,
                 streams: list[StreamTail], *, poll_s: float = 1.0, retry_s: float = 5.0,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.sink, self.env, self.indicators, self.streams = sink, env, indicators, streams
        self.poll_s, self.retry_s = poll_s, retry_s
        self.clock, self.sleep = clock, sleep
        self.stopping = False
        self.emitted = 0

    def request_stop(self, *_args) -> None:
        self.stopping = True

    def install_signal_handlers(self) -> None:
        signal.signal(signal.SIGTERM, self.request_stop)
        signal.signal(signal.SIGINT, self.request_stop)

    def _emit(self, alerts: list[Alert]) -> None:
        for a in alerts:
            self.sink.emit(a)
            self.emitted += 1

    def poll_once(self) -> int:
        got = 0
        for st in self.streams:
            records = st.poll(self.clock(), self.retry_s)
            got += len(records)
            for r in records:
                if isinstance(r, SensorReading) and self.env is not None:
                    self._emit(self.env.push(r))
                elif isinstance(r, IndicatorSample) and self.indicators is not None:
                    self._emit(self.indicators.push(r))
        return got

    def run(self, *, max_idle_polls: int | None = None) -> None:
        """Poll until stopped; with ``max_idle_polls`` also stop after that many empty polls."""
        idle = 0
        while not self.stopping:
            if self.poll_once():
                idle = 0
                continue
            idle += 1
            if max_idle_polls is not None and idle >= max_idle_polls:
                break
            self.sleep(self.poll_s)
        self.flush()

    def flush(self) -> None:
        if self.env is not None:
            self._emit(self.env.flush())
