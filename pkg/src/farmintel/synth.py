"""Seeded synthetic data generators standing in for private farm recordings.

Each generator knows its own ground truth, which the tests and the
acceptance suite compare against.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eggcount.session import Frame
from .eggcount.tracking import CLASSES, FRAME_H, FRAME_W, Detection

SPRINGS = (100.0, 250.0, 400.0, 550.0)
LANE_Y = 240.0
CARRIER_Y = 60.0


def _det(frame: int, x: float, y: float) -> Detection:
    return Detection(frame, float(np.clip(x, 0, FRAME_W)), float(np.clip(y, 0, FRAME_H)), 24.0, 30.0, 0.9)


def _spurious(rng: np.random.Generator, frames: list[list[Detection]], count: int, keep=lambda x, y: True):
    placed = 0
    while placed < count:
        f = int(rng.integers(0, len(frames)))
        x, y = rng.uniform(0, FRAME_W), rng.uniform(0, FRAME_H)
        if keep(x, y):
            frames[f].append(_det(f, x, y))
            placed += 1


def egg_calibration_log(seed: int, *, springs=SPRINGS, n_eggs: int = 12, pause: int = 10,
                        speed: float = 50.0, spread: float = 100.0, jitter: float = 1.0,
                        spurious: float = 0.0) -> list[Frame]:
    """Eggs travel along the lane one at a time and halt ``pause`` frames at each spring.

    ``spurious`` adds that fraction of extra detections uniformly over the frame.
    """
    rng = np.random.default_rng(seed)
    frames: list[list[Detection]] = []
    for _ in range(n_eggs):
        y = LANE_Y + rng.uniform(-spread / 2, spread / 2)
        x = rng.uniform(0, speed)
        for s in list(springs) + [None]:
            while s is None or x < s:
                if x > FRAME_W:
                    break
                frames.append([_det(len(frames), x + rng.uniform(-jitter, jitter), y + rng.uniform(-jitter, jitter))])
                x += speed
            if s is None:
                break
            for _ in range(pause):
                frames.append([_det(len(frames), s + rng.uniform(-jitter, jitter), y + rng.uniform(-jitter, jitter))])
            x = s + rng.uniform(0.4 * speed, speed)
        frames.append([])  # gap between eggs
    real = sum(len(f) for f in frames)
    _spurious(rng, frames, int(round(spurious * real)))
    return [Frame(i, dets) for i, dets in enumerate(frames)]


@dataclass
class EggSessionTruth:
    tallies: dict[str, int]
    n_eggs: int


def egg_counting_session(seed: int, *, n_eggs: int | None = None, springs=SPRINGS,
                         lane=(0.0, 140.0, float(FRAME_W), 340.0), fall_speed: float = 12.0,
                         dropout: float = 0.1, spurious_per_frame: float = 0.3,
                         jitter: float = 1.0) -> tuple[list[Frame], EggSessionTruth]:
    """Each egg rides the carrier above the lane, then drops through its class's spring band.

    Detections drop out with probability ``dropout`` (never two frames in a
    row); spurious detections appear only outside the lane, where the
    calibrated detection mask removes them.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(30, 111)) if n_eggs is None else n_eggs
    classes = np.concatenate([np.arange(4), rng.integers(0, 4, size=n - 4)])
    rng.shuffle(classes)

    drop_start = []
    next_free = [0] * 4
    t = 5
    for k in classes:
        t = max(t + int(rng.integers(1, 5)), next_free[k])
        drop_start.append(t)
        next_free[k] = t + 10
    horizon = max(drop_start) + int((FRAME_H - CARRIER_Y) / fall_speed) + 10
    frames: list[list[Detection]] = [[] for _ in range(horizon)]

    for k, t0 in zip(classes, drop_start):
        col = springs[k] + rng.uniform(-8, 8)
        path = []
        for i in range(6):  # carrier leg, outside the lane
            path.append((t0 - 6 + i, col - (6 - i) * 30.0, CARRIER_Y))
        y = CARRIER_Y
        t = t0
        while y <= FRAME_H - 20:
            path.append((t, col, y))
            y += fall_speed
            t += 1
        dropped_prev = False
        for f, x, yy in path:
            if f < 0 or f >= horizon:
                continue
            if not dropped_prev and rng.random() < dropout:
                dropped_prev = True
                continue
            dropped_prev = False
            frames[f].append(_det(f, x + rng.uniform(-jitter, jitter), yy + rng.uniform(-jitter, jitter)))

    x0, y0, x1, y1 = lane
    _spurious(rng, frames, int(round(spurious_per_frame * horizon)),
              keep=lambda x, y: not (x0 <= x <= x1 and y0 <= y <= y1))
    tallies = {c: int(np.sum(classes == i)) for i, c in enumerate(CLASSES)}
    tallies["total"] = n
    return [Frame(i, sorted(d, key=lambda d: (d.cx, d.cy))) for i, d in enumerate(frames)], EggSessionTruth(tallies, n)


# --- environment and indicators ----------------------------------------------------

EPOCH = 1704067200  # 2024-01-01T00:00:00Z


def env_hourly(seed: int, days: int = 100, *, start: int = EPOCH, noise: float = 0.6):
    """Hourly temperature/humidity with a strong daily cycle, slow drift and noise."""
    from .envforecast import HourlySeries
    rng = np.random.default_rng(seed)
    n = days * 24
    h = np.arange(n)
    drift = np.zeros(n)
    for i in range(1, n):
        drift[i] = 0.995 * drift[i - 1] + rng.normal(0, 0.15)
    temp = 24 + 5 * np.sin(2 * np.pi * (h % 24 - 9) / 24) + drift + rng.normal(0, noise, n)
    hum = 55 - 1.8 * (temp - 24) + rng.normal(0, 2 * noise, n)
    return HourlySeries(start, temp, np.clip(hum, 0, 100))


def env_readings(seed: int, days: int = 14, *, sensors: int = 6, every_min: int = 10, start: int = EPOCH):
    """Raw multi-sensor readings around :func:`env_hourly`, one sensor biased high."""
    from .envforecast import SensorReading
    rng = np.random.default_rng(seed)
    base = env_hourly(seed, days, start=start)
    out = []
    for i in range(len(base)):
        for m in range(0, 60, every_min):
            ts = start + i * 3600 + m * 60
            for s in range(sensors):
                bias = 8.0 if s == sensors - 1 else 0.0
                t = base.temperature[i] + bias + rng.normal(0, 0.3)
                hu = float(np.clip(base.humidity[i] + rng.normal(0, 1.0), 0, 100))
                out.append(SensorReading(float(ts), f"s{s}", round(float(t), 3), round(hu, 3)))
    return out


def activity_profile(minute: np.ndarray, channel: str) -> np.ndarray:
    """Expected indicator level by minute of day: quiet nights, peaks at feeding."""
    m = np.asarray(minute, dtype=np.float64)
    day = 1.0 / (1 + np.exp(-(m - 330) / 20)) * 1.0 / (1 + np.exp((m - 1200) / 20))
    feed = np.exp(-0.5 * ((m - 390) / 20) ** 2) + np.exp(-0.5 * ((m - 990) / 20) ** 2)
    scale = 1.0 if channel == "audio" else 0.8
    return scale * (0.2 + 0.8 * day + 1.5 * feed)


def indicator_history(seed: int, days: int = 14, *, channels=("audio", "video"), every_min: int = 1,
                      start: int = EPOCH, noise: float = 0.15):
    from .alerting.band import IndicatorSample
    rng = np.random.default_rng(seed)
    out = []
    minutes = np.arange(0, days * 1440, every_min)
    for ch in channels:
        level = activity_profile(minutes % 1440, ch)
        vals = np.maximum(0.0, level * (1 + rng.normal(0, noise, len(minutes))))
        out.extend(IndicatorSample(float(start + 60 * m), ch, float(v)) for m, v in zip(minutes, vals))
    return sorted(out, key=lambda s: (s.timestamp, s.channel))


FEEDER_PATTERN = (True, True, True, False, True, True)


def feeder_labels(seed: int, *, pattern=FEEDER_PATTERN, window: int = 27, flip: float = 0.3) -> list[bool]:
    """Clip labels for a window-level open/closed pattern, each label flipped with probability ``flip``."""
    rng = np.random.default_rng(seed)
    clean = np.repeat(np.array(pattern, dtype=bool), window)
    return [bool(v) for v in clean ^ (rng.random(len(clean)) < flip)]


# --- production ------------------------------------------------------------------------

@dataclass
class ProductionFixture:
    records: list
    env: object  # HourlySeries
    indicators: list


def production_fixture(seed: int, days: int = 730, *, informative: bool = True,
                       samples_per_hour: int = 4, flock0: int = 800, age0_weeks: float = 22.0,
                       start: int = EPOCH) -> ProductionFixture:
    """Daily farm records whose lay rate responds to heat and to a latent flock-health signal.

    Heat acts on the same day and persists for days; health acts with a
    ten-day delay and is visible earlier in the feeding-time audio/video
    levels (when ``informative``), so each added data source carries new
    information about the next ten days.
    """
    from datetime import date, timedelta
    from .alerting.band import IndicatorSample
    from .envforecast import HourlySeries
    from .production import DailyRecord
    rng = np.random.default_rng(seed)
    health = np.zeros(days + 20)
    for i in range(1, len(health)):
        health[i] = 0.9 * health[i - 1] + rng.normal(0, 0.44)
    anomaly = np.zeros(days)
    for i in range(1, days):
        anomaly[i] = 0.9 * anomaly[i - 1] + rng.normal(0, 1.3)
    t_day = 24 + anomaly

    hours = np.arange(days * 24)
    temp = np.repeat(t_day, 24) + 4 * np.sin(2 * np.pi * (hours % 24 - 9) / 24) + rng.normal(0, 0.5, len(hours))
    hum = np.clip(58 - 1.5 * (temp - 24) + rng.normal(0, 2, len(hours)), 0, 100)
    env = HourlySeries(start, temp, hum)

    first = date(2024, 1, 1)
    records = []
    flock = flock0
    for i in range(days):
        age = age0_weeks + i / 7
        base = 0.90 - 0.002 * (age - age0_weeks)
        lagged_health = health[i - 10] if i >= 10 else 0.0
        lagged_heat = t_day[i - 5] - 24 if i >= 5 else 0.0
        rate = base - 0.015 * lagged_heat + 0.03 * lagged_health
        rate = float(np.clip(rate + rng.normal(0, 0.004), 0, 1))
        deaths = int(rng.poisson(0.1 + 0.05 * max(0.0, t_day[i] - 28)))
        eggs = int(rng.binomial(flock, rate))
        records.append(DailyRecord(first + timedelta(days=i), eggs, deaths, flock, round(age, 4)))
        flock = max(1, flock - deaths)

    step = 60 // samples_per_hour
    minutes = np.arange(0, days * 1440, step)
    day_idx = minutes // 1440
    signal = health[day_idx] if informative else rng.normal(0, 1, days)[day_idx]
    indicators = []
    for ch in ("audio", "video"):
        level = activity_profile(minutes % 1440, ch)
        feeding = np.exp(-0.5 * (((minutes % 1440) - 390) / 30) ** 2) + \
            np.exp(-0.5 * (((minutes % 1440) - 990) / 30) ** 2)
        vals = np.maximum(0.0, level + 0.25 * signal * (0.3 + feeding) + rng.normal(0, 0.08, len(minutes)))
        indicators.extend(IndicatorSample(float(start + 60 * m), ch, float(v)) for m, v in zip(minutes, vals))
    return ProductionFixture(records, env, indicators)
