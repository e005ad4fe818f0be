from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .thresholds import FEEDER_ANOMALY, Alert

CLIP_SECONDS = 2.0
WINDOW = 27


@dataclass(frozen=True)
class FeederInterval:
    open_start: float
    open_end: float

    @property
    def duration(self) -> float:
        return self.open_end - self.open_start


def window_states(labels: Sequence[bool], window: int = WINDOW) -> list[bool]:
    """Majority vote over tumbling windows aligned to the first label.

    A window is open iff strictly more than half of its labels are open; a
    short trailing window votes over its actual length.
    """
    if window < 1:
        raise ValueError("window must be positive")
    out = []
    for start in range(0, len(labels), window):
        chunk = labels[start:start + window]
        out.append(2 * sum(bool(v) for v in chunk) > len(chunk))
    return out


def smooth_feeder(labels: Sequence[bool], window: int = WINDOW, *,
                  start: float = 0.0, clip_seconds: float = CLIP_SECONDS) -> list[FeederInterval]:
    """Merge runs of open windows into intervals timed from the stream start."""
    n = len(labels)
    intervals = []
    run_start = None
    states = window_states(labels, window)
    for k, is_open in enumerate(states + [False]):
        if is_open and run_start is None:
            run_start = k
        elif not is_open and run_start is not None:
            end_clip = min(k * window, n)
            intervals.append(FeederInterval(start + run_start * window * clip_seconds,
                                            start + end_clip * clip_seconds))
            run_start = None
    return intervals


def check_feeder(intervals: Sequence[FeederInterval], schedule: Sequence[tuple[float, float]],
                 *, channel: str = "audio") -> list[Alert]:
    """Flag scheduled feedings with no open interval, and open intervals outside every feeding.

    ``schedule`` holds absolute (start, end) times in seconds. Missed feedings
    report value 0 against the scheduled duration; unscheduled openings report
    their open duration against threshold 0.
    """
    def overlaps(a0, a1, b0, b1):
        return a0 < b1 and b0 < a1

    alerts = []
    for s0, s1 in schedule:
        if not any(overlaps(iv.open_start, iv.open_end, s0, s1) for iv in intervals):
            alerts.append(Alert(FEEDER_ANOMALY, s0, 0.0, s1 - s0, channel))
    for iv in intervals:
        if not any(overlaps(iv.open_start, iv.open_end, s0, s1) for s0, s1 in schedule):
            alerts.append(Alert(FEEDER_ANOMALY, iv.open_start, iv.duration, 0.0, channel))
    return sorted(alerts, key=lambda a: a.timestamp)
