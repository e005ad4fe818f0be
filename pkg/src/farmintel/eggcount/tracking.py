from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

FRAME_W = 640
FRAME_H = 480
CLASSES = ("extra-large", "large", "medium", "small")


class TrackingError(ValueError):
    pass


class CalibrationFault(RuntimeError):
    """Counting bins overlap, so a centroid cannot be attributed to a single class."""


@dataclass(frozen=True)
class Detection:
    frame: int
    cx: float
    cy: float
    w: float = 0.0
    h: float = 0.0
    conf: float = 1.0

    def __post_init__(self):
        if not (0 <= self.cx <= FRAME_W and 0 <= self.cy <= FRAME_H):
            raise ValueError(f"centroid ({self.cx}, {self.cy}) outside the {FRAME_W}x{FRAME_H} frame")
        if not 0.0 <= self.conf <= 1.0:
            raise ValueError(f"confidence {self.conf} outside [0, 1]")


@dataclass
class Track:
    id: int
    cx: float
    cy: float
    missed: int = 0
    counted_in: str | None = None
    path: list[tuple[float, float]] = field(default_factory=list)


@dataclass
class TrackSet:
    active: dict[int, Track] = field(default_factory=dict)
    next_id: int = 0
    last_frame: int | None = None
    retired: list[Track] = field(default_factory=list)

    def all_tracks(self) -> list[Track]:
        return sorted(self.retired + list(self.active.values()), key=lambda t: t.id)


def tracker_step(tracks: TrackSet, detections: Sequence[Detection], *, frame: int | None = None,
                 max_dist: float = 50.0, max_missed: int = 5) -> TrackSet:
    """Advance ``tracks`` by one frame, in place.

    Pairs are taken greedily in ascending distance (ties: lower track id, then
    lower detection index). Skipped frame numbers count as misses.
    """
    frames = {d.frame for d in detections}
    if len(frames) > 1:
        raise TrackingError(f"detections span several frames: {sorted(frames)}")
    if frame is None:
        if not frames:
            raise TrackingError("frame index required when there are no detections")
        frame = frames.pop()
    elif frames and frames != {frame}:
        raise TrackingError(f"detections belong to frame {frames.pop()}, not {frame}")
    if tracks.last_frame is not None and frame <= tracks.last_frame:
        raise TrackingError(f"frame {frame} arrives after frame {tracks.last_frame}")
    elapsed = 1 if tracks.last_frame is None else frame - tracks.last_frame
    tracks.last_frame = frame

    pairs = []
    for tid, t in tracks.active.items():
        for j, d in enumerate(detections):
            dist = math.hypot(t.cx - d.cx, t.cy - d.cy)
            if dist <= max_dist:
                pairs.append((dist, tid, j))
    pairs.sort()
    used_t, used_d = set(), set()
    for _, tid, j in pairs:
        if tid in used_t or j in used_d:
            continue
        used_t.add(tid)
        used_d.add(j)
        t, d = tracks.active[tid], detections[j]
        t.cx, t.cy, t.missed = d.cx, d.cy, 0
        t.path.append((d.cx, d.cy))

    for tid in sorted(tracks.active):
        if tid in used_t:
            continue
        t = tracks.active[tid]
        t.missed += elapsed
        if t.missed > max_missed:
            tracks.retired.append(tracks.active.pop(tid))

    for j, d in enumerate(detections):
        if j not in used_d:
            tid = tracks.next_id
            tracks.next_id += 1
            tracks.active[tid] = Track(tid, d.cx, d.cy, path=[(d.cx, d.cy)])
    return tracks


def _on_segment(px, py, ax, ay, bx, by, eps=1e-9) -> bool:
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if abs(cross) > eps * max(1.0, math.hypot(bx - ax, by - ay)):
        return False
    return min(ax, bx) - eps <= px <= max(ax, bx) + eps and min(ay, by) - eps <= py <= max(ay, by) + eps


def point_in_polygon(p: tuple[float, float], poly: Sequence[tuple[float, float]]) -> bool:
    """Even-odd ray casting; points on an edge or vertex count as inside."""
    if len(poly) < 3:
        raise ValueError(f"polygon needs at least 3 vertices, got {len(poly)}")
    px, py = p
    inside = False
    n = len(poly)
    for i in range(n):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % n]
        if _on_segment(px, py, ax, ay, bx, by):
            return True
        if (ay > py) != (by > py):
            x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
            if px < x_cross:
                inside = not inside
    return inside


@dataclass
class WeightBin:
    label: str
    polygon: list[tuple[float, float]]
    tally: int = 0

    def __post_init__(self):
        if len(self.polygon) < 3:
            raise ValueError(f"bin {self.label!r} polygon needs at least 3 vertices")


def count_update(tracks: TrackSet, bins: Sequence[WeightBin]) -> Sequence[WeightBin]:
    """Count each active track once, in the first bin its centroid lands in."""
    for tid in sorted(tracks.active):
        t = tracks.active[tid]
        if t.counted_in is not None or t.missed:
            continue
        hits = [b for b in bins if point_in_polygon((t.cx, t.cy), b.polygon)]
        if len(hits) > 1:
            raise CalibrationFault(f"track {tid} at ({t.cx}, {t.cy}) lies in bins "
                                   f"{[b.label for b in hits]}")
        if hits:
            hits[0].tally += 1
            t.counted_in = hits[0].label
    return bins
