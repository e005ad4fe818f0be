from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .calibrate import CalibrationResult
from .tracking import Detection, TrackSet, WeightBin, count_update, tracker_step


@dataclass
class Frame:
    index: int
    detections: list[Detection]


def read_detection_log(path: str | Path) -> Iterator[Frame]:
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                idx = int(rec["frame"])
                dets = [Detection(idx, float(d["cx"]), float(d["cy"]), float(d.get("w", 0.0)),
                                  float(d.get("h", 0.0)), float(d.get("conf", 1.0)))
                        for d in rec["detections"]]
            except (KeyError, TypeError, ValueError) as e:
                raise ValueError(f"{path}:{lineno}: bad detection record: {e}") from e
            yield Frame(idx, dets)


def write_detection_log(frames: Iterable[Frame], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for f in frames:
            fh.write(json.dumps({"frame": f.index, "detections": [
                {"cx": d.cx, "cy": d.cy, "w": d.w, "h": d.h, "conf": d.conf} for d in f.detections]},
                separators=(",", ":")) + "\n")


class CountingSession:
    """Per-video state: mask to the detection region, track, count."""

    def __init__(self, calib: CalibrationResult, *, max_dist: float = 50.0, max_missed: int = 5):
        self.calib = calib
        self.bins: list[WeightBin] = calib.bins()
        self.tracks = TrackSet()
        self.max_dist = max_dist
        self.max_missed = max_missed

    def step(self, frame: Frame) -> None:
        dets = [d for d in frame.detections if self.calib.in_region(d.cx, d.cy)]
        tracker_step(self.tracks, dets, frame=frame.index, max_dist=self.max_dist, max_missed=self.max_missed)
        count_update(self.tracks, self.bins)

    def run(self, frames: Iterable[Frame]) -> dict[str, int]:
        for f in frames:
            self.step(f)
        return self.tallies()

    def tallies(self) -> dict[str, int]:
        out = {b.label: b.tally for b in self.bins}
        out["total"] = sum(b.tally for b in self.bins)
        return out
