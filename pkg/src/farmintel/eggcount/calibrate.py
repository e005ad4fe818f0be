"""Recover weighing-spring lines from a calibration run and build counting regions.

Eggs halt briefly at each spring, so their centroids pile up in dense
blobs. DBSCAN keeps those blobs and discards travel and spurious points;
a Hough transform restricted to lines crossing the lane finds spring
candidates; candidates closer than ``merge_px`` are merged and each merged
line is refit by total least squares on its inliers. Every spring line gets
a band of ``roi_half_width`` pixels, clipped to the lane rectangle.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .cluster import NOISE, dbscan
from .hough import fit_line_tls, hough_lines, line_distance
from .tracking import CLASSES, FRAME_H, FRAME_W, Detection, WeightBin, point_in_polygon

Point = tuple[float, float]


class CalibrationError(RuntimeError):
    pass


@dataclass
class CalibrationConfig:
    eps: float = 25.0
    min_pts: int = 8
    rho_res: float = 2.0
    theta_res_deg: float = 1.0
    votes_min: int = 40
    # springs cross the lane, which runs along +x
    max_tilt_deg: float = 20.0
    merge_px: float = 20.0
    inlier_px: float = 4.0
    roi_half_width: float = 30.0
    lane: tuple[float, float, float, float] = (0.0, 140.0, float(FRAME_W), 340.0)  # x0, y0, x1, y1

    def validate(self) -> None:
        if self.eps <= 0 or self.min_pts < 1:
            raise ValueError("dbscan needs eps > 0 and min_pts >= 1")
        if self.rho_res <= 0 or self.theta_res_deg <= 0:
            raise ValueError("hough resolutions must be positive")
        if self.roi_half_width <= 0 or self.merge_px <= 0 or self.inlier_px <= 0:
            raise ValueError("pixel widths must be positive")
        x0, y0, x1, y1 = self.lane
        if not (0 <= x0 < x1 <= FRAME_W and 0 <= y0 < y1 <= FRAME_H):
            raise ValueError(f"lane {self.lane} is not a rectangle inside the frame")

    @classmethod
    def from_dict(cls, d: dict) -> CalibrationConfig:
        d = dict(d)
        if "lane" in d:
            d["lane"] = tuple(float(v) for v in d["lane"])
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass
class CalibrationResult:
    lines: list[tuple[float, float]]  # (rho, theta) per class, ordered along the lane
    rois: list[list[Point]]
    labels: tuple[str, ...] = CLASSES
    support: list[int] = field(default_factory=list)

    @property
    def detection_region(self) -> list[list[Point]]:
        """Union of the ROIs; detections elsewhere may be masked."""
        return self.rois

    def in_region(self, x: float, y: float) -> bool:
        return any(point_in_polygon((x, y), poly) for poly in self.rois)

    def bins(self) -> list[WeightBin]:
        return [WeightBin(lbl, [tuple(p) for p in poly]) for lbl, poly in zip(self.labels, self.rois)]

    def to_json(self) -> str:
        return json.dumps({
            "lines": [{"rho": r, "theta": t} for r, t in self.lines],
            "rois": [{"label": lbl, "polygon": [list(p) for p in poly]} for lbl, poly in zip(self.labels, self.rois)],
            "detection_region": [[list(p) for p in poly] for poly in self.rois],
            "support": self.support,
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> CalibrationResult:
        d = json.loads(text)
        rois = [[tuple(p) for p in r["polygon"]] for r in d["rois"]]
        if len(rois) != 4:
            raise CalibrationError(f"calibration file holds {len(rois)} ROIs, need 4")
        return cls([(l["rho"], l["theta"]) for l in d["lines"]], rois,
                   tuple(r["label"] for r in d["rois"]), list(d.get("support", [])))


def clip_halfplane(poly: Sequence[Point], a: float, b: float, c: float) -> list[Point]:
    """Keep the part of convex ``poly`` with a*x + b*y <= c."""
    out: list[Point] = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp = a * p[0] + b * p[1] - c
        fq = a * q[0] + b * q[1] - c
        if fp <= 0:
            out.append(p)
        if (fp < 0 < fq) or (fq < 0 < fp):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def band_polygon(rho: float, theta: float, half_width: float, lane) -> list[Point]:
    x0, y0, x1, y1 = lane
    poly = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    c, s = math.cos(theta), math.sin(theta)
    poly = clip_halfplane(poly, c, s, rho + half_width)
    poly = clip_halfplane(poly, -c, -s, -(rho - half_width))
    return [(round(x, 9), round(y, 9)) for x, y in poly]


def lane_crossing(rho: float, theta: float, y: float) -> float:
    return (rho - y * math.sin(theta)) / math.cos(theta)


def calibrate(log: Iterable[Detection], cfg: CalibrationConfig = CalibrationConfig()) -> CalibrationResult:
    cfg.validate()
    pts = np.array([(d.cx, d.cy) for d in log], dtype=np.float64).reshape(-1, 2)
    labels = dbscan(pts, cfg.eps, cfg.min_pts)
    halted = pts[labels != NOISE]
    peaks = hough_lines(halted, cfg.rho_res, math.radians(cfg.theta_res_deg), cfg.votes_min,
                        theta_window=(0.0, math.radians(cfg.max_tilt_deg))) if len(halted) else []

    y_mid = 0.5 * (cfg.lane[1] + cfg.lane[3])
    groups: list[tuple[float, float]] = []  # strongest peak per merged group
    for rho, theta, _ in peaks:
        x = lane_crossing(rho, theta, y_mid)
        if all(abs(x - lane_crossing(r, t, y_mid)) > cfg.merge_px for r, t in groups):
            groups.append((rho, theta))

    lines, support = [], []
    for rho, theta in groups:
        inl = halted[line_distance(halted, rho, theta) <= cfg.inlier_px]
        if len(inl) >= 2:
            rho, theta = fit_line_tls(inl)
        lines.append((rho, theta))
        support.append(int(len(inl)))
    if len(lines) < 4:
        raise CalibrationError(f"recovered {len(lines)} spring lines, need 4")
    keep = sorted(range(len(lines)), key=lambda i: (-support[i], i))[:4]
    keep.sort(key=lambda i: lane_crossing(*lines[i], y_mid))
    lines = [lines[i] for i in keep]
    support = [support[i] for i in keep]

    xs = [lane_crossing(r, t, y_mid) for r, t in lines]
    for a, b in zip(xs, xs[1:]):
        if b - a <= 2 * cfg.roi_half_width:
            raise CalibrationError(f"spring lines at x={a:.1f} and x={b:.1f} are too close for "
                                   f"ROIs of half-width {cfg.roi_half_width}")
    rois = [band_polygon(r, t, cfg.roi_half_width, cfg.lane) for r, t in lines]
    return CalibrationResult(lines, rois, CLASSES, support)
