"""Straight-line Hough transform in normal form ``x cos(theta) + y sin(theta) = rho``.

theta lies in [0, pi) and rho is signed, so every line has exactly one
parameter pair. The accumulator wraps at theta = pi onto theta = 0 with rho
negated; non-maximum suppression honours that seam.
"""
from __future__ import annotations

import math

import numpy as np


def normalize_line(rho: float, theta: float) -> tuple[float, float]:
    theta = math.fmod(theta, 2 * math.pi)
    if theta < 0:
        theta += 2 * math.pi
    if theta >= math.pi:
        theta -= math.pi
        rho = -rho
    if theta >= math.pi - 1e-12:
        theta, rho = 0.0, -rho
    return rho, theta


def accumulate(points, rho_res: float, theta_res: float):
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    thetas = np.arange(0.0, math.pi - 1e-12, theta_res)
    rho_max = float(np.max(np.hypot(pts[:, 0], pts[:, 1]))) if len(pts) else 0.0
    n_rho = int(math.ceil(rho_max / rho_res)) + 1
    rho_idx = np.rint((np.outer(pts[:, 0], np.cos(thetas)) + np.outer(pts[:, 1], np.sin(thetas)))
                      / rho_res).astype(np.int64) + n_rho
    acc = np.zeros((len(thetas), 2 * n_rho + 1), dtype=np.int64)
    cols = np.broadcast_to(np.arange(len(thetas)), rho_idx.shape)
    np.add.at(acc, (cols.ravel(), rho_idx.ravel()), 1)
    return acc, thetas, n_rho


def _neighbours(ti: int, ri: int, n_theta: int, n_cols: int, n_rho: int):
    for dt in (-1, 0, 1):
        t = ti + dt
        r0 = ri
        if t < 0:
            t, r0 = n_theta - 1, 2 * n_rho - ri
        elif t >= n_theta:
            t, r0 = 0, 2 * n_rho - ri
        for dr in (-1, 0, 1):
            r = r0 + dr
            if (dt, dr) != (0, 0) and 0 <= r < n_cols:
                yield t, r


def hough_lines(points, rho_res: float = 2.0, theta_res: float = math.radians(1.0),
                votes_min: int = 5, *, theta_window: tuple[float, float] | None = None) -> list[tuple[float, float, int]]:
    """Return ``(rho, theta, votes)`` peaks, strongest first.

    A peak is a cell with at least ``votes_min`` votes that no neighbour
    (one cell in each direction) beats. Equal neighbours are resolved
    greedily in (votes desc, theta, rho) order. ``theta_window`` given as
    (center, half_width) in radians keeps only peaks whose line direction is
    within the window, accounting for the theta seam.
    """
    if rho_res <= 0 or theta_res <= 0:
        raise ValueError("resolutions must be positive")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) == 0:
        return []
    acc, thetas, n_rho = accumulate(pts, rho_res, theta_res)
    n_theta, n_cols = acc.shape
    cand = np.argwhere(acc >= votes_min)
    if theta_window is not None:
        c, hw = theta_window
        d = np.abs((thetas[cand[:, 0]] - c + math.pi / 2) % math.pi - math.pi / 2)
        cand = cand[d <= hw + 1e-12]
    order = sorted(((-int(acc[t, r]), int(t), int(r)) for t, r in cand))
    suppressed = set()
    peaks = []
    for negv, t, r in order:
        if (t, r) in suppressed:
            continue
        nb = list(_neighbours(t, r, n_theta, n_cols, n_rho))
        if any(acc[a, b] > -negv for a, b in nb):
            continue
        suppressed.update(nb)
        rho, theta = normalize_line((r - n_rho) * rho_res, float(thetas[t]))
        peaks.append((rho, theta, -negv))
    return peaks


def fit_line_tls(points) -> tuple[float, float]:
    """Total-least-squares line through ``points`` as a normalized (rho, theta)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 2:
        raise ValueError("need at least two points to fit a line")
    mean = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - mean, full_matrices=False)
    normal = vt[-1]
    theta = math.atan2(normal[1], normal[0])
    rho = float(mean @ normal)
    return normalize_line(rho, theta)


def line_distance(points, rho: float, theta: float) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return np.abs(pts[:, 0] * math.cos(theta) + pts[:, 1] * math.sin(theta) - rho)
