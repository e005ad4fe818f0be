from __future__ import annotations

from collections import deque

import numpy as np
from scipy.spatial import cKDTree

NOISE = -1


def dbscan(points, eps: float = 25.0, min_pts: int = 8) -> np.ndarray:
    """Density-based clustering; ``min_pts`` counts the point itself.

    Clusters are the connected components of core points, numbered in the
    order their lowest-index core point is met. A border point joins the
    cluster of its nearest core neighbour (ties: lexicographically smallest
    core coordinates), which makes labels independent of input order up to
    renaming.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    tree = cKDTree(pts)
    neigh = [sorted(nb) for nb in tree.query_ball_point(pts, r=eps)]
    core = np.array([len(nb) >= min_pts for nb in neigh])

    cluster = 0
    for i in range(n):
        if not core[i] or labels[i] != NOISE:
            continue
        labels[i] = cluster
        queue = deque([i])
        while queue:
            j = queue.popleft()
            for k in neigh[j]:
                if core[k] and labels[k] == NOISE:
                    labels[k] = cluster
                    queue.append(k)
        cluster += 1

    for i in np.flatnonzero(~core):
        cands = [k for k in neigh[i] if core[k]]
        if cands:
            best = min(cands, key=lambda k: (float(np.hypot(*(pts[k] - pts[i]))), pts[k, 0], pts[k, 1]))
            labels[i] = labels[best]
    return labels
