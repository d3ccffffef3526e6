"""Planar polyline/polygon primitives used by the set constructions.

Kept deliberately simple: closed curves here are simple (checked), so the
even-odd crossing rule and the winding rule agree.  Shapely backs the
simplicity test; everything else is plain numpy.
"""

from __future__ import annotations

import numpy as np
import shapely

__all__ = [
    "points_in_polygon",
    "point_in_polygon",
    "distance_to_polyline",
    "first_intersection",
    "polyline_is_simple",
    "signed_area",
    "decimate_polyline",
]


def points_in_polygon(points: np.ndarray, ring: np.ndarray,
                      budget: int = 4_000_000) -> np.ndarray:
    """Even-odd ray-crossing test, vectorized over query points.

    ``ring`` is a closed polygon (first vertex repeated last, or not --
    closure is applied).  Points exactly on an edge may land on either
    side; callers needing boundary awareness should pair this with
    :func:`distance_to_polyline`.  Work is chunked to roughly ``budget``
    point-edge pairs at a time.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ring = np.asarray(ring, dtype=float)
    if not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[0]])
    x, y = pts[:, 0], pts[:, 1]
    x0, y0 = ring[:-1, 0], ring[:-1, 1]
    x1, y1 = ring[1:, 0], ring[1:, 1]
    live = y0 != y1  # horizontal edges never cross the test ray
    x0, y0, x1, y1 = x0[live], y0[live], x1[live], y1[live]
    inv_dy = 1.0 / (y1 - y0)
    inside = np.empty(pts.shape[0], dtype=bool)
    chunk = max(1, budget // max(1, x0.size))
    for lo in range(0, pts.shape[0], chunk):
        yc = y[lo:lo + chunk, None]
        xc = x[lo:lo + chunk, None]
        straddles = (y0[None, :] <= yc) != (y1[None, :] <= yc)
        xi = x0[None, :] + (yc - y0[None, :]) * inv_dy[None, :] * (x1 - x0)[None, :]
        crossings = straddles & (xc < xi)
        inside[lo:lo + chunk] = (crossings.sum(axis=1) % 2).astype(bool)
    return inside


def point_in_polygon(point, ring: np.ndarray) -> bool:
    return bool(points_in_polygon(np.asarray(point, dtype=float)[None, :], ring)[0])


def distance_to_polyline(points: np.ndarray, poly: np.ndarray,
                         chunk: int = 512) -> np.ndarray:
    """Euclidean distance from each query point to a polyline (not filled)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    poly = np.asarray(poly, dtype=float)
    a = poly[:-1]
    d = poly[1:] - a
    seg_len2 = np.einsum("ij,ij->i", d, d)
    seg_len2[seg_len2 == 0] = 1.0
    best = np.full(pts.shape[0], np.inf)
    for lo in range(0, pts.shape[0], chunk):
        p = pts[lo:lo + chunk]
        w = p[:, None, :] - a[None, :, :]
        t = np.clip(np.einsum("pij,ij->pi", w, d) / seg_len2, 0.0, 1.0)
        diff = w - t[:, :, None] * d[None, :, :]
        best[lo:lo + chunk] = np.sqrt(np.einsum("pij,pij->pi", diff, diff).min(axis=1))
    return best


def _seg_intersect(p0, p1, q0, q1, snap):
    """Parametric intersection of segments p and q; None if disjoint."""
    r = p1 - p0
    s = q1 - q0
    denom = r[0] * s[1] - r[1] * s[0]
    if denom == 0.0:
        return None
    w = q0 - p0
    t = (w[0] * s[1] - w[1] * s[0]) / denom
    v = (w[0] * r[1] - w[1] * r[0]) / denom
    if -snap <= t <= 1 + snap and -snap <= v <= 1 + snap:
        t = min(max(t, 0.0), 1.0)
        return t, min(max(v, 0.0), 1.0), p0 + t * r
    return None


def first_intersection(poly_a: np.ndarray, poly_b: np.ndarray,
                       snap: float = 1e-10, skip_a: int = 0):
    """Earliest crossing of polyline A through polyline B.

    Walks A in order (skipping its first `skip_a` segments, e.g. to ignore
    a shared anchor point) and returns
    ``(index_a, t_a, index_b, t_b, point)`` for the first segment of A
    that intersects any segment of B, with a coarse bounding-box prefilter.
    """
    A = np.asarray(poly_a, dtype=float)
    B = np.asarray(poly_b, dtype=float)
    b0, b1 = B[:-1], B[1:]
    bxmin = np.minimum(b0[:, 0], b1[:, 0])
    bxmax = np.maximum(b0[:, 0], b1[:, 0])
    bymin = np.minimum(b0[:, 1], b1[:, 1])
    bymax = np.maximum(b0[:, 1], b1[:, 1])
    for i in range(skip_a, A.shape[0] - 1):
        p0, p1 = A[i], A[i + 1]
        xmin, xmax = min(p0[0], p1[0]) - snap, max(p0[0], p1[0]) + snap
        ymin, ymax = min(p0[1], p1[1]) - snap, max(p0[1], p1[1]) + snap
        cand = np.nonzero((bxmin <= xmax) & (bxmax >= xmin)
                          & (bymin <= ymax) & (bymax >= ymin))[0]
        best = None
        for j in cand:
            hit = _seg_intersect(p0, p1, b0[j], b1[j], snap)
            if hit is not None and (best is None or hit[0] < best[1]):
                best = (int(j), hit[0], hit[1], hit[2])
        if best is not None:
            j, t_a, t_b, pt = best
            return i, t_a, j, t_b, pt
    return None


def polyline_is_simple(ring: np.ndarray) -> bool:
    """No self-intersections (closed ring allowed to share its endpoints)."""
    ring = np.asarray(ring, dtype=float)
    return bool(shapely.LinearRing(ring).is_simple) if np.array_equal(
        ring[0], ring[-1]) else bool(shapely.LineString(ring).is_simple)


def signed_area(ring: np.ndarray) -> float:
    """Shoelace area; positive for counter-clockwise orientation."""
    ring = np.asarray(ring, dtype=float)
    if not np.array_equal(ring[0], ring[-1]):
        ring = np.vstack([ring, ring[0]])
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]))


def decimate_polyline(poly: np.ndarray, tol: float) -> np.ndarray:
    """Drop vertices whose removal perturbs the curve by less than tol
    (iterative Douglas-Peucker)."""
    poly = np.asarray(poly, dtype=float)
    n = poly.shape[0]
    if n <= 2:
        return poly.copy()
    keep = np.zeros(n, dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, n - 1)]
    while stack:
        i0, i1 = stack.pop()
        if i1 - i0 < 2:
            continue
        seg = poly[i1] - poly[i0]
        ln = np.hypot(*seg)
        pts = poly[i0 + 1:i1]
        if ln == 0.0:
            dev = np.hypot(*(pts - poly[i0]).T)
        else:
            dev = np.abs((pts[:, 0] - poly[i0, 0]) * seg[1]
                         - (pts[:, 1] - poly[i0, 1]) * seg[0]) / ln
        k = int(np.argmax(dev))
        if dev[k] > tol:
            mid = i0 + 1 + k
            keep[mid] = True
            stack.append((i0, mid))
            stack.append((mid, i1))
    return poly[keep]
