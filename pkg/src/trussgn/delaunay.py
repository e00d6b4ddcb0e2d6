"""Incremental Bowyer-Watson Delaunay triangulation in the plane."""
from __future__ import annotations

import numpy as np

from .exceptions import DegenerateError, ValidationError


def _in_circumcircle(p, a, b, c) -> float:
    """Positive when ``p`` lies strictly inside the circumcircle of ccw ``abc``."""
    adx, ady = a[0] - p[0], a[1] - p[1]
    bdx, bdy = b[0] - p[0], b[1] - p[1]
    cdx, cdy = c[0] - p[0], c[1] - p[1]
    ad = adx * adx + ady * ady
    bd = bdx * bdx + bdy * bdy
    cd = cdx * cdx + cdy * cdy
    return (adx * (bdy * cd - bd * cdy)
            - ady * (bdx * cd - bd * cdx)
            + ad * (bdx * cdy - bdy * cdx))


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _is_collinear(pts: np.ndarray) -> bool:
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    return sv[0] == 0 or sv[1] <= 1e-12 * sv[0]


def delaunay_triangles(points) -> np.ndarray:
    """Triangles (``(t, 3)`` counter-clockwise vertex indices) of the Delaunay triangulation."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValidationError("need at least three 2D points")
    if len(np.unique(pts, axis=0)) != len(pts):
        raise ValidationError("duplicate points")
    if _is_collinear(pts):
        raise DegenerateError("all points are collinear")

    # work in a unit-box frame to keep the predicates well scaled
    lo = pts.min(axis=0)
    span = float((pts.max(axis=0) - lo).max())
    work = [tuple(p) for p in (pts - lo) / span]
    n = len(work)
    ghost = n  # symbolic vertex at infinity; hull edges carry a ghost triangle
    tol = 1e-14

    k = next(k for k in range(2, n) if _orient(work[0], work[1], work[k]) != 0.0)
    a, b, c = (0, 1, k) if _orient(work[0], work[1], work[k]) > 0 else (1, 0, k)
    triangles = {(a, b, c), (b, a, ghost), (c, b, ghost), (a, c, ghost)}

    def conflicts(t, p):
        if t[2] == ghost:
            u, v = work[t[0]], work[t[1]]
            side = _orient(u, v, p)
            if side != 0.0:
                return side > 0.0
            # collinear with a hull edge: conflict only inside the segment
            dot = (p[0] - u[0]) * (v[0] - u[0]) + (p[1] - u[1]) * (v[1] - u[1])
            return 0.0 < dot < (v[0] - u[0]) ** 2 + (v[1] - u[1]) ** 2
        return _in_circumcircle(p, work[t[0]], work[t[1]], work[t[2]]) > tol

    for i in range(n):
        if i in (a, b, c):
            continue
        p = work[i]
        bad = [t for t in triangles if conflicts(t, p)]
        # cavity boundary: edges owned by exactly one bad triangle
        edge_count: dict = {}
        for t in bad:
            for e in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                key = (min(e), max(e))
                edge_count[key] = edge_count.get(key, 0) + 1
        for t in bad:
            triangles.discard(t)
        for t in bad:
            for u, v in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                if edge_count[(min(u, v), max(u, v))] != 1:
                    continue
                if u == ghost:
                    triangles.add((v, i, ghost))
                elif v == ghost:
                    triangles.add((i, u, ghost))
                else:
                    triangles.add((u, v, i))

    tris = [t for t in triangles if max(t) < n]
    return np.array(sorted(tris), dtype=np.int64).reshape(-1, 3)


def delaunay_triangulate(points) -> np.ndarray:
    """Unique undirected edges ``(i, j)``, ``i < j``, of the Delaunay triangulation.

    Raises :class:`DegenerateError` if every point lies on one line.
    """
    tris = delaunay_triangles(points)
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges = np.sort(edges, axis=1)
    edges = np.unique(edges, axis=0)
    if len(np.unique(edges)) != len(points):
        raise DegenerateError("triangulation left a point isolated")
    return edges
