import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial import ConvexHull

from trussgn.delaunay import delaunay_triangles, delaunay_triangulate
from trussgn.exceptions import DegenerateError, ValidationError


def circumcircle_violations(points, triangles, rtol=1e-9):
    scale = np.ptp(points, axis=0).max()
    bad = 0
    for a, b, c in triangles:
        pa, pb, pc = points[a], points[b], points[c]
        d = 2 * (pa[0] * (pb[1] - pc[1]) + pb[0] * (pc[1] - pa[1]) + pc[0] * (pa[1] - pb[1]))
        ux = ((pa @ pa) * (pb[1] - pc[1]) + (pb @ pb) * (pc[1] - pa[1]) + (pc @ pc) * (pa[1] - pb[1])) / d
        uy = ((pa @ pa) * (pc[0] - pb[0]) + (pb @ pb) * (pa[0] - pc[0]) + (pc @ pc) * (pb[0] - pa[0])) / d
        r = np.hypot(pa[0] - ux, pa[1] - uy)
        dist = np.hypot(points[:, 0] - ux, points[:, 1] - uy)
        bad += int(np.sum(dist < r - rtol * scale))
    return bad


def test_triangle():
    assert delaunay_triangulate([[0, 0], [1, 0], [0, 1]]).tolist() == [[0, 1], [0, 2], [1, 2]]
    assert len(delaunay_triangles([[0, 0], [1, 0], [0, 1]])) == 1


def test_unit_square():
    edges = delaunay_triangulate([[0, 0], [1, 0], [1, 1], [0, 1]])
    assert len(edges) == 5


def test_collinear_points_rejected():
    with pytest.raises(DegenerateError):
        delaunay_triangulate([[0, 0], [1, 1], [2, 2], [3, 3]])


def test_duplicates_rejected():
    with pytest.raises(ValidationError):
        delaunay_triangulate([[0, 0], [1, 0], [0, 1], [1, 0]])


def test_too_few_points():
    with pytest.raises(ValidationError):
        delaunay_triangulate([[0, 0], [1, 0]])


@given(st.integers(0, 2**32 - 1), st.integers(3, 60))
def test_euler_edge_count(seed, n):
    pts = np.random.default_rng(seed).uniform(0, 10, size=(n, 2))
    edges = delaunay_triangulate(pts)
    h = len(ConvexHull(pts).vertices)
    assert len(edges) == 3 * n - 3 - h
    assert set(np.unique(edges)) == set(range(n))
    assert len({tuple(e) for e in edges}) == len(edges)


def test_empty_circumcircle_and_orientation():
    rng = np.random.default_rng(3)
    for _ in range(100):
        pts = rng.uniform(0, 10, size=(int(rng.integers(3, 40)), 2))
        tris = delaunay_triangles(pts)
        assert circumcircle_violations(pts, tris) == 0
        a, b, c = pts[tris[:, 0]], pts[tris[:, 1]], pts[tris[:, 2]]
        cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
        assert np.all(cross > 0)


def test_grid_points_with_cocircular_quads():
    xs, ys = np.meshgrid(np.arange(5.0), np.arange(4.0))
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    edges = delaunay_triangulate(pts)
    # 4x5 lattice: 12 cells, each split once; hull holds 14 points
    assert len(edges) == 3 * 20 - 3 - 14
