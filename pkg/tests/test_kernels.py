import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thzsense import _kernels_py

try:
    from thzsense import _kernels
except ImportError:  # pragma: no cover
    _kernels = None

coord = st.floats(0.0, 10.0, allow_nan=False)


def brute_hit(seg, disc, n=20001):
    # dense sampling of the segment; strict interior
    t = np.linspace(0, 1, n)
    x = seg[0] + t * (seg[2] - seg[0])
    y = seg[1] + t * (seg[3] - seg[1])
    return bool(np.min(np.hypot(x - disc[0], y - disc[1])) < disc[2])


def test_segment_through_disc(backend):
    hit = backend.segments_hit_discs([[0, 0, 4, 0]], [[2, 0, 0.5], [2, 2, 0.5], [5, 0, 0.5]])
    assert hit.tolist() == [[True, False, False]]


def test_empty_inputs(backend):
    assert backend.segments_hit_discs(np.zeros((0, 4)), [[0, 0, 1]]).shape == (0, 1)
    assert backend.segments_hit_discs([[0, 0, 1, 1]], np.zeros((0, 3))).shape == (1, 0)


def test_segments_match_brute_force(backend, rng):
    segs = rng.uniform(0, 10, (200, 4))
    discs = np.column_stack([rng.uniform(0, 10, (15, 2)), rng.uniform(0.2, 1.0, 15)])
    got = backend.segments_hit_discs(segs, discs)
    for i in range(0, 200, 7):
        for j in range(15):
            d = discs[j]
            # skip near-tangent cases where sampling cannot decide
            t = np.clip(np.dot(d[:2] - segs[i, :2], segs[i, 2:] - segs[i, :2]) / np.sum((segs[i, 2:] - segs[i, :2]) ** 2), 0, 1)
            closest = segs[i, :2] + t * (segs[i, 2:] - segs[i, :2])
            if abs(np.hypot(*(closest - d[:2])) - d[2]) < 1e-3:
                continue
            assert got[i, j] == brute_hit(segs[i], d)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coord, coord, coord, coord), min_size=1, max_size=8),
       st.lists(st.tuples(coord, coord, st.floats(0.05, 2.0)), min_size=1, max_size=5))
def test_backends_agree_on_hits(segs, discs):
    if _kernels is None:
        pytest.skip("compiled kernels not built")
    a = _kernels_py.segments_hit_discs(segs, discs)
    b = _kernels.segments_hit_discs(np.array(segs, float), np.array(discs, float))
    assert np.array_equal(a, b)


def test_traverse_horizontal(backend):
    cells = np.asarray(backend.traverse_cells(0.5, 0.5, 3.5, 0.5, 1.0, 10, 10))
    assert cells.tolist() == [[0, 0], [1, 0], [2, 0], [3, 0]]


@settings(max_examples=80, deadline=None)
@given(coord, coord, coord, coord)
def test_traversal_is_connected_and_covers_samples(x0, y0, x1, y1):
    cells = np.asarray(_kernels_py.traverse_cells(x0, y0, x1, y1, 0.5, 20, 20))
    assert tuple(cells[0]) == (min(int(x0 / 0.5), 19), min(int(y0 / 0.5), 19))
    assert tuple(cells[-1]) == (min(int(x1 / 0.5), 19), min(int(y1 / 0.5), 19))
    steps = np.abs(np.diff(cells, axis=0)).sum(axis=1)
    assert np.all(steps == 1)  # 4-connected, no repeats
    visited = set(map(tuple, cells.tolist()))
    for t in np.linspace(0.01, 0.99, 50):
        x, y = x0 + t * (x1 - x0), y0 + t * (y1 - y0)
        fx, fy = x / 0.5, y / 0.5
        if min(abs(fx - round(fx)), abs(fy - round(fy))) < 1e-6:
            continue
        assert (min(int(fx), 19), min(int(fy), 19)) in visited


@settings(max_examples=60, deadline=None)
@given(coord, coord, coord, coord)
def test_backends_agree_on_traversal(x0, y0, x1, y1):
    if _kernels is None:
        pytest.skip("compiled kernels not built")
    a = np.asarray(_kernels_py.traverse_cells(x0, y0, x1, y1, 0.5, 20, 20))
    b = np.asarray(_kernels.traverse_cells(x0, y0, x1, y1, 0.5, 20, 20))
    assert np.array_equal(a, b)


def test_rays_max_skips_end_cells(backend):
    grid = np.zeros((4, 4))
    grid[0, 0] = 9.0
    grid[0, 2] = 0.5
    out = backend.rays_max(grid, np.array([[0.5, 0.5, 3.5, 0.5]]), 1.0)
    assert out[0] == pytest.approx(0.5)
    out = backend.rays_max(grid, np.array([[0.5, 0.5, 3.5, 0.5]]), 1.0, False)
    assert out[0] == pytest.approx(9.0)


def test_backends_agree_on_rays_max(rng):
    if _kernels is None:
        pytest.skip("compiled kernels not built")
    grid = rng.random((30, 30))
    rays = rng.uniform(0, 7.5, (100, 4))
    assert np.allclose(_kernels_py.rays_max(grid, rays, 0.25), _kernels.rays_max(grid, rays, 0.25))


def test_specular_obeys_reflection_law(backend, rng):
    done = 0
    while done < 100:
        cx, cy = rng.uniform(3, 7, 2)
        r = rng.uniform(0.2, 1.0)
        v, p = rng.uniform(0, 10, 2), rng.uniform(0, 10, 2)
        sx, sy, ok = backend.specular_point(cx, cy, r, *v, *p)
        if not ok:
            continue
        n = np.array([sx - cx, sy - cy]) / r
        assert np.hypot(sx - cx, sy - cy) == pytest.approx(r, abs=1e-9)
        a, b = v - (sx, sy), p - (sx, sy)
        a, b = a / np.linalg.norm(a), b / np.linalg.norm(b)
        # equal angles on opposite sides of the normal
        assert np.dot(a, n) == pytest.approx(np.dot(b, n), abs=1e-6)
        cross = lambda u, w: u[0] * w[1] - u[1] * w[0]
        assert cross(n, a) == pytest.approx(-cross(n, b), abs=1e-6)
        done += 1


def test_specular_rejects_points_inside(backend):
    assert not backend.specular_point(0, 0, 1.0, 0.5, 0, 3, 0)[2]


def test_specular_mirror_case(backend):
    # subarray and user symmetric about the x-axis through the disc top
    sx, sy, ok = backend.specular_point(0, 0, 1.0, -2, 3, 2, 3)
    assert ok
    assert (sx, sy) == pytest.approx((0.0, 1.0), abs=1e-9)


def test_backends_agree_on_specular(rng):
    if _kernels is None:
        pytest.skip("compiled kernels not built")
    for _ in range(200):
        args = (*rng.uniform(3, 7, 2), rng.uniform(0.2, 1), *rng.uniform(0, 10, 4))
        a, b = _kernels_py.specular_point(*args), _kernels.specular_point(*args)
        assert a[2] == b[2]
        if a[2]:
            assert math.dist(a[:2], b[:2]) < 1e-9
