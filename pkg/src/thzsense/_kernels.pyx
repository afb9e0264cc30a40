# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels; mirrors ``_kernels_py`` one to one."""
import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, cos, sin, sqrt, floor, fabs, fmod, M_PI, INFINITY

cnp.import_array()


def segments_hit_discs(segments, discs):
    cdef double[:, ::1] seg = np.ascontiguousarray(np.asarray(segments, dtype=np.float64).reshape(-1, 4))
    cdef double[:, ::1] dsc = np.ascontiguousarray(np.asarray(discs, dtype=np.float64).reshape(-1, 3))
    cdef Py_ssize_t n = seg.shape[0], m = dsc.shape[0], i, j
    out_arr = np.zeros((n, m), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    cdef double x0, y0, dx, dy, dd, t, qx, qy
    for i in range(n):
        x0 = seg[i, 0]
        y0 = seg[i, 1]
        dx = seg[i, 2] - x0
        dy = seg[i, 3] - y0
        dd = dx * dx + dy * dy
        for j in range(m):
            if dd > 0:
                t = ((dsc[j, 0] - x0) * dx + (dsc[j, 1] - y0) * dy) / dd
                if t < 0:
                    t = 0
                elif t > 1:
                    t = 1
            else:
                t = 0
            qx = x0 + t * dx - dsc[j, 0]
            qy = y0 + t * dy - dsc[j, 1]
            out[i, j] = (qx * qx + qy * qy) < dsc[j, 2] * dsc[j, 2]
    return out_arr.astype(bool)


cdef inline double _wrap(double a):
    cdef double r = fmod(a + M_PI, 2 * M_PI)
    if r < 0:
        r += 2 * M_PI
    return r - M_PI


cdef inline double _residual(double cx, double cy, double r, double beta,
                             double vx, double vy, double px, double py):
    cdef double nx = cos(beta), ny = sin(beta)
    cdef double sx = cx + r * nx, sy = cy + r * ny
    cdef double ux = vx - sx, uy = vy - sy
    cdef double wx = px - sx, wy = py - sy
    return (nx * uy - ny * ux) / sqrt(ux * ux + uy * uy) + (nx * wy - ny * wx) / sqrt(wx * wx + wy * wy)


def specular_point(double cx, double cy, double r, double vx, double vy,
                   double px, double py, double tol=1e-12):
    cdef double bv = atan2(vy - cy, vx - cx)
    cdef double bp = atan2(py - cy, px - cx)
    cdef double lo, hi, glo, mid, gm, beta, nx, ny, sx, sy
    cdef int it
    if sqrt((vx - cx) ** 2 + (vy - cy) ** 2) <= r or sqrt((px - cx) ** 2 + (py - cy) ** 2) <= r:
        return cx, cy, False
    lo = bv
    hi = bv + _wrap(bp - bv)
    glo = _residual(cx, cy, r, lo, vx, vy, px, py)
    for it in range(200):
        mid = 0.5 * (lo + hi)
        gm = _residual(cx, cy, r, mid, vx, vy, px, py)
        if (gm > 0) == (glo > 0):
            lo = mid
            glo = gm
        else:
            hi = mid
        if fabs(hi - lo) < tol:
            break
    beta = 0.5 * (lo + hi)
    nx = cos(beta)
    ny = sin(beta)
    sx = cx + r * nx
    sy = cy + r * ny
    ok = ((vx - sx) * nx + (vy - sy) * ny > 0) and ((px - sx) * nx + (py - sy) * ny > 0)
    return sx, sy, ok


cdef inline Py_ssize_t _cell(double x, double cell, Py_ssize_t n):
    cdef Py_ssize_t i = <Py_ssize_t>floor(x / cell)
    if i < 0:
        return 0
    if i > n - 1:
        return n - 1
    return i


cdef Py_ssize_t _traverse(double x0, double y0, double x1, double y1, double cell,
                          Py_ssize_t nx, Py_ssize_t ny, Py_ssize_t[:, ::1] buf):
    cdef double xmax = nx * cell, ymax = ny * cell
    cdef Py_ssize_t ix, iy, ex, ey, sx, sy, count, it
    cdef double dx, dy, tdx, tdy, tmx, tmy
    x0 = min(max(x0, 0.0), xmax)
    x1 = min(max(x1, 0.0), xmax)
    y0 = min(max(y0, 0.0), ymax)
    y1 = min(max(y1, 0.0), ymax)
    ix = _cell(x0, cell, nx)
    iy = _cell(y0, cell, ny)
    ex = _cell(x1, cell, nx)
    ey = _cell(y1, cell, ny)
    dx = x1 - x0
    dy = y1 - y0
    sx = 1 if dx > 0 else (-1 if dx < 0 else 0)
    sy = 1 if dy > 0 else (-1 if dy < 0 else 0)
    tdx = cell / fabs(dx) if dx != 0 else INFINITY
    tdy = cell / fabs(dy) if dy != 0 else INFINITY
    tmx = ((ix + (1 if sx > 0 else 0)) * cell - x0) / dx if dx != 0 else INFINITY
    tmy = ((iy + (1 if sy > 0 else 0)) * cell - y0) / dy if dy != 0 else INFINITY
    buf[0, 0] = ix
    buf[0, 1] = iy
    count = 1
    for it in range(nx + ny + 2):
        if ix == ex and iy == ey:
            break
        if tmx < tmy:
            ix += sx
            tmx += tdx
        else:
            iy += sy
            tmy += tdy
        if ix < 0 or ix >= nx or iy < 0 or iy >= ny:
            break
        buf[count, 0] = ix
        buf[count, 1] = iy
        count += 1
    return count


def traverse_cells(double x0, double y0, double x1, double y1, double cell, Py_ssize_t nx, Py_ssize_t ny):
    buf_arr = np.empty((nx + ny + 3, 2), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] buf = buf_arr
    cdef Py_ssize_t count = _traverse(x0, y0, x1, y1, cell, nx, ny, buf)
    return buf_arr[:count].astype(np.int64)


def rays_max(grid, segments, double cell, bint skip_ends=True):
    cdef double[:, ::1] g = np.ascontiguousarray(grid, dtype=np.float64)
    cdef double[:, ::1] seg = np.ascontiguousarray(np.asarray(segments, dtype=np.float64).reshape(-1, 4))
    cdef Py_ssize_t ny = g.shape[0], nx = g.shape[1]
    cdef Py_ssize_t n = seg.shape[0], i, c, count, first, last
    buf_arr = np.empty((nx + ny + 3, 2), dtype=np.intp)
    cdef Py_ssize_t[:, ::1] buf = buf_arr
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double best, v
    for i in range(n):
        count = _traverse(seg[i, 0], seg[i, 1], seg[i, 2], seg[i, 3], cell, nx, ny, buf)
        first = 1 if skip_ends else 0
        last = count - 1 if skip_ends else count
        best = 0.0
        for c in range(first, last):
            v = g[buf[c, 1], buf[c, 0]]
            if c == first or v > best:
                best = v
        out[i] = best
    return out_arr
