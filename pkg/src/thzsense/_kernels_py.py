"""Pure-Python/numpy implementations of the geometry kernels.

Same signatures and results as the compiled ``_kernels`` extension; used when
the extension is not built or ``THZSENSE_PURE_PYTHON`` is set.
"""
import math

import numpy as np


def segments_hit_discs(segments, discs):
    """Boolean (n_segments, n_discs): segment passes strictly inside the disc.

    segments: (n, 4) rows x0, y0, x1, y1. discs: (m, 3) rows cx, cy, radius.
    """
    seg = np.asarray(segments, dtype=np.float64).reshape(-1, 4)
    dsc = np.asarray(discs, dtype=np.float64).reshape(-1, 3)
    if len(seg) == 0 or len(dsc) == 0:
        return np.zeros((len(seg), len(dsc)), dtype=bool)
    p0 = seg[:, None, 0:2]
    d = seg[:, None, 2:4] - p0
    c = dsc[None, :, 0:2]
    dd = np.sum(d * d, axis=-1)
    t = np.where(dd > 0, np.sum((c - p0) * d, axis=-1) / np.where(dd > 0, dd, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = p0 + t[..., None] * d
    dist2 = np.sum((closest - c) ** 2, axis=-1)
    return dist2 < dsc[None, :, 2] ** 2


def _wrap(a):
    return (a + math.pi) % (2 * math.pi) - math.pi


def _mirror_residual(cx, cy, r, beta, vx, vy, px, py):
    nx, ny = math.cos(beta), math.sin(beta)
    sx, sy = cx + r * nx, cy + r * ny
    ux, uy = vx - sx, vy - sy
    lu = math.hypot(ux, uy)
    wx, wy = px - sx, py - sy
    lw = math.hypot(wx, wy)
    return (nx * uy - ny * ux) / lu + (nx * wy - ny * wx) / lw


def specular_point(cx, cy, r, vx, vy, px, py, tol=1e-12):
    """Specular reflection point on a disc boundary for endpoints v and p.

    Bisection on the boundary angle between the bearings of v and p seen from
    the center, driving sin(angle to v) + sin(angle to p) about the normal to
    zero. Returns (sx, sy, ok); ok is False when the points are not both in
    front of the reflecting surface.
    """
    bv = math.atan2(vy - cy, vx - cx)
    bp = math.atan2(py - cy, px - cx)
    if math.hypot(vx - cx, vy - cy) <= r or math.hypot(px - cx, py - cy) <= r:
        return cx, cy, False
    lo, hi = bv, bv + _wrap(bp - bv)
    glo = _mirror_residual(cx, cy, r, lo, vx, vy, px, py)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = _mirror_residual(cx, cy, r, mid, vx, vy, px, py)
        if (gm > 0) == (glo > 0):
            lo, glo = mid, gm
        else:
            hi = mid
        if abs(hi - lo) < tol:
            break
    beta = 0.5 * (lo + hi)
    nx, ny = math.cos(beta), math.sin(beta)
    sx, sy = cx + r * nx, cy + r * ny
    ok = (vx - sx) * nx + (vy - sy) * ny > 0 and (px - sx) * nx + (py - sy) * ny > 0
    return sx, sy, ok


def _cell(x, cell, n):
    i = int(math.floor(x / cell))
    return min(max(i, 0), n - 1)


def traverse_cells(x0, y0, x1, y1, cell, nx, ny):
    """Grid cells (ix, iy) crossed by a segment, in order from start to end.

    Integer grid traversal; coordinates outside the grid are clamped to it.
    """
    xmax = nx * cell
    ymax = ny * cell
    x0 = min(max(x0, 0.0), xmax)
    x1 = min(max(x1, 0.0), xmax)
    y0 = min(max(y0, 0.0), ymax)
    y1 = min(max(y1, 0.0), ymax)
    ix, iy = _cell(x0, cell, nx), _cell(y0, cell, ny)
    ex, ey = _cell(x1, cell, nx), _cell(y1, cell, ny)
    dx, dy = x1 - x0, y1 - y0
    sx = 1 if dx > 0 else (-1 if dx < 0 else 0)
    sy = 1 if dy > 0 else (-1 if dy < 0 else 0)
    inf = float("inf")
    tdx = cell / abs(dx) if dx != 0 else inf
    tdy = cell / abs(dy) if dy != 0 else inf
    tmx = ((ix + (sx > 0)) * cell - x0) / dx if dx != 0 else inf
    tmy = ((iy + (sy > 0)) * cell - y0) / dy if dy != 0 else inf
    out = [(ix, iy)]
    for _ in range(nx + ny + 2):
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
        out.append((ix, iy))
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def rays_max(grid, segments, cell, skip_ends=True):
    """Max of ``grid[iy, ix]`` over the cells each segment crosses.

    With ``skip_ends`` the first and last cells are ignored; a ray with no
    interior cells scores 0.
    """
    g = np.asarray(grid, dtype=np.float64)
    ny, nx = g.shape
    seg = np.asarray(segments, dtype=np.float64).reshape(-1, 4)
    out = np.zeros(len(seg))
    for i, (x0, y0, x1, y1) in enumerate(seg):
        cells = traverse_cells(x0, y0, x1, y1, cell, nx, ny)
        if skip_ends:
            cells = cells[1:-1]
        if len(cells):
            out[i] = g[cells[:, 1], cells[:, 0]].max()
    return out
