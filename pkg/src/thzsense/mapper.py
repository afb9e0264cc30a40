"""From estimated path parameters to positions and awareness maps.

Geometry of a single bounce: subarray ``v``, reflection point ``o`` and user
``p`` form a triangle with interior angles ``2 psi`` at ``o`` (incidence
measured from the surface normal), ``|theta|`` at ``p`` and the remainder at
``v``. The legs follow from the law of sines and the total path ``c tau``.

Two meshes are kept on a square grid: ``E`` marks cells occupied in the
current frame and ``sigma`` counts, per cell, the frames in which a user, a
reflector or a ray passed through it.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .channel import C, CarrierConfig, fresnel_coefficient, free_space_magnitude, rayleigh_factor
from .scene import bearing, wrap_angle

DEFAULT_CELL = 0.25
SKIN_INDEX = 2.1


@dataclass
class LocalizationResult:
    user_position: tuple[float, float]
    link_kind: str
    subarray_position: tuple[float, float]
    obstacle_position: tuple[float, float] | None = None
    r1: float | None = None
    r2: float | None = None
    incidence: float | None = None
    degenerate: bool = False
    clipped: bool = False
    incidence_fallback: bool = False
    residuals: dict = field(default_factory=dict)

    @property
    def usable(self) -> bool:
        return not self.degenerate


def invert_los(aoa: float, toa: float, v) -> tuple[float, float]:
    """User position from the global arrival bearing and the delay."""
    if toa < 0:
        raise ValueError("delay must be non-negative")
    r = C * toa
    return (v[0] + r * math.cos(aoa), v[1] + r * math.sin(aoa))


def reflection_loss(psi, eta: float = SKIN_INDEX, sigma: float = 0.0, f=0.275e12):
    """|gamma rho| averaged over the frequencies in ``f``."""
    psi = np.atleast_1d(np.asarray(psi, dtype=float))
    f = np.atleast_1d(np.asarray(f, dtype=float))
    vals = np.abs(fresnel_coefficient(psi[:, None], eta) * rayleigh_factor(psi[:, None], sigma, f[None, :]))
    return vals.mean(axis=1)


def solve_incidence(gain_magnitude: float, r_total: float, f, k, eta: float = SKIN_INDEX,
                    sigma: float = 0.0, tol: float = 1e-10) -> tuple[float, bool]:
    """Incidence angle whose reflection loss explains the measured magnitude.

    The loss target is ``|alpha| / mean_k |LoS gain at r_total|``; it is solved
    by bisection on ``(0, pi/2]``, where the loss is increasing. Returns
    ``(psi, ok)``; an unreachable target gives ``(pi/4, False)``.
    """
    if r_total <= 0:
        return math.pi / 4, False
    f = np.atleast_1d(np.asarray(f, dtype=float))
    k = np.broadcast_to(np.asarray(k, dtype=float), f.shape)
    target = gain_magnitude / float(np.mean(free_space_magnitude(f, r_total, k)))
    dense = reflection_loss(np.linspace(1e-6, math.pi / 2, 256), eta, sigma, f)
    if np.any(np.diff(dense) < -1e-12):
        return math.pi / 4, False
    lo_val, hi_val = float(dense[0]), float(dense[-1])
    if not lo_val - 1e-9 <= target <= hi_val + 1e-9:
        return math.pi / 4, False
    if target >= hi_val:
        return math.pi / 2, True
    if target <= lo_val:
        return 0.0, True
    lo, hi = 1e-6, math.pi / 2
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if reflection_loss(mid, eta, sigma, f)[0] < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), True


def invert_nlos(aoa: float, aod: float, toa: float, psi: float, v, min_angle: float = 1e-6,
                room_size: float | None = None):
    """Reflection point, user position and legs of a single-bounce path.

    Returns ``(o, p, r1, r2, ok)`` with ``r2 = |v o|`` and ``r1 = |o p|``.
    ``ok`` is False for a degenerate triangle, in which case the positions
    are ``None``.
    """
    ang_o = 2.0 * psi
    ang_p = abs(aod)
    ang_v = math.pi - ang_o - ang_p
    if toa <= 0 or min(ang_o, ang_p, ang_v) <= min_angle:
        return None, None, None, None, False
    total = C * toa
    sp, sv = math.sin(ang_p), math.sin(ang_v)
    r2 = total * sp / (sp + sv)
    r1 = total * sv / (sp + sv)
    o = (v[0] + r2 * math.cos(aoa), v[1] + r2 * math.sin(aoa))
    candidates = []
    for sgn in (1.0, -1.0):
        b = aoa + math.pi + sgn * ang_o
        p = (o[0] + r1 * math.cos(b), o[1] + r1 * math.sin(b))
        pred = float(wrap_angle(bearing(p, o) - bearing(p, v)))
        inside = room_size is None or (0 <= p[0] <= room_size and 0 <= p[1] <= room_size)
        candidates.append((np.sign(pred) == np.sign(aod), inside, p))
    if aod != 0:
        match = [c for c in candidates if c[0]]
    else:
        match = [c for c in candidates if c[1]]
    p = (match or candidates)[0][2]
    return o, p, r1, r2, True


def _clip(point, room_size: float | None):
    if room_size is None or point is None:
        return point, False
    x = min(max(point[0], 0.0), room_size)
    y = min(max(point[1], 0.0), room_size)
    return (x, y), (x, y) != tuple(point)


def localize(estimate, subarray, carrier: CarrierConfig, eta: float = SKIN_INDEX, sigma: float = 0.0,
             room_size: float | None = None) -> LocalizationResult:
    """Invert one :class:`~thzsense.estimator.SensingEstimate`."""
    v = subarray.position
    aoa = float(wrap_angle(estimate.aoa + subarray.boresight))
    if estimate.link_kind == "LoS":
        p, clipped = _clip(invert_los(aoa, estimate.toa, v), room_size)
        return LocalizationResult(p, "LoS", v, clipped=clipped)
    psi, ok = solve_incidence(abs(estimate.gain), C * estimate.toa, carrier.subcarrier_frequencies,
                              carrier.absorption, eta, sigma)
    o, p, r1, r2, valid = invert_nlos(aoa, estimate.aod, estimate.toa, psi, v, room_size=room_size)
    if not valid:
        return LocalizationResult(v, "NLoS", v, incidence=psi, degenerate=True, incidence_fallback=not ok)
    p, c1 = _clip(p, room_size)
    o, c2 = _clip(o, room_size)
    return LocalizationResult(p, "NLoS", v, o, r1, r2, psi, clipped=c1 or c2, incidence_fallback=not ok)


@dataclass
class AwarenessMap:
    room_size: float
    cell_size: float = DEFAULT_CELL
    E: np.ndarray = field(default=None)
    sigma: np.ndarray = field(default=None)
    frame: int = 0

    def __post_init__(self):
        if self.cell_size <= 0 or self.room_size <= 0:
            raise ValueError("cell size and room size must be positive")
        n = self.shape
        if self.E is None:
            self.E = np.zeros(n, dtype=np.uint8)
        if self.sigma is None:
            self.sigma = np.zeros(n, dtype=np.int64)

    @property
    def shape(self) -> tuple[int, int]:
        n = int(math.ceil(self.room_size / self.cell_size - 1e-9))
        return (n, n)

    def cell_of(self, point) -> tuple[int, int]:
        """``(ix, iy)`` of the cell holding ``point`` (clamped to the grid)."""
        ny, nx = self.shape
        ix = min(max(int(math.floor(point[0] / self.cell_size)), 0), nx - 1)
        iy = min(max(int(math.floor(point[1] / self.cell_size)), 0), ny - 1)
        return ix, iy

    def ray_cells(self, a, b) -> np.ndarray:
        ny, nx = self.shape
        return kernels.traverse_cells(float(a[0]), float(a[1]), float(b[0]), float(b[1]), self.cell_size, nx, ny)

    def normalized(self) -> np.ndarray:
        return normalize_map(self.sigma)

    def copy(self) -> "AwarenessMap":
        return AwarenessMap(self.room_size, self.cell_size, self.E.copy(), self.sigma.copy(), self.frame)


def frame_cells(amap: AwarenessMap, result: LocalizationResult) -> tuple[set, set]:
    """Occupant cells and ray cells contributed by one localization."""
    occ, ray = set(), set()
    if result.degenerate:
        return occ, ray
    occ.add(amap.cell_of(result.user_position))
    v = result.subarray_position
    if result.link_kind == "LoS":
        legs = [(v, result.user_position)]
    else:
        occ.add(amap.cell_of(result.obstacle_position))
        legs = [(v, result.obstacle_position), (result.obstacle_position, result.user_position)]
    for a, b in legs:
        ray.update(map(tuple, amap.ray_cells(a, b).tolist()))
    return occ, ray


def update_map(amap: AwarenessMap, results: LocalizationResult | Iterable[LocalizationResult]) -> AwarenessMap:
    """Advance the maps by one frame.

    ``E`` is cleared and then set at user and reflector cells. Every cell
    hit by an occupant or a ray this frame gains one count in ``sigma``.
    Degenerate results are skipped.
    """
    if isinstance(results, LocalizationResult):
        results = [results]
    amap.E[:] = 0
    touched = set()
    for res in results:
        occ, ray = frame_cells(amap, res)
        for ix, iy in occ:
            amap.E[iy, ix] = 1
        touched |= occ | ray
    for ix, iy in touched:
        amap.sigma[iy, ix] += 1
    amap.frame += 1
    return amap


def normalize_map(sigma: np.ndarray) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    peak = sigma.max() if sigma.size else 0.0
    return sigma / peak if peak > 0 else np.zeros_like(sigma)


def merge_maps(maps: Sequence[AwarenessMap]) -> AwarenessMap:
    """Elementwise sum of score meshes; ``E`` is the union of occupancies."""
    first = maps[0]
    out = first.copy()
    for m in maps[1:]:
        if m.shape != first.shape or m.cell_size != first.cell_size:
            raise ValueError("maps must share the same grid")
        out.sigma = out.sigma + m.sigma
        out.E = np.maximum(out.E, m.E)
        out.frame = max(out.frame, m.frame)
    return out


def export_map(amap: AwarenessMap, path) -> tuple[Path, Path]:
    """Write the normalized score mesh as CSV (one row per y cell) plus a JSON header."""
    path = Path(path)
    csv_path, json_path = path.with_suffix(".csv"), path.with_suffix(".json")
    np.savetxt(csv_path, amap.normalized(), fmt="%.6f", delimiter=",")
    header = {
        "cell_size": amap.cell_size,
        "bounds": [0.0, 0.0, amap.room_size, amap.room_size],
        "frame": amap.frame,
        "shape": list(amap.shape),
    }
    json_path.write_text(json.dumps(header, sort_keys=True, indent=2))
    return csv_path, json_path


def load_map(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    header = json.loads(path.with_suffix(".json").read_text())
    grid = np.loadtxt(path.with_suffix(".csv"), delimiter=",", ndmin=2)
    return grid, header
