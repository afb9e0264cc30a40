"""Indoor geometry: RIS subarrays on the walls, mobile users, body blockers.

Conventions
-----------
* Positions are 2-D, in meters, inside ``[0, room_size]^2``.
* ``PathParams.aoa`` is the global bearing (atan2 convention) of the arriving
  ray seen from the subarray; the steering angle is that bearing minus the
  subarray boresight (:meth:`PathParams.local_aoa`).
* ``PathParams.aod`` is measured at the user from the bearing toward the
  serving subarray, i.e. the user array is referenced to its aligned link.
  A LoS path therefore departs at 0 and an NLoS path at the signed triangle
  angle at the user. Only departures with ``|aod| < pi/2`` are receivable.
* ``incidence`` is measured from the reflector surface normal, so pi/2 is
  grazing.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .channel import C, CarrierConfig, free_space_magnitude, fresnel_coefficient, nlos_gain, los_gain, rayleigh_factor

WALL_BORESIGHT = {"south": math.pi / 2, "north": -math.pi / 2, "west": 0.0, "east": math.pi}


def wrap_angle(a):
    """Wrap to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def bearing(src, dst) -> float:
    return math.atan2(dst[1] - src[1], dst[0] - src[0])


@dataclass(frozen=True)
class RisSubarray:
    panel_id: int
    index: int
    position: tuple[float, float]
    boresight: float
    num_antennas: int = 64
    antenna_spacing: float = C / 0.275e12 / 2
    subarray_spacing: float = 0.5

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError("subarray needs at least one antenna")
        if self.antenna_spacing <= 0:
            raise ValueError("antenna spacing must be positive")


@dataclass(frozen=True)
class User:
    user_id: int
    position: tuple[float, float]
    heading: float = 0.0
    speed: float = 0.0
    num_antennas: int = 32
    num_rf_chains: int = 4
    antenna_spacing: float = C / 0.275e12 / 2

    def __post_init__(self):
        if self.num_antennas < 1:
            raise ValueError("user needs at least one antenna")
        if not 1 <= self.num_rf_chains <= self.num_antennas:
            raise ValueError("need 1 <= R <= Q")


@dataclass(frozen=True)
class Obstacle:
    """Disc-shaped blocker/reflector; ``owner`` is the user whose body it is."""

    center: tuple[float, float]
    radius: float = 0.25
    refractive_index: float = 2.1
    surface_roughness: float = 0.0
    owner: int | None = None
    offset: float = 0.0

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("obstacle radius must be positive")
        if not self.refractive_index > 1:
            raise ValueError("refractive index must exceed 1")
        if self.surface_roughness < 0:
            raise ValueError("surface roughness must be non-negative")


@dataclass(frozen=True)
class Scene:
    room_size: float
    subarrays: tuple[RisSubarray, ...]
    users: tuple[User, ...]
    obstacles: tuple[Obstacle, ...] = ()
    association: Mapping[int, int] = field(default_factory=dict)
    wall_margin: float = 0.5
    turn_probability: float = 0.2

    def __post_init__(self):
        if len(self.users) > len(self.subarrays):
            raise ValueError("need at least as many subarrays as users")
        served = list(self.association.values())
        if len(set(served)) != len(served):
            raise ValueError("association must be injective")

    def user(self, user_id: int) -> User:
        for u in self.users:
            if u.user_id == user_id:
                return u
        raise KeyError(user_id)

    def serving_subarray(self, user_id: int) -> RisSubarray:
        for n, u in self.association.items():
            if u == user_id:
                return self.subarrays[n]
        raise KeyError(f"user {user_id} is not associated")

    def obstacle_array(self) -> np.ndarray:
        return np.array([[*o.center, o.radius] for o in self.obstacles]).reshape(-1, 3)


@dataclass(frozen=True)
class PathParams:
    kind: str
    aoa: float = 0.0
    aod: float = 0.0
    toa: float = 0.0
    incidence: float | None = None
    r: float | None = None
    r1: float | None = None
    r2: float | None = None
    gain: complex | None = None
    eta: float | None = None
    sigma: float | None = None
    reflection_point: tuple[float, float] | None = None
    obstacle_index: int | None = None

    def local_aoa(self, subarray: RisSubarray) -> float:
        return float(wrap_angle(self.aoa - subarray.boresight))


@dataclass
class SceneConfig:
    room_size_m: float = 24.0
    walls: Sequence[str] | int = ("south", "west", "east")
    panels: int = 3
    subarrays_per_panel: int = 16
    M: int = 64
    Q: int = 32
    R: int = 4
    delta_m: float | None = None
    users: int = 4
    speed_mps: float = 1.25
    obstacle_radius_m: float = 0.25
    seed: int = 0
    body_offset_m: float = 0.35
    refractive_index: float = 2.1
    surface_roughness_m: float = 0.0
    wall_margin_m: float = 0.5
    turn_probability: float = 0.2
    center_frequency_hz: float = 0.275e12

    def wall_names(self) -> tuple[str, ...]:
        order = ("south", "west", "east", "north")
        if isinstance(self.walls, int):
            if not 1 <= self.walls <= 4:
                raise ValueError("walls must be between 1 and 4")
            return order[: self.walls]
        names = tuple(str(w).lower() for w in self.walls)
        unknown = set(names) - set(order)
        if unknown:
            raise ValueError(f"unknown walls {sorted(unknown)}")
        return names

    def validate(self) -> None:
        if self.room_size_m <= 0:
            raise ValueError("room size must be positive")
        if self.panels < 1 or self.subarrays_per_panel < 1:
            raise ValueError("need at least one panel and one subarray per panel")
        if self.users < 0:
            raise ValueError("user count must be non-negative")
        if self.users > self.panels * self.subarrays_per_panel:
            raise ValueError("need N >= U subarrays for association")
        if self.M < 1 or self.Q < 1 or not 1 <= self.R <= self.Q:
            raise ValueError("antenna counts must satisfy M, Q >= 1 and 1 <= R <= Q")
        if self.delta_m is not None and self.delta_m <= 0:
            raise ValueError("antenna spacing must be positive")
        if self.speed_mps < 0 or self.obstacle_radius_m <= 0:
            raise ValueError("speed must be >= 0 and obstacle radius > 0")
        if not 0 <= self.turn_probability <= 1:
            raise ValueError("turn probability must be in [0, 1]")
        if not 0 <= self.wall_margin_m < self.room_size_m / 2:
            raise ValueError("wall margin must fit inside the room")
        self.wall_names()

    @property
    def spacing(self) -> float:
        return self.delta_m if self.delta_m is not None else C / self.center_frequency_hz / 2


def _wall_point(wall: str, s: float, L: float) -> tuple[float, float]:
    return {"south": (s, 0.0), "north": (s, L), "west": (0.0, s), "east": (L, s)}[wall]


def place_subarrays(config: SceneConfig) -> tuple[RisSubarray, ...]:
    """Evenly spaced subarrays; panels are dealt round-robin onto the walls."""
    L = config.room_size_m
    walls = config.wall_names()
    per_wall: dict[str, list[int]] = {w: [] for w in walls}
    for b in range(config.panels):
        per_wall[walls[b % len(walls)]].append(b)
    out = []
    for wall in walls:
        panels = per_wall[wall]
        if not panels:
            continue
        span = L / len(panels)
        pitch = span / config.subarrays_per_panel
        for slot, b in enumerate(panels):
            for n in range(config.subarrays_per_panel):
                s = slot * span + (n + 0.5) * pitch
                out.append(
                    RisSubarray(
                        panel_id=b,
                        index=n,
                        position=_wall_point(wall, s, L),
                        boresight=WALL_BORESIGHT[wall],
                        num_antennas=config.M,
                        antenna_spacing=config.spacing,
                        subarray_spacing=pitch,
                    )
                )
    out.sort(key=lambda sa: (sa.panel_id, sa.index))
    return tuple(out)


def body_obstacle(user: User, config_or_radius, offset: float | None = None, eta: float = 2.1, sigma: float = 0.0) -> Obstacle:
    """Body disc centered ``offset`` behind the device along the heading."""
    if isinstance(config_or_radius, SceneConfig):
        cfg = config_or_radius
        radius, offset, eta, sigma = cfg.obstacle_radius_m, cfg.body_offset_m, cfg.refractive_index, cfg.surface_roughness_m
    else:
        radius = config_or_radius
    cx = user.position[0] - offset * math.cos(user.heading)
    cy = user.position[1] - offset * math.sin(user.heading)
    return Obstacle((cx, cy), radius, eta, sigma, owner=user.user_id, offset=offset)


def associate(subarrays: Sequence[RisSubarray], users: Sequence[User], obstacles: Sequence[Obstacle] = ()) -> dict[int, int]:
    """Greedy nearest-available association, preferring unobstructed links."""
    taken: set[int] = set()
    assoc: dict[int, int] = {}
    if not users:
        return assoc
    pos = np.array([sa.position for sa in subarrays])
    discs = np.array([[*o.center, o.radius] for o in obstacles]).reshape(-1, 3)
    for u in users:
        d = np.hypot(pos[:, 0] - u.position[0], pos[:, 1] - u.position[1])
        seg = np.column_stack([pos, np.tile(u.position, (len(pos), 1))])
        blocked = kernels.segments_hit_discs(seg, discs).any(axis=1) if len(discs) else np.zeros(len(pos), bool)
        order = np.lexsort((d, blocked))
        for n in order:
            if int(n) not in taken:
                taken.add(int(n))
                assoc[int(n)] = u.user_id
                break
    return assoc


def build_scene(config: SceneConfig) -> Scene:
    """Deterministic scene for ``config.seed``: walls, users, bodies, association."""
    config.validate()
    rng = np.random.default_rng(config.seed)
    subarrays = place_subarrays(config)
    L, m = config.room_size_m, config.wall_margin_m
    users = []
    for uid in range(config.users):
        x, y = rng.uniform(m, L - m, size=2)
        users.append(
            User(
                user_id=uid,
                position=(float(x), float(y)),
                heading=float(rng.uniform(-math.pi, math.pi)),
                speed=config.speed_mps,
                num_antennas=config.Q,
                num_rf_chains=config.R,
                antenna_spacing=config.spacing,
            )
        )
    obstacles = tuple(body_obstacle(u, config) for u in users)
    assoc = associate(subarrays, users, obstacles)
    return Scene(L, subarrays, tuple(users), obstacles, assoc, m, config.turn_probability)


def random_walk_step(pos: np.ndarray, heading: np.ndarray, speed, dt: float, turn_probability: float,
                     lo: float, hi: float, rng: np.random.Generator, draws: int | None = None):
    """Vectorized random-walk step for ``n`` walkers; returns new (pos, heading).

    Headings are re-drawn uniformly with ``turn_probability`` before the move.
    Positions are mirrored into ``[lo, hi]`` and the heading component normal
    to the crossed boundary flips. ``draws`` (>= n) fixes how many random
    numbers are consumed so the first walkers see the same stream whatever n.
    """
    n = len(heading)
    m = n if draws is None else max(draws, n)
    turn = (rng.random(m) < turn_probability)[:n]
    fresh = rng.uniform(-math.pi, math.pi, m)[:n]
    h = np.where(turn, fresh, heading)
    step = np.asarray(speed, dtype=float) * dt
    xy = pos + np.column_stack([np.cos(h), np.sin(h)]) * np.reshape(step, (-1, 1))
    span = hi - lo
    # fold into [lo, hi]: positions travel on a circle of length 2*span
    u = np.mod(xy - lo, 2 * span)
    flipped = u > span
    xy = lo + np.where(flipped, 2 * span - u, u)
    c, s_ = np.cos(h), np.sin(h)
    c = np.where(flipped[:, 0], -c, c)
    s_ = np.where(flipped[:, 1], -s_, s_)
    return xy, np.arctan2(s_, c)


def step_mobility(scene: Scene, dt: float, seed) -> Scene:
    """Random-walk step of every user (see :func:`random_walk_step`).

    Body obstacles follow their owners; other obstacles stay put.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if not scene.users:
        return scene
    pos = np.array([u.position for u in scene.users], dtype=float)
    heading = np.array([u.heading for u in scene.users], dtype=float)
    speed = np.array([u.speed for u in scene.users], dtype=float)
    lo, hi = scene.wall_margin, scene.room_size - scene.wall_margin
    pos, heading = random_walk_step(pos, heading, speed, dt, scene.turn_probability, lo, hi, rng)
    users = [replace(u, position=(float(pos[i, 0]), float(pos[i, 1])), heading=float(heading[i]))
             for i, u in enumerate(scene.users)]
    by_id = {u.user_id: u for u in users}
    obstacles = tuple(
        body_obstacle(by_id[o.owner], o.radius, o.offset, o.refractive_index, o.surface_roughness)
        if o.owner in by_id
        else o
        for o in scene.obstacles
    )
    return replace(scene, users=tuple(users), obstacles=obstacles)


def _link_blocked(a, b, discs: np.ndarray, skip: int | None = None) -> bool:
    if not len(discs):
        return False
    hits = kernels.segments_hit_discs(np.array([[a[0], a[1], b[0], b[1]]]), discs)[0]
    if skip is not None:
        hits[skip] = False
    return bool(hits.any())


def ground_truth_paths(scene: Scene, subarray: RisSubarray, user: User, carrier: CarrierConfig | None = None) -> list[PathParams]:
    """The propagation path the subarray sees from the user.

    LoS when the straight segment clears every obstacle; otherwise the
    strongest unobstructed single bounce off another user's body (specular
    point by bisection on the disc) that arrives in front of the user's
    array; otherwise ``Blocked``. Gains are filled
    at the center frequency when ``carrier`` is given.
    """
    v, p = subarray.position, user.position
    discs = scene.obstacle_array()
    if len(discs):
        # a body engulfing the device is an artifact of point-mass mobility
        inside = np.hypot(discs[:, 0] - p[0], discs[:, 1] - p[1]) < discs[:, 2]
        discs = discs.copy()
        discs[inside, 2] = 0.0
    ref = bearing(p, v)
    f = carrier.center_frequency if carrier else None
    k = carrier.absorption[carrier.num_subcarriers // 2] if carrier else None

    if not _link_blocked(v, p, discs):
        r = math.dist(v, p)
        tau = r / C
        gain = complex(los_gain(f, r, k, tau)) if carrier else None
        return [PathParams("LoS", aoa=bearing(v, p), aod=0.0, toa=tau, r=r, gain=gain)]

    best, best_mag = None, -1.0
    for j, ob in enumerate(scene.obstacles):
        if ob.owner == user.user_id:
            continue
        sx, sy, ok = kernels.specular_point(*ob.center, ob.radius, *v, *p)
        if not ok:
            continue
        s = (sx, sy)
        aod = float(wrap_angle(bearing(p, s) - ref))
        if abs(aod) >= math.pi / 2:
            continue  # behind the user's array: a ULA cannot tell it from the front
        if _link_blocked(v, s, discs, skip=j) or _link_blocked(s, p, discs, skip=j):
            continue
        r2, r1 = math.dist(v, s), math.dist(s, p)
        nx, ny = (sx - ob.center[0]) / ob.radius, (sy - ob.center[1]) / ob.radius
        cos_in = ((v[0] - sx) * nx + (v[1] - sy) * ny) / r2
        psi = math.acos(min(max(cos_in, 0.0), 1.0))
        psi = max(psi, 1e-12)
        if carrier:
            mag = abs(free_space_magnitude(f, r1 + r2, k) * fresnel_coefficient(psi, ob.refractive_index)
                      * rayleigh_factor(psi, ob.surface_roughness, f))
        else:
            mag = abs(fresnel_coefficient(psi, ob.refractive_index)) / (r1 + r2)
        if mag > best_mag:
            tau = (r1 + r2) / C
            gain = complex(nlos_gain(f, r1, r2, k, psi, ob.refractive_index, ob.surface_roughness, tau)) if carrier else None
            best_mag = mag
            best = PathParams(
                "NLoS",
                aoa=bearing(v, s),
                aod=aod,
                toa=tau,
                incidence=psi,
                r1=r1,
                r2=r2,
                gain=gain,
                eta=ob.refractive_index,
                sigma=ob.surface_roughness,
                reflection_point=s,
                obstacle_index=j,
            )
    if best is None:
        return [PathParams("Blocked")]
    return [best]


def scene_to_dict(scene: Scene) -> dict:
    d = asdict(scene)
    d["association"] = {str(k): v for k, v in sorted(scene.association.items())}
    return d


def scene_to_json(scene: Scene) -> str:
    return json.dumps(scene_to_dict(scene), sort_keys=True, indent=2)
