"""Slot-level link simulator for the reliability and spectral-efficiency sweeps.

Users random-walk (static users do not turn); their bodies are discs that
block LoS links. Time advances in slots of ``step_s``. Each scheme keeps a
serving subarray per user and pays for its decisions:

* beam tracking retrains at every coherence instant and then serves the
  nearest clear subarray; between trainings it keeps its beam;
* the sensing schemes sense every slot but act on positions sensed ``lag``
  slots ago (plus Gaussian error). They switch links only when the sensed
  bodies, inflated by a guard distance, cover the current link, and realign
  the beam when the sensed position has drifted outside the beam.

A slot whose serving link is truly blocked is an outage.

Walkers are nested: the first ``n`` walkers of a run are identical whatever
the total count, so a family of user counts shares one set of trajectories
and metrics can be scored on the users present at every count.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .. import kernels
from ..scene import build_scene, random_walk_step
from .schemes import SchemeKind, link_snr

KINDS = (SchemeKind.PROPOSED, SchemeKind.BEAM_TRACKING, SchemeKind.STANDALONE)


@dataclass
class RunOutcome:
    users: int
    speed: float
    seed: int
    base: dict = field(default_factory=dict)  # scheme -> (F, n) delay without queue, inf on outage
    snr: dict = field(default_factory=dict)
    served: dict = field(default_factory=dict)
    trainings: dict = field(default_factory=dict)
    tracking_error: np.ndarray | None = None  # (F, n) |sensed(t - lag) - true(t)|
    observed: tuple = ()
    step_s: float = 0.002


@dataclass
class Trajectories:
    """Per-slot geometry of ``n`` walkers, arrays shaped (F, n, 2) or (F, n)."""
    subarrays: np.ndarray
    pos: np.ndarray
    heading: np.ndarray
    bodies: np.ndarray
    sensed_pos: np.ndarray
    sensed_bodies: np.ndarray

    @property
    def slots(self) -> int:
        return self.pos.shape[0]


def blocked_matrix(sub_pos: np.ndarray, user_pos: np.ndarray, bodies: np.ndarray, radius: float,
                   guard: float = 0.0) -> np.ndarray:
    """(U, N) True where the link from subarray n to user u crosses a body.

    Other users' bodies are inflated by ``guard``; a user's own body is not.
    A body that engulfs another user's device is ignored for that user: the
    point-mass walk lets users overlap, which real bodies cannot.
    """
    U, N = len(user_pos), len(sub_pos)
    if U == 0:
        return np.zeros((0, N), bool)
    segs = np.empty((U, N, 4))
    segs[:, :, 0:2] = sub_pos[None, :, :]
    segs[:, :, 2:4] = user_pos[:, None, :]
    segs = segs.reshape(-1, 4)
    discs = np.column_stack([bodies, np.full(U, radius + guard)])
    hits = kernels.segments_hit_discs(segs, discs).reshape(U, N, U)
    eye = np.eye(U, dtype=bool)
    if guard:
        own = kernels.segments_hit_discs(segs, np.column_stack([bodies, np.full(U, radius)])).reshape(U, N, U)
        hits = np.where(eye[:, None, :], own, hits)
    gap = np.hypot(user_pos[:, None, 0] - bodies[None, :, 0], user_pos[:, None, 1] - bodies[None, :, 1])
    engulfed = (gap < radius + guard) & ~eye
    hits &= ~engulfed[:, None, :]
    return hits.any(axis=2)


def blocked_over_time(sub_pos: np.ndarray, pos: np.ndarray, bodies: np.ndarray, radius: float,
                      guard: float = 0.0, observed=None, own_guard: float = 0.0) -> np.ndarray:
    """(F, n_obs, N) version of :func:`blocked_matrix` for whole trajectories.

    ``pos`` and ``bodies`` are (F, U, 2); links are checked for the users in
    ``observed`` (default all) against every body. A user's own body is
    inflated by ``own_guard`` instead of ``guard``.
    """
    F, U = pos.shape[:2]
    obs = np.arange(U) if observed is None else np.asarray(observed, dtype=int)
    N = len(sub_pos)
    if len(obs) == 0 or U == 0:
        return np.zeros((F, len(obs), N), bool)
    p = pos[:, obs]                                   # (F, T, 2)
    d = p[:, :, None, :] - sub_pos[None, None, :, :]  # (F, T, N, 2)
    dd = np.einsum("ftnk,ftnk->ftn", d, d)
    c = bodies[:, None, :, :] - sub_pos[None, :, None, :]  # (F, N, U, 2)
    t = np.einsum("ftnk,fnuk->ftnu", d, c) / np.where(dd > 0, dd, 1.0)[..., None]
    t = np.clip(t, 0.0, 1.0)
    closest = sub_pos[None, None, :, None, :] + t[..., None] * d[:, :, :, None, :]
    dist2 = np.sum((closest - bodies[:, None, None, :, :]) ** 2, axis=-1)  # (F, T, N, U)
    own = obs[:, None] == np.arange(U)[None, :]                             # (T, U)
    r = np.maximum(np.where(own, radius + own_guard, radius + guard), 0.0)
    hits = dist2 < (r**2)[None, :, None, :]
    gap = np.hypot(*np.moveaxis(p[:, :, None, :] - bodies[:, None, :, :], -1, 0))  # (F, T, U)
    engulfed = (gap < r[None]) & ~own[None]
    hits &= ~engulfed[:, :, None, :]
    return hits.any(axis=3)


def nearest_clear(blocked: np.ndarray, dist: np.ndarray, current: np.ndarray | None = None) -> np.ndarray:
    """Closest unblocked subarray per user; keep ``current`` when all are blocked."""
    d = np.where(blocked, np.inf, dist)
    idx = np.argmin(d, axis=1)
    none = ~np.isfinite(d[np.arange(len(idx)), idx])
    if current is not None:
        idx = np.where(none, current, idx)
    return idx


def _bearing(src, dst):
    return np.arctan2(dst[..., 1] - src[..., 1], dst[..., 0] - src[..., 0])


def _angle_diff(a, b):
    return np.abs((a - b + np.pi) % (2 * np.pi) - np.pi)


def walk(cfg, users: int, speed: float, seed: int, slots: int | None = None) -> Trajectories:
    """Trajectories and lagged noisy observations of ``users`` walkers.

    Walkers are nested for any count up to the largest swept user count.
    """
    sc, sw = cfg.schemes, cfg.sweep
    F = slots or sw.slots
    dt = sw.step_s
    scene = build_scene(replace(cfg.scene, users=users, seed=seed, speed_mps=speed))
    sub = np.array([s.position for s in scene.subarrays], dtype=float)
    pos = np.zeros((F, users, 2))
    head = np.zeros((F, users))
    if users:
        pos[0] = [u.position for u in scene.users]
        head[0] = [u.heading for u in scene.users]
    lo, hi = cfg.scene.wall_margin_m, cfg.scene.room_size_m - cfg.scene.wall_margin_m
    p_turn = 1.0 - math.exp(-sw.turn_rate_hz * dt) if speed > 0 else 0.0
    rng_walk = np.random.default_rng([seed, 1])
    draws = max([users, *map(int, sw.users)])
    for t in range(1, F):
        pos[t], head[t] = random_walk_step(pos[t - 1], head[t - 1], speed, dt, p_turn, lo, hi, rng_walk, draws)
    off = cfg.scene.body_offset_m
    bodies = pos - off * np.stack([np.cos(head), np.sin(head)], axis=-1)
    # noise is drawn walker by walker so nesting survives
    noise = np.random.default_rng([seed, 2]).normal(0.0, sc.sensing_error_m, (users, F, 2)).transpose(1, 0, 2)
    src = np.maximum(np.arange(F) - sc.sensing_lag_slots, 0)
    return Trajectories(sub, pos, head, bodies, (pos + noise)[src], (bodies + noise)[src])


def _empty_outcome(users, speed, seed, F, dt):
    out = RunOutcome(users, speed, seed, step_s=dt)
    for k in KINDS:
        out.base[k] = np.zeros((F, 0))
        out.snr[k] = np.zeros((F, 0))
        out.served[k] = np.zeros((F, 0), bool)
        out.trainings[k] = np.zeros((F, 0), int)
    out.tracking_error = np.zeros((F, 0))
    return out


def run_schemes(cfg, traj: Trajectories, users: int, speed: float, seed: int = 0,
                observed=None, carrier=None) -> RunOutcome:
    """Play every scheme over the first ``users`` walkers of ``traj``.

    Metrics are recorded for the users in ``observed`` (default all of them);
    the others only act as moving bodies.
    """
    dc, sc, sw = cfg.delay, cfg.schemes, cfg.sweep
    F, dt = traj.slots, sw.step_s
    obs = np.arange(users) if observed is None else np.asarray(observed, dtype=int)
    if users == 0 or len(obs) == 0:
        return _empty_outcome(users, speed, seed, F, dt)
    if obs.max() >= users:
        raise ValueError("observed users must be among the first `users` walkers")
    carrier = carrier or cfg.carrier.build()
    sub = traj.subarrays
    R = cfg.scene.obstacle_radius_m
    pos, bodies = traj.pos[:, :users], traj.bodies[:, :users]
    s_pos, s_bodies = traj.sensed_pos[:, :users], traj.sensed_bodies[:, :users]
    # inflate by the motion over the horizon, shrink by the sensing confidence margin
    # (another body carries its own error, hence sqrt(2); the own body shares the user's)
    margin = sc.confidence_sigmas * sc.sensing_error_m
    guard = speed * sc.guard_horizon_s - math.sqrt(2.0) * margin

    blk = blocked_over_time(sub, pos, bodies, R, 0.0, obs)
    pred = blocked_over_time(sub, s_pos, s_bodies, R, guard, obs)
    p_obs, sp_obs = pos[:, obs], s_pos[:, obs]
    dist = np.hypot(*np.moveaxis(p_obs[:, :, None, :] - sub[None, None], -1, 0))     # (F, T, N)
    s_dist = np.hypot(*np.moveaxis(sp_obs[:, :, None, :] - sub[None, None], -1, 0))
    snr_all = link_snr(dist, carrier, cfg.sounding.power_w, cfg.scene.M, cfg.scene.Q)

    T = len(obs)
    ar = np.arange(T)
    tc = math.inf if speed <= 0 else dc.coherence_s * dc.reference_speed_mps / speed
    link = {k: np.zeros((F, T), int) for k in KINDS[:2]}
    trains = {k: np.zeros((F, T), int) for k in KINDS[:2]}
    link_bt = nearest_clear(blk[0], dist[0])
    link_p = link_bt.copy()
    link[KINDS[0]][0] = link[KINDS[1]][0] = link_bt
    beam = _bearing(sub[link_p], p_obs[0])
    for t in range(1, F):
        # beam tracking: periodic retraining on the current channel
        n_train = 0 if math.isinf(tc) else int(math.floor(t * dt / tc + 1e-9) - math.floor((t - 1) * dt / tc + 1e-9))
        if n_train:
            link_bt = nearest_clear(blk[t], dist[t], link_bt)
            trains[KINDS[1]][t] = n_train
        # sensing schemes: act on lagged sensed geometry
        switch = pred[t, ar, link_p]
        if switch.any():
            link_p = np.where(switch, nearest_clear(pred[t], s_dist[t], link_p), link_p)
        # a training points the beam at the true user; realign once the sensed
        # bearing leaves the beam by more than its own uncertainty
        v = sub[link_p]
        seen = _bearing(v, sp_obs[t])
        tol = sc.beam_halfwidth_rad + margin / np.maximum(s_dist[t, ar, link_p], margin)
        realign = ~switch & (_angle_diff(seen, beam) > tol)
        retrained = switch | realign
        beam = np.where(retrained, _bearing(v, p_obs[t]), beam)
        trains[KINDS[0]][t] = retrained
        link[KINDS[0]][t] = link_p
        link[KINDS[1]][t] = link_bt

    out = RunOutcome(users, speed, seed, observed=tuple(int(i) for i in obs), step_s=dt)
    W = carrier.bandwidth
    fi, ti = np.arange(F)[:, None], ar[None, :]
    for k in KINDS[:2]:
        ln = link[k]
        outage = blk[fi, ti, ln]
        snr = snr_all[fi, ti, ln]
        rate = W * np.log2(1.0 + snr)
        base = 2.0 * dc.payload_bits / rate + dc.processing_s + trains[k] * dc.training_s
        out.base[k] = np.where(outage, np.inf, base)
        out.snr[k] = snr
        out.served[k] = ~outage
        out.trainings[k] = trains[k]
    # standalone sensing takes the same decisions; it pays in resources instead
    for name in ("base", "snr", "served", "trainings"):
        getattr(out, name)[SchemeKind.STANDALONE] = getattr(out, name)[SchemeKind.PROPOSED]
    out.tracking_error = np.hypot(*np.moveaxis(sp_obs - p_obs, -1, 0))
    return out


def simulate_run(cfg, users: int, speed: float, seed: int, slots: int | None = None,
                 observed=None, carrier=None) -> RunOutcome:
    """One Monte-Carlo run with ``users`` walkers."""
    traj = walk(cfg, users, speed, seed, slots)
    return run_schemes(cfg, traj, users, speed, seed, observed, carrier)


def simulate_family(cfg, user_counts, speed: float, seed: int, slots: int | None = None,
                    carrier=None) -> dict[int, RunOutcome]:
    """Runs for several user counts sharing one set of nested walkers.

    Metrics are recorded for the users present at every count, so differences
    between counts come from load and blockers, not from which users were drawn.
    """
    counts = sorted({int(u) for u in user_counts})
    top = counts[-1] if counts else 0
    positive = [u for u in counts if u > 0]
    observed = np.arange(positive[0]) if positive else np.arange(0)
    traj = walk(cfg, top, speed, seed, slots)
    carrier = carrier or cfg.carrier.build()
    return {u: run_schemes(cfg, traj, u, speed, seed, observed if u else None, carrier) for u in counts}
