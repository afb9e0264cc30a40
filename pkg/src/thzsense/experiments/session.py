"""Multi-frame tracking session: sound, decompose, estimate, localize, map."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..channel import CarrierConfig
from ..cpd import cpd_als
from ..estimator import estimate_paths
from ..mapper import AwarenessMap, localize, update_map
from ..scene import Scene, associate, build_scene, ground_truth_paths, step_mobility
from ..signal import generate_snapshots

log = logging.getLogger(__name__)


@dataclass
class FrameRecord:
    frame: int
    user: int
    subarray: tuple[int, int]
    true_kind: str
    true_position: tuple[float, float]
    estimate: dict | None = None
    position: tuple[float, float] | None = None
    obstacle: tuple[float, float] | None = None
    error_m: float = math.nan
    failure: str | None = None

    def to_dict(self) -> dict:
        d = {
            "frame": self.frame,
            "user": self.user,
            "subarray": list(self.subarray),
            "true_kind": self.true_kind,
            "true_position": list(self.true_position),
            "estimate": self.estimate,
            "position": list(self.position) if self.position is not None else None,
            "obstacle": list(self.obstacle) if self.obstacle is not None else None,
            "error_m": None if math.isnan(self.error_m) else self.error_m,
            "failure": self.failure,
        }
        return d


@dataclass
class SessionLog:
    frames: int
    users: int
    records: list = field(default_factory=list)
    amap: AwarenessMap | None = None
    scene: Scene | None = None

    @property
    def failures(self) -> list:
        return [r for r in self.records if r.failure]

    def position_errors(self) -> np.ndarray:
        return np.array([r.error_m for r in self.records if not r.failure and not math.isnan(r.error_m)])

    def rmse(self) -> float:
        e = self.position_errors()
        return float(np.sqrt(np.mean(e**2))) if e.size else math.nan

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in self.records)


def _estimate_dict(est) -> dict:
    return {
        "aoa": est.aoa,
        "aod": est.aod,
        "toa": est.toa,
        "gain_re": est.gain.real,
        "gain_im": est.gain.imag,
        "normalized_gain": est.normalized_gain,
        "link_kind": est.link_kind,
    }


def sense_user(cfg, scene: Scene, user, frame: int, carrier: CarrierConfig, power_w: float | None = None,
               seed: int | None = None) -> tuple[FrameRecord, object]:
    """One sounding of ``user`` by its serving subarray; returns (record, localization)."""
    seed = cfg.seed if seed is None else seed
    sub = scene.serving_subarray(user.user_id)
    rec = FrameRecord(frame, user.user_id, (sub.panel_id, sub.index), "Blocked", tuple(user.position))
    paths = ground_truth_paths(scene, sub, user, carrier)
    rec.true_kind = paths[0].kind
    if rec.true_kind == "Blocked":
        rec.failure = "blocked"
        return rec, None
    sounding = cfg.sounding.build(frame, user.user_id, seed, power_w)
    tensor = generate_snapshots(scene, sub, user, sounding, carrier, paths=paths)
    factors = cpd_als(tensor.data, cfg.estimator.rank, init="nvecs", seed=seed)
    ests = estimate_paths(tensor, factors, sub, user, cfg.estimator.grid(), cfg.estimator.threshold)
    est = ests[0]
    rec.estimate = _estimate_dict(est)
    loc = localize(est, sub, carrier, room_size=scene.room_size)
    if loc.degenerate:
        rec.failure = "degenerate"
        return rec, loc
    rec.position = tuple(float(x) for x in loc.user_position)
    if loc.obstacle_position is not None:
        rec.obstacle = tuple(float(x) for x in loc.obstacle_position)
    rec.error_m = float(math.hypot(rec.position[0] - user.position[0], rec.position[1] - user.position[1]))
    return rec, loc


def run_tracking_session(cfg, frames: int | None = None, carrier: CarrierConfig | None = None,
                         power_w: float | None = None) -> SessionLog:
    """Track every user for ``frames`` frames and build the awareness map.

    Users move one frame period between frames and are re-associated each
    frame. A failure on one user (blocked link, degenerate geometry, solver
    error) is recorded and the session carries on.
    """
    frames = cfg.frames if frames is None else frames
    carrier = carrier or cfg.carrier.build()
    scene = build_scene(replace(cfg.scene, seed=cfg.seed))
    amap = AwarenessMap(scene.room_size, cfg.mapper.cell_size_m)
    out = SessionLog(frames, len(scene.users), amap=amap, scene=scene)
    if not scene.users:
        return out
    rng = np.random.default_rng([cfg.seed, 7])
    for f in range(frames):
        if f > 0:
            scene = step_mobility(scene, cfg.delay.frame_period_s, rng)
            scene = replace(scene, association=associate(scene.subarrays, scene.users, scene.obstacles))
        results = []
        for user in scene.users:
            try:
                rec, loc = sense_user(cfg, scene, user, f, carrier, power_w)
            except (ValueError, np.linalg.LinAlgError) as e:
                log.warning("frame %d user %d failed: %s", f, user.user_id, e)
                sub = scene.serving_subarray(user.user_id)
                rec, loc = FrameRecord(f, user.user_id, (sub.panel_id, sub.index), "?", tuple(user.position),
                                       failure=f"error: {e}"), None
            out.records.append(rec)
            if loc is not None and not loc.degenerate:
                results.append(loc)
        update_map(amap, results)
    out.scene = scene
    return out
