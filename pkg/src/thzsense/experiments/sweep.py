"""Monte-Carlo sweeps over user count, mobility and bandwidth."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from ..channel import CarrierConfig
from ..cpd import cpd_als
from ..estimator import estimate_paths
from ..mapper import localize
from ..scene import build_scene, ground_truth_paths
from ..signal import complex_noise, generate_snapshots
from .schemes import SchemeKind, default_schemes, link_snr, on_time_probability, spectral_efficiency, utilization
from .session import run_tracking_session
from .simulate import simulate_family

log = logging.getLogger(__name__)

CSV_FIELDS = ("scheme", "U", "W", "mobility", "reliability", "se", "rmse", "seed")


@dataclass
class MetricsReport:
    scheme: str
    U: int
    W: float
    mobility: str
    reliability: float = math.nan
    se: float = math.nan
    rmse: float = math.nan
    seed: int = 0
    runs: int = 0
    failures: int = 0
    rate_bps: float = math.nan

    def row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_FIELDS}


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def reports_to_csv(reports, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in reports:
        w.writerow([_fmt(v) for v in r.row().values()])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def run_seed(base: int, run: int) -> int:
    return int(base) * 1_000_003 + int(run)


def reliability_sweep(cfg, runs: int | None = None, users=None, mobility: dict | None = None) -> list[MetricsReport]:
    """Reliability and spectral efficiency per (scheme, mobility, U).

    Each run simulates one family of nested walkers for all user counts.
    Metrics are taken on the walkers present at every count; the queue wait
    is integrated analytically (:func:`on_time_probability`). ``rmse`` holds
    the tracking error of the sensed positions for the sensing schemes.
    """
    runs = cfg.sweep.runs if runs is None else runs
    users = sorted(int(u) for u in (cfg.sweep.users if users is None else users))
    mobility = dict(cfg.sweep.mobility if mobility is None else mobility)
    schemes = default_schemes(cfg.delay, cfg.schemes)
    carrier = cfg.carrier.build()
    dc = cfg.delay
    reports = []
    for name, speed in mobility.items():
        acc = {(k, u): {"rel": [], "se": [], "te": []} for k in SchemeKind for u in users}
        failures = {u: 0 for u in users}
        for r in range(runs):
            try:
                family = simulate_family(cfg, users, float(speed), run_seed(cfg.seed, r), carrier=carrier)
            except (ValueError, FloatingPointError) as e:
                log.warning("run %d at %s failed: %s", r, name, e)
                for u in users:
                    failures[u] += 1
                continue
            for u in users:
                out = family[u]
                if out.base[SchemeKind.PROPOSED].shape[1] == 0:
                    continue
                rho = utilization(u, dc.frame_period_s, dc.service_rate_hz)
                te = float(np.sqrt(np.mean(out.tracking_error**2)))
                for k in SchemeKind:
                    a = acc[(k, u)]
                    a["rel"].append(float(on_time_probability(out.base[k], dc.threshold_s, rho, dc.service_rate_hz).mean()))
                    a["se"].append(spectral_efficiency(schemes[k], out.snr[k], out.served[k], float(speed)))
                    a["te"].append(te)
        for k in SchemeKind:
            for u in users:
                a = acc[(k, u)]
                sensing = k is not SchemeKind.BEAM_TRACKING
                reports.append(MetricsReport(
                    scheme=k.value, U=u, W=carrier.bandwidth, mobility=name,
                    reliability=float(np.mean(a["rel"])) if a["rel"] else (1.0 if u == 0 else math.nan),
                    se=float(np.mean(a["se"])) if a["se"] else math.nan,
                    rmse=float(np.mean(a["te"])) if a["te"] and sensing else math.nan,
                    seed=cfg.seed, runs=len(a["rel"]), failures=failures[u],
                ))
    return reports


def nested_carrier(cfg, bandwidth: float) -> CarrierConfig:
    """Carrier of roughly ``bandwidth`` on the configured subcarrier spacing.

    The subcarrier count is kept even so that narrower bands are centred
    slices of wider ones.
    """
    spacing = cfg.carrier.bandwidth_hz / cfg.carrier.num_subcarriers
    K = max(2, 2 * int(round(bandwidth / (2 * spacing))))
    return cfg.carrier.build(bandwidth=K * spacing, num_subcarriers=K)


def bandwidth_sweep(cfg, bandwidths=None, placements: int | None = None) -> list[MetricsReport]:
    """Localization RMSE and achievable rate versus bandwidth at a fixed power density.

    Single-user placements are shared across bandwidths, and the noise of a
    narrow band is the matching slice of the widest band's noise, so the
    bandwidths differ only in how much of the same measurement they see.
    The communication power grows with the band so the SNR stays fixed.
    """
    bandwidths = sorted(float(w) for w in (cfg.sweep.bandwidths_hz if bandwidths is None else bandwidths))
    placements = cfg.sweep.placements if placements is None else placements
    carriers = [nested_carrier(cfg, w) for w in bandwidths]
    widest = max(carriers, key=lambda c: c.num_subcarriers)
    ref_w = cfg.carrier.bandwidth_hz
    errors = {w: [] for w in bandwidths}
    rates = {w: [] for w in bandwidths}
    failures = {w: 0 for w in bandwidths}
    grid = cfg.estimator.grid()
    for i in range(placements):
        seed = run_seed(cfg.seed, i)
        scene = build_scene(replace(cfg.scene, users=1, seed=seed))
        user = scene.users[0]
        sub = scene.serving_subarray(user.user_id)
        sounding = cfg.sounding.build(0, 0, seed)
        noise = complex_noise((sounding.J, sounding.T, widest.num_subcarriers), widest.noise_power,
                              np.random.default_rng(sounding.noise_seed))
        for w, car in zip(bandwidths, carriers):
            paths = ground_truth_paths(scene, sub, user, car)
            if paths[0].kind == "Blocked":
                failures[w] += 1
                continue
            r = paths[0].r if paths[0].r is not None else paths[0].r1 + paths[0].r2
            rates[w].append(car.bandwidth * math.log2(1.0 + float(link_snr(
                r, car, cfg.sounding.power_w * car.bandwidth / ref_w, cfg.scene.M, cfg.scene.Q))))
            clean = car.replace(noise_power=0.0)
            tensor = generate_snapshots(scene, sub, user, sounding, clean, paths=paths)
            start = (widest.num_subcarriers - car.num_subcarriers) // 2
            tensor.data = tensor.data + noise[:, :, start:start + car.num_subcarriers]
            tensor.carrier = car
            try:
                factors = cpd_als(tensor.data, cfg.estimator.rank, init="nvecs", seed=seed)
                est = estimate_paths(tensor, factors, sub, user, grid, cfg.estimator.threshold)[0]
                loc = localize(est, sub, car, room_size=scene.room_size)
            except (ValueError, np.linalg.LinAlgError) as e:
                log.warning("placement %d at W=%g failed: %s", i, w, e)
                failures[w] += 1
                continue
            if loc.degenerate:
                failures[w] += 1
                continue
            p = loc.user_position
            errors[w].append(math.hypot(p[0] - user.position[0], p[1] - user.position[1]))
    reports = []
    for w, car in zip(bandwidths, carriers):
        e = np.asarray(errors[w])
        rate = float(np.mean(rates[w])) if rates[w] else math.nan
        reports.append(MetricsReport(
            scheme=SchemeKind.PROPOSED.value, U=1, W=car.bandwidth, mobility="static",
            se=rate / car.bandwidth if rates[w] else math.nan,
            rmse=float(np.sqrt(np.mean(e**2))) if e.size else math.nan,
            seed=cfg.seed, runs=int(e.size), failures=failures[w], rate_bps=rate,
        ))
    return reports


def isolated_fraction(grid: np.ndarray) -> float:
    """Share of non-empty cells with no non-empty cell among their 8 neighbours."""
    occ = np.asarray(grid) > 0
    if not occ.any():
        return 0.0
    pad = np.pad(occ, 1).astype(int)
    n, m = occ.shape
    neighbours = sum(pad[1 + dy:1 + dy + n, 1 + dx:1 + dx + m]
                     for dy in (-1, 0, 1) for dx in (-1, 0, 1) if dy or dx)
    return float(np.mean(neighbours[occ] == 0))


def map_realization(cfg, bandwidth: float, frames: int | None = None, power_w: float | None = None):
    """Awareness map of one tracking session at ``bandwidth``; returns (map, artifact score)."""
    log_ = run_tracking_session(cfg, frames, nested_carrier(cfg, bandwidth), power_w)
    return log_.amap, isolated_fraction(log_.amap.sigma)


def full_sweep(cfg, runs: int | None = None, placements: int | None = None) -> list[MetricsReport]:
    return reliability_sweep(cfg, runs) + bandwidth_sweep(cfg, placements=placements)


def reports_as_dicts(reports) -> list[dict]:
    return [asdict(r) for r in reports]
