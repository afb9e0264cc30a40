"""Command-line entry point: scene, track, sweep, decompose, tensor."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .cpd import cpd_als
from .experiments.config import ConfigError, ExperimentConfig, config_to_dict, load_config, with_seed
from .experiments.session import run_tracking_session
from .experiments.sweep import bandwidth_sweep, reliability_sweep, reports_to_csv
from .mapper import export_map
from .scene import build_scene, ground_truth_paths, scene_to_json
from .signal import generate_snapshots, load_tensor, save_tensor

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("thzsense")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig().validate()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("seed must be non-negative")
        cfg = with_seed(cfg, args.seed)
    if getattr(args, "frames", None) is not None:
        if args.frames < 0:
            raise ConfigError("frames must be >= 0")
        cfg = replace(cfg, frames=args.frames)
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_scene(args) -> list[Path]:
    cfg = _config(args)
    path = _out(args) / "scene.json"
    path.write_text(scene_to_json(build_scene(cfg.scene)) + "\n")
    return [path]


def cmd_track(args) -> list[Path]:
    cfg = _config(args)
    session = run_tracking_session(cfg)
    out = _out(args)
    est = out / "estimates.jsonl"
    est.write_text(session.to_jsonl())
    csv_path, json_path = export_map(session.amap, out / "map")
    summary = out / "summary.json"
    summary.write_text(json.dumps({
        "frames": session.frames,
        "users": session.users,
        "records": len(session.records),
        "failures": len(session.failures),
        "rmse_m": session.rmse() if session.position_errors().size else None,
        "config": config_to_dict(cfg),
    }, sort_keys=True, indent=2) + "\n")
    return [est, csv_path, json_path, summary]


def cmd_sweep(args) -> list[Path]:
    cfg = _config(args)
    reports = []
    if args.kind in ("reliability", "all"):
        reports += reliability_sweep(cfg, runs=args.runs)
    if args.kind in ("bandwidth", "all"):
        reports += bandwidth_sweep(cfg, placements=args.placements)
    path = _out(args) / "metrics.csv"
    reports_to_csv(reports, path)
    return [path]


def cmd_decompose(args) -> list[Path]:
    cfg = _config(args)
    try:
        data, _ = load_tensor(args.tensor)
    except (OSError, KeyError, json.JSONDecodeError) as e:
        raise RuntimeError(f"cannot read tensor {args.tensor}: {e}") from e
    rank = args.rank or cfg.estimator.rank
    factors = cpd_als(data, rank, init=args.init, seed=cfg.seed)
    path = _out(args) / "factors.json"
    path.write_text(json.dumps(factors.to_dict(), sort_keys=True) + "\n")
    return [path]


def cmd_tensor(args) -> list[Path]:
    cfg = _config(args)
    scene = build_scene(cfg.scene)
    if not 0 <= args.user < len(scene.users):
        raise ConfigError(f"user {args.user} not in scene with {len(scene.users)} users")
    user = scene.users[args.user]
    sub = scene.serving_subarray(user.user_id)
    carrier = cfg.carrier.build()
    paths = ground_truth_paths(scene, sub, user, carrier)
    tensor = generate_snapshots(scene, sub, user, cfg.sounding.build(0, user.user_id, cfg.seed), carrier, paths=paths)
    return list(save_tensor(tensor, _out(args) / "tensor"))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="run seed (overrides the config)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--frames", type=int, help="frames per tracking session")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="thzsense", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("scene", parents=[common], help="write the scene as JSON").set_defaults(func=cmd_scene)
    sub.add_parser("track", parents=[common], help="run a tracking session").set_defaults(func=cmd_track)
    sw = sub.add_parser("sweep", parents=[common], help="Monte-Carlo metrics as CSV")
    sw.add_argument("--kind", choices=("reliability", "bandwidth", "all"), default="all")
    sw.add_argument("--runs", type=int, help="Monte-Carlo runs per cell")
    sw.add_argument("--placements", type=int, help="placements per bandwidth")
    sw.set_defaults(func=cmd_sweep)
    dc = sub.add_parser("decompose", parents=[common], help="CP factors of a stored tensor")
    dc.add_argument("tensor", help="tensor .bin or .json path")
    dc.add_argument("--rank", type=int)
    dc.add_argument("--init", choices=("nvecs", "random"), default="nvecs")
    dc.set_defaults(func=cmd_decompose)
    tn = sub.add_parser("tensor", parents=[common], help="write one measurement tensor")
    tn.add_argument("--user", type=int, default=0)
    tn.set_defaults(func=cmd_tensor)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        paths = args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - any failure past config is a runtime failure
        log.debug("failure", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
