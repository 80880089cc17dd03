"""Command-line entry points.

Subcommands:
  run       execute navigation trials and write the report + figures
  serve     expose the simulator to teleoperation clients
  replay    re-run a recorded episode log and check it reproduces exactly
  map-eval  noise-free mapping-fidelity check against the analytic map
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import evaluation, mapping, report, service
from .config import ResolvedConfig, load_config, load_scenario, scenario_from_dict
from .episode import EpisodeSession
from .world import Action, NoiseConfig, Pose


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", default="loconav", help="built-in hyperparameter profile")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument(
        "--noise",
        choices=["on", "off", "scenario"],
        default="scenario",
        help="force noise on/off or use the scenario's configuration",
    )
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="config override (repeatable); unknown keys abort with the valid list",
    )


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise SystemExit(f"override {pair!r} is not KEY=VALUE")
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _resolve(args) -> tuple[ResolvedConfig, "object", NoiseConfig | None]:
    config = load_config(
        profile_name=args.profile,
        overrides=_parse_overrides(args.overrides),
        seed=args.seed,
    )
    scenario = load_scenario(args.scenario, agent=config.profile.agent)
    noise = None
    if args.noise == "off":
        noise = NoiseConfig.disabled()
    elif args.noise == "on":
        noise = scenario.noise
    return config, scenario, noise


def cmd_run(args) -> int:
    config, scenario, noise = _resolve(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.json").write_text(
        json.dumps(config.as_dict(), indent=2) + "\n"
    )

    path_ids = (
        [p.strip() for p in args.paths.split(",") if p.strip()]
        if args.paths
        else [e.id for e in scenario.episodes]
    )
    results = evaluation.run_paths(
        scenario,
        config,
        path_ids,
        trials=args.trials,
        noise=noise,
        log_dir=out_dir / "logs",
    )
    baselines = {e.id: e.baseline for e in scenario.episodes}
    store = service.BaselineStore.for_scenario(args.scenario)
    if store.path.exists():
        baselines.update(store.load_all())
    reports = evaluation.aggregate(results, baselines)
    paths = report.write_report(reports, out_dir)
    print(report.render_text(reports))
    print(f"report: {paths['csv']}")
    return 0


def cmd_serve(args) -> int:
    config, scenario, noise = _resolve(args)
    store = service.BaselineStore.for_scenario(args.scenario)
    server = service.serve(
        scenario,
        config,
        port=args.port,
        noise=noise,
        baseline_store=store,
        ui_dir=args.ui_dir,
        host=args.host,
    )
    host, port = server.server_address[:2]
    print(f"serving {scenario.name!r} on {host}:{port} (ctrl-c to stop)")
    if args.ui_dir:
        print(f"console: http://{host}:{port}/")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


def cmd_replay(args) -> int:
    log_path = Path(args.log)
    lines = [json.loads(line) for line in log_path.read_text().splitlines() if line]
    header = lines[0]
    steps = [l for l in lines if l.get("type") == "step"]
    if header.get("type") != "header":
        raise SystemExit("log has no header line")

    cfg_d = header["config"]
    config = load_config(
        profile_name=cfg_d["profile"]["name"],
        overrides=_config_overrides_from_log(cfg_d),
        seed=header["seed"],
    )
    scenario = scenario_from_dict(header["scenario"], name=header.get("scenario_name", "log"))
    spec = scenario.episode(header["episode"])
    from .config import episode_rng

    rng = episode_rng(header["seed"], header["episode"], header["trial"])
    session = EpisodeSession(scenario, spec, config, rng)

    mismatches = 0
    for rec in steps:
        out = session.apply(Action(rec["action"]))
        logged = rec["pose_true"]
        live = [out.pose_true.x, out.pose_true.y, out.pose_true.theta]
        if any(abs(a - b) > 0.0 for a, b in zip(logged, live)) or rec["bump"] != out.bump:
            mismatches += 1
    status = "REPRODUCED" if mismatches == 0 else f"DIVERGED ({mismatches} steps)"
    print(f"{log_path.name}: {len(steps)} steps, {status}")
    return 0 if mismatches == 0 else 1


def _config_overrides_from_log(cfg_d: dict) -> dict[str, str]:
    """Rebuild override strings from a logged resolved configuration."""
    prof = cfg_d["profile"]
    planner = cfg_d["planner"]
    grid = cfg_d["grid"]
    out = {
        "base_radius": str(prof["agent"]["base_radius"]),
        "camera_height": str(prof["agent"]["camera_height"]),
        "forward_step": str(prof["agent"]["forward_step"]),
        "turn_step_deg": str(prof["agent"]["turn_step_deg"]),
        "image_width": str(prof["camera"]["width"]),
        "image_height": str(prof["camera"]["height"]),
        "hfov_deg": str(prof["camera"]["hfov_deg"]),
        "vfov_deg": str(prof["camera"]["vfov_deg"]),
        "depth_min": str(prof["camera"]["depth_min"]),
        "depth_max": str(prof["camera"]["depth_max"]),
        "h_min": str(prof["height_thresholds"][0]),
        "h_max": str(prof["height_thresholds"][1]),
        "local_goal_radius": str(planner["local_goal_radius"]),
        "goal_threshold": str(planner["goal_threshold"]),
        "inflation_radius": str(planner["inflation_radius"]),
        "unknown_is_traversable": str(planner["unknown_is_traversable"]),
        "max_steps": str(planner["max_steps"]),
        "alpha": str(planner["alpha"]),
        "reward_sign": planner["reward_sign"],
        "resolution": str(grid["resolution"]),
        "ego_side": str(grid["ego_side"]),
        "global_side": str(grid["global_side"]),
        "policy_side": str(grid["policy_side"]),
        "step_duration_s": str(cfg_d["step_duration_s"]),
    }
    return out


def run_map_eval(config: ResolvedConfig, scenario=None, out_dir: str | Path | None = None):
    """Noise-free 360-degree scan; score observed occupancy against analytic truth.

    Returns (fraction of observed-occupied cells within one cell of the
    analytic rasterization, max cell distance into analytic free space,
    explored cell count).
    """
    import numpy as np
    from scipy import ndimage

    from .config import episode_rng
    from .scenarios import build_map_eval_room

    if scenario is None:
        scenario = build_map_eval_room()
    spec = scenario.episodes[0]
    rng = episode_rng(config.seed, spec.id, 0)
    session = EpisodeSession(scenario, spec, config, rng, noise=NoiseConfig.disabled())
    turns = int(round(2 * math.pi / config.profile.agent.turn_step))
    for _ in range(turns):
        session.apply(Action.TURN_LEFT)

    observed = session.global_map.cells[0] > 0.5
    truth = session.ground_truth.cells[0] > 0.5
    explored = int((session.global_map.cells[1] > 0.5).sum())

    if observed.any():
        # distance (cells) from every cell to the nearest true-occupied cell
        dist_to_truth = ndimage.distance_transform_edt(~truth)
        within_one = float((dist_to_truth[observed] <= 1.0 + 1e-9).mean())
        worst = float(dist_to_truth[observed].max())
    else:
        within_one, worst = 0.0, math.inf

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        mapping.map_to_png(
            session.global_map, str(out_dir / "map_eval.png"), goal_cell=session.goal_cell
        )
    return within_one, worst, explored


def cmd_map_eval(args) -> int:
    config = load_config(
        profile_name=args.profile,
        overrides=_parse_overrides(args.overrides),
        seed=args.seed,
    )
    scenario = load_scenario(args.scenario, config.profile.agent) if args.scenario else None
    out_dir = Path(args.out)
    within_one, worst, explored = run_map_eval(config, scenario, out_dir)
    ok = within_one >= 0.95 and worst <= 2.0
    print(f"occupied-within-1-cell: {within_one:.4f} (threshold 0.95)")
    print(f"max-cells-into-free-space: {worst:.2f} (threshold 2)")
    print(f"explored-cells: {explored}")
    print(f"figure: {out_dir / 'map_eval.png'}")
    print("map-eval: PASS" if ok else "map-eval: FAIL")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="navsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run navigation trials and write the report")
    _add_common(p_run)
    p_run.add_argument("--paths", default="", help="comma-separated episode ids (default: all)")
    p_run.add_argument("--trials", type=int, default=1)
    p_run.set_defaults(func=cmd_run)

    p_serve = sub.add_parser("serve", help="serve teleoperation sessions")
    _add_common(p_serve)
    p_serve.add_argument("--port", type=int, default=8765)
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--ui-dir", default=None, help="static console bundle to serve")
    p_serve.set_defaults(func=cmd_serve)

    p_replay = sub.add_parser("replay", help="re-run a recorded episode log")
    p_replay.add_argument("--log", required=True)
    p_replay.set_defaults(func=cmd_replay)

    p_me = sub.add_parser("map-eval", help="noise-free mapping fidelity check")
    p_me.add_argument("--profile", default="loconav")
    p_me.add_argument("--seed", type=int, default=0)
    p_me.add_argument("--scenario", default=None, help="optional scenario override")
    p_me.add_argument("--out", default="out")
    p_me.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    p_me.set_defaults(func=cmd_map_eval)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
