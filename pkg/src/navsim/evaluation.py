"""Episode runner and the evaluation protocol.

Metrics per path: success rate (SR), step-normalized SPL, hard failure
rate (HFR), bump rate (BR), and absolute/normalized steps and time with
standard errors. Normalization divides the human baseline's steps (or
seconds) by the agent's, capped at 1, averaged per trial. Hard-failure
trials count as failures everywhere but are excluded from the step/time
means, which their capped counts would distort.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import nav
from .config import ResolvedConfig, episode_rng, scenario_to_dict
from .episode import EpisodeSession, Navigator
from .world import Action, EpisodeSpec, HumanBaseline, NoiseConfig, Pose, Scenario


@dataclass
class EpisodeResult:
    episode_id: str
    trial: int
    success: bool
    hard_failure: bool
    steps: int
    wall_time_s: float
    bumped: bool
    final_distance: float
    trajectory: list[tuple[Pose, Action, bool]]
    trajectory_digest: str = ""
    path_length_true: float = 0.0

    def __post_init__(self):
        if self.success and self.hard_failure:
            raise ValueError("success and hard_failure are mutually exclusive")


@dataclass
class PathReport:
    path_id: str
    trials: int
    sr: float
    spl: Optional[float]
    hfr: float
    br: float
    abs_steps: Optional[tuple[float, float]]  # (mean, sem)
    norm_steps: Optional[tuple[float, float]]
    abs_time: Optional[tuple[float, float]]
    norm_time: Optional[tuple[float, float]]


def run_episode(
    scenario: Scenario,
    spec: EpisodeSpec,
    config: ResolvedConfig,
    trial: int = 0,
    noise: Optional[NoiseConfig] = None,
    log_path: str | Path | None = None,
) -> EpisodeResult:
    """Run one autonomous episode with fresh memory and its own RNG substream."""
    rng = episode_rng(config.seed, spec.id, trial)
    session = EpisodeSession(scenario, spec, config, rng, noise=noise)
    policy = Navigator(session)

    hard_failure = False
    while not session.done:
        if nav.detect_hard_failure(session.nav_state, session.steps, config.planner):
            hard_failure = True
            break
        session.apply(policy.decide())

    result = EpisodeResult(
        episode_id=spec.id,
        trial=trial,
        success=session.success and not hard_failure,
        hard_failure=hard_failure,
        steps=session.steps,
        wall_time_s=session.steps * config.step_duration_s,
        bumped=session.bumped,
        final_distance=session.true_goal_distance(),
        trajectory=session.trajectory,
        trajectory_digest=session.trajectory_hash(),
        path_length_true=session.path_length_true,
    )
    if log_path is not None:
        write_episode_log(log_path, scenario, spec, config, trial, session, result)
    return result


def write_episode_log(
    path: str | Path,
    scenario: Scenario,
    spec: EpisodeSpec,
    config: ResolvedConfig,
    trial: int,
    session: EpisodeSession,
    result: EpisodeResult,
) -> None:
    """Line-delimited episode log; the header embeds everything a replay needs."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        header = {
            "type": "header",
            "episode": spec.id,
            "trial": trial,
            "seed": config.seed,
            "config": config.as_dict(),
            "scenario": scenario_to_dict(scenario),
            "scenario_name": scenario.name,
        }
        fh.write(json.dumps(header) + "\n")
        for rec in session.records:
            fh.write(json.dumps(rec.as_dict()) + "\n")
        fh.write(
            json.dumps(
                {
                    "type": "result",
                    "success": result.success,
                    "hard_failure": result.hard_failure,
                    "steps": result.steps,
                    "wall_time_s": result.wall_time_s,
                    "bumped": result.bumped,
                    "final_distance": result.final_distance,
                    "trajectory_digest": result.trajectory_digest,
                    "path_length_true": result.path_length_true,
                }
            )
            + "\n"
        )


def spl(results: Sequence[EpisodeResult], baseline: Optional[HumanBaseline]) -> Optional[float]:
    """Success weighted by capped baseline/agent step ratio, averaged over trials.

    Undefined (None) without a baseline rather than silently zero.
    """
    if baseline is None:
        return None
    if not results:
        raise ValueError("spl requires at least one result")
    total = 0.0
    for r in results:
        if r.success and r.steps > 0:
            total += min(1.0, baseline.steps / r.steps)
    return total / len(results)


def _mean_sem(values: Sequence[float]) -> Optional[tuple[float, float]]:
    if not values:
        return None
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    sem = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return (mean, sem)


def aggregate(
    results_by_path: Mapping[str, Sequence[EpisodeResult]],
    baselines: Mapping[str, Optional[HumanBaseline]],
) -> list[PathReport]:
    """Per-path reports plus an Overall row of unweighted per-path means."""
    reports: list[PathReport] = []
    for path_id in sorted(results_by_path):
        results = list(results_by_path[path_id])
        if not results:
            raise ValueError(f"path {path_id!r} has no trials")
        baseline = baselines.get(path_id)
        n = len(results)
        sr = sum(r.success for r in results) / n
        hfr = sum(r.hard_failure for r in results) / n
        br = sum(r.bumped for r in results) / n
        kept = [r for r in results if not r.hard_failure]
        abs_steps = _mean_sem([float(r.steps) for r in kept])
        abs_time = _mean_sem([r.wall_time_s for r in kept])
        norm_steps = norm_time = None
        if baseline is not None:
            norm_steps = _mean_sem(
                [min(1.0, baseline.steps / r.steps) for r in kept if r.steps > 0]
            )
            norm_time = _mean_sem(
                [min(1.0, baseline.time_s / r.wall_time_s) for r in kept if r.wall_time_s > 0]
            )
        reports.append(
            PathReport(
                path_id=path_id,
                trials=n,
                sr=sr,
                spl=spl(results, baseline),
                hfr=hfr,
                br=br,
                abs_steps=abs_steps,
                norm_steps=norm_steps,
                abs_time=abs_time,
                norm_time=norm_time,
            )
        )

    def col(values):
        vals = [v for v in values if v is not None]
        return _mean_sem([v for v in vals]) if vals else None

    overall = PathReport(
        path_id="Overall",
        trials=sum(r.trials for r in reports),
        sr=float(np.mean([r.sr for r in reports])),
        spl=(
            float(np.mean([r.spl for r in reports if r.spl is not None]))
            if any(r.spl is not None for r in reports)
            else None
        ),
        hfr=float(np.mean([r.hfr for r in reports])),
        br=float(np.mean([r.br for r in reports])),
        abs_steps=col([r.abs_steps[0] if r.abs_steps else None for r in reports]),
        norm_steps=col([r.norm_steps[0] if r.norm_steps else None for r in reports]),
        abs_time=col([r.abs_time[0] if r.abs_time else None for r in reports]),
        norm_time=col([r.norm_time[0] if r.norm_time else None for r in reports]),
    )
    reports.append(overall)
    return reports


def run_paths(
    scenario: Scenario,
    config: ResolvedConfig,
    path_ids: Iterable[str],
    trials: int,
    noise: Optional[NoiseConfig] = None,
    log_dir: str | Path | None = None,
) -> dict[str, list[EpisodeResult]]:
    """Run trials for each requested path; episodes never share memory."""
    results: dict[str, list[EpisodeResult]] = {}
    for path_id in path_ids:
        spec = scenario.episode(path_id)
        runs = []
        for trial in range(trials):
            log_path = (
                Path(log_dir) / f"{path_id}_trial{trial}.jsonl" if log_dir else None
            )
            runs.append(
                run_episode(scenario, spec, config, trial=trial, noise=noise, log_path=log_path)
            )
        results[path_id] = runs
    return results
