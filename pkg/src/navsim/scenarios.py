"""Built-in scenario builders.

The office scenario is the reference navigation fixture: three rooms off a
corridor, entered through 1 m doorways, with desks inside the rooms and two
staggered cabinets that break the corridor's long sightline. Episode ids
follow the reference path naming (A..E): A stays inside one room, B crosses
the corridor into the next room, C runs the corridor, D traverses to the
far room, and E exits one door and immediately enters the next one on the
same corridor side.
"""

from __future__ import annotations

import math

from .world import Box, EpisodeSpec, HumanBaseline, NoiseConfig, Pose, Rect, Scenario

WALL_H = 1.2
DESK_H = 0.45
_T = 0.1  # interior wall thickness


def build_office(noise: NoiseConfig | None = None, seed: int = 12345) -> Scenario:
    """Three office rooms and the corridor connecting them, at desk scale."""
    walls = [
        # corridor/room separation wall (y in [2.9, 3.0]) with three doorways:
        # D1 x[1.9, 2.9] (room 1), D2 x[3.5, 4.5] (room 2, same corridor side
        # as D1 and only 0.6 m further), D3 x[7.6, 8.6] (room 3)
        Box(0.0, 2.9, 1.9, 3.0, WALL_H),
        Box(2.9, 2.9, 3.5, 3.0, WALL_H),
        Box(4.5, 2.9, 7.6, 3.0, WALL_H),
        Box(8.6, 2.9, 9.4, 3.0, WALL_H),
        # room dividers
        Box(3.1, 0.0, 3.1 + _T, 2.9, WALL_H),
        Box(6.2, 0.0, 6.2 + _T, 2.9, WALL_H),
        # staggered corridor cabinets: kill the end-to-end sightline while
        # leaving a 0.9 m S-curve passage
        Box(4.0, 3.9, 4.4, 5.0, WALL_H),
        Box(5.2, 3.0, 5.6, 4.1, WALL_H),
    ]
    desks = [
        Box(0.4, 0.4, 1.2, 1.0, DESK_H),  # room 1
        Box(5.2, 0.3, 6.0, 1.1, DESK_H),  # room 2
        Box(6.7, 1.6, 7.5, 2.4, DESK_H),  # room 3
    ]

    episodes = (
        EpisodeSpec(
            id="A",
            start=Pose(3.6, 0.5, 0.0),
            goal_rel=(2.3, 1.8),
            baseline=HumanBaseline(length_m=3.80, time_s=124.0, steps=23),
        ),
        EpisodeSpec(
            id="B",
            start=Pose(1.6, 0.8, math.radians(90.0)),
            goal_rel=(1.0, -2.9),
            baseline=HumanBaseline(length_m=6.75, time_s=239.0, steps=45),
        ),
        EpisodeSpec(
            id="C",
            start=Pose(0.6, 2.4, 0.0),
            goal_rel=(8.2, 1.6),
            baseline=HumanBaseline(length_m=5.95, time_s=223.0, steps=43),
        ),
        EpisodeSpec(
            id="D",
            start=Pose(0.5, 1.9, 0.0),
            goal_rel=(7.7, -0.4),
            baseline=HumanBaseline(length_m=6.55, time_s=217.0, steps=42),
        ),
        EpisodeSpec(
            id="E",
            start=Pose(2.4, 2.2, math.radians(90.0)),
            goal_rel=(0.0, -1.6),
            baseline=HumanBaseline(length_m=4.20, time_s=227.0, steps=33),
        ),
    )
    return Scenario(
        bounds=Rect(0.0, 0.0, 9.4, 5.0),
        obstacles=tuple(walls + desks),
        episodes=episodes,
        noise=noise if noise is not None else NoiseConfig(),
        seed=seed,
        name="office",
    )


def build_map_eval_room() -> Scenario:
    """Closed 6x6 room with four boxes; used by the mapping-fidelity check."""
    return Scenario(
        bounds=Rect(0.0, 0.0, 6.0, 6.0),
        obstacles=(
            Box(1.2, 1.2, 2.0, 2.0, 0.5),
            Box(4.0, 1.0, 5.0, 1.8, 0.5),
            Box(1.0, 4.2, 1.8, 5.2, 0.5),
            Box(4.2, 4.0, 5.2, 4.8, 0.5),
        ),
        episodes=(EpisodeSpec(id="scan", start=Pose(3.0, 3.0, 0.0), goal_rel=(0.5, 0.0)),),
        noise=NoiseConfig.disabled(),
        seed=0,
        name="map-eval-room",
    )
