import math

import numpy as np
import pytest

from navsim.world import (
    Action,
    AgentConfig,
    Box,
    EpisodeSpec,
    NoiseConfig,
    Odometry,
    Pose,
    Rect,
    Scenario,
    collides,
    step,
    sweep_collides,
    wrap_angle,
)

AGENT = AgentConfig()


def open_scenario(obstacles=()):
    return Scenario(
        bounds=Rect(-50.0, -50.0, 50.0, 50.0),
        obstacles=tuple(obstacles),
        episodes=(),
        noise=NoiseConfig.disabled(),
    )


def rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


# ---------------------------------------------------------------------------
# wrap_angle / Pose

def test_wrap_angle_range():
    g = rng(7)
    for theta in g.uniform(-50, 50, size=2000):
        w = wrap_angle(float(theta))
        assert -math.pi < w <= math.pi


def test_wrap_angle_keeps_pi():
    assert wrap_angle(math.pi) == math.pi
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)


def test_pose_normalizes_theta():
    p = Pose(0, 0, 2 * math.pi + 0.25)
    assert p.theta == pytest.approx(0.25)


# ---------------------------------------------------------------------------
# step kinematics

def test_forward_noise_off():
    out = step(Pose(0, 0, 0), Action.FORWARD, open_scenario(), AGENT, NoiseConfig.disabled(), rng())
    assert out.pose.x == pytest.approx(0.25)
    assert out.pose.y == pytest.approx(0.0)
    assert not out.bump


def test_turn_left_is_15_degrees():
    out = step(Pose(0, 0, 0), Action.TURN_LEFT, open_scenario(), AGENT, NoiseConfig.disabled(), rng())
    assert out.pose.theta == pytest.approx(math.radians(15.0))
    assert (out.pose.x, out.pose.y) == (0.0, 0.0)
    assert not out.bump


def test_forward_into_wall_bumps_sticky():
    sc = open_scenario([Box(0.3, -5.0, 1.0, 5.0, 1.0)])
    out = step(Pose(0, 0, 0), Action.FORWARD, sc, AGENT, NoiseConfig.disabled(), rng())
    assert out.bump
    assert out.pose == Pose(0, 0, 0)
    assert out.displacement == (0.0, 0.0, 0.0)


def test_stop_is_inert():
    out = step(Pose(1, 2, 0.5), Action.STOP, open_scenario(), AGENT, NoiseConfig.disabled(), rng())
    assert out.pose == Pose(1, 2, 0.5)
    assert not out.bump


def test_step_rejects_colliding_pose():
    sc = open_scenario([Box(-1, -1, 1, 1, 1.0)])
    with pytest.raises(ValueError):
        step(Pose(0, 0, 0), Action.FORWARD, sc, AGENT, NoiseConfig.disabled(), rng())


def test_24_left_turns_return_heading():
    pose = Pose(0, 0, 0.3)
    for _ in range(24):
        pose = step(pose, Action.TURN_LEFT, open_scenario(), AGENT, NoiseConfig.disabled(), rng()).pose
    assert abs(wrap_angle(pose.theta - 0.3)) < 1e-12


def test_step_determinism_bit_exact():
    sc = open_scenario([Box(2.0, -0.5, 3.0, 0.5, 1.0)])
    noise = NoiseConfig()
    actions = [Action.FORWARD, Action.TURN_LEFT, Action.FORWARD, Action.FORWARD,
               Action.TURN_RIGHT] * 10
    runs = []
    for _ in range(2):
        g = rng(42)
        pose = Pose(0, 0, 0)
        trace = []
        for a in actions:
            out = step(pose, a, sc, AGENT, noise, g)
            pose = out.pose
            trace.append((pose.x, pose.y, pose.theta, out.bump))
        runs.append(trace)
    assert runs[0] == runs[1]


def test_sticky_collision_exact_zero_displacement_seeded():
    # forward into a wall directly ahead, full noise, 1000 seeds
    sc = open_scenario([Box(0.30, -5.0, 1.0, 5.0, 1.0)])
    noise = NoiseConfig()
    for seed in range(1000):
        out = step(Pose(0, 0, 0), Action.FORWARD, sc, AGENT, noise, rng(seed))
        assert out.bump
        assert out.displacement[0] == 0.0 and out.displacement[1] == 0.0
        assert out.pose.x == 0.0 and out.pose.y == 0.0


def test_noise_never_ends_inside_obstacle():
    # wall 0.5m ahead: noisy forward either lands clear or bumps in place
    sc = open_scenario([Box(0.5, -5.0, 1.0, 5.0, 1.0)])
    noise = NoiseConfig(actuation_sigma_lin=0.05)
    for seed in range(300):
        out = step(Pose(0.0, 0.0, 0.0), Action.FORWARD, sc, AGENT, noise, rng(seed))
        assert not collides(out.pose, AGENT, sc)


def test_heading_bounded_over_random_walk():
    g = rng(3)
    pose = Pose(0, 0, 0)
    sc = open_scenario()
    for _ in range(500):
        a = [Action.FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT][int(g.integers(3))]
        pose = step(pose, a, sc, AGENT, NoiseConfig(), g).pose
        assert -math.pi < pose.theta <= math.pi


# ---------------------------------------------------------------------------
# collides / sweep

def test_collides_far_from_obstacle():
    sc = open_scenario([Box(1.0, -1.0, 2.0, 1.0, 1.0)])
    assert not collides(Pose(0.3, 0.0, 0.0), AGENT, sc)  # 0.7m away


def test_collides_close_to_obstacle():
    sc = open_scenario([Box(1.0, -1.0, 2.0, 1.0, 1.0)])
    assert collides(Pose(0.9, 0.0, 0.0), AGENT, sc)  # 0.1m away < radius


def test_boundary_tangency_is_free():
    # disc exactly touching the bounds edge: open overlap test
    sc = open_scenario()
    assert not collides(Pose(-50.0 + 0.2, 0.0, 0.0), AGENT, sc)
    assert collides(Pose(-50.0 + 0.19, 0.0, 0.0), AGENT, sc)


def test_obstacle_tangency_is_free():
    # dyadic values so the contact distance is exact in floating point
    sc = open_scenario([Box(1.0, -1.0, 2.0, 1.0, 1.0)])
    agent = AgentConfig(base_radius=0.25)
    assert not collides(Pose(0.75, 0.0, 0.0), agent, sc)  # distance exactly 0.25
    assert collides(Pose(0.76, 0.0, 0.0), agent, sc)


def brute_force_sweep(p0, p1, radius, sc, n=4000):
    for t in np.linspace(0.0, 1.0, n):
        x = p0[0] + t * (p1[0] - p0[0])
        y = p0[1] + t * (p1[1] - p0[1])
        if collides(Pose(x, y, 0.0), AgentConfig(base_radius=radius), sc):
            return True
    return False


def test_sweep_matches_dense_sampling_oracle():
    g = rng(11)
    sc = open_scenario([
        Box(-0.5, 1.0, 1.5, 2.0, 1.0),
        Box(2.0, -2.0, 3.0, -0.5, 1.0),
    ])
    agree = 0
    for _ in range(300):
        p0 = tuple(g.uniform(-4, 4, 2))
        p1 = tuple(np.array(p0) + g.uniform(-1, 1, 2))
        got = sweep_collides(p0, p1, 0.2, sc)
        want = brute_force_sweep(p0, p1, 0.2, sc)
        # dense sampling can miss grazing contacts; exact disagreement only
        # allowed when the analytic distance is within sampling error
        if got == want:
            agree += 1
        else:
            assert got and not want  # analytic test is the stricter one
    assert agree >= 295


# ---------------------------------------------------------------------------
# odometry

def test_odometry_zero_drift_identity():
    odo = Odometry()
    off = NoiseConfig.disabled()
    g = rng()
    for _ in range(50):
        odo.advance(off, g)
    p = Pose(1.0, 2.0, math.radians(90))
    assert odo.read(p) == p


def test_odometry_same_seed_same_drift():
    noise = NoiseConfig()
    readings = []
    for _ in range(2):
        odo = Odometry()
        g = rng(77)
        for _ in range(100):
            odo.advance(noise, g)
        readings.append(odo.read(Pose(0, 0, 0)))
    assert readings[0] == readings[1]


def test_odometry_random_walk_rms():
    # RMS positional drift after n steps is sigma * sqrt(n) (20% tolerance)
    sigma = 0.002
    n = 100
    noise = NoiseConfig(odometry_drift_sigma=sigma)
    sq = 0.0
    trials = 1000
    for seed in range(trials):
        odo = Odometry()
        g = rng(seed)
        for _ in range(n):
            odo.advance(noise, g)
        dx, dy = odo.drift
        sq += dx * dx + dy * dy
    observed = math.sqrt(sq / trials)
    expected = sigma * math.sqrt(n)
    assert abs(observed - expected) <= 0.2 * expected


# ---------------------------------------------------------------------------
# scenario validation

def test_scenario_rejects_obstacle_outside_bounds():
    sc = Scenario(
        bounds=Rect(0, 0, 5, 5),
        obstacles=(Box(4.0, 4.0, 6.0, 5.0, 1.0),),
        episodes=(),
    )
    with pytest.raises(ValueError, match="outside bounds"):
        sc.validate(AGENT)


def test_scenario_rejects_colliding_start():
    sc = Scenario(
        bounds=Rect(0, 0, 5, 5),
        obstacles=(Box(2.0, 2.0, 3.0, 3.0, 1.0),),
        episodes=(EpisodeSpec(id="x", start=Pose(2.05, 2.5, 0.0), goal_rel=(0.5, 0)),),
    )
    with pytest.raises(ValueError, match="collision-free"):
        sc.validate(AGENT)


def test_goal_world_uses_start_frame():
    spec = EpisodeSpec(id="g", start=Pose(1.0, 2.0, math.radians(90)), goal_rel=(1.0, 0.0))
    gx, gy = spec.goal_world()
    assert gx == pytest.approx(1.0)
    assert gy == pytest.approx(3.0)
