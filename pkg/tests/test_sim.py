import math
from collections import deque

import numpy as np
import pytest

from conftest import empty_grid, grid_from_rows
from sarsim.hsfm import (AgentState, ContactParams, ControlParams, SocialParams,
                         TrackedWaypoint, WaypointTracker)
from sarsim.scenario import build_world
from sarsim.sim import (SimulationAbort, SquadRuntime, World, bench,
                        dopri5_step, integrate_fixed, integrator_self_test, run)


def _tracker(points):
    return WaypointTracker(waypoints=deque(
        TrackedWaypoint(x, y, essential) for x, y, essential in points))


def _single_agent_world(target_x=100.0, vision_speed=1.5):
    grid = empty_grid(width=120, height=8, resolution=1.0)
    agent = AgentState(x=2.0, y=4.0, theta=0.0)
    squad = SquadRuntime(squad_id="s", members=[0],
                         control=ControlParams(v_des=vision_speed),
                         social=SocialParams(), vision="free")
    tracker = _tracker([(target_x, 4.0, True)])
    return World(grid=grid, agents=[agent], squads=[squad],
                 trackers=[tracker], contact=ContactParams())


def test_integrator_self_test_passes():
    report = integrator_self_test()
    assert report["passed"]
    assert report["decay_error"] < 1e-6
    assert report["oscillator_error"] < 1e-5
    assert report["constant_error"] == 0.0


def test_dopri5_single_step_accuracy_and_fsal():
    f = lambda t, y: -y
    y0 = np.array([1.0])
    y1, err, k_last = dopri5_step(f, 0.0, y0, 0.1)
    assert abs(float(y1[0]) - math.exp(-0.1)) < 1e-9  # ~h^6 local error
    assert np.allclose(k_last, f(0.1, y1))
    # FSAL seeding gives bit-identical results
    y1_seeded, _, _ = dopri5_step(f, 0.0, y0, 0.1, k1=f(0.0, y0))
    assert np.array_equal(y1, y1_seeded)
    assert np.abs(err).max() < 1e-8


def test_integrate_fixed_validates_step():
    with pytest.raises(ValueError):
        integrate_fixed(lambda t, y: -y, 0.0, np.array([1.0]), 1.0, 0.0)


def test_single_agent_relaxes_to_v_des():
    # closed form: v(t) = v_des (1 - e^{-t/tau}); after 5 s with tau = 0.5
    # the deficit is e^{-10}, far below 1%
    world = _single_agent_world()
    while world.time < 5.0 - 1e-9:
        world.step(0.06)
    st = world.states()[0]
    speed = math.hypot(st[3], st[4])
    assert abs(speed - 1.5) <= 0.01 * 1.5
    assert st[0] > 2.0 + 0.9 * 1.5 * (5.0 - 0.5)  # actually moved down-range


def test_agent_at_rest_without_waypoints_stays():
    world = _single_agent_world()
    world.trackers[0].waypoints.clear()
    world.refresh_targets()
    y0 = world.y.copy()
    for _ in range(10):
        world.step(0.06)
    assert np.allclose(world.y, y0, atol=1e-12)


def test_zero_agents_is_a_no_op():
    world = World(grid=empty_grid(), agents=[], squads=[], trackers=[],
                  contact=ContactParams())
    world.step(0.06)
    assert world.time == pytest.approx(0.06)
    assert world.done()


def test_world_validation():
    grid = empty_grid()
    agent = AgentState(x=1.0, y=1.0, theta=0.0)
    with pytest.raises(ValueError, match="tracker"):
        World(grid=grid, agents=[agent], squads=[], trackers=[],
              contact=ContactParams())
    with pytest.raises(ValueError, match="squad"):
        World(grid=grid, agents=[agent], squads=[], trackers=[_tracker([])],
              contact=ContactParams())
    world = _single_agent_world()
    with pytest.raises(ValueError):
        world.step(0.0)


def test_jit_rhs_matches_reference(studio_mission):
    world = build_world(studio_mission)
    for _ in range(20):
        world.step(0.06)
    y = world.y.copy()
    got = world.rhs(world.time, y)
    want = world._rhs_reference(world.time, y)
    assert np.abs(got - want).max() < 1e-9


def test_run_is_deterministic(studio_mission):
    t_max = studio_mission.default_t_max()
    a = run(build_world(studio_mission), dt=0.06, t_max=t_max)
    b = run(build_world(studio_mission), dt=0.06, t_max=t_max)
    assert not a.timed_out
    assert a.to_csv() == b.to_csv()


def test_trajectory_csv_format():
    world = _single_agent_world(target_x=8.0)
    traj = run(world, dt=0.06, t_max=30.0)
    lines = traj.to_csv().splitlines()
    assert lines[0] == "t,squad_id,agent_id,x,y,theta,vx,vy,omega"
    assert len(lines) == 1 + len(traj.times)  # one agent
    times = [float(l.split(",")[0]) for l in lines[1:]]
    assert all(t2 > t1 for t1, t2 in zip(times, times[1:]))
    assert all(l.split(",")[1] == "s" and l.split(",")[2] == "0"
               for l in lines[1:])


def test_run_path_length_bound():
    # straight shot: traveled length close to the plan's straight line
    world = _single_agent_world(target_x=10.0)
    traj = run(world, dt=0.06, t_max=60.0)
    assert not traj.timed_out
    straight = 8.0 - world.trackers[0].essential_circle_range
    assert straight <= float(traj.path_lengths[0]) <= 1.5 * straight


def test_run_timeout_flag():
    world = _single_agent_world(target_x=100.0)
    traj = run(world, dt=0.06, t_max=1.0)
    assert traj.timed_out
    assert traj.times[-1] <= 1.0 + 0.06 + 1e-9  # stops within one step of t_max


def test_non_finite_state_aborts_with_snapshot():
    world = _single_agent_world()
    world.y = world.y.copy()
    world.y[3] = math.inf
    with pytest.raises(SimulationAbort) as exc:
        world.step(0.06)
    assert "non-finite" in str(exc.value)
    assert "state" in exc.value.snapshot


def test_bench_report():
    report = bench(lambda: _single_agent_world(target_x=6.0), "FREE", 2,
                   dt=0.06, t_max=30.0)
    assert report.repetitions == 2
    assert report.var_length == pytest.approx(0.0, abs=1e-18)  # deterministic
    assert report.mean_length > 0
    text = report.to_text()
    assert text.startswith("FREE reps 2 mu_d ")
    with pytest.raises(ValueError):
        bench(lambda: _single_agent_world(), "FREE", 0)


def test_border_forces_keep_agent_out_of_walls():
    # narrow dead-end corridor: the agent is pushed toward the far wall by
    # its goal but must never penetrate it
    grid = grid_from_rows(["#########",
                           "#.......#",
                           "#.......#",
                           "#########"], resolution=0.5)
    agent = AgentState(x=1.0, y=1.0, theta=0.0)
    squad = SquadRuntime(squad_id="s", members=[0], control=ControlParams(),
                         social=SocialParams(), vision="free")
    tracker = _tracker([(4.2, 1.0, True)])  # goal just past the free space
    world = World(grid=grid, agents=[agent], squads=[squad],
                  trackers=[tracker], contact=ContactParams())
    for _ in range(300):
        world.step(0.06)
        x, y = world.states()[0, :2]
        assert not grid.is_occupied_world(x, y)
    assert world.penetration_events == 0
