import yaml

import pytest

import sarsim.cli as cli
from conftest import MAPS
from sarsim.sim import SimulationAbort

STUDIO = MAPS / "studio"


def _argv(command, scenario, out, *extra):
    return [command, "--scenario", str(scenario), "--out", str(out), *extra]


def test_plan_writes_plan_file(tmp_path):
    assert cli.main(_argv("plan", STUDIO / "free.yaml", tmp_path)) == 0
    text = (tmp_path / "plan_alpha.txt").read_text()
    assert text.startswith("squad alpha waypoints ")
    assert "tactic hall FREE" in text


def test_plan_dump_graph(tmp_path):
    rc = cli.main(_argv("plan", STUDIO / "free.yaml", tmp_path, "--dump-graph"))
    assert rc == 0
    for room in ("hall", "main"):
        dump = (tmp_path / f"graph_{room}.txt").read_text()
        assert dump.startswith(f"room {room} nodes ")


def test_plan_tactic_override(tmp_path):
    rc = cli.main(_argv("plan", STUDIO / "free.yaml", tmp_path,
                        "--tactic", "WALL_RHR"))
    assert rc == 0
    assert "WALL_RHR" in (tmp_path / "plan_alpha.txt").read_text()


def test_simulate_writes_deterministic_csv(tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert cli.main(_argv("simulate", STUDIO / "free.yaml", out_a)) == 0
    assert cli.main(_argv("simulate", STUDIO / "free.yaml", out_b)) == 0
    csv_a = (out_a / "trajectory.csv").read_bytes()
    assert csv_a == (out_b / "trajectory.csv").read_bytes()
    lines = csv_a.decode().splitlines()
    assert lines[0] == "t,squad_id,agent_id,x,y,theta,vx,vy,omega"
    first_t = lines[1].split(",")[0]
    ids = [l.split(",")[2] for l in lines[1:4]]
    assert ids == ["0", "1", "2"]  # 3 agents per report step
    assert all(l.split(",")[0] == first_t for l in lines[1:4])


def test_bench_writes_report(tmp_path):
    rc = cli.main(_argv("bench", STUDIO / "free.yaml", tmp_path, "--reps", "2"))
    assert rc == 0
    report = (tmp_path / "bench.txt").read_text()
    assert "reps 2" in report and "mu_d" in report


def test_bench_rejects_nonpositive_reps(tmp_path):
    rc = cli.main(_argv("bench", STUDIO / "free.yaml", tmp_path, "--reps", "0"))
    assert rc == 1


def test_rooms_validation():
    assert cli.main(["rooms", "--map", str(STUDIO / "map.yaml"),
                     "--rooms", str(STUDIO / "rooms.yaml")]) == 0
    assert cli.main(["rooms", "--map", str(STUDIO / "map.yaml"),
                     "--rooms", str(STUDIO / "free.yaml")]) == 1


@pytest.mark.parametrize("extra", [
    (),                                  # missing scenario file
    ("--map", "/nonexistent/map.yaml"),  # missing map override
    ("--dt", "-0.5"),                    # invalid step size
    ("--tactic", "SIDEWAYS"),            # unknown tactic
])
def test_input_errors_exit_1(tmp_path, extra):
    scenario = STUDIO / "free.yaml" if extra else tmp_path / "missing.yaml"
    assert cli.main(_argv("plan", scenario, tmp_path, *extra)) == 1


def test_unreachable_goal_exits_2(tmp_path):
    # same rooms but without the connecting doorway: hall -> main unreachable
    rooms = yaml.safe_load((STUDIO / "rooms.yaml").read_text())
    rooms["doorways"] = []
    (tmp_path / "rooms.yaml").write_text(yaml.safe_dump(rooms))
    scenario = yaml.safe_load((STUDIO / "free.yaml").read_text())
    scenario["map"] = str(STUDIO / "map.yaml")
    scenario["rooms"] = "rooms.yaml"
    path = tmp_path / "scenario.yaml"
    path.write_text(yaml.safe_dump(scenario))
    assert cli.main(_argv("plan", path, tmp_path / "out")) == 2


def test_simulation_abort_exits_3(tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise SimulationAbort("injected failure", {"state": None})

    monkeypatch.setattr(cli, "run", boom)
    rc = cli.main(_argv("simulate", STUDIO / "free.yaml", tmp_path))
    assert rc == 3
