import pytest
import yaml

from unweave_flow import cli
from unweave_flow.graph.cable_graph import count_crossings
from unweave_flow.graph.serialization import deserialize_state, load_state, save_state
from unweave_flow.harness.episode import (
    EpisodeLog,
    EpisodeRequest,
    EpisodeStatus,
    crossing_signature,
    default_budget,
    run_episode,
    states_agree,
)
from unweave_flow.harness.experiment import COLUMNS, ExperimentGrid, run_experiment
from unweave_flow.harness.frames import render_episode
from unweave_flow.planner.planner import PlannerConfig
from unweave_flow.simworld.generator import GeneratorConfig, ScenarioSpec
from unweave_flow.simworld.physics import PhysicsConfig
from unweave_flow.simworld.render import save_render
from unweave_flow.simworld.world import save_world
from unweave_flow.transition.transition import TransitionConfig

from conftest import X_LINES, world_from_lines

NARROW = PlannerConfig(transition=TransitionConfig(theta_min=-0.01, theta_max=0.01), theta_grid=0.005)


def _request(world, planner, **kwargs) -> EpisodeRequest:
    return EpisodeRequest(world=world, physics=PhysicsConfig(), planner=planner, oracle_perception=True, **kwargs)


def test_default_budget():
    assert default_budget(0) == 5
    assert default_budget(2) == 11


def test_crossing_signature(x_state, parallel_state):
    assert crossing_signature(x_state) == {0: [("over", 1)], 1: [("under", 0)]}
    assert crossing_signature(parallel_state) == {0: [], 1: []}
    assert states_agree(x_state, x_state, 17.5)
    assert not states_agree(parallel_state, x_state, 17.5)


def test_untangled_world_succeeds_immediately(parallel_world, coarse_planner):
    log = run_episode(_request(parallel_world, coarse_planner))
    assert log.status is EpisodeStatus.SUCCESS
    assert log.iterations == 0
    assert log.budget == 5
    assert log.initial_crossings == log.final_crossings == 0
    assert len(log.worlds) == 1


def test_perceived_untangled_world_succeeds(parallel_world, coarse_planner):
    request = EpisodeRequest(world=parallel_world, physics=PhysicsConfig(), planner=coarse_planner)
    log = run_episode(request)
    assert log.status is EpisodeStatus.SUCCESS
    assert log.records[0].perceived_crossings == 0
    assert log.records[0].perception_time > 0.0


def test_deadlock_without_redistribution(x_world):
    log = run_episode(_request(x_world, NARROW, allow_redistribution=False))
    assert log.status is EpisodeStatus.DEADLOCK
    assert "redistribution is disabled" in log.message
    assert log.iterations == 0
    assert log.final_crossings == 1


def test_generation_failure_is_logged():
    cfg = GeneratorConfig.default().model_copy(update={"max_attempts": 2})
    log = run_episode(EpisodeRequest(spec=ScenarioSpec(n_cables=2, n_crossings=40), generator=cfg))
    assert log.status is EpisodeStatus.GENERATION_FAILURE
    assert "generation budget exceeded" in log.message
    assert log.worlds == []


@pytest.mark.slow
def test_budget_is_enforced(x_world):
    log = run_episode(_request(x_world, NARROW, budget=1))
    assert log.status is EpisodeStatus.ITERATION_BUDGET_EXCEEDED
    assert log.iterations == 1
    assert log.records[0].primitive.value == "redistribution"


@pytest.mark.slow
def test_x_world_is_unwoven(x_world, coarse_planner, tmp_path):
    log_path = tmp_path / "episode.yaml"
    log = run_episode(_request(x_world, coarse_planner, log_path=log_path))
    assert log.status is EpisodeStatus.SUCCESS
    assert log.iterations == 1
    assert log.final_crossings == 0
    first = log.records[0]
    assert first.primitive.value == "elimination"
    assert first.predicted_m == first.realized_dm == 1
    assert len(log.worlds) == 2

    loaded = EpisodeLog.load(log_path)
    assert loaded.status is EpisodeStatus.SUCCESS
    assert loaded.episode_id == log.episode_id
    assert [r.action for r in loaded.records] == [r.action for r in log.records]
    assert loaded.worlds == log.worlds

    frames = render_episode(loaded, tmp_path / "frames", coarse_planner)
    assert [p.name for p in frames] == ["frame_000.png", "frame_001.png"]
    assert all(p.exists() for p in frames)


@pytest.mark.slow
def test_experiment_report(coarse_planner, tmp_path):
    grid = ExperimentGrid(configurations=((2, 0),), trials=2, stiffness="ideal")
    report = run_experiment(grid, planner=coarse_planner, oracle_perception=True, log_dir=tmp_path / "logs")
    frame = report.to_frame()
    assert list(frame.columns) == COLUMNS
    assert len(frame) == 1
    row = report.rows[0]
    assert (row.n_cables, row.n_crossings, row.trials) == (2, 0, 2)
    assert row.success_rate == 100.0
    assert row.mean_actions == 0.0
    assert row.deadlocks == row.budget_exceeded == 0
    assert len(list((tmp_path / "logs").glob("episode_2_0_*.yaml"))) == 2
    assert report.to_csv(tmp_path / "report.csv").exists()
    assert "success %" in report.table()

    again = run_experiment(grid, planner=coarse_planner, oracle_perception=True)
    assert again.rows[0].success_rate == row.success_rate
    assert again.rows[0].mean_actions == row.mean_actions


def test_experiment_grid_needs_a_row():
    with pytest.raises(ValueError):
        ExperimentGrid(configurations=())
    assert ExperimentGrid.default().trials == 10


# command line


def test_cli_gen_render_perceive(parallel_world, tmp_path):
    world_path = save_world(parallel_world, tmp_path / "world.yaml")
    image = tmp_path / "scene.png"
    assert cli.main(["render", "--world", str(world_path), "--out", str(image)]) == 0
    state_path = tmp_path / "state.yaml"
    overlay = tmp_path / "overlay.png"
    argv = ["perceive", "--image", str(image), "--world", str(world_path), "--out", str(state_path), "--overlay", str(overlay)]
    assert cli.main(argv) == 0
    assert count_crossings(load_state(state_path)) == 0
    assert overlay.exists()

    generated = tmp_path / "gen.yaml"
    assert cli.main(["gen", "--cables", "2", "--crossings", "0", "--seed", "4", "--out", str(generated)]) == 0
    assert generated.exists()


@pytest.mark.slow
def test_cli_plan(x_state, tmp_path, capsys):
    state_path = save_state(x_state, tmp_path / "state.yaml")
    planner_path = tmp_path / "planner.yaml"
    planner_path.write_text(yaml.safe_dump({"theta_grid": 0.1, "refine_step": 0.05}))
    predicted = tmp_path / "next.yaml"
    argv = ["plan", "--state", str(state_path), "--planner", str(planner_path), "--dump-predictions", str(predicted)]
    assert cli.main(argv) == 0
    out = capsys.readouterr().out
    assert "primitive: elimination" in out
    assert "predicted M: 1" in out
    assert count_crossings(load_state(predicted)) == 0


def test_cli_stuck_planner_exits_one(x_state, tmp_path):
    state_path = save_state(x_state, tmp_path / "state.yaml")
    planner_path = tmp_path / "planner.yaml"
    planner_path.write_text(yaml.safe_dump({"d_f": 10.0}))
    assert cli.main(["plan", "--state", str(state_path), "--planner", str(planner_path)]) == 1


def test_cli_reports_missing_files(tmp_path):
    assert cli.main(["render", "--world", str(tmp_path / "missing.yaml"), "--out", str(tmp_path / "x.png")]) == 2
    assert cli.main(["plan", "--state", str(tmp_path / "missing.yaml")]) == 2


def test_cli_perceive_writes_the_state_to_stdout(parallel_world, tmp_path, capsys):
    world_path = save_world(parallel_world, tmp_path / "world.yaml")
    image = save_render(parallel_world, tmp_path / "scene.png")
    assert cli.main(["perceive", "--image", str(image), "--world", str(world_path)]) == 0
    captured = capsys.readouterr()
    state = deserialize_state(captured.out)
    assert len(state.graphs) == 2
    assert count_crossings(state) == 0
    assert "> perceived 2 cables" in captured.err


# worlds without ground truth


@pytest.mark.parametrize("oracle", [True, False])
def test_world_without_over_record_is_not_a_perception_failure(coarse_planner, oracle):
    world = world_from_lines(X_LINES)
    request = EpisodeRequest(world=world, physics=PhysicsConfig(), planner=coarse_planner, oracle_perception=oracle)
    log = run_episode(request)
    assert log.status is EpisodeStatus.INVALID_WORLD
    assert log.message.startswith("ground truth unavailable")
    assert log.iterations == 0
    assert log.records[0].perceived_crossings is None
    assert log.records[0].perception_time == 0.0


# closed loop on generated worlds


@pytest.mark.slow
def test_two_cable_two_crossing_episodes_succeed(coarse_planner):
    logs = [
        run_episode(
            EpisodeRequest(spec=ScenarioSpec(n_cables=2, n_crossings=2, seed=seed), physics=PhysicsConfig(), planner=coarse_planner)
        )
        for seed in range(50)
    ]
    played = [log for log in logs if log.status is not EpisodeStatus.GENERATION_FAILURE]
    assert len(played) >= 45
    successes = sum(log.status is EpisodeStatus.SUCCESS for log in played)
    assert successes >= 0.95 * len(played)


@pytest.mark.slow
@pytest.mark.parametrize("n_cables, n_crossings", [(3, 4), (3, 5)])
def test_redistribution_never_lowers_success(n_cables, n_crossings, coarse_planner):
    grid = ExperimentGrid(configurations=((n_cables, n_crossings),), trials=10, stiffness="ideal")
    full = run_experiment(grid, planner=coarse_planner, oracle_perception=True)
    elimination_only = run_experiment(grid, planner=coarse_planner, oracle_perception=True, allow_redistribution=False)
    assert elimination_only.rows[0].success_rate <= full.rows[0].success_rate
    assert elimination_only.allow_redistribution is False
