import math

import numpy as np
import pytest

from unweave_flow.errors import DeadlockError, NoCandidateActionsError
from unweave_flow.graph.cable_graph import CableState, count_crossings, state_from_polylines
from unweave_flow.planner import rewards
from unweave_flow.planner.landscape import plot_cost_landscape
from unweave_flow.planner.planner import (
    ActionSubspace,
    PlannerConfig,
    PrimitiveChoice,
    Scene,
    cost_landscape,
    enumerate_subspaces,
    in_domain,
    is_valid,
    lift_height,
    optimize_action,
    plan,
    select_primitive,
    theta_samples,
)
from unweave_flow.planner.rewards import reward_elimination, reward_redistribution
from unweave_flow.planner.workspace import Workspace
from unweave_flow.transition.transition import Action, TransitionConfig, pivot_node

from conftest import COLORS, X_LINES


def _subspace(m: int, cable_id: int = 0) -> ActionSubspace:
    return ActionSubspace(
        cable_id=cable_id, grasp_node_id=1, grasp_index=1, theta_interval=(0.0, 0.1), m=m, thetas=(0.0, 0.1)
    )


@pytest.fixture(scope="module")
def x_plan(coarse_planner):
    state = state_from_polylines(X_LINES, COLORS, lambda a, b, p: 0)
    scene = Scene(state, coarse_planner)
    subspaces = enumerate_subspaces(state, coarse_planner, scene)
    return state, scene, subspaces


# rewards


def test_elimination_reward_terms():
    cfg = PlannerConfig()
    moved = np.array([[-1.0, 0.0], [1.0, 0.0]])
    other = np.array([[0.0, math.sqrt(3.0)]])
    dist = rewards.distance_term(moved, [other])
    curv = rewards.curvature_term(np.array([0.0, 0.0]), np.array([1.0, 0.0]), np.array([-1.0, 0.0]))
    ratio = rewards.ratio_term(0.3, 0.3, cfg.transition.resample_step)
    assert dist == pytest.approx(4.0)
    assert curv == pytest.approx(math.pi)
    assert rewards.elimination_value(dist, curv, ratio, 1, cfg) == pytest.approx(448.16, abs=0.01)


def test_elimination_reward_is_linear_in_m():
    cfg = PlannerConfig()
    one = rewards.elimination_value(10.0, 2.0, 0.5, 1, cfg)
    two = rewards.elimination_value(10.0, 2.0, 0.5, 2, cfg)
    assert two - one == pytest.approx(cfg.w_elim)


def test_zero_weights_give_zero_reward():
    cfg = PlannerConfig().scaled(0.0)
    assert rewards.elimination_value(10.0, 2.0, 0.5, 3, cfg) == 0.0
    assert rewards.redistribution_value(10.0, 2.0, 0.5, 0.2, cfg) == 0.0


def test_spread_term():
    ys = np.array([0.2, 0.4, 0.6]) * 480.0
    spread = rewards.spread_term(ys, 480.0)
    assert spread == pytest.approx(0.1633, abs=1e-4)
    assert 3000.0 * spread == pytest.approx(489.9, abs=0.1)
    assert rewards.spread_term(np.full(4, 100.0), 480.0) == 0.0
    cfg = PlannerConfig()
    tight = rewards.redistribution_value(10.0, 2.0, 0.5, 0.05, cfg)
    loose = rewards.redistribution_value(10.0, 2.0, 0.5, 0.2, cfg)
    assert tight > loose


def test_distance_term_grows_with_separation():
    moved = np.array([[0.0, 0.0], [10.0, 0.0]])
    other = np.array([[0.0, 20.0], [10.0, 30.0]])
    assert rewards.distance_term(moved * 2.0, [other * 2.0]) > rewards.distance_term(moved, [other])


def test_ratio_is_capped_at_the_free_end():
    assert rewards.ratio_term(0.3, 0.0, 0.034) == pytest.approx(0.3 / 0.034)


def _oracle_reward(moved, others, pivot, successor, place, l_grasp, l_tail, eps, m, spread_ys, height, cfg):
    dist = 0.0
    for h in others:
        pairs = [(a, b) for a in moved for b in h]
        dist += sum((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 for a, b in pairs) / len(pairs)
    u = (successor[0] - pivot[0], successor[1] - pivot[1])
    v = (place[0] - pivot[0], place[1] - pivot[1])
    cos = (u[0] * v[0] + u[1] * v[1]) / (math.hypot(*u) * math.hypot(*v))
    curv = math.acos(max(-1.0, min(1.0, cos)))
    ratio = l_grasp / max(l_tail, eps)
    ys = [y / height for y in spread_ys]
    mean = sum(ys) / len(ys)
    spread = math.sqrt(sum((y - mean) ** 2 for y in ys) / len(ys))
    base = cfg.w_dist * dist + cfg.w_curv * curv + cfg.w_cred * ratio
    return base + cfg.w_elim * m, base - cfg.w_std * spread


def test_reward_values_match_an_independent_oracle():
    rng = np.random.default_rng(17)
    cfg = PlannerConfig()
    eps = cfg.transition.resample_step
    for case in range(100):
        moved = rng.uniform(0, 640, size=(int(rng.integers(2, 12)), 2))
        others = [rng.uniform(0, 640, size=(int(rng.integers(2, 12)), 2)) for _ in range(int(rng.integers(1, 4)))]
        pivot, successor, place = rng.uniform(0, 640, size=(3, 2))
        l_grasp, l_tail = rng.uniform(0.0, 0.6, size=2)
        m = int(rng.integers(1, 4))
        elim, redis = _oracle_reward(
            moved.tolist(), [h.tolist() for h in others], pivot, successor, place,
            l_grasp, l_tail, eps, m, moved[:, 1].tolist(), 480.0, cfg,
        )
        dist = rewards.distance_term(moved, others)
        curv = rewards.curvature_term(pivot, successor, place)
        ratio = rewards.ratio_term(l_grasp, l_tail, eps)
        spread = rewards.spread_term(moved[:, 1], 480.0)
        assert rewards.elimination_value(dist, curv, ratio, m, cfg) == pytest.approx(elim, rel=1e-9), case
        assert rewards.redistribution_value(dist, curv, ratio, spread, cfg) == pytest.approx(redis, rel=1e-9, abs=1e-6), case


# lift height


def test_lift_height_right_triangle():
    h = lift_height((0.0, 0.0), (0.5, 0.0), (0.3, 0.0), 1.0)
    assert h.height == pytest.approx(0.4)
    assert not h.taut


def test_lift_height_from_pixels():
    assert lift_height((0.0, 0.0), (250.0, 0.0), (150.0, 0.0), 1.0 / 500.0).height == pytest.approx(0.4)


def test_lift_height_taut_and_flush():
    assert lift_height((0, 0), (1, 0), (2, 0), 1.0) == (0.0, True)
    assert lift_height((0, 0), (1, 0), (0, 1), 1.0).height == 0.0


def test_lift_height_identity_on_random_triples():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        c, g, p = rng.uniform(0, 640, size=(3, 2))
        h = lift_height(c, g, p, 0.002)
        if h.taut:
            continue
        cg = np.linalg.norm((g - c) * 0.002)
        cp = np.linalg.norm((p - c) * 0.002)
        assert h.height ** 2 + cp ** 2 == pytest.approx(cg ** 2, abs=1e-9)


# primitive selection


def test_select_primitive_rules(x_state):
    assert select_primitive([], CableState()) is PrimitiveChoice.DONE
    assert select_primitive([_subspace(0), _subspace(1)], x_state) is PrimitiveChoice.ELIMINATION
    assert select_primitive([_subspace(0), _subspace(-1)], x_state) is PrimitiveChoice.REDISTRIBUTION
    with pytest.raises(DeadlockError, match="deadlock"):
        select_primitive([], x_state)


def test_domains():
    assert in_domain(_subspace(2), PrimitiveChoice.ELIMINATION)
    assert not in_domain(_subspace(0), PrimitiveChoice.ELIMINATION)
    assert in_domain(_subspace(0), PrimitiveChoice.REDISTRIBUTION)
    assert not in_domain(_subspace(-1), PrimitiveChoice.REDISTRIBUTION)


def test_empty_domain_has_no_candidates(x_state):
    with pytest.raises(NoCandidateActionsError, match="no candidate actions"):
        optimize_action([_subspace(0)], PrimitiveChoice.ELIMINATION, x_state, PlannerConfig())


def test_theta_grid_covers_the_range():
    thetas = theta_samples(PlannerConfig())
    assert len(thetas) == 151
    assert thetas[0] == pytest.approx(-5 * math.pi / 6)
    assert thetas[-1] == pytest.approx(5 * math.pi / 6)


def test_theta_grid_must_fit_the_range():
    narrow = TransitionConfig(theta_min=-0.01, theta_max=0.01)
    with pytest.raises(ValueError):
        PlannerConfig(transition=narrow)
    assert PlannerConfig(transition=narrow, theta_grid=0.005).theta_grid == 0.005


# validity


def test_identity_action_is_valid(parallel_state):
    graph = parallel_state.graph(0)
    action = Action(cable_id=0, grasp_node_id=graph.nodes[5].node_id, pivot_angle=0.0)
    assert is_valid(parallel_state, action, PlannerConfig()).ok


def test_grasp_near_another_cable_violates_clearance(parallel_state):
    action = Action(cable_id=0, grasp_node_id=5, pivot_angle=0.0)
    validity = is_valid(parallel_state, action, PlannerConfig(d_f=10.0))
    assert not validity.ok
    assert validity.reason == "clearance"


def test_cable_broken_in_the_middle():
    state = state_from_polylines({0: np.array([[600.0, 30.0], [0.0, 30.0]])}, {0: "red"}, lambda a, b, p: a)
    action = Action(cable_id=0, grasp_node_id=18, pivot_angle=0.3)
    validity = is_valid(state, action, PlannerConfig())
    assert validity == (False, "broken in the middle")


def test_sweeping_over_a_foreign_endpoint_is_rejected():
    lines = {
        0: np.array([[400.0, 240.0], [0.0, 240.0]]),
        1: np.array([[300.0, 150.0], [0.0, 450.0]]),
    }
    state = state_from_polylines(lines, {0: "red", 1: "blue"}, lambda a, b, p: a)
    # the grasp segment sweeps across blue's free end at (300, 150)
    reasons = {
        is_valid(state, Action(cable_id=0, grasp_node_id=2, pivot_angle=float(t)), PlannerConfig()).reason
        for t in np.linspace(0.25, 0.4, 4)
    }
    assert "too close to endpoint or crossing" in reasons


def test_transition_errors_surface_as_reasons(x_state):
    fixed_id = x_state.graph(0).fixed.node_id
    validity = is_valid(x_state, Action(cable_id=0, grasp_node_id=fixed_id, pivot_angle=0.0), PlannerConfig())
    assert not validity.ok
    assert "invalid grasp node" in validity.reason


# enumeration and optimization


def test_single_cable_never_changes_crossings(coarse_planner):
    state = state_from_polylines({0: np.array([[400.0, 240.0], [0.0, 240.0]])}, {0: "red"}, lambda a, b, p: a)
    subspaces = enumerate_subspaces(state, coarse_planner)
    assert subspaces
    assert {s.m for s in subspaces} == {0}
    assert select_primitive(subspaces, state) is PrimitiveChoice.DONE


def test_only_the_over_cable_can_eliminate(x_plan):
    _, _, subspaces = x_plan
    assert any(s.m == 1 and s.cable_id == 0 for s in subspaces)
    assert all(s.m <= 0 for s in subspaces if s.cable_id == 1)


def test_subspaces_are_valid_runs(x_plan):
    state, scene, subspaces = x_plan
    for sub in subspaces[:: max(1, len(subspaces) // 10)]:
        assert sub.theta_interval == (sub.thetas[0], sub.thetas[-1])
        for theta in sub.thetas:
            ev = scene.evaluate(Action(cable_id=sub.cable_id, grasp_node_id=sub.grasp_node_id, pivot_angle=theta))
            assert ev.validity.ok
            assert ev.m == sub.m


@pytest.mark.slow
def test_plan_eliminates_the_crossing(x_plan, coarse_planner):
    state, scene, subspaces = x_plan
    primitive, result, _ = plan(state, coarse_planner)
    assert primitive is PrimitiveChoice.ELIMINATION
    assert result.predicted_m == 1
    assert count_crossings(result.predicted_state) == 0
    assert is_valid(state, result.action, coarse_planner).ok

    # dominance over every evaluated grid sample of the domain
    for sub in subspaces:
        if not in_domain(sub, primitive):
            continue
        for theta in sub.thetas:
            ev = scene.evaluate(Action(cable_id=sub.cable_id, grasp_node_id=sub.grasp_node_id, pivot_angle=theta))
            if ev.validity.ok and ev.m == sub.m:
                assert result.reward >= scene.reward(ev, primitive) - 1e-6


@pytest.mark.slow
def test_reward_functions_agree_with_the_planner(x_plan, coarse_planner):
    state, _, _ = x_plan
    _, result, _ = plan(state, coarse_planner)
    graph = state.graph(result.action.cable_id)
    c = pivot_node(graph)
    g = graph.nodes[graph.index_of(result.action.grasp_node_id)]
    value = reward_elimination(state, result.predicted_state, c, g, result.geometry.place_px, coarse_planner)
    assert value == pytest.approx(result.reward, rel=1e-6)


@pytest.mark.slow
def test_scaling_all_weights_keeps_the_action(x_plan, coarse_planner):
    state, _, _ = x_plan
    _, base, _ = plan(state, coarse_planner)
    _, scaled, _ = plan(state, coarse_planner.scaled(7.5))
    assert scaled.action == base.action


def _widest(subspaces, m):
    return max((s for s in subspaces if s.m == m), key=lambda s: len(s.thetas))


def test_optimizer_finds_a_quadratic_peak(x_plan, coarse_planner):
    state, scene, subspaces = x_plan
    sub = _widest(subspaces, 1)
    assert len(sub.thetas) >= 3
    lo, hi = sub.theta_interval
    peak = lo + 0.37 * (hi - lo)
    result = optimize_action(
        [sub], PrimitiveChoice.ELIMINATION, state, coarse_planner,
        reward_fn=lambda action, ev: -((action.pivot_angle - peak) ** 2), scene=scene,
    )
    assert abs(result.action.pivot_angle - peak) <= coarse_planner.theta_grid / 4


def test_gradient_ascent_converges_to_a_smooth_maximum(x_plan, coarse_planner):
    state, scene, subspaces = x_plan
    sub = _widest(subspaces, 1)
    lo, hi = sub.theta_interval
    peak = lo + 0.61 * (hi - lo)
    result = optimize_action(
        [sub], PrimitiveChoice.ELIMINATION, state, coarse_planner,
        reward_fn=lambda action, ev: 5.0 - 40.0 * (action.pivot_angle - peak) ** 2, scene=scene,
    )
    assert result.action.pivot_angle == pytest.approx(peak, abs=1e-5)
    assert result.reward == pytest.approx(5.0, abs=1e-6)


def test_gradient_ascent_follows_a_bump_between_samples(x_plan, coarse_planner):
    state, scene, subspaces = x_plan
    sub = _widest(subspaces, 1)
    lo, hi = sub.theta_interval
    peak = lo + 0.43 * (hi - lo)
    width = 0.08
    grid_best = max(math.exp(-(((t - peak) / width) ** 2)) for t in sub.thetas)
    result = optimize_action(
        [sub], PrimitiveChoice.ELIMINATION, state, coarse_planner,
        reward_fn=lambda action, ev: math.exp(-(((action.pivot_angle - peak) / width) ** 2)), scene=scene,
    )
    assert result.reward >= grid_best
    assert result.action.pivot_angle == pytest.approx(peak, abs=1e-4)


def test_gradient_ascent_stops_at_the_subspace_edge(x_plan, coarse_planner):
    state, scene, subspaces = x_plan
    sub = _widest(subspaces, 1)
    lo, hi = sub.theta_interval
    result = optimize_action(
        [sub], PrimitiveChoice.ELIMINATION, state, coarse_planner,
        reward_fn=lambda action, ev: action.pivot_angle, scene=scene,
    )
    assert result.action.pivot_angle == pytest.approx(hi)


def test_constant_reward_takes_the_midpoint(x_plan, coarse_planner):
    state, scene, subspaces = x_plan
    sub = _widest(subspaces, 1)
    result = optimize_action(
        [sub], PrimitiveChoice.ELIMINATION, state, coarse_planner, reward_fn=lambda action, ev: 1.0, scene=scene
    )
    assert result.action.pivot_angle == pytest.approx(0.5 * (sub.theta_interval[0] + sub.theta_interval[1]))


def test_cost_landscape_and_figure(x_plan, coarse_planner, tmp_path):
    state, scene, subspaces = x_plan
    costs = cost_landscape(state, subspaces, PrimitiveChoice.ELIMINATION, coarse_planner, scene)
    assert costs
    eliminating = {s.grasp_node_id for s in subspaces if s.m > 0}
    assert set(costs) <= eliminating
    path = plot_cost_landscape(state, costs, tmp_path / "cost.png", title="elimination")
    assert path.exists()


# deadlocks


def test_deadlock_when_redistribution_is_disabled(x_state):
    cfg = PlannerConfig(transition=TransitionConfig(theta_min=-0.01, theta_max=0.01), theta_grid=0.005)
    with pytest.raises(DeadlockError, match="redistribution is disabled"):
        plan(x_state, cfg, allow_redistribution=False)


def test_narrow_range_falls_back_to_redistribution(x_state):
    cfg = PlannerConfig(transition=TransitionConfig(theta_min=-0.01, theta_max=0.01), theta_grid=0.005)
    primitive, result, _ = plan(x_state, cfg)
    assert primitive is PrimitiveChoice.REDISTRIBUTION
    assert result.predicted_m == 0


def test_deadlock_without_graspable_nodes(x_state):
    with pytest.raises(DeadlockError):
        plan(x_state, PlannerConfig(d_f=10.0))


def test_workspace_fixed_edge():
    ws = Workspace()
    assert ws.on_fixed_edge(np.array([0.0, 0.5]))
    assert not ws.on_fixed_edge(np.array([0.1, 0.5]))
    with pytest.raises(ValueError):
        Workspace(x_min=1.0, x_max=0.5)


def test_redistribution_reward_agrees_with_the_planner(x_state):
    cfg = PlannerConfig(transition=TransitionConfig(theta_min=-0.01, theta_max=0.01), theta_grid=0.005)
    _, result, _ = plan(x_state, cfg)
    graph = x_state.graph(result.action.cable_id)
    c = pivot_node(graph)
    g = graph.nodes[graph.index_of(result.action.grasp_node_id)]
    value = reward_redistribution(x_state, result.predicted_state, c, g, cfg)
    assert value == pytest.approx(result.reward, rel=1e-6)
