import math

import numpy as np
import pytest

from unweave_flow.errors import CableTooShortToPivotError, InvalidGraspError, ThetaOutOfBoundsError
from unweave_flow.graph.cable_graph import CableGraph, Node, NodeKind, count_crossings, state_from_polylines
from unweave_flow.graph.geometry import polyline_length
from unweave_flow.transition.transition import (
    Action,
    TransitionConfig,
    action_geometry,
    crossings_eliminated,
    deform,
    grasp_candidates,
    pivot_index,
    pivot_node,
    predict,
)

CFG = TransitionConfig.default()

# free (0.4, 0.5) -> g (0, 0.4) -> c (0, 0) -> fixed, in meters
BENT = np.array([[0.4, 0.5], [0.4, 0.4], [0.0, 0.4], [0.0, 0.0], [0.0, -0.2]])


def _graph(kinds: list[NodeKind]) -> CableGraph:
    nodes = []
    for i, kind in enumerate(kinds):
        crossing = i if kind in (NodeKind.OVER, NodeKind.UNDER) else None
        nodes.append(Node(node_id=i, kind=kind, pos_px=(float(10 * i), 0.0), crossing_id=crossing))
    return CableGraph(cable_id=0, color_name="red", nodes=tuple(nodes))


def _straight(n: int) -> list[NodeKind]:
    return [NodeKind.ENDPOINT] + [NodeKind.REGULAR] * (n - 2) + [NodeKind.ENDPOINT]


def test_pivot_of_crossing_free_cable_precedes_fixed_end():
    g = _graph(_straight(10))
    assert pivot_index(g) == 8
    assert pivot_node(g).node_id == 8


def test_pivot_precedes_first_undercrossing():
    kinds = _straight(10)
    kinds[3] = NodeKind.UNDER
    assert pivot_index(_graph(kinds)) == 2


def test_undercrossing_next_to_free_end_cannot_pivot():
    kinds = _straight(6)
    kinds[1] = NodeKind.UNDER
    with pytest.raises(CableTooShortToPivotError, match="too short to pivot"):
        pivot_index(_graph(kinds))
    assert grasp_candidates(_graph(kinds)) == []


def test_two_node_cable_cannot_pivot():
    with pytest.raises(CableTooShortToPivotError):
        pivot_index(_graph(_straight(2)))


def test_grasp_candidates_are_regular_nodes_before_pivot():
    kinds = _straight(10)
    kinds[5] = NodeKind.OVER
    assert grasp_candidates(_graph(kinds)) == [1, 2, 3, 4, 6, 7]


def test_bent_tail_points_back_to_old_free_end():
    d = deform(BENT, grasp_index=2, pivot_index=3, theta=-math.pi / 2, k=0.8, step=0.034)
    assert d.branch == "bent"
    assert d.l_grasp == pytest.approx(0.4)
    assert d.l_tail == pytest.approx(0.5)
    assert tuple(d.place) == pytest.approx((0.4, 0.0), abs=1e-12)
    assert tuple(d.moved[0]) == pytest.approx((0.4, 0.5), abs=1e-9)
    assert tuple(d.moved[d.place_index]) == pytest.approx((0.4, 0.0), abs=1e-12)
    # the whole tail sits on x = 0.4
    assert np.abs(d.moved[: d.place_index + 1, 0] - 0.4).max() < 1e-9


def test_short_tail_continues_straight():
    d = deform(BENT, grasp_index=2, pivot_index=3, theta=-math.pi / 2, k=2.0, step=0.034)
    assert d.branch == "straight"
    assert tuple(d.moved[0]) == pytest.approx((0.9, 0.0), abs=1e-9)
    assert np.abs(d.moved[:, 1]).max() < 1e-9


def test_branch_boundary_takes_bent():
    points = np.array([[0.0, 1.5], [0.0, 1.0], [0.0, 0.0], [0.0, -1.0]])
    d = deform(points, grasp_index=1, pivot_index=2, theta=0.3, k=0.5, step=0.1)
    assert d.l_tail == 0.5 * d.l_grasp
    assert d.branch == "bent"


def test_place_point_geometry():
    d = deform(BENT, grasp_index=2, pivot_index=3, theta=0.7, k=0.8, step=0.034)
    c, g = BENT[3], BENT[2]
    assert np.linalg.norm(d.place - c) == pytest.approx(d.l_grasp, abs=1e-9)
    cg, cp = g - c, d.place - c
    signed = math.atan2(cg[0] * cp[1] - cg[1] * cp[0], cg @ cp)
    assert signed == pytest.approx(0.7, abs=1e-9)


def test_deformation_preserves_length():
    for theta in (-1.2, 0.0, 0.4, 2.0):
        d = deform(BENT, grasp_index=2, pivot_index=3, theta=theta, k=0.8, step=0.034)
        moved = np.vstack([d.moved, BENT[3:4]])
        assert polyline_length(moved) == pytest.approx(d.l_grasp + d.l_tail, rel=1e-9)


def _horizontal():
    return state_from_polylines({0: np.array([[400.0, 240.0], [0.0, 240.0]])}, {0: "red"}, lambda a, b, p: a)


def test_identity_action_keeps_the_cable():
    state = _horizontal()
    action = Action(cable_id=0, grasp_node_id=10, pivot_angle=0.0)
    after = predict(state, action, CFG)
    before, moved = state.graph(0), after.graph(0)
    assert count_crossings(after) == 0
    assert crossings_eliminated(state, action, CFG) == 0
    assert np.abs(moved.positions()[:, 1] - 240.0).max() < 1e-6
    assert moved.free.pos_px == pytest.approx(before.free.pos_px, abs=1e-6)
    assert moved.fixed == before.fixed


def test_prediction_keeps_pivot_length_and_other_cables(parallel_state):
    action = Action(cable_id=0, grasp_node_id=5, pivot_angle=0.5)
    before = parallel_state.graph(0)
    c = pivot_node(before)
    after = predict(parallel_state, action, CFG)
    assert after.graph(1) == parallel_state.graph(1)
    moved = after.graph(0)
    assert moved.nodes[moved.index_of(c.node_id)].pos_px == c.pos_px
    assert polyline_length(moved.positions()) == pytest.approx(polyline_length(before.positions()), rel=1e-6)
    assert len(moved.nodes) > 3


def test_swinging_the_over_cable_clear_eliminates_the_crossing(x_state):
    action = Action(cable_id=0, grasp_node_id=3, pivot_angle=0.62)
    assert crossings_eliminated(x_state, action, CFG) == 1
    assert count_crossings(predict(x_state, action, CFG)) == 0


def test_sweeping_across_two_cables_adds_two_crossings():
    lines = {
        0: np.array([[400.0, 100.0], [0.0, 100.0]]),
        1: np.array([[150.0, 460.0], [150.0, 150.0]]),
        2: np.array([[250.0, 460.0], [250.0, 150.0]]),
    }
    state = state_from_polylines(lines, {0: "red", 1: "blue", 2: "green"}, lambda a, b, p: a)
    action = Action(cable_id=0, grasp_node_id=1, pivot_angle=-0.6)
    assert crossings_eliminated(state, action, CFG) == -2
    after = predict(state, action, CFG)
    for record in after.crossing_registry.values():
        assert record.over == 0


def test_invalid_actions_are_rejected(x_state):
    with pytest.raises(ThetaOutOfBoundsError):
        predict(x_state, Action(cable_id=0, grasp_node_id=3, pivot_angle=3.0), CFG)
    fixed_id = x_state.graph(0).fixed.node_id
    with pytest.raises(InvalidGraspError, match="invalid grasp node"):
        predict(x_state, Action(cable_id=0, grasp_node_id=fixed_id, pivot_angle=0.1), CFG)
    with pytest.raises(InvalidGraspError):
        predict(x_state, Action(cable_id=7, grasp_node_id=3, pivot_angle=0.1), CFG)


def test_action_geometry_lift_height(x_state):
    geometry = action_geometry(x_state, Action(cable_id=0, grasp_node_id=20, pivot_angle=0.62), CFG)
    c, g, p = (np.asarray(v) for v in (geometry.pivot_world, geometry.grasp_world, geometry.place_world))
    assert np.linalg.norm(p - c) == pytest.approx(geometry.l_grasp, abs=1e-9)
    # a straight cable has no slack between pivot and grasp
    assert np.linalg.norm(g - c) == pytest.approx(geometry.l_grasp, abs=1e-9)
    assert geometry.lift_height == pytest.approx(0.0, abs=1e-6)


def test_curved_grasp_segment_lifts_out_its_slack():
    angles = np.linspace(0.0, math.pi, 60)
    arc = np.column_stack([250.0 + 150.0 * np.cos(angles), 240.0 - 150.0 * np.sin(angles)])
    state = state_from_polylines({0: arc}, {0: "red"}, lambda a, b, p: a)
    geometry = action_geometry(state, Action(cable_id=0, grasp_node_id=3, pivot_angle=0.4), CFG)
    c, g = np.asarray(geometry.pivot_world), np.asarray(geometry.grasp_world)
    chord = float(np.linalg.norm(g - c))
    assert chord < geometry.l_grasp
    assert geometry.taut
    assert geometry.lift_height > 0.0
    assert geometry.lift_height ** 2 + chord ** 2 == pytest.approx(geometry.l_grasp ** 2, rel=1e-9)


def _random_cable(rng: np.random.Generator) -> np.ndarray:
    n = int(rng.integers(6, 26))
    headings = np.cumsum(rng.normal(0.0, 0.6, size=n - 1))
    lengths = rng.uniform(0.01, 0.05, size=n - 1)
    steps = np.column_stack([np.cos(headings), np.sin(headings)]) * lengths[:, None]
    return np.vstack([np.zeros((1, 2)), np.cumsum(steps, axis=0)]) + rng.uniform(0.0, 1.0, size=2)


def _off_line(points: np.ndarray, origin: np.ndarray, toward: np.ndarray) -> float:
    unit = (toward - origin) / np.linalg.norm(toward - origin)
    rel = points - origin
    return float(np.abs(rel[:, 0] * unit[1] - rel[:, 1] * unit[0]).max())


@pytest.mark.slow
def test_deform_properties_on_random_cables():
    rng = np.random.default_rng(2024)
    seen = set()
    for case in range(1000):
        points = _random_cable(rng)
        n = len(points)
        g = int(rng.integers(1, n - 2))
        c = int(rng.integers(g + 1, n - 1))
        theta = float(rng.uniform(CFG.theta_min, CFG.theta_max))
        k = float(rng.uniform(0.2, 3.0))
        d = deform(points, g, c, theta, k, CFG.resample_step)
        pivot = points[c]

        assert d.l_grasp == pytest.approx(polyline_length(points[g:c + 1]), abs=1e-12), case
        assert d.l_tail == pytest.approx(polyline_length(points[:g + 1]), abs=1e-12), case
        assert np.linalg.norm(d.place - pivot) == pytest.approx(d.l_grasp, abs=1e-9), case
        assert polyline_length(np.vstack([d.moved, pivot])) == pytest.approx(d.l_grasp + d.l_tail, abs=1e-6), case
        assert (d.branch == "straight") == (d.l_tail < k * d.l_grasp), case
        seen.add(d.branch)

        assert _off_line(d.moved[d.place_index:], pivot, d.place) <= 1e-9, case
        if d.branch == "straight":
            assert _off_line(d.moved, pivot, d.place) <= 1e-9, case
        else:
            assert _off_line(d.moved[: d.place_index + 1], d.place, points[0]) <= 1e-9, case
    assert seen == {"straight", "bent"}
