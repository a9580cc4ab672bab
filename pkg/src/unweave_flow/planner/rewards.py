"""Elimination and redistribution rewards. Costs are their negatives.

Node distances are in pixels (nodes store pixel locations), lengths in meters,
angles in radians, and the spread term uses image y normalized by height.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Sequence

import numpy as np

from unweave_flow.graph.cable_graph import CableState, Node, count_crossings
from unweave_flow.graph.geometry import angle_between, polyline_length

if TYPE_CHECKING:
    from unweave_flow.planner.planner import PlannerConfig


def distance_term(moved: np.ndarray, others: Sequence[np.ndarray]) -> float:
    """Sum over other graphs of the mean squared node-to-node distance."""
    total = 0.0
    for h in others:
        diff = moved[:, None, :] - h[None, :, :]
        total += float(np.einsum("ijk,ijk->", diff, diff)) / (len(moved) * len(h))
    return total


def curvature_term(pivot: np.ndarray, successor: np.ndarray, place: np.ndarray) -> float:
    """Angle at the pivot between the unmoved side and the placed segment; pi is straight."""
    return angle_between(np.asarray(successor) - np.asarray(pivot), np.asarray(place) - np.asarray(pivot))


def ratio_term(l_grasp: float, l_tail: float, eps: float) -> float:
    return l_grasp / max(l_tail, eps)


def spread_term(y_px: np.ndarray, height: float) -> float:
    """Population standard deviation of normalized image y."""
    return float(np.std(np.asarray(y_px, dtype=float) / height))


def elimination_value(
    dist: float, curv: float, ratio: float, m: int, cfg: "PlannerConfig"
) -> float:
    return cfg.w_dist * dist + cfg.w_curv * curv + cfg.w_cred * ratio + cfg.w_elim * m


def redistribution_value(
    dist: float, curv: float, ratio: float, spread: float, cfg: "PlannerConfig"
) -> float:
    return cfg.w_dist * dist + cfg.w_curv * curv + cfg.w_cred * ratio - cfg.w_std * spread


def _terms(S: CableState, S_next: CableState, c: Node, g: Node, p: Sequence[float], cfg: "PlannerConfig"):
    graph, g_idx = S.find_node(g.node_id)
    c_idx = graph.index_of(c.node_id)
    new_graph = S_next.graph(graph.cable_id)
    moved = new_graph.positions()
    others = [h.positions() for h in S.others(graph.cable_id)]
    succ = new_graph.nodes[new_graph.index_of(c.node_id) + 1].pos_px

    frame = cfg.transition.frame
    world = frame.to_world(graph.positions())
    l_grasp = polyline_length(world[g_idx:c_idx + 1])
    l_tail = polyline_length(world[:g_idx + 1])

    dist = distance_term(moved, others)
    curv = curvature_term(np.asarray(c.pos_px), np.asarray(succ), np.asarray(p, dtype=float))
    ratio = ratio_term(l_grasp, l_tail, cfg.transition.resample_step)
    return dist, curv, ratio, moved


def reward_elimination(
    S: CableState, S_next: CableState, c: Node, g: Node, p: Sequence[float], cfg: "PlannerConfig"
) -> float:
    """Reward of an elimination action; ``p`` is the place point in pixels."""
    dist, curv, ratio, _ = _terms(S, S_next, c, g, p, cfg)
    m = count_crossings(S) - count_crossings(S_next)
    return elimination_value(dist, curv, ratio, m, cfg)


def reward_redistribution(S: CableState, S_next: CableState, c: Node, g: Node, cfg: "PlannerConfig") -> float:
    # The grasp node keeps its id and lands on the place point.
    p = S_next.graph(S.find_node(g.node_id)[0].cable_id).nodes
    place = next(node.pos_px for node in p if node.node_id == g.node_id)
    dist, curv, ratio, moved = _terms(S, S_next, c, g, place, cfg)
    spread = spread_term(moved[:, 1], cfg.transition.frame.height)
    return redistribution_value(dist, curv, ratio, spread, cfg)
