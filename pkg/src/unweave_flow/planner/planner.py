"""Greedy two-primitive action planner.

``enumerate_subspaces`` scans a theta grid for every graspable node and groups
consecutive valid samples with the same predicted crossing change. The
primitive is chosen from those groups, then ``optimize_action`` picks the
best grid sample in the primitive's domain and refines it locally.
"""

from __future__ import annotations

import logging
import math
from enum import Enum
from pathlib import Path
from typing import Callable, ClassVar, NamedTuple, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from unweave_flow.errors import DeadlockError, DegenerateOverlapError, NoCandidateActionsError, TransitionError
from unweave_flow.graph.cable_graph import (
    SQRT2,
    CableState,
    NodeKind,
    count_crossings,
    separate_opposite_crossings,
)
from unweave_flow.graph.geometry import angle_between, pythagorean_height, segment_intersections
from unweave_flow.planner import rewards
from unweave_flow.planner.workspace import Workspace
from unweave_flow.settings import YamlConfig
from unweave_flow.transition.transition import (
    Action,
    ActionGeometry,
    Motion,
    TransitionConfig,
    acted_drafts,
    action_geometry,
    grasp_candidates,
    motion,
    predict,
)

logger = logging.getLogger(__name__)


class PlannerConfig(YamlConfig):
    default_path: ClassVar[Path] = Path(__file__).parent / "config" / "planner.yaml"

    model_config = ConfigDict(frozen=True)

    d_f: float = Field(default=0.02, ge=0, description="fingerpad clearance, meters")
    d_w_px: float = Field(default=35.0, gt=0)
    theta_grid: float = Field(default=math.radians(2.0), gt=0)
    w_dist: float = Field(default=1.0, ge=0)
    w_curv: float = Field(default=100.0, ge=0)
    w_cred: float = Field(default=100.0, ge=0)
    w_std: float = Field(default=3000.0, ge=0)
    w_elim: float = Field(default=30.0, ge=0)
    refine_iters: int = Field(default=20, ge=0)
    refine_step: float = Field(default=math.radians(1.0), gt=0, description="length of the first ascent step")
    gradient_delta: float = Field(default=1e-3, gt=0, description="central-difference half width, radians")
    refine_tol: float = Field(default=1e-9, gt=0, description="smallest ascent step, radians")
    reject_self_crossing: bool = True
    workspace: Workspace = Field(default_factory=Workspace)
    transition: TransitionConfig = Field(default_factory=TransitionConfig.default)

    @model_validator(mode="after")
    def _grid_fits_range(self) -> "PlannerConfig":
        if self.theta_grid > self.transition.theta_max - self.transition.theta_min:
            raise ValueError("theta_grid is wider than the pivot range")
        return self

    def scaled(self, factor: float) -> "PlannerConfig":
        """Copy with every reward weight multiplied by ``factor``."""
        return self.model_copy(
            update={w: getattr(self, w) * factor for w in ("w_dist", "w_curv", "w_cred", "w_std", "w_elim")}
        )


class PrimitiveChoice(str, Enum):
    ELIMINATION = "elimination"
    REDISTRIBUTION = "redistribution"
    DONE = "done"


class ActionSubspace(BaseModel):
    model_config = ConfigDict(frozen=True)

    cable_id: int
    grasp_node_id: int
    grasp_index: int
    theta_interval: tuple[float, float]
    m: int
    thetas: tuple[float, ...]


class Validity(NamedTuple):
    ok: bool
    reason: str


class Evaluation(NamedTuple):
    action: Action
    validity: Validity
    m: int
    motion: Motion | None


class PlanResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    primitive: PrimitiveChoice
    action: Action
    predicted_state: CableState
    reward: float
    predicted_m: int
    geometry: ActionGeometry
    subspace: ActionSubspace
    samples_evaluated: int


RewardFn = Callable[[Action, Evaluation], float]

OK = Validity(True, "ok")
FOLD_BACK_ANGLE = math.radians(5.0)


def theta_samples(cfg: PlannerConfig) -> np.ndarray:
    lo, hi = cfg.transition.theta_min, cfg.transition.theta_max
    n = max(1, int(round((hi - lo) / cfg.theta_grid)))
    return np.linspace(lo, hi, n + 1)


class Scene:
    """Per-state arrays shared by every candidate evaluation."""

    def __init__(self, state: CableState, cfg: PlannerConfig):
        self.state = state
        self.cfg = cfg
        self.count = count_crossings(state)
        self.positions = {g.cable_id: g.positions() for g in state.graphs}
        self.others: dict[int, list[np.ndarray]] = {}
        self.special: dict[int, np.ndarray] = {}
        for g in state.graphs:
            self.others[g.cable_id] = [self.positions[h.cable_id] for h in state.others(g.cable_id)]
            own = {
                cid for cid, rec in state.crossing_registry.items() if g.cable_id in (rec.over, rec.under)
            }
            special = [
                node.pos_px
                for h in state.others(g.cable_id)
                for node in h.nodes
                if node.kind is NodeKind.ENDPOINT or (node.is_crossing and node.crossing_id not in own)
            ]
            self.special[g.cable_id] = np.array(special, dtype=float).reshape(-1, 2)

    def clearance_ok(self, cable_id: int, grasp_index: int) -> bool:
        others = self.others[cable_id]
        if not others:
            return True
        g = self.positions[cable_id][grasp_index]
        pts = np.vstack(others)
        nearest = float(np.min(np.linalg.norm(pts - g, axis=1))) * self.cfg.transition.frame.scale
        return nearest >= self.cfg.d_f

    def check_motion(self, m: Motion) -> Validity:
        cfg = self.cfg
        frame = cfg.transition.frame
        moved = m.moved_px[:-1]
        world = frame.to_world(moved)
        inside = cfg.workspace.contains(world)
        if not inside[1:].all() and inside[0]:
            return Validity(False, "broken in the middle")

        checked = moved
        if m.new_crossings:
            checked = np.vstack([moved, np.array([x.point for x in m.new_crossings])])
        special = self.special[m.action.cable_id]
        if len(special):
            diff = checked[:, None, :] - special[None, :, :]
            if float(np.min(np.einsum("ijk,ijk->ij", diff, diff))) < (SQRT2 * cfg.d_w_px) ** 2:
                return Validity(False, "too close to endpoint or crossing")

        if cfg.reject_self_crossing and self._self_crossing(m):
            return Validity(False, "self-crossing")
        return OK

    def _self_crossing(self, m: Motion) -> bool:
        kept = self.positions[m.action.cable_id][m.pivot_index:]
        last = len(m.moved_px) - 2
        try:
            hits = segment_intersections(m.moved_px, kept)
        except DegenerateOverlapError:
            return True
        for seg_m, t_m, seg_k, t_k, _ in hits:
            # The moved part and the kept part share the pivot vertex.
            if seg_m == last and seg_k == 0 and t_m >= 1.0 - 1e-9 and t_k <= 1e-9:
                continue
            return True
        d = m.deformation
        if d.branch == "bent":
            # A tail laid back along the grasp segment folds the cable onto itself.
            pivot = self.cfg.transition.frame.to_world(m.moved_px[-1])
            if angle_between(d.moved[0] - d.place, pivot - d.place) < FOLD_BACK_ANGLE:
                return True
        return False

    def evaluate(self, action: Action) -> Evaluation:
        try:
            m = motion(self.state, action, self.cfg.transition)
        except DegenerateOverlapError:
            return Evaluation(action, Validity(False, "degenerate overlap"), 0, None)
        except TransitionError as exc:
            return Evaluation(action, Validity(False, str(exc)), 0, None)
        return Evaluation(action, self.check_motion(m), self.count - m.predicted_count, m)

    def new_graph_positions(self, m: Motion) -> np.ndarray:
        return np.array([d.pos for d in separate_opposite_crossings(acted_drafts(m))], dtype=float)

    def reward(self, ev: Evaluation, primitive: PrimitiveChoice) -> float:
        m = ev.motion
        cfg = self.cfg
        cable = m.action.cable_id
        pos = self.positions[cable]
        moved = self.new_graph_positions(m)
        place = m.moved_px[m.deformation.place_index]
        dist = rewards.distance_term(moved, self.others[cable])
        curv = rewards.curvature_term(pos[m.pivot_index], pos[m.pivot_index + 1], place)
        ratio = rewards.ratio_term(m.deformation.l_grasp, m.deformation.l_tail, cfg.transition.resample_step)
        if primitive is PrimitiveChoice.ELIMINATION:
            return rewards.elimination_value(dist, curv, ratio, ev.m, cfg)
        spread = rewards.spread_term(moved[:, 1], cfg.transition.frame.height)
        return rewards.redistribution_value(dist, curv, ratio, spread, cfg)


def is_valid(state: CableState, action: Action, cfg: PlannerConfig) -> Validity:
    scene = Scene(state, cfg)
    try:
        graph = state.graph(action.cable_id)
        g = graph.index_of(action.grasp_node_id)
    except KeyError as exc:
        return Validity(False, f"invalid grasp node: {exc}")
    if not scene.clearance_ok(action.cable_id, g):
        return Validity(False, "clearance")
    return scene.evaluate(action).validity


def _runs(cable_id: int, grasp_node_id: int, grasp_index: int, samples: list[Evaluation]) -> list[ActionSubspace]:
    out: list[ActionSubspace] = []
    run: list[Evaluation] = []

    def close() -> None:
        if run:
            thetas = tuple(e.action.pivot_angle for e in run)
            out.append(
                ActionSubspace(
                    cable_id=cable_id,
                    grasp_node_id=grasp_node_id,
                    grasp_index=grasp_index,
                    theta_interval=(thetas[0], thetas[-1]),
                    m=run[0].m,
                    thetas=thetas,
                )
            )
            run.clear()

    for ev in samples:
        if not ev.validity.ok:
            close()
            continue
        if run and run[-1].m != ev.m:
            close()
        run.append(ev)
    close()
    return out


def enumerate_subspaces(state: CableState, cfg: PlannerConfig, scene: Scene | None = None) -> list[ActionSubspace]:
    scene = scene or Scene(state, cfg)
    grid = theta_samples(cfg)
    found: list[ActionSubspace] = []
    for graph in sorted(state.graphs, key=lambda g: g.cable_id):
        for gi in grasp_candidates(graph):
            if not scene.clearance_ok(graph.cable_id, gi):
                continue
            node_id = graph.nodes[gi].node_id
            samples = [scene.evaluate(Action(cable_id=graph.cable_id, grasp_node_id=node_id, pivot_angle=float(t))) for t in grid]
            found.extend(_runs(graph.cable_id, node_id, gi, samples))
    logger.debug("enumerate_subspaces: %d subspaces", len(found))
    return found


def select_primitive(A_sub: Sequence[ActionSubspace], state: CableState) -> PrimitiveChoice:
    if count_crossings(state) == 0:
        return PrimitiveChoice.DONE
    if any(s.m > 0 for s in A_sub):
        return PrimitiveChoice.ELIMINATION
    if not A_sub:
        raise DeadlockError("deadlock: no valid action subspace")
    return PrimitiveChoice.REDISTRIBUTION


def in_domain(subspace: ActionSubspace, primitive: PrimitiveChoice) -> bool:
    if primitive is PrimitiveChoice.ELIMINATION:
        return subspace.m > 0
    if primitive is PrimitiveChoice.REDISTRIBUTION:
        return subspace.m == 0
    return False


class _Scored(NamedTuple):
    reward: float
    theta: float
    subspace: ActionSubspace
    evaluation: Evaluation

    def rank(self) -> tuple:
        return (-self.reward, abs(self.theta), self.subspace.grasp_index, self.subspace.cable_id)


def optimize_action(
    A_sub: Sequence[ActionSubspace],
    primitive: PrimitiveChoice,
    S: CableState,
    cfg: PlannerConfig,
    reward_fn: RewardFn | None = None,
    scene: Scene | None = None,
) -> PlanResult:
    domain = sorted(
        (s for s in A_sub if in_domain(s, primitive)),
        key=lambda s: (s.cable_id, s.grasp_index, s.theta_interval[0]),
    )
    if not domain:
        raise NoCandidateActionsError(f"no candidate actions for {primitive.value}")
    scene = scene or Scene(S, cfg)

    def score(sub: ActionSubspace, theta: float) -> _Scored | None:
        action = Action(cable_id=sub.cable_id, grasp_node_id=sub.grasp_node_id, pivot_angle=float(theta))
        ev = scene.evaluate(action)
        if not ev.validity.ok or ev.m != sub.m:
            return None
        r = reward_fn(action, ev) if reward_fn is not None else scene.reward(ev, primitive)
        return _Scored(r, float(theta), sub, ev)

    evaluated = 0
    best: _Scored | None = None
    per_subspace: dict[int, list[_Scored]] = {}
    for k, sub in enumerate(domain):
        for theta in sub.thetas:
            evaluated += 1
            s = score(sub, theta)
            if s is None:
                continue
            per_subspace.setdefault(k, []).append(s)
            if best is None or s.rank() < best.rank():
                best = s
    if best is None:
        raise NoCandidateActionsError(f"no valid sample in the {primitive.value} domain")

    sub = best.subspace
    k = domain.index(sub)
    samples = per_subspace[k]
    tol = 1e-12 * max(1.0, abs(best.reward))
    chosen = best
    if len(samples) == len(sub.thetas) and all(abs(s.reward - best.reward) <= tol for s in samples):
        mid = score(sub, 0.5 * (sub.theta_interval[0] + sub.theta_interval[1]))
        evaluated += 1
        if mid is not None and mid.reward >= best.reward - tol:
            chosen = mid
    else:
        chosen, extra = _refine(best, score, cfg)
        evaluated += extra

    action = chosen.evaluation.action
    predicted = predict(S, action, cfg.transition)
    logger.debug(
        "optimize_action: %s cable %d node %d theta %.4f reward %.3f (%d samples)",
        primitive.value, action.cable_id, action.grasp_node_id, action.pivot_angle, chosen.reward, evaluated,
    )
    return PlanResult(
        primitive=primitive,
        action=action,
        predicted_state=predicted,
        reward=chosen.reward,
        predicted_m=chosen.evaluation.m,
        geometry=action_geometry(S, action, cfg.transition),
        subspace=sub,
        samples_evaluated=evaluated,
    )


def _refine(
    start: _Scored, score: Callable[[ActionSubspace, float], _Scored | None], cfg: PlannerConfig
) -> tuple[_Scored, int]:
    """Numerical gradient ascent from the best grid sample, clamped to its subspace.

    Each step is the learning rate times the central difference of the reward.
    The learning rate starts so that the first step is ``refine_step`` long,
    grows by half after an accepted step and halves after a rejected one; a
    step is accepted only when it improves the reward.
    """
    sub = start.subspace
    lo, hi = sub.theta_interval
    h = cfg.gradient_delta
    current = start
    evaluated = 0
    rate: float | None = None

    def value(theta: float) -> float:
        s = score(sub, theta)
        return s.reward if s is not None else -math.inf

    def gradient(theta: float) -> float:
        a, b = max(theta - h, lo), min(theta + h, hi)
        fa, fb = value(a), value(b)
        # One-sided where the neighbour is invalid.
        if fa == -math.inf:
            a, fa = theta, current.reward
        if fb == -math.inf:
            b, fb = theta, current.reward
        return (fb - fa) / (b - a) if b > a else 0.0

    for _ in range(cfg.refine_iters):
        grad = gradient(current.theta)
        evaluated += 2
        if grad == 0.0 or not math.isfinite(grad):
            break
        if rate is None:
            rate = cfg.refine_step / abs(grad)
        improved = False
        while rate * abs(grad) >= cfg.refine_tol:
            theta = min(max(current.theta + rate * grad, lo), hi)
            if theta == current.theta:
                break
            candidate = score(sub, theta)
            evaluated += 1
            if candidate is not None and candidate.reward > current.reward:
                current = candidate
                rate *= 1.5
                improved = True
                break
            rate *= 0.5
        if not improved:
            break
    return current, evaluated


class LiftHeight(NamedTuple):
    height: float
    taut: bool


def lift_height(c, g, p, scale: float) -> LiftHeight:
    """Height from pixel positions: sqrt(|cg|^2 - |cp|^2) after scaling to meters."""
    cg = float(np.linalg.norm(np.subtract(g, c, dtype=float))) * scale
    cp = float(np.linalg.norm(np.subtract(p, c, dtype=float))) * scale
    h, taut = pythagorean_height(cg, cp)
    return LiftHeight(h, taut)


def cost_landscape(
    state: CableState,
    A_sub: Sequence[ActionSubspace],
    primitive: PrimitiveChoice,
    cfg: PlannerConfig,
    scene: Scene | None = None,
) -> dict[int, float]:
    """Best in-domain cost (negative reward) per graspable node id."""
    scene = scene or Scene(state, cfg)
    best: dict[int, float] = {}
    for sub in A_sub:
        if not in_domain(sub, primitive):
            continue
        for theta in sub.thetas:
            ev = scene.evaluate(Action(cable_id=sub.cable_id, grasp_node_id=sub.grasp_node_id, pivot_angle=float(theta)))
            if not ev.validity.ok or ev.m != sub.m:
                continue
            cost = -scene.reward(ev, primitive)
            best[sub.grasp_node_id] = min(cost, best.get(sub.grasp_node_id, math.inf))
    return best


def plan(state: CableState, cfg: PlannerConfig, allow_redistribution: bool = True) -> tuple[PrimitiveChoice, PlanResult | None, list[ActionSubspace]]:
    """Enumerate, select and optimize in one call; raises DeadlockError when stuck."""
    scene = Scene(state, cfg)
    A_sub = enumerate_subspaces(state, cfg, scene)
    primitive = select_primitive(A_sub, state)
    if primitive is PrimitiveChoice.DONE:
        return primitive, None, A_sub
    if primitive is PrimitiveChoice.REDISTRIBUTION and not allow_redistribution:
        raise DeadlockError("deadlock: no elimination action and redistribution is disabled")
    try:
        result = optimize_action(A_sub, primitive, state, cfg, scene=scene)
    except NoCandidateActionsError as exc:
        raise DeadlockError(f"deadlock: {exc}") from exc
    return primitive, result, A_sub
