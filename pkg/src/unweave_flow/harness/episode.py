"""Closed-loop unweaving episode as a crewAI Flow.

prepare_world -> unweave_loop -> finalize. Every iteration renders the world,
perceives a CableState, plans one action and executes it in the simulator,
until no crossing is detected, the planner is stuck, perception fails, or the
iteration budget runs out.
"""

from __future__ import annotations

import logging
import math
import time
import uuid
from enum import Enum
from pathlib import Path

import numpy as np
import yaml
from crewai.flow.flow import Flow, listen, start
from pydantic import BaseModel, ConfigDict, Field

from unweave_flow.errors import (
    DeadlockError,
    DegenerateOverlapError,
    GenerationBudgetExceededError,
    PerceptionError,
    StateInvariantError,
)
from unweave_flow.graph.cable_graph import CableState, NodeKind, count_crossings
from unweave_flow.graph.serialization import serialize_state
from unweave_flow.perception.perception import PerceptionConfig, build_state
from unweave_flow.planner.planner import PlannerConfig, PrimitiveChoice, plan
from unweave_flow.simworld.generator import GeneratorConfig, ScenarioSpec, generate_world
from unweave_flow.simworld.physics import PhysicsConfig, execute
from unweave_flow.simworld.render import render
from unweave_flow.simworld.world import World, state_from_world
from unweave_flow.transition.transition import Action, ActionGeometry

logger = logging.getLogger(__name__)


class EpisodeStatus(str, Enum):
    SUCCESS = "Success"
    DEADLOCK = "Deadlock"
    PERCEPTION_FAILURE = "PerceptionFailure"
    ITERATION_BUDGET_EXCEEDED = "IterationBudgetExceeded"
    GENERATION_FAILURE = "GenerationFailure"
    INVALID_WORLD = "InvalidWorld"
    ABORTED = "Aborted"
    RUNNING = "Running"


class IterationRecord(BaseModel):
    iteration: int
    state: str = Field(default="", description="perceived state document")
    true_crossings: int
    perceived_crossings: int | None = None
    primitive: PrimitiveChoice | None = None
    action: Action | None = None
    geometry: ActionGeometry | None = None
    reward: float | None = None
    predicted_m: int | None = None
    realized_dm: int | None = None
    planning_time: float = 0.0
    perception_time: float = 0.0
    misclassified: bool = False
    note: str = ""


class EpisodeLog(BaseModel):
    episode_id: str = Field(default_factory=lambda: str(uuid.uuid4()))
    spec: ScenarioSpec | None = None
    stiffness: str = "ideal"
    status: EpisodeStatus = EpisodeStatus.RUNNING
    budget: int = 0
    initial_crossings: int = 0
    final_crossings: int = 0
    iterations: int = Field(default=0, description="executed actions")
    records: list[IterationRecord] = Field(default_factory=list)
    # Initial world, then the world after every executed action.
    worlds: list[World] = Field(default_factory=list)
    message: str = ""

    @property
    def planning_times(self) -> list[float]:
        return [r.planning_time for r in self.records if r.action is not None]

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(self.model_dump(mode="json"), fh, sort_keys=False, allow_unicode=True)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "EpisodeLog":
        with open(path, encoding="utf-8") as fh:
            return cls.model_validate(yaml.safe_load(fh))


class EpisodeRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    spec: ScenarioSpec = Field(default_factory=ScenarioSpec)
    world: World | None = Field(default=None, description="start from this world instead of generating one")
    physics: PhysicsConfig | None = None
    planner: PlannerConfig = Field(default_factory=PlannerConfig.default)
    perception: PerceptionConfig = Field(default_factory=PerceptionConfig.default)
    generator: GeneratorConfig = Field(default_factory=GeneratorConfig.default)
    budget: int | None = Field(default=None, ge=1)
    allow_redistribution: bool = True
    oracle_perception: bool = False
    log_path: Path | None = None


class UnweaveState(BaseModel):
    world: World | None = None
    physics: PhysicsConfig = Field(default_factory=PhysicsConfig)
    log: EpisodeLog = Field(default_factory=EpisodeLog)


def default_budget(initial_crossings: int) -> int:
    return 3 * initial_crossings + 5


def crossing_signature(state: CableState) -> dict[int, list[tuple[str, int]]]:
    """Per cable, the ordered crossing kinds with the partner cable."""
    partner = {}
    for cid, rec in state.crossing_registry.items():
        partner[(cid, rec.over)] = rec.under
        partner[(cid, rec.under)] = rec.over
    return {
        g.cable_id: [(n.kind.value, partner[(n.crossing_id, g.cable_id)]) for n in g.nodes if n.is_crossing]
        for g in state.graphs
    }


def states_agree(perceived: CableState, truth: CableState, tol_px: float) -> bool:
    """Same crossing structure on every cable with crossing positions within ``tol_px``."""
    if crossing_signature(perceived) != crossing_signature(truth):
        return False
    for g in perceived.graphs:
        t = truth.graph(g.cable_id)
        a = [n.pos_px for n in g.nodes if n.kind is not NodeKind.REGULAR]
        b = [n.pos_px for n in t.nodes if n.kind is not NodeKind.REGULAR]
        if any(math.dist(p, q) > tol_px for p, q in zip(a, b)):
            return False
    return True


class UnweaveFlow(Flow[UnweaveState]):
    """Perceive, plan and act until the cables are unwoven"""

    def __init__(self, request: EpisodeRequest | None = None, **kwargs):
        super().__init__(**kwargs)
        self.request = request or EpisodeRequest()

    @start()
    def prepare_world(self):
        """Generate (or adopt) the world and size the iteration budget"""
        req = self.request
        log = self.state.log
        log.spec = req.spec
        log.stiffness = "custom" if req.physics is not None else req.spec.stiffness
        self.state.physics = req.physics or PhysicsConfig.preset(req.spec.stiffness)
        if req.world is not None:
            world = req.world
        else:
            try:
                world = generate_world(req.spec, req.generator)
            except GenerationBudgetExceededError as exc:
                log.status = EpisodeStatus.GENERATION_FAILURE
                log.message = str(exc)
                logger.info("> episode %s: %s", log.episode_id[:8], exc)
                return self.state
        self.state.world = world
        log.worlds.append(world)
        log.initial_crossings = world.crossing_count()
        log.budget = req.budget or default_budget(log.initial_crossings)
        logger.info(
            "> episode %s: %d cables, %d crossings, budget %d",
            log.episode_id[:8], len(world.cables), log.initial_crossings, log.budget,
        )
        return self.state

    def _perceive(self, world: World, truth: CableState) -> CableState:
        if self.request.oracle_perception:
            return truth
        image = render(world).image
        return build_state(image, world.perception_config(self.request.perception))

    @listen(prepare_world)
    def unweave_loop(self, _):
        """Iterate perceive -> plan -> execute within the budget"""
        req = self.request
        log = self.state.log
        if self.state.world is None:
            return self.state
        world = self.state.world
        seed = req.spec.seed
        for it in range(log.budget + 1):
            true_count = world.crossing_count()
            record = IterationRecord(iteration=it, true_crossings=true_count)
            log.records.append(record)

            try:
                truth = state_from_world(world)
            except (KeyError, StateInvariantError, DegenerateOverlapError) as exc:
                record.note = f"ground truth unavailable: {exc}"
                log.status = EpisodeStatus.INVALID_WORLD
                log.message = f"ground truth unavailable: {exc}"
                logger.warning("> iteration %d: ground truth unavailable: %s", it, exc)
                break

            t0 = time.perf_counter()
            try:
                perceived = self._perceive(world, truth)
            except PerceptionError as exc:
                record.perception_time = time.perf_counter() - t0
                record.note = f"perception failed: {exc}"
                log.status = EpisodeStatus.PERCEPTION_FAILURE
                log.message = str(exc)
                logger.info("> iteration %d: perception failed: %s", it, exc)
                break
            record.perception_time = time.perf_counter() - t0
            record.state = serialize_state(perceived)
            record.perceived_crossings = count_crossings(perceived)
            record.misclassified = not req.oracle_perception and not states_agree(
                perceived, truth, req.perception.d_w / 2.0
            )

            t1 = time.perf_counter()
            try:
                primitive, result, _ = plan(perceived, req.planner, req.allow_redistribution)
            except DeadlockError as exc:
                record.planning_time = time.perf_counter() - t1
                record.note = str(exc)
                log.status = EpisodeStatus.DEADLOCK
                log.message = str(exc)
                logger.info("> iteration %d: %s", it, exc)
                break
            record.planning_time = time.perf_counter() - t1
            record.primitive = primitive

            if primitive is PrimitiveChoice.DONE:
                if true_count == 0:
                    log.status = EpisodeStatus.SUCCESS
                else:
                    log.status = EpisodeStatus.PERCEPTION_FAILURE
                    log.message = f"no crossing detected but {true_count} remain"
                logger.info("> iteration %d: no crossing detected (%d true)", it, true_count)
                break
            if it == log.budget:
                log.status = EpisodeStatus.ITERATION_BUDGET_EXCEEDED
                log.message = f"iteration budget of {log.budget} actions exhausted"
                logger.info("> %s", log.message)
                break

            record.action = result.action
            record.geometry = result.geometry
            record.reward = result.reward
            record.predicted_m = result.predicted_m
            world = execute(
                world,
                result.geometry,
                self.state.physics,
                req.planner.transition,
                np.random.default_rng([seed, it]),
            )
            record.realized_dm = true_count - world.crossing_count()
            log.worlds.append(world)
            log.iterations += 1
            logger.info(
                "> iteration %d: %s on cable %d node %d theta %.3f, predicted M %d, realized %d",
                it, primitive.value, result.action.cable_id, result.action.grasp_node_id,
                result.action.pivot_angle, result.predicted_m, record.realized_dm,
            )
        self.state.world = world
        return self.state

    @listen(unweave_loop)
    def finalize(self, _):
        """Close the log and write it out when asked to"""
        log = self.state.log
        if self.state.world is not None:
            log.final_crossings = self.state.world.crossing_count()
        if log.status is EpisodeStatus.SUCCESS and log.final_crossings != 0:
            log.status = EpisodeStatus.PERCEPTION_FAILURE
        if self.request.log_path is not None:
            log.save(self.request.log_path)
            logger.info("> episode log saved to %s", self.request.log_path)
        logger.info("> episode %s finished: %s after %d actions", log.episode_id[:8], log.status.value, log.iterations)
        return log


def run_episode(request: EpisodeRequest) -> EpisodeLog:
    """Run one closed-loop episode; failures end up in the log status, never raised."""
    flow = UnweaveFlow(request)
    try:
        flow.kickoff()
    except Exception as exc:  # noqa: BLE001
        log = flow.state.log
        if log.status is EpisodeStatus.RUNNING:
            log.status = EpisodeStatus.ABORTED
        log.message = f"{type(exc).__name__}: {exc}"
        logger.exception("episode %s aborted", log.episode_id[:8])
    return flow.state.log
