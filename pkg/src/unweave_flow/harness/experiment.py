"""Batch runner: seeded episodes over a grid of scenarios, summarised with pandas."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import ClassVar

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from unweave_flow.harness.episode import EpisodeLog, EpisodeRequest, EpisodeStatus, run_episode
from unweave_flow.perception.perception import PerceptionConfig
from unweave_flow.planner.planner import PlannerConfig
from unweave_flow.settings import YamlConfig
from unweave_flow.simworld.generator import GeneratorConfig, ScenarioSpec, Stiffness
from unweave_flow.simworld.physics import PhysicsConfig

logger = logging.getLogger(__name__)

COLUMNS = [
    "n_cables",
    "n_crossings",
    "cable_type",
    "trials",
    "success_rate",
    "mean_planning_time",
    "mean_perception_time",
    "perception_failure_rate",
    "minor_misclassification_rate",
    "deadlocks",
    "budget_exceeded",
    "mean_actions",
]


class ExperimentGrid(YamlConfig):
    default_path: ClassVar[Path] = Path(__file__).parent / "config" / "grid.yaml"

    model_config = ConfigDict(frozen=True)

    configurations: tuple[tuple[int, int], ...] = ((2, 2), (2, 3), (3, 3), (3, 4), (3, 5))
    trials: int = Field(default=10, ge=1)
    base_seed: int = 0
    stiffness: Stiffness = "shoelace"
    workers: int = Field(default=1, ge=1)

    @field_validator("configurations")
    @classmethod
    def _non_empty(cls, value):
        if not value:
            raise ValueError("experiment grid is empty")
        return value

    def specs(self) -> list[ScenarioSpec]:
        # The same seeds are reused on every row so ablations compare like with like.
        return [
            ScenarioSpec(n_cables=n, n_crossings=x, seed=self.base_seed + t, stiffness=self.stiffness)
            for n, x in self.configurations
            for t in range(self.trials)
        ]


class ReportRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_cables: int
    n_crossings: int
    cable_type: str
    trials: int = Field(gt=0)
    success_rate: float = Field(ge=0, le=100)
    mean_planning_time: float
    mean_perception_time: float
    perception_failure_rate: float = Field(ge=0, le=100)
    minor_misclassification_rate: float = Field(ge=0, le=100)
    deadlocks: int
    budget_exceeded: int
    mean_actions: float


class ExperimentReport(BaseModel):
    rows: list[ReportRow]
    allow_redistribution: bool = True

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.rows], columns=COLUMNS)

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format="%.4f")
        return path

    def table(self) -> str:
        frame = self.to_frame().rename(
            columns={
                "n_cables": "cables",
                "n_crossings": "crossings",
                "success_rate": "success %",
                "mean_planning_time": "plan s/action",
                "mean_perception_time": "perceive s",
                "perception_failure_rate": "perc. fail %",
                "minor_misclassification_rate": "minor %",
            }
        )
        return frame.to_string(index=False, float_format=lambda v: f"{v:.3f}")


def _rate(part: int, whole: int) -> float:
    return 100.0 * part / whole if whole else 0.0


def summarize(logs: list[EpisodeLog], n_cables: int, n_crossings: int, cable_type: str) -> ReportRow:
    records = [r for log in logs for r in log.records]
    perceived = [r for r in records if r.perception_time > 0.0]
    failures = sum(1 for r in records if r.note.startswith("perception failed"))
    planning = pd.Series([t for log in logs for t in log.planning_times], dtype=float)
    perception = pd.Series([r.perception_time for r in perceived], dtype=float)
    statuses = pd.Series([log.status.value for log in logs], dtype=object)
    return ReportRow(
        n_cables=n_cables,
        n_crossings=n_crossings,
        cable_type=cable_type,
        trials=len(logs),
        success_rate=_rate(int((statuses == EpisodeStatus.SUCCESS.value).sum()), len(logs)),
        mean_planning_time=float(planning.mean()) if len(planning) else 0.0,
        mean_perception_time=float(perception.mean()) if len(perception) else 0.0,
        perception_failure_rate=_rate(failures, len(perceived)),
        minor_misclassification_rate=_rate(sum(1 for r in perceived if r.misclassified), len(perceived)),
        deadlocks=int((statuses == EpisodeStatus.DEADLOCK.value).sum()),
        budget_exceeded=int((statuses == EpisodeStatus.ITERATION_BUDGET_EXCEEDED.value).sum()),
        mean_actions=float(pd.Series([log.iterations for log in logs], dtype=float).mean()),
    )


def run_experiment(
    grid: ExperimentGrid,
    planner: PlannerConfig | None = None,
    perception: PerceptionConfig | None = None,
    physics: PhysicsConfig | None = None,
    allow_redistribution: bool = True,
    oracle_perception: bool = False,
    log_dir: str | Path | None = None,
) -> ExperimentReport:
    """Run every (configuration, trial) episode and aggregate one row per configuration."""
    planner = planner or PlannerConfig.default()
    perception = perception or PerceptionConfig.default()
    generator = GeneratorConfig.default()
    specs = grid.specs()
    requests = [
        EpisodeRequest(
            spec=spec,
            physics=physics,
            planner=planner,
            perception=perception,
            generator=generator,
            allow_redistribution=allow_redistribution,
            oracle_perception=oracle_perception,
            log_path=Path(log_dir) / f"episode_{spec.n_cables}_{spec.n_crossings}_{spec.seed}.yaml" if log_dir else None,
        )
        for spec in specs
    ]
    logger.info("> running %d episodes on %d worker(s)", len(requests), grid.workers)
    if grid.workers > 1:
        with ThreadPoolExecutor(max_workers=grid.workers) as pool:
            logs = list(pool.map(run_episode, requests))
    else:
        logs = [run_episode(r) for r in requests]

    cable_type = "custom" if physics is not None else grid.stiffness
    rows = []
    for k, (n, x) in enumerate(grid.configurations):
        chunk = logs[k * grid.trials: (k + 1) * grid.trials]
        rows.append(summarize(chunk, n, x, cable_type))
    return ExperimentReport(rows=rows, allow_redistribution=allow_redistribution)
