from unweave_flow.harness.episode import (
    EpisodeLog,
    EpisodeRequest,
    EpisodeStatus,
    IterationRecord,
    UnweaveFlow,
    UnweaveState,
    default_budget,
    run_episode,
    states_agree,
)
from unweave_flow.harness.experiment import ExperimentGrid, ExperimentReport, ReportRow, run_experiment
from unweave_flow.harness.frames import render_episode

__all__ = [
    "EpisodeLog",
    "EpisodeRequest",
    "EpisodeStatus",
    "ExperimentGrid",
    "ExperimentReport",
    "IterationRecord",
    "ReportRow",
    "UnweaveFlow",
    "UnweaveState",
    "default_budget",
    "render_episode",
    "run_episode",
    "run_experiment",
    "states_agree",
]
