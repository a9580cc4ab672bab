#!/usr/bin/env python
"""
Multi-cable unweaving on a simulated tabletop.

A camera image of several cables, each fixed to the table at one end, is turned
into per-cable graphs with over/under crossings. A greedy planner then picks
one pick-pivot-place action at a time, eliminating crossings when it can and
spreading the cables out when it cannot, until no crossing is left.

Key Features:
- Flow-Driven Loop: a crewAI Flow runs perceive -> plan -> execute with an
  iteration budget.
- Simulated World: seeded scenarios, occlusion-correct renders and a tunable
  reality gap (elasticity and jitter).
- Batch Experiments: success, timing and perception rates per configuration.
"""

import uuid
from pathlib import Path

from unweave_flow.cli import configure_logging
from unweave_flow.harness.episode import EpisodeRequest, UnweaveFlow, run_episode
from unweave_flow.harness.frames import render_episode
from unweave_flow.simworld.generator import ScenarioSpec


def kickoff():
    """Run one default unweaving episode"""
    configure_logging(None)
    episode_name = str(uuid.uuid4())
    out_dir = Path("episodes") / episode_name
    log = run_episode(
        EpisodeRequest(spec=ScenarioSpec(n_cables=2, n_crossings=2, seed=7), log_path=out_dir / "episode.yaml")
    )
    render_episode(log, out_dir)
    print("\n=== Flow Complete ===")
    print(f"Status: {log.status.value} after {log.iterations} actions ({log.initial_crossings} -> {log.final_crossings} crossings)")
    print(f"Frames and the episode log are in {out_dir}")


def plot():
    """Generate a visualization of the flow"""
    flow = UnweaveFlow()
    flow.plot("unweave_flow")
    print("Flow visualization saved to unweave_flow.html")


if __name__ == "__main__":
    kickoff()
