"""``unweave`` command line: perceive, plan, gen, render, run and experiment."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import yaml

from unweave_flow.errors import PlanningError, UnweaveError
from unweave_flow.graph.cable_graph import count_crossings
from unweave_flow.graph.serialization import load_state, save_state, serialize_state
from unweave_flow.harness.episode import EpisodeRequest, run_episode
from unweave_flow.harness.experiment import ExperimentGrid, run_experiment
from unweave_flow.harness.frames import render_episode
from unweave_flow.perception.overlay import draw_state, save_png
from unweave_flow.perception.perception import PerceptionConfig, build_state, load_image
from unweave_flow.planner.landscape import plot_cost_landscape
from unweave_flow.planner.planner import (
    PlannerConfig,
    PrimitiveChoice,
    Scene,
    cost_landscape,
    enumerate_subspaces,
    plan,
)
from unweave_flow.settings import read_yaml
from unweave_flow.simworld.generator import GeneratorConfig, ScenarioSpec, generate_world
from unweave_flow.simworld.physics import PhysicsConfig, preset_names
from unweave_flow.simworld.render import save_render
from unweave_flow.simworld.world import load_world, save_world

logger = logging.getLogger("unweave_flow")

LOG_LEVEL_ENV = "UNWEAVE_LOG_LEVEL"


def configure_logging(level: str | None, log_file: str | None = None) -> None:
    level = (level or os.environ.get(LOG_LEVEL_ENV) or "INFO").upper()
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        handlers=handlers,
        force=True,
    )


def _physics(value: str | None) -> PhysicsConfig | None:
    if value is None:
        return None
    if value in preset_names():
        return PhysicsConfig.preset(value)
    return PhysicsConfig.from_yaml(value)


def _spec(args: argparse.Namespace) -> ScenarioSpec:
    data = read_yaml(args.spec) if args.spec else {}
    for key in ("n_cables", "n_crossings", "seed", "stiffness"):
        value = getattr(args, key, None)
        if value is not None:
            data[key] = value
    return ScenarioSpec.model_validate(data)


def cmd_perceive(args: argparse.Namespace) -> int:
    cfg = PerceptionConfig.from_yaml(args.config)
    if args.world:
        cfg = load_world(args.world).perception_config(cfg)
    image = load_image(args.image)
    state = build_state(image, cfg)
    # Without --out the state document owns stdout.
    status = sys.stdout if args.out else sys.stderr
    print(f"> perceived {len(state.graphs)} cables with {count_crossings(state)} crossings", file=status)
    if args.out:
        save_state(state, args.out)
        print(f"> state saved to {args.out}", file=status)
    else:
        sys.stdout.write(serialize_state(state))
    if args.overlay:
        save_png(draw_state(image, state), args.overlay)
        print(f"> overlay saved to {args.overlay}", file=status)
    return 0


def cmd_plan(args: argparse.Namespace) -> int:
    cfg = PlannerConfig.from_yaml(args.planner)
    state = load_state(args.state)
    primitive, result, subspaces = plan(state, cfg, not args.no_redistribution)
    print(f"primitive: {primitive.value}")
    if primitive is PrimitiveChoice.DONE or result is None:
        print("no crossing left")
        return 0
    g = result.geometry
    print(f"action: cable {result.action.cable_id} grasp node {result.action.grasp_node_id} theta {result.action.pivot_angle:.4f} rad ({math.degrees(result.action.pivot_angle):.1f} deg)")
    print(f"place: ({g.place_px[0]:.1f}, {g.place_px[1]:.1f}) px, lift height {g.lift_height:.4f} m{' (taut, slack lift)' if g.taut else ''}")
    print(f"predicted M: {result.predicted_m}")
    print(f"reward: {result.reward:.3f}")
    if args.dump_predictions:
        save_state(result.predicted_state, args.dump_predictions)
        print(f"> predicted state saved to {args.dump_predictions}")
    if args.landscape:
        scene = Scene(state, cfg)
        costs = cost_landscape(state, subspaces, primitive, cfg, scene)
        plot_cost_landscape(state, costs, args.landscape, title=primitive.value)
        print(f"> cost landscape saved to {args.landscape}")
    return 0


def cmd_gen(args: argparse.Namespace) -> int:
    spec = _spec(args)
    world = generate_world(spec, GeneratorConfig.from_yaml(args.generator))
    save_world(world, args.out)
    print(f"> world with {world.crossing_count()} crossings saved to {args.out}")
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    world = load_world(args.world)
    save_render(world, args.out)
    print(f"> frame saved to {args.out}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    request = EpisodeRequest(
        spec=_spec(args),
        world=load_world(args.world) if args.world else None,
        physics=_physics(args.physics),
        planner=PlannerConfig.from_yaml(args.planner),
        perception=PerceptionConfig.from_yaml(args.config),
        budget=args.budget,
        allow_redistribution=not args.no_redistribution,
        oracle_perception=args.oracle_perception,
        log_path=Path(args.log) if args.log else None,
    )
    log = run_episode(request)
    print(f"status: {log.status.value}")
    print(f"actions: {log.iterations} (budget {log.budget}), crossings {log.initial_crossings} -> {log.final_crossings}")
    if log.message:
        print(f"note: {log.message}")
    if args.frames:
        render_episode(log, args.frames, request.planner, landscapes=args.landscapes)
        print(f"> frames saved to {args.frames}")
    return 0


def cmd_experiment(args: argparse.Namespace) -> int:
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    grid = ExperimentGrid.from_yaml(args.grid, **overrides)
    report = run_experiment(
        grid,
        planner=PlannerConfig.from_yaml(args.planner),
        perception=PerceptionConfig.from_yaml(args.config),
        physics=_physics(args.physics),
        allow_redistribution=not args.no_redistribution,
        oracle_perception=args.oracle_perception,
        log_dir=args.log_dir,
    )
    print(report.table())
    if args.out:
        report.to_csv(args.out)
        print(f"> report saved to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unweave", description="Multi-cable unweaving: perception, planning and simulation")
    parser.add_argument("--log-level", default=None, help=f"logging level (default: ${LOG_LEVEL_ENV} or INFO)")
    parser.add_argument("--log-file", default=None, help="also write the log to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("perceive", help="image -> state document")
    p.add_argument("--image", required=True)
    p.add_argument("--config", default=None, help="perception config YAML")
    p.add_argument("--world", default=None, help="take the fixed endpoints from this world document")
    p.add_argument("--out", default=None, help="state document path; defaults to stdout")
    p.add_argument("--overlay", default=None, help="write the traced graph over the image")
    p.set_defaults(func=cmd_perceive)

    p = sub.add_parser("plan", help="state document -> next action")
    p.add_argument("--state", required=True)
    p.add_argument("--planner", "--config", dest="planner", default=None, help="planner config YAML")
    p.add_argument("--no-redistribution", action="store_true")
    p.add_argument("--dump-predictions", default=None, metavar="PATH", help="write the predicted next state")
    p.add_argument("--landscape", default=None, metavar="PNG", help="write the per-node cost figure")
    p.set_defaults(func=cmd_plan)

    def scenario(p: argparse.ArgumentParser) -> None:
        p.add_argument("--spec", default=None, help="scenario YAML")
        p.add_argument("--cables", dest="n_cables", type=int, default=None)
        p.add_argument("--crossings", dest="n_crossings", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--stiffness", choices=preset_names(), default=None)

    p = sub.add_parser("gen", help="generate a world document")
    scenario(p)
    p.add_argument("--generator", default=None, help="generator config YAML")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("render", help="world document -> PNG")
    p.add_argument("--world", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("run", help="one closed-loop episode")
    scenario(p)
    p.add_argument("--world", default=None, help="start from this world document")
    p.add_argument("--physics", default=None, help=f"preset ({', '.join(preset_names())}) or YAML")
    p.add_argument("--planner", default=None)
    p.add_argument("--config", default=None, help="perception config YAML")
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--no-redistribution", action="store_true")
    p.add_argument("--oracle-perception", action="store_true", help="plan on the true state")
    p.add_argument("--frames", default=None, metavar="DIR")
    p.add_argument("--landscapes", action="store_true", help="also write cost figures with --frames")
    p.add_argument("--log", default=None, metavar="PATH", help="episode log YAML")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("experiment", help="batch of episodes -> report")
    p.add_argument("--grid", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="base seed")
    p.add_argument("--physics", default=None)
    p.add_argument("--planner", default=None)
    p.add_argument("--config", default=None, help="perception config YAML")
    p.add_argument("--no-redistribution", action="store_true")
    p.add_argument("--oracle-perception", action="store_true")
    p.add_argument("--log-dir", default=None)
    p.add_argument("--out", default=None, metavar="CSV")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level, args.log_file)
    try:
        return args.func(args)
    except (UnweaveError, ValueError, OSError, yaml.YAMLError) as exc:
        logger.error("%s", exc)
        return 2 if not isinstance(exc, PlanningError) else 1


if __name__ == "__main__":
    sys.exit(main())
