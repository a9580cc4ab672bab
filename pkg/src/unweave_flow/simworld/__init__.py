from unweave_flow.simworld.generator import GeneratorConfig, ScenarioSpec, generate_world
from unweave_flow.simworld.physics import PhysicsConfig, execute, preset_names
from unweave_flow.simworld.render import Rendering, render, save_render
from unweave_flow.simworld.world import (
    CableTrack,
    CrossingTruth,
    World,
    load_world,
    save_world,
    state_from_world,
    world_violations,
)

__all__ = [
    "CableTrack",
    "CrossingTruth",
    "GeneratorConfig",
    "PhysicsConfig",
    "Rendering",
    "ScenarioSpec",
    "World",
    "execute",
    "generate_world",
    "load_world",
    "preset_names",
    "render",
    "save_render",
    "save_world",
    "state_from_world",
    "world_violations",
]
