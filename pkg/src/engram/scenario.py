"""Scenario files: worlds, scenes, and task scripts in one YAML document.

Schema (all keys optional unless noted)::

    version: 1
    engine:            # EngineConfig fields; `domains` is a list of
      n: 24            # {name, kind: concept|predicate, members: [...]}
      domains: [...]
      scene_domains: [locations, weathers]
      roi_domains: [entities, classes, colors, moods]
      ...
    world:
      noise_sigma: 0.0
      seed: 7          # defaults to the engine seed
    warm_start:        # optional associative initialization
      scale: 1.0
    scenes:            # required for perceive/train tasks
      - id: park_scene
        scene_concepts: [Park, Sunny]
        rois:
          - {entity: Sparky, attributes: [Dog, Black, Happy]}
        relations:
          - {subject: 0, predicate: looksAt, object: 1}
    tasks:             # the script the `simulate` command runs
      - {op: perceive, scene: park_scene}
      - {op: recall_episodic, episode: last}
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .cognition import TaskCommand, TaskScript
from .config import EngineConfig
from .engine import Engine
from .errors import ScenarioError
from .perception import (RoiSpec, SceneInstance, SceneSpec, SyntheticWorld,
                         associative_warm_start, generate_scene)
from .rng import child_seed

SCENARIO_VERSION = 1


@dataclass
class Scenario:
    engine_config: EngineConfig
    world_noise_sigma: float
    world_seed: int
    warm_start_scale: float | None
    scenes: list[SceneSpec] = field(default_factory=list)
    tasks: TaskScript = field(default_factory=TaskScript)


def _parse_scene(data: dict) -> SceneSpec:
    try:
        rois = [RoiSpec(entity=r["entity"], attributes=list(r.get("attributes", [])))
                for r in data.get("rois", [])]
        relations = [(int(r["subject"]), str(r["predicate"]), int(r["object"]))
                     for r in data.get("relations", [])]
        return SceneSpec(scene_id=str(data["id"]),
                         scene_concepts=list(data.get("scene_concepts", [])),
                         rois=rois, relations=relations)
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"malformed scene entry: {exc}") from exc


def parse_scenario(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario document must be a mapping")
    version = int(data.get("version", SCENARIO_VERSION))
    if version != SCENARIO_VERSION:
        raise ScenarioError(f"unsupported scenario version {version}")
    try:
        engine_config = EngineConfig.from_dict(data.get("engine", {}))
    except TypeError as exc:
        raise ScenarioError(f"malformed engine config: {exc}") from exc

    world = data.get("world", {}) or {}
    warm = data.get("warm_start")
    tasks = TaskScript(steps=[
        TaskCommand(op=str(t["op"]), args={k: v for k, v in t.items() if k != "op"})
        for t in data.get("tasks", [])
    ])
    return Scenario(
        engine_config=engine_config,
        world_noise_sigma=float(world.get("noise_sigma",
                                          engine_config.world_noise_sigma)),
        world_seed=int(world.get("seed", engine_config.seed)),
        warm_start_scale=float(warm["scale"]) if warm else None,
        scenes=[_parse_scene(s) for s in data.get("scenes", [])],
        tasks=tasks,
    )


def load_scenario(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ScenarioError(f"scenario file is not valid YAML: {exc}") from exc
    return parse_scenario(data)


def build_simulation(scenario: Scenario) -> tuple[Engine, SyntheticWorld,
                                                  dict[str, SceneInstance]]:
    """Engine, world, and generated scene instances for a scenario."""
    engine = Engine(scenario.engine_config)
    world = SyntheticWorld.generate(engine.registry, engine.config.d,
                                    scenario.world_noise_sigma, scenario.world_seed)
    if scenario.warm_start_scale is not None:
        associative_warm_start(engine, world, scale=scenario.warm_start_scale)
    scenes = {}
    for spec in scenario.scenes:
        seed = child_seed(scenario.world_seed, f"scene:{spec.scene_id}")
        scenes[spec.scene_id] = generate_scene(world, spec, seed)
    return engine, world, scenes
