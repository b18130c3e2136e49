"""Shared fixtures: small engines for unit tests, trained worlds for scenarios."""

import numpy as np
import pytest

from engram import learning
from engram.config import DomainSpec, EngineConfig, default_config
from engram.core_state import EvolutionNetwork
from engram.engine import Engine
from engram.learning import LossSpec, Mode, TrainEvent
from engram.perception import RoiSpec, SceneSpec, generate_scene

SPARKY_SCENE = SceneSpec("sparky_scene", ["Park", "Sunny"],
                         [RoiSpec("Sparky", ["Dog", "Black", "Happy"])], [])
BENCH_SCENE = SceneSpec("bench_scene", ["Park", "Sunny"],
                        [RoiSpec("Bench1", ["Bench"])], [])
PARK_SCENE = SceneSpec("park_scene", ["Park", "Sunny"],
                       [RoiSpec("Sparky", ["Dog", "Black", "Happy"]),
                        RoiSpec("Bench1", ["Bench"])],
                       [(0, "sitOn", 1)])

SPARKY_LABELS = [("entities", "Sparky"), ("classes", "Dog"),
                 ("colors", "Black"), ("moods", "Happy")]
BENCH_LABELS = [("entities", "Bench1"), ("classes", "Bench")]


def small_config(seed=1, n=6, d=5, h=4):
    """Tiny engine config for unit and gradient tests (n<=8, K<=12)."""
    return EngineConfig(
        n=n, d=d, h=h,
        domains=[
            DomainSpec("entities", "concept", ["E1", "E2", "E3"]),
            DomainSpec("classes", "concept", ["C1", "C2", "C3"]),
            DomainSpec("colors", "concept", ["X1", "X2"]),
            DomainSpec("predicates", "predicate", ["p1"]),
        ],
        scene_domains=["colors"],
        roi_domains=["entities", "classes", "colors"],
        seed=seed,
    )


def exemplar_events(engine, scenes):
    """Supervised bootstrap events pairing each scene with its planted labels.

    Stands in for a pre-trained sensory pathway: a handful of labeled
    exemplars break the symmetry so self-generated-label training locks
    onto the planted semantics instead of an arbitrary permutation.
    """
    events = []
    for scene_id, labels in (("sparky_scene", SPARKY_LABELS),
                             ("bench_scene", BENCH_LABELS)):
        scene = scenes[scene_id]
        events.append(TrainEvent(
            mode=Mode.PERCEPTION,
            labels=[(dom, engine.concept(name)) for dom, name in labels],
            scene_features=scene.scene_features,
            roi_features=scene.rois[0].features))
        events.append(TrainEvent(
            mode=Mode.PERCEPTION,
            labels=[("locations", engine.concept("Park")),
                    ("weathers", engine.concept("Sunny"))],
            scene_features=scene.scene_features))
    park = scenes["park_scene"]
    events.append(TrainEvent(
        mode=Mode.PERCEPTION,
        labels=[("predicates", engine.predicate("sitOn")),
                ("entities", engine.concept("Bench1"))],
        scene_features=park.scene_features,
        roi_features=park.relation_rois[0].features,
        prefix=[engine.concept("Sparky")]))
    return events


def build_sparky_engine(seed=3, alpha=0.9, pretrain_steps=150, rounds=0):
    """The standard fixture world: zero noise, exemplar pretraining.

    With rounds > 0, alternates self-supervised rounds over the two
    single-ROI scenes afterwards.
    """
    base = default_config(seed=seed)
    config = EngineConfig(n=24, d=16, h=24, domains=base.domains, alpha=alpha,
                          scene_domains=base.scene_domains,
                          roi_domains=base.roi_domains, seed=seed)
    engine = Engine(config)
    world = engine.build_world()
    scenes = {s.scene_id: generate_scene(world, s, 11)
              for s in (SPARKY_SCENE, BENCH_SCENE, PARK_SCENE)}
    spec = LossSpec(exemplar_events(engine, scenes), temperature=1.0)
    for _ in range(pretrain_steps):
        learning.apply_gradients(engine, learning.gradients(engine, spec), 0.1)
    for _ in range(rounds // 2):
        learning.self_supervised_round(engine, scenes["sparky_scene"])
        learning.self_supervised_round(engine, scenes["bench_scene"])
    return engine, world, scenes


CHAIN_CLASSES = ["Dog", "Person", "Bench", "Mammal", "Carnivore",
                 "Furniture", "Plant", "Machine"]
CHAIN_HOMES = {"Sparky": "Dog", "Jack": "Person", "Bench1": "Bench",
               "Rex": "Carnivore", "Tree1": "Plant", "Robo": "Machine",
               "Sofa": "Furniture"}


def build_chaining_engine(seed=7, steps=300, lr=0.1, link_weight=2.0):
    """Concept-link fixture: every class has a home entity; Dog links to Mammal.

    Sparky and Mammal never co-occur in any event, so reaching Mammal
    from Sparky requires the Dog hop.
    """
    config = EngineConfig(
        n=24, d=16, h=24,
        domains=[
            DomainSpec("entities", "concept", list(CHAIN_HOMES)),
            DomainSpec("classes", "concept", CHAIN_CLASSES),
            DomainSpec("predicates", "predicate", ["looksAt"]),
        ],
        scene_domains=[], roi_domains=["entities", "classes"], seed=seed)
    engine = Engine(config)
    world = engine.build_world()
    from engram.perception import associative_warm_start
    associative_warm_start(engine, world, scale=1.0)
    events = [TrainEvent(mode=Mode.SEMANTIC,
                         labels=[("classes", engine.concept(cls))],
                         prefix=[engine.concept(entity)])
              for entity, cls in CHAIN_HOMES.items()]
    events.append(TrainEvent(mode=Mode.SEMANTIC,
                             labels=[("classes", engine.concept("Mammal"))],
                             prefix=[engine.concept("Dog")], weight=link_weight))
    spec = LossSpec(events, temperature=1.0)
    for _ in range(steps):
        learning.apply_gradients(engine, learning.gradients(engine, spec), lr)
    return engine


def build_similarity_engine(seed=42):
    """Two episodic engrams with a shared latent component in their states."""
    from engram.core_state import RepresentationState
    from engram.perception import form_episodic_index
    from engram.rng import generator

    config = default_config(seed=seed)
    engine = Engine(config)
    engine.evolution = EvolutionNetwork.zeros(config.n, config.h)
    rng = generator(seed, "sim-fixture")
    common = rng.normal(0.0, 1.0, config.n)
    episodes = []
    for scene_id in ("garden", "square"):
        state = RepresentationState(pre=0.8 * common + rng.normal(0.0, 1.0, config.n))
        t = form_episodic_index(state, engine.registry, engine.embeddings)
        engine.register_episode(t, scene_id=scene_id)
        episodes.append(t)
    return engine, episodes


@pytest.fixture
def small_engine():
    return Engine(small_config())


@pytest.fixture(scope="session")
def pretrained_sparky():
    """Exemplar-pretrained engine; perception locks onto the planted labels."""
    return build_sparky_engine(seed=3, rounds=0)


@pytest.fixture(scope="session")
def trained_sparky():
    """Pretrained engine plus 500 self-supervised rounds."""
    return build_sparky_engine(seed=3, rounds=500)


@pytest.fixture(scope="session")
def chaining_engine():
    return build_chaining_engine(seed=7)


def fresh(engine):
    """Independent copy for tests that mutate parameters."""
    from engram.snapshot import clone_engine
    return clone_engine(engine)
