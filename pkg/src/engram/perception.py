"""Synthetic sensory world and the scene -> ROI -> relation pipeline.

Real visual processing is replaced by a feature-space stand-in: every
concept owns a fixed signature vector, scenes and regions of interest
are (noisy) sums of the signatures they contain, and a linear encoder
writes those features into the representation layer.  The decoder maps
post-activations back to feature space, giving the intentionally lossy
"mental image" of the current state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .core_state import RepresentationState, activate, evolve, sigmoid
from .errors import ConfigurationError, UnknownIndexError
from .index_layer import (Domain, EmbeddingStore, IndexId, IndexKind,
                          IndexRegistry, UpdateParams, decode_distribution,
                          input_and_attention, register_index, sample_index_rng,
                          topdown_update)
from .rng import generator
from .traces import (PHASE_RELATION, PHASE_ROI, PHASE_SCENE, LabelEvent,
                     RelationBlock, Trace)

if TYPE_CHECKING:
    from .engine import Engine


@dataclass
class Encoder:
    """Linear map from feature space onto the representation layer."""

    w: np.ndarray  # (n, d)
    b: np.ndarray  # (n,)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)

    @property
    def n(self) -> int:
        return self.w.shape[0]

    @property
    def d(self) -> int:
        return self.w.shape[1]

    @classmethod
    def zeros(cls, n: int, d: int) -> "Encoder":
        return cls(np.zeros((n, d)), np.zeros(n))

    @classmethod
    def init_random(cls, n: int, d: int, rng: np.random.Generator) -> "Encoder":
        scale = 1.0 / np.sqrt(d)
        return cls(rng.uniform(-scale, scale, size=(n, d)), np.zeros(n))

    def forward(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=np.float64)
        if features.shape != (self.d,):
            raise ConfigurationError(
                f"encoder expects {self.d} features, got {features.shape}")
        return self.w @ features + self.b


@dataclass
class Decoder:
    """Linear map from post-activations back to feature space."""

    w: np.ndarray  # (d, n)
    b: np.ndarray  # (d,)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)

    @property
    def d(self) -> int:
        return self.w.shape[0]

    @property
    def n(self) -> int:
        return self.w.shape[1]

    @classmethod
    def zeros(cls, d: int, n: int) -> "Decoder":
        return cls(np.zeros((d, n)), np.zeros(d))

    @classmethod
    def init_random(cls, d: int, n: int, rng: np.random.Generator) -> "Decoder":
        scale = 1.0 / np.sqrt(n)
        return cls(rng.uniform(-scale, scale, size=(d, n)), np.zeros(d))

    def forward(self, gamma: np.ndarray) -> np.ndarray:
        return self.w @ gamma + self.b


@dataclass
class SyntheticWorld:
    """Fixed concept signatures plus a noise level; the sensory ground truth."""

    signatures: dict[int, np.ndarray]
    noise_sigma: float
    d: int
    seed: int
    registry: IndexRegistry

    @classmethod
    def generate(cls, registry: IndexRegistry, d: int, noise_sigma: float = 0.0,
                 seed: int = 0) -> "SyntheticWorld":
        """One standard-normal signature per concept and predicate index."""
        rng = generator(seed, "world")
        signatures: dict[int, np.ndarray] = {}
        for index in registry.indices:
            if index.kind is IndexKind.EPISODIC:
                continue
            signatures[index.id] = rng.normal(0.0, 1.0, size=d)
        return cls(signatures=signatures, noise_sigma=float(noise_sigma), d=d,
                   seed=seed, registry=registry)

    def signature(self, index: IndexId) -> np.ndarray:
        try:
            return self.signatures[index.id]
        except KeyError:
            raise UnknownIndexError(f"no signature for index {index.name!r}") from None

    def signature_by_name(self, name: str) -> np.ndarray:
        return self.signature(self.registry.find_by_name(name))


@dataclass
class RoiSpec:
    """Declarative content of one region of interest."""

    entity: str
    attributes: list[str] = field(default_factory=list)


@dataclass
class SceneSpec:
    """Declarative content of one scene: ROIs, scene-level concepts, relations.

    Relations reference ROIs by position: (subject ROI, predicate name,
    object ROI).
    """

    scene_id: str
    scene_concepts: list[str] = field(default_factory=list)
    rois: list[RoiSpec] = field(default_factory=list)
    relations: list[tuple[int, str, int]] = field(default_factory=list)


@dataclass
class RoiInstance:
    features: np.ndarray
    true_concepts: set[IndexId] = field(default_factory=set)  # evaluation only


@dataclass
class RelationRoi:
    """An enclosing ROI for a pair of member ROIs."""

    subject_roi: int
    object_roi: int
    features: np.ndarray
    true_predicate: IndexId | None = None  # evaluation only


@dataclass
class SceneInstance:
    scene_id: str
    scene_features: np.ndarray
    rois: list[RoiInstance] = field(default_factory=list)
    relation_rois: list[RelationRoi] = field(default_factory=list)
    ground_truth: list[tuple[str, str, str]] = field(default_factory=list)  # evaluation only


def generate_scene(world: SyntheticWorld, spec: SceneSpec, rng_seed: int = 0) -> SceneInstance:
    """Materialize a scene: additive signatures plus Gaussian noise.

    ROI features are the sum of the member concepts' signatures; the
    scene feature vector is the mean of the ROI features plus the
    scene-level concept signatures; relation ROIs are the sum of their
    member ROIs plus the predicate signature.  All noise comes from the
    given seed, so regeneration is deterministic.
    """
    reg = world.registry
    rng = generator(rng_seed, "scene")
    rois = []
    ground_truth = []
    for roi_spec in spec.rois:
        entity = reg.find(IndexKind.CONCEPT, roi_spec.entity)
        attrs = [reg.find(IndexKind.CONCEPT, a) for a in roi_spec.attributes]
        features = np.zeros(world.d)
        for concept in [entity, *attrs]:
            features = features + world.signature(concept)
        if world.noise_sigma > 0:
            features = features + rng.normal(0.0, world.noise_sigma, size=world.d)
        rois.append(RoiInstance(features=features, true_concepts={entity, *attrs}))
        ground_truth.extend((roi_spec.entity, "type", a) for a in roi_spec.attributes)

    scene_features = np.mean([r.features for r in rois], axis=0) if rois \
        else np.zeros(world.d)
    for name in spec.scene_concepts:
        scene_features = scene_features + world.signature(reg.find(IndexKind.CONCEPT, name))
    if world.noise_sigma > 0:
        scene_features = scene_features + rng.normal(0.0, world.noise_sigma, size=world.d)

    relation_rois = []
    for subj, pred_name, obj in spec.relations:
        pred = reg.find(IndexKind.PREDICATE, pred_name)
        features = rois[subj].features + rois[obj].features + world.signature(pred)
        relation_rois.append(RelationRoi(subject_roi=subj, object_roi=obj,
                                         features=features, true_predicate=pred))
        ground_truth.append((spec.rois[subj].entity, pred_name, spec.rois[obj].entity))

    return SceneInstance(scene_id=spec.scene_id, scene_features=scene_features,
                         rois=rois, relation_rois=relation_rois,
                         ground_truth=ground_truth)


def encode_input(state: RepresentationState, enc: Encoder,
                 features: np.ndarray) -> RepresentationState:
    """Add the encoded features to the pre-activations."""
    contribution = enc.forward(features)
    if contribution.shape != state.pre.shape:
        raise ConfigurationError("encoder output width does not match state")
    state.pre = state.pre + contribution
    return activate(state)


def reconstruct(state: RepresentationState, dec: Decoder) -> np.ndarray:
    """Feature-space reconstruction of the current state (lossy on purpose)."""
    return dec.forward(state.post)


def form_episodic_index(state: RepresentationState, registry: IndexRegistry,
                        store: EmbeddingStore, name: str | None = None,
                        domain: str | None = "episodes") -> IndexId:
    """Mint an episodic index whose embedding copies the current pre-activations."""
    name = name if name is not None else f"ep_{len(registry)}"
    return register_index(registry, store, IndexKind.EPISODIC, name,
                          init=state.pre.copy(), domain=domain)


def _sample_and_record(trace: Trace, state: RepresentationState, emb: EmbeddingStore,
                       dom: Domain, params: UpdateParams, rng: np.random.Generator,
                       step: int, phase: str, block: int) -> int:
    pre_before = state.pre.copy()
    k = sample_index_rng(state, emb, dom, params.temperature, rng)
    topdown_update(state, emb, k, params)
    trace.events.append(LabelEvent(step=step, phase=phase, block=block,
                                   domain=dom.name, index=k,
                                   pre_before=pre_before, pre_after=state.pre.copy()))
    return step + 1


def _domain_schedule(registry: IndexRegistry, names: list[str], rounds: int):
    """Cycle the configured domain list for the given number of draws.

    Empty domains (e.g. an episode domain before any episode exists)
    are skipped.
    """
    if not names:
        return
    for i in range(rounds):
        dom = registry.domains.get(names[i % len(names)])
        if dom is not None and len(dom) > 0:
            yield dom


def snapshot_distributions(engine: "Engine", state: RepresentationState,
                           temperature: float) -> dict[str, np.ndarray]:
    """Label distribution of every non-empty domain at the current state."""
    out = {}
    for name, dom in engine.registry.domains.items():
        if len(dom) > 0:
            out[name] = decode_distribution(state, engine.embeddings, dom, temperature)
    return out


def perceive_scene(engine: "Engine", scene: SceneInstance, seed: int | None = None,
                   attention: bool | None = None,
                   form_episode: bool | None = None) -> Trace:
    """Run the full perception pipeline over one scene.

    Order of operations: scene input (+ attention over past episodes),
    episodic-index formation, scene-level label sampling, then per ROI
    an evolution step, ROI input (+ attention over entities) and label
    sampling, then the same for each relation ROI.
    """
    cfg = engine.config
    attention = cfg.attention if attention is None else attention
    form_episode = cfg.form_episodic if form_episode is None else form_episode
    if seed is None:
        seed = engine.rng.call_seed("perception", engine.step)
    rng = generator(seed, "perceive")
    params = engine.update_params()
    emb, reg = engine.embeddings, engine.registry

    state = RepresentationState.zeros(cfg.n)
    trace = Trace(source="Perception", scene_id=scene.scene_id)

    scene_attention = reg.domains.get(cfg.scene_attention_domain) if attention else None
    input_and_attention(state, scene.scene_features, engine.encoder, emb, scene_attention)

    if form_episode:
        t = engine.episodes.for_scene(scene.scene_id) if cfg.reuse_episodic_index else None
        if t is None:
            t = form_episodic_index(state, reg, emb, domain=cfg.episodes_domain)
            engine.register_episode(t, scene_id=scene.scene_id,
                                    n_blocks=len(scene.rois))
        trace.episodic_index = t

    trace.snapshot_pre = state.pre.copy()
    trace.snapshot_distributions = snapshot_distributions(engine, state, params.temperature)

    step = 0
    for dom in _domain_schedule(reg, cfg.scene_domains, cfg.rounds_scene):
        step = _sample_and_record(trace, state, emb, dom, params, rng,
                                  step, PHASE_SCENE, -1)

    roi_attention_name = cfg.roi_attention_domain if attention else None
    for b, roi in enumerate(scene.rois):
        evolve(state, engine.evolution)
        roi_attention = reg.domains.get(roi_attention_name) if roi_attention_name else None
        input_and_attention(state, roi.features, engine.encoder, emb, roi_attention)
        if form_episode and cfg.per_roi_episodes:
            t_roi = engine.episodes.for_scene_roi(scene.scene_id, b) \
                if cfg.reuse_episodic_index else None
            if t_roi is None:
                t_roi = form_episodic_index(state, reg, emb, domain=cfg.episodes_domain)
                engine.register_roi_episode(t_roi, scene.scene_id, b)
            trace.roi_episodes[b] = t_roi
        for dom in _domain_schedule(reg, cfg.roi_domains, cfg.rounds_roi):
            step = _sample_and_record(trace, state, emb, dom, params, rng,
                                      step, PHASE_ROI, b)

    for r, rel in enumerate(scene.relation_rois):
        evolve(state, engine.evolution)
        input_and_attention(state, rel.features, engine.encoder, emb, None)
        for dom in _domain_schedule(reg, [cfg.relation_domain], cfg.rounds_relation):
            step = _sample_and_record(trace, state, emb, dom, params, rng,
                                      step, PHASE_RELATION, r)
        trace.relation_blocks.append(RelationBlock(block=r, subject_block=rel.subject_roi,
                                                   object_block=rel.object_roi))

    trace.final_pre = state.pre.copy()
    trace.scene_features = np.asarray(scene.scene_features, dtype=np.float64).copy()
    trace.roi_features = [np.asarray(r.features, dtype=np.float64).copy()
                          for r in scene.rois]
    trace.relation_features = [np.asarray(r.features, dtype=np.float64).copy()
                               for r in scene.relation_rois]
    engine.step += 1
    return trace


def associative_warm_start(engine: "Engine", world: SyntheticWorld,
                           names: list[str] | None = None, scale: float = 1.0,
                           scenes: list[SceneSpec] | None = None) -> None:
    """Initialize embeddings associatively instead of randomly.

    Without scenes, a concept's embedding becomes the pre-activation
    image of its isolated signature.  With scenes, it becomes the
    average encoded input of every context (ROI or scene level) the
    concept appears in, which is the plain associative baseline:
    store the mean state wherever the concept occurred.  Either way the
    bootstrap gets an initial bias toward the planted semantics that
    gradient training then refines.
    """
    if scenes is None:
        indices = [world.registry.find_by_name(n) for n in names] if names is not None \
            else [ix for ix in world.registry.indices if ix.id in world.signatures]
        for index in indices:
            image = engine.encoder.w @ world.signature(index)
            engine.embeddings.a[:, index.id] = scale * image
        return

    reg = world.registry
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {}

    def accumulate(index: IndexId, features: np.ndarray) -> None:
        image = engine.encoder.w @ features
        sums[index.id] = sums.get(index.id, 0.0) + image
        counts[index.id] = counts.get(index.id, 0) + 1

    for spec in scenes:
        roi_features = []
        for roi in spec.rois:
            concepts = [reg.find(IndexKind.CONCEPT, roi.entity)] + \
                [reg.find(IndexKind.CONCEPT, a) for a in roi.attributes]
            features = np.sum([world.signature(c) for c in concepts], axis=0)
            roi_features.append(features)
            for c in concepts:
                accumulate(c, features)
        scene_features = np.mean(roi_features, axis=0) if roi_features \
            else np.zeros(world.d)
        for name in spec.scene_concepts:
            c = reg.find(IndexKind.CONCEPT, name)
            scene_features = scene_features + world.signature(c)
        for name in spec.scene_concepts:
            accumulate(reg.find(IndexKind.CONCEPT, name), scene_features)
        for subj, pred_name, obj in spec.relations:
            pred = reg.find(IndexKind.PREDICATE, pred_name)
            accumulate(pred, roi_features[subj] + roi_features[obj]
                       + world.signature(pred))
    for id_, total in sums.items():
        engine.embeddings.a[:, id_] = scale * total / counts[id_]
