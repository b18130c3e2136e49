"""Working memory, multiplexing, reasoning scenarios, and task scripts.

Task switching stores the current workspace state under a fresh
episodic index and restores it later; a bounded FIFO slot list models
the capacity limit.  Reasoning scenarios build on semantic recall:
chained decoding hops, materialization of multi-hop conclusions into
direct embedding links, and label-sharing that draws two episodic
engrams together.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .core_state import RepresentationState, activate
from .errors import ParameterError, ScenarioError, UnknownIndexError
from .index_layer import (EmbeddingStore, IndexId, IndexKind, IndexRegistry,
                          UpdateParams, decode_distribution, register_index,
                          sample_index_rng, topdown_update)
from .learning import (LossSpec, Mode, TrainEvent, apply_gradients, gradients,
                       mode_losses, self_supervised_round)
from .memory import (conditional_probability, episodic_recall,
                     prepare_semantic_state, record_trace_events, semantic_recall,
                     triples_from_trace)
from .perception import perceive_scene
from .rng import generator

if TYPE_CHECKING:
    from .engine import Engine
    from .perception import SceneInstance

WORKING_MEMORY_CAPACITY = 7


@dataclass
class WorkingMemory:
    """Bounded slot list of stored task states; eviction is FIFO."""

    capacity: int = WORKING_MEMORY_CAPACITY
    slots: list[IndexId] = field(default_factory=list)

    def push(self, index: IndexId) -> IndexId | None:
        """Append a slot, evicting and returning the oldest when full."""
        evicted = None
        if len(self.slots) >= self.capacity:
            evicted = self.slots.pop(0)
        self.slots.append(index)
        return evicted

    def __len__(self) -> int:
        return len(self.slots)


def store_task(state: RepresentationState, wm: WorkingMemory,
               registry: IndexRegistry, emb: EmbeddingStore,
               domain: str | None = "episodes") -> IndexId:
    """Freeze the current workspace state under a new episodic index."""
    index = register_index(registry, emb, IndexKind.EPISODIC,
                           name=f"wm_{len(registry)}", init=state.pre.copy(),
                           domain=domain)
    wm.push(index)
    return index


def restore_task(wm: WorkingMemory, slot: int, state: RepresentationState,
                 emb: EmbeddingStore) -> RepresentationState:
    """Overwrite the workspace with a stored task state (pure restoration)."""
    if not 0 <= slot < len(wm.slots):
        raise ParameterError(f"working-memory slot {slot} is empty")
    state.pre = emb.column(wm.slots[slot]).copy()
    return activate(state)


# ---------------------------------------------------------------------------
# Chaining and materialization


@dataclass
class ChainConfig:
    domain: str
    temperature: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    seed: int = 0


def chain_query(engine: "Engine", start: IndexId, hops: int,
                config: ChainConfig) -> list[IndexId]:
    """Semantic recall of `start`, then repeated decode/encode hops.

    Each hop samples one label from the configured domain and feeds it
    back top-down, so later hops can reach concepts with no direct
    embedding overlap with the start.
    """
    engine.embeddings.column(start)
    params = UpdateParams(alpha=config.alpha, beta=config.beta,
                          temperature=config.temperature)
    state = prepare_semantic_state(engine, start, params)
    dom = engine.registry.domain(config.domain)
    rng = generator(config.seed, "chain")
    chain = [start]
    for _ in range(hops):
        k = sample_index_rng(state, engine.embeddings, dom, config.temperature, rng)
        topdown_update(state, engine.embeddings, k, params)
        chain.append(k)
    return chain


@dataclass
class MaterializeConfig:
    learning_rate: float = 0.01
    steps: int = 100
    temperature: float = 1.0


@dataclass
class MaterializeReport:
    pairs: list[tuple[str, str]]
    probability_before: list[float]
    probability_after: list[float]
    loss_before: float
    loss_after: float

    def record(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "probability_before": self.probability_before,
            "probability_after": self.probability_after,
            "loss_before": self.loss_before,
            "loss_after": self.loss_after,
        }


def direct_label_probability(engine: "Engine", subject: IndexId, label: IndexId,
                             temperature: float = 1.0) -> float:
    """P(label) at the first decode of the subject's semantic recall."""
    dom_name = engine.registry.domain_of(label)
    if dom_name is None:
        raise UnknownIndexError(f"label {label.name!r} belongs to no domain")
    dom = engine.registry.domain(dom_name)
    state = prepare_semantic_state(engine, subject)
    p = decode_distribution(state, engine.embeddings, dom, temperature)
    return float(p[dom.position(label)])


def materialize(engine: "Engine", pairs: list[tuple[IndexId, IndexId]],
                config: MaterializeConfig | None = None) -> MaterializeReport:
    """Train direct subject-to-label links so one hop replaces a chain."""
    config = config or MaterializeConfig()
    events = []
    for subject, label in pairs:
        dom_name = engine.registry.domain_of(label)
        if dom_name is None:
            raise UnknownIndexError(f"label {label.name!r} belongs to no domain")
        events.append(TrainEvent(mode=Mode.SEMANTIC, labels=[(dom_name, label)],
                                 prefix=[subject]))
    spec = LossSpec(events=events, temperature=config.temperature)
    before = [direct_label_probability(engine, s, k, config.temperature)
              for s, k in pairs]
    loss_before = mode_losses(engine, spec)["total"]
    for _ in range(config.steps):
        apply_gradients(engine, gradients(engine, spec), config.learning_rate)
    after = [direct_label_probability(engine, s, k, config.temperature)
             for s, k in pairs]
    loss_after = mode_losses(engine, spec)["total"]
    return MaterializeReport(pairs=[(s.name, k.name) for s, k in pairs],
                             probability_before=before, probability_after=after,
                             loss_before=loss_before, loss_after=loss_after)


# ---------------------------------------------------------------------------
# Episodic similarity through shared labels


@dataclass
class SimilarityConfig:
    first: IndexId
    first_labels: list[tuple[str, IndexId]]
    second: IndexId
    second_labels: list[tuple[str, IndexId]]
    learning_rate: float = 0.05
    steps: int = 100
    temperature: float = 1.0
    # Decay lets the engrams shed their idiosyncratic components while the
    # trained labels maintain the shared ones.
    l1_embedding: float = 0.0


@dataclass
class SimilarityReport:
    cosine_before: float
    cosine_after: float
    cross_recall_before: dict[str, float]
    cross_recall_after: dict[str, float]

    def record(self) -> dict:
        return {
            "cosine_before": self.cosine_before,
            "cosine_after": self.cosine_after,
            "cross_recall_before": self.cross_recall_before,
            "cross_recall_after": self.cross_recall_after,
        }


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def episodic_similarity_scenario(engine: "Engine",
                                 config: SimilarityConfig) -> SimilarityReport:
    """Train two episodes on their labels; report how their engrams converge.

    Cross-recall probes how strongly each episode's restored state
    predicts the other episode's first label.
    """
    emb = engine.embeddings

    def cross_recall() -> dict[str, float]:
        out = {}
        for t, other_labels in ((config.first, config.second_labels),
                                (config.second, config.first_labels)):
            if not other_labels:
                continue
            dom_name, label = other_labels[0]
            dom = engine.registry.domain(dom_name)
            state = RepresentationState(pre=emb.column(t).copy())
            p = decode_distribution(state, emb, dom, config.temperature)
            out[f"{t.name}->{label.name}"] = float(p[dom.position(label)])
        return out

    cos_before = _cosine(emb.column(config.first), emb.column(config.second))
    cross_before = cross_recall()
    spec = LossSpec(events=[
        TrainEvent(mode=Mode.EPISODIC, labels=list(config.first_labels),
                   episode=config.first),
        TrainEvent(mode=Mode.EPISODIC, labels=list(config.second_labels),
                   episode=config.second),
    ], temperature=config.temperature, l1_embedding=config.l1_embedding)
    for _ in range(config.steps):
        apply_gradients(engine, gradients(engine, spec), config.learning_rate)
    cos_after = _cosine(emb.column(config.first), emb.column(config.second))
    return SimilarityReport(cosine_before=cos_before, cosine_after=cos_after,
                            cross_recall_before=cross_before,
                            cross_recall_after=cross_recall())


# ---------------------------------------------------------------------------
# Scripted cognitive control


@dataclass
class TaskCommand:
    op: str
    args: dict = field(default_factory=dict)


@dataclass
class TaskScript:
    steps: list[TaskCommand] = field(default_factory=list)


def run_script(engine: "Engine", script: TaskScript,
               scenes: dict[str, "SceneInstance"] | None = None) -> list[dict]:
    """Deterministic interpreter for engine command scripts.

    Maintains a current workspace state and a working memory across
    steps; every step emits one structured record.
    """
    scenes = scenes or {}
    state = RepresentationState.zeros(engine.config.n)
    wm = WorkingMemory()
    records: list[dict] = []

    for i, cmd in enumerate(script.steps):
        record: dict = {"step": i, "op": cmd.op}
        args = cmd.args
        if cmd.op == "perceive":
            scene_id = args["scene"]
            if scene_id not in scenes:
                raise ScenarioError(f"unknown scene {scene_id!r}")
            trace = perceive_scene(engine, scenes[scene_id])
            triples = triples_from_trace(engine, trace)
            record_trace_events(engine, trace)
            state = RepresentationState(pre=trace.final_pre.copy())
            record.update({
                "scene": scene_id,
                "episode": trace.episodic_index.name if trace.episodic_index else None,
                "labels": [e.index.name for e in trace.events],
                "triples": len(triples),
            })
        elif cmd.op == "recall_episodic":
            name = args["episode"]
            t = engine.episodes.last() if name == "last" else engine.episode(name)
            if t is None:
                raise ScenarioError("no episode stored yet")
            trace = episodic_recall(engine, t)
            triples = triples_from_trace(engine, trace)
            state = RepresentationState(pre=trace.final_pre.copy())
            record.update({"episode": t.name,
                           "labels": [e.index.name for e in trace.events],
                           "triples": len(triples)})
        elif cmd.op == "recall_semantic":
            s = engine.concept(args["concept"])
            trace = semantic_recall(engine, s)
            triples = triples_from_trace(engine, trace)
            state = RepresentationState(pre=trace.final_pre.copy())
            record.update({"concept": s.name,
                           "labels": [e.index.name for e in trace.events],
                           "triples": len(triples)})
        elif cmd.op == "store":
            index = store_task(state, wm, engine.registry, engine.embeddings,
                               domain=engine.config.episodes_domain)
            engine.register_episode(index, tag="task")
            record.update({"slot": len(wm) - 1, "index": index.name})
        elif cmd.op == "restore":
            slot = int(args.get("slot", len(wm) - 1))
            restore_task(wm, slot, state, engine.embeddings)
            record.update({"slot": slot, "index": wm.slots[slot].name})
        elif cmd.op == "query":
            context = engine.index_by_name(args["context"])
            dom = engine.registry.domain(args["domain"])
            if "label" in args:
                label = engine.index_by_name(args["label"])
                p = conditional_probability(engine.kg, context, dom, label)
                record.update({"context": context.name, "domain": dom.name,
                               "label": label.name, "probability": p})
            else:
                probs = {k.name: (engine.kg.count(context, dom, k)
                                  / engine.kg.total(context, dom))
                         for k in dom.members} if engine.kg.total(context, dom) else {}
                record.update({"context": context.name, "domain": dom.name,
                               "distribution": probs})
        elif cmd.op == "train":
            scene_id = args["scene"]
            if scene_id not in scenes:
                raise ScenarioError(f"unknown scene {scene_id!r}")
            rounds = int(args.get("rounds", 1))
            last = None
            for _ in range(rounds):
                last = self_supervised_round(engine, scenes[scene_id])
            record.update({"scene": scene_id, "rounds": rounds,
                           "loss_after_total": last.loss_after["total"] if last else None})
        else:
            raise ScenarioError(f"unknown task op {cmd.op!r}")
        records.append(record)
    return records
