"""Episodic and semantic recall, triple extraction, and label statistics.

Recall restores a stored state (episodic) or composes the constant
prior with a concept embedding (semantic) and then reruns the same
label-generation loop perception uses, with no sensory input and no
attention.  Sampled labels condense into subject/predicate/object
triples that accumulate in a knowledge graph together with label
co-occurrence counts, from which conditional probabilities and a purely
symbolic decoding matrix are derived.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .core_state import RepresentationState, evolve
from .errors import (DomainError, ParameterError, UndefinedProbabilityError,
                     UnknownIndexError)
from .index_layer import (Domain, IndexId, IndexKind, IndexRegistry,
                          UpdateParams, softmax, topdown_update)
from .perception import _domain_schedule, _sample_and_record, snapshot_distributions
from .rng import generator
from .traces import PHASE_ROI, PHASE_SCENE, Trace

if TYPE_CHECKING:
    from .engine import Engine

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Episodic store


@dataclass
class EpisodeMeta:
    index: IndexId
    creation_step: int = 0
    tag: str = ""
    scene_id: str | None = None
    n_blocks: int = 0


class EpisodicStore:
    """Metadata for every episodic index; embeddings live in the store."""

    def __init__(self):
        self.entries: dict[int, EpisodeMeta] = {}
        self._by_scene: dict[str, IndexId] = {}
        self._by_scene_roi: dict[tuple[str, int], IndexId] = {}

    def add(self, meta: EpisodeMeta) -> None:
        if meta.index.kind is not IndexKind.EPISODIC:
            raise ParameterError("episodic store only accepts episodic indices")
        self.entries[meta.index.id] = meta
        if meta.scene_id is not None:
            self._by_scene.setdefault(meta.scene_id, meta.index)

    def add_roi(self, index: IndexId, scene_id: str, block: int) -> None:
        self._by_scene_roi[(scene_id, block)] = index

    def get(self, index: IndexId) -> EpisodeMeta:
        try:
            return self.entries[index.id]
        except KeyError:
            raise UnknownIndexError(f"no episode recorded for {index.name!r}") from None

    def for_scene(self, scene_id: str) -> IndexId | None:
        return self._by_scene.get(scene_id)

    def for_scene_roi(self, scene_id: str, block: int) -> IndexId | None:
        return self._by_scene_roi.get((scene_id, block))

    def last(self) -> IndexId | None:
        if not self.entries:
            return None
        return self.entries[max(self.entries)].index

    def __len__(self) -> int:
        return len(self.entries)


# ---------------------------------------------------------------------------
# Triples and the knowledge graph


class TripleSource(enum.Enum):
    PERCEPTION = "Perception"
    EPISODIC_RECALL = "EpisodicRecall"
    SEMANTIC_RECALL = "SemanticRecall"


@dataclass(frozen=True)
class Triple:
    subject: IndexId
    predicate: IndexId
    object: IndexId
    source: TripleSource
    time: IndexId | None = None

    def key(self) -> tuple:
        time_id = self.time.id if self.time is not None else None
        return (self.subject.id, self.predicate.id, self.object.id,
                self.source.value, time_id)


class KnowledgeGraph:
    """Triple multiset plus (context, domain, label) co-occurrence counts."""

    def __init__(self):
        self.triples: dict[tuple, list] = {}  # key -> [Triple, count]
        self.cooccurrence_counts: dict[tuple[int, str, int], int] = {}
        self._context_totals: dict[tuple[int, str], int] = {}

    def add_triple(self, triple: Triple, count: int = 1) -> None:
        entry = self.triples.get(triple.key())
        if entry is None:
            self.triples[triple.key()] = [triple, count]
        else:
            entry[1] += count

    def iter_triples(self):
        for triple, count in self.triples.values():
            yield triple, count

    def record(self, context: IndexId, dom: Domain, label: IndexId) -> None:
        key = (context.id, dom.name, label.id)
        self.cooccurrence_counts[key] = self.cooccurrence_counts.get(key, 0) + 1
        total_key = (context.id, dom.name)
        self._context_totals[total_key] = self._context_totals.get(total_key, 0) + 1

    def count(self, context: IndexId, dom: Domain, label: IndexId) -> int:
        return self.cooccurrence_counts.get((context.id, dom.name, label.id), 0)

    def total(self, context: IndexId, dom: Domain) -> int:
        return self._context_totals.get((context.id, dom.name), 0)

    def __len__(self) -> int:
        return sum(count for _, count in self.iter_triples())


def record_label_event(kg: KnowledgeGraph, context: IndexId, dom: Domain,
                       label: IndexId) -> None:
    """Count one generated label in its context; backs fact probabilities."""
    kg.record(context, dom, label)


def conditional_probability(kg: KnowledgeGraph, context: IndexId, dom: Domain,
                            label: IndexId) -> float:
    """Empirical P(label | context) within one domain."""
    total = kg.total(context, dom)
    if total == 0:
        raise UndefinedProbabilityError(
            f"no events recorded for context {context.name!r} in domain {dom.name!r}")
    return kg.count(context, dom, label) / total


@dataclass
class SymbolicMatrix:
    """Direct index-to-index weights; decoding with these bypasses embeddings."""

    b: dict[tuple[int, int], float] = field(default_factory=dict)
    b0: dict[int, float] = field(default_factory=dict)

    def get(self, s: IndexId, k: IndexId) -> float:
        return self.b.get((s.id, k.id), 0.0)

    def bias(self, k: IndexId) -> float:
        return self.b0.get(k.id, 0.0)


def symbolic_decode(s: IndexId, dom: Domain, matrix: SymbolicMatrix,
                    temperature: float = 1.0) -> np.ndarray:
    """Softmax over b0_k + b_{s,k}; embeddings are not involved."""
    if len(dom) == 0:
        raise DomainError(f"domain {dom.name!r} is empty")
    logits = np.array([matrix.bias(k) + matrix.get(s, k) for k in dom.members])
    return softmax(logits, temperature)


def fit_symbolic_matrix(kg: KnowledgeGraph, registry: IndexRegistry,
                        smoothing: float = 1.0) -> SymbolicMatrix:
    """Log-count link weights from the recorded label statistics.

    b[s,k] = log(count + smoothing) - log(mean over the domain of the
    smoothed counts), so the symbolic decode of a well-observed context
    approximates its empirical label frequencies.
    """
    matrix = SymbolicMatrix()
    for (ctx_id, dom_name), total in kg._context_totals.items():
        if total == 0:
            continue
        dom = registry.domain(dom_name)
        ctx = registry.get(ctx_id)
        smoothed = np.array([kg.count(ctx, dom, k) + smoothing for k in dom.members])
        center = float(np.log(smoothed.mean()))
        for k, value in zip(dom.members, smoothed):
            matrix.b[(ctx_id, k.id)] = float(np.log(value)) - center
    return matrix


# ---------------------------------------------------------------------------
# Recall pipelines


@dataclass
class RecallConfig:
    """Structure of a recall episode: which domains to decode, how often."""

    first_domains: list[str] = field(default_factory=list)
    block_domains: list[str] = field(default_factory=list)
    rounds_first: int = 2
    rounds_block: int = 4
    blocks: int = 0
    alpha: float = 1.0
    beta: float = 1.0
    temperature: float = 1.0
    seed: int = 0

    @classmethod
    def episodic_defaults(cls, engine: "Engine", n_blocks: int, seed: int) -> "RecallConfig":
        cfg = engine.config
        return cls(first_domains=list(cfg.scene_domains),
                   block_domains=list(cfg.roi_domains),
                   rounds_first=cfg.rounds_scene, rounds_block=cfg.rounds_roi,
                   blocks=n_blocks, alpha=cfg.alpha, beta=cfg.beta,
                   temperature=cfg.temperature, seed=seed)

    @classmethod
    def semantic_defaults(cls, engine: "Engine", seed: int) -> "RecallConfig":
        cfg = engine.config
        attr_domains = [d for d in cfg.roi_domains if d != cfg.entity_domain]
        return cls(first_domains=attr_domains, block_domains=[cfg.relation_domain],
                   rounds_first=cfg.rounds_roi, rounds_block=0, blocks=0,
                   alpha=cfg.alpha, beta=cfg.beta,
                   temperature=cfg.temperature, seed=seed)


def _recall_pipeline(engine: "Engine", initial: list[IndexId], config: RecallConfig,
                     source: TripleSource) -> Trace:
    """Shared recall path: top-down initialization, then label generation.

    Successive initial indices are separated by one evolution step.  No
    sensory input and no attention take part in recall.
    """
    emb, reg = engine.embeddings, engine.registry
    params = UpdateParams(alpha=config.alpha, beta=config.beta,
                          temperature=config.temperature)
    state = RepresentationState.zeros(engine.config.n)
    for i, index in enumerate(initial):
        if i > 0:
            evolve(state, engine.evolution)
        topdown_update(state, emb, index, params)

    trace = Trace(source=source.value)
    trace.episodic_index = initial[-1] if source is TripleSource.EPISODIC_RECALL else None
    trace.snapshot_pre = state.pre.copy()
    trace.snapshot_distributions = snapshot_distributions(engine, state, params.temperature)

    rng = generator(config.seed, "recall")
    step = 0
    for dom in _domain_schedule(reg, config.first_domains, config.rounds_first):
        step = _sample_and_record(trace, state, emb, dom, params, rng,
                                  step, PHASE_SCENE, -1)
    for b in range(config.blocks):
        evolve(state, engine.evolution)
        for dom in _domain_schedule(reg, config.block_domains, config.rounds_block):
            step = _sample_and_record(trace, state, emb, dom, params, rng,
                                      step, PHASE_ROI, b)
    trace.final_pre = state.pre.copy()
    engine.step += 1
    return trace


def episodic_recall(engine: "Engine", t: IndexId,
                    config: RecallConfig | None = None) -> Trace:
    """Restore a stored episode and regenerate labels for it."""
    if t.kind is not IndexKind.EPISODIC:
        raise ParameterError(f"{t.name!r} is not an episodic index")
    engine.embeddings.column(t)  # raises for unregistered indices
    if config is None:
        meta = engine.episodes.entries.get(t.id)
        n_blocks = meta.n_blocks if meta is not None else 1
        seed = engine.rng.call_seed("recall", engine.step)
        config = RecallConfig.episodic_defaults(engine, n_blocks, seed)
    return _recall_pipeline(engine, [t], config, TripleSource.EPISODIC_RECALL)


def prepare_semantic_state(engine: "Engine", s: IndexId,
                           params: UpdateParams | None = None) -> RepresentationState:
    """State after prior restoration, one evolution step, and the concept's update."""
    params = params or engine.update_params()
    state = RepresentationState.zeros(engine.config.n)
    topdown_update(state, engine.embeddings, engine.prior_index, params)
    evolve(state, engine.evolution)
    topdown_update(state, engine.embeddings, s, params)
    return state


def semantic_recall(engine: "Engine", s: IndexId,
                    config: RecallConfig | None = None) -> Trace:
    """Recall what is known about a concept, mirroring the episodic path."""
    if s.kind is not IndexKind.CONCEPT:
        raise ParameterError(f"{s.name!r} is not a concept index")
    engine.embeddings.column(s)
    if config is None:
        seed = engine.rng.call_seed("recall", engine.step)
        config = RecallConfig.semantic_defaults(engine, seed)
    return _recall_pipeline(engine, [engine.prior_index, s], config,
                            TripleSource.SEMANTIC_RECALL)


# ---------------------------------------------------------------------------
# Triple extraction


def triples_from_trace(engine: "Engine", trace: Trace,
                       kg: KnowledgeGraph | None = None,
                       generalized: bool | None = None) -> list[Triple]:
    """Condense a trace into triples and append them to the knowledge graph.

    Within each ROI block the first entity-domain sample becomes the
    subject; every other sampled label yields (subject, type, label).
    Relation-block samples connect the subjects of their member blocks.
    With ``generalized`` every ordered pair of labels in a block also
    yields a statement, so non-entity subjects appear.  Duplicates
    within one trace are dropped.
    """
    cfg = engine.config
    kg = kg if kg is not None else engine.kg
    if generalized is None:
        generalized = cfg.generalized_triples
    source = TripleSource(trace.source)
    time = trace.episodic_index
    type_pred = engine.type_predicate

    triples: list[Triple] = []
    seen: set[tuple] = set()

    def emit(subject: IndexId, predicate: IndexId, obj: IndexId) -> None:
        triple = Triple(subject=subject, predicate=predicate, object=obj,
                        source=source, time=time)
        if triple.key() not in seen:
            seen.add(triple.key())
            triples.append(triple)

    subjects: dict[int, IndexId] = {}
    for block, events in sorted(trace.roi_blocks().items()):
        entity_events = [e for e in events if e.domain == cfg.entity_domain]
        if not entity_events:
            logger.warning("trace block %d has no %s sample; skipping triples",
                           block, cfg.entity_domain)
            continue
        subject = entity_events[0].index
        subjects[block] = subject
        first_entity = entity_events[0]
        for e in events:
            if e is first_entity:
                continue
            emit(subject, type_pred, e.index)
        if generalized:
            for i, left in enumerate(events):
                for right in events[i + 1:]:
                    emit(left.index, type_pred, right.index)

    for rel in trace.relation_blocks:
        subj = subjects.get(rel.subject_block)
        obj = subjects.get(rel.object_block)
        if subj is None or obj is None:
            logger.warning("relation block %d lacks a subject for one member ROI; "
                           "skipping", rel.block)
            continue
        for e in trace.relation_events(rel.block):
            emit(subj, e.index, obj)

    for triple in triples:
        kg.add_triple(triple)
    return triples


def record_trace_events(engine: "Engine", trace: Trace,
                        kg: KnowledgeGraph | None = None) -> int:
    """Record every non-subject ROI label against its block's subject."""
    cfg = engine.config
    kg = kg if kg is not None else engine.kg
    recorded = 0
    for _, events in sorted(trace.roi_blocks().items()):
        entity_events = [e for e in events if e.domain == cfg.entity_domain]
        if not entity_events:
            continue
        subject = entity_events[0].index
        for e in events:
            if e is entity_events[0]:
                continue
            record_label_event(kg, subject, engine.registry.domain(e.domain), e.index)
            recorded += 1
    return recorded


# ---------------------------------------------------------------------------
# Knowledge-graph interchange


def export_kg(kg: KnowledgeGraph, path) -> None:
    """Line-delimited triple records: subject, predicate, object, source, time, count."""
    with open(path, "w", encoding="utf-8") as fh:
        for triple, count in kg.iter_triples():
            record = {
                "subject": triple.subject.name,
                "predicate": triple.predicate.name,
                "object": triple.object.name,
                "source": triple.source.value,
                "time": triple.time.name if triple.time is not None else None,
                "count": count,
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def import_kg(path, registry: IndexRegistry) -> KnowledgeGraph:
    kg = KnowledgeGraph()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            triple = Triple(
                subject=registry.find_by_name(record["subject"]),
                predicate=registry.find_by_name(record["predicate"]),
                object=registry.find_by_name(record["object"]),
                source=TripleSource(record["source"]),
                time=registry.find_by_name(record["time"]) if record["time"] else None,
            )
            kg.add_triple(triple, count=int(record["count"]))
    return kg
