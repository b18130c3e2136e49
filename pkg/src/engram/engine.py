"""The engine bundles every trainable and symbolic component."""

from __future__ import annotations

import numpy as np

from .config import EngineConfig
from .core_state import EvolutionNetwork
from .errors import UnknownIndexError
from .index_layer import (Domain, EmbeddingStore, IndexId, IndexKind,
                          IndexRegistry, UpdateParams, register_index)
from .memory import EpisodeMeta, EpisodicStore, KnowledgeGraph, SymbolicMatrix
from .perception import Decoder, Encoder, SyntheticWorld
from .rng import RngHub

# Reserved index names; created before any configured member.
TYPE_PREDICATE_NAME = "type"
PRIOR_INDEX_NAME = "__prior__"

_KIND_BY_NAME = {"concept": IndexKind.CONCEPT, "predicate": IndexKind.PREDICATE}


class Engine:
    """Registry, embeddings, networks, knowledge graph, and bookkeeping.

    Construction is fully deterministic given the config: reserved
    indices first (the `type` predicate and the constant-prior index,
    both zero-embedded), then every configured domain member with a
    small random embedding, then encoder/decoder/evolution weights, all
    drawn from the config seed's `init` substream.
    """

    def __init__(self, config: EngineConfig):
        config.validate()
        self.config = config
        self.rng = RngHub(config.seed)
        self.registry = IndexRegistry()
        self.embeddings = EmbeddingStore(config.n)
        self.step = 0

        self.type_predicate = register_index(
            self.registry, self.embeddings, IndexKind.PREDICATE, TYPE_PREDICATE_NAME)
        self.prior_index = register_index(
            self.registry, self.embeddings, IndexKind.EPISODIC, PRIOR_INDEX_NAME)
        self.registry.ensure_domain(config.episodes_domain)

        init_rng = self.rng.stream("init")
        scale = 1.0 / np.sqrt(config.n)
        for spec in config.domains:
            kind = _KIND_BY_NAME[spec.kind]
            for name in spec.members:
                register_index(self.registry, self.embeddings, kind, name,
                               init=init_rng.uniform(-scale, scale, size=config.n),
                               domain=spec.name)

        self.encoder = Encoder.init_random(config.n, config.d, init_rng)
        self.decoder = Decoder.init_random(config.d, config.n, init_rng)
        self.evolution = EvolutionNetwork.init_random(config.n, config.h, init_rng)

        self.kg = KnowledgeGraph()
        self.episodes = EpisodicStore()
        self.symbolic = SymbolicMatrix()

    # -- dimensions and parameters -------------------------------------

    @property
    def n(self) -> int:
        return self.config.n

    @property
    def d(self) -> int:
        return self.config.d

    @property
    def abar(self) -> np.ndarray:
        """The constant prior embedding (a live view into the store)."""
        return self.embeddings.a[:, self.prior_index.id]

    def update_params(self) -> UpdateParams:
        return UpdateParams(alpha=self.config.alpha, beta=self.config.beta,
                            temperature=self.config.temperature)

    # -- lookups --------------------------------------------------------

    def domain(self, name: str) -> Domain:
        return self.registry.domain(name)

    def concept(self, name: str) -> IndexId:
        return self.registry.find(IndexKind.CONCEPT, name)

    def predicate(self, name: str) -> IndexId:
        return self.registry.find(IndexKind.PREDICATE, name)

    def episode(self, name: str) -> IndexId:
        index = self.registry.find(IndexKind.EPISODIC, name)
        if index.id not in self.episodes.entries:
            raise UnknownIndexError(f"{name!r} is not a recorded episode")
        return index

    def index_by_name(self, name: str) -> IndexId:
        return self.registry.find_by_name(name)

    # -- episodic bookkeeping --------------------------------------------

    def register_episode(self, index: IndexId, scene_id: str | None = None,
                         n_blocks: int = 0, tag: str = "") -> None:
        self.episodes.add(EpisodeMeta(index=index, creation_step=self.step,
                                      tag=tag, scene_id=scene_id, n_blocks=n_blocks))

    def register_roi_episode(self, index: IndexId, scene_id: str, block: int) -> None:
        self.register_episode(index, scene_id=None, n_blocks=0,
                              tag=f"{scene_id}:roi{block}")
        self.episodes.add_roi(index, scene_id, block)

    # -- world ------------------------------------------------------------

    def build_world(self, noise_sigma: float | None = None,
                    seed: int | None = None) -> SyntheticWorld:
        sigma = self.config.world_noise_sigma if noise_sigma is None else noise_sigma
        seed = self.config.seed if seed is None else seed
        return SyntheticWorld.generate(self.registry, self.config.d, sigma, seed)
