"""engram: a subsymbolic workspace coupled to a symbolic index layer.

The package models perception, episodic and semantic memory, triple
extraction, and self-supervised embedding learning on top of two
layers: a sigmoid representation layer whose activation vector is the
momentary cognitive state, and an index layer of localized symbols tied
to it through shared embedding columns.
"""

from .config import DomainSpec, EngineConfig, TrainConfig, default_config
from .core_state import (BernoulliSample, EvolutionNetwork, RepresentationState,
                         activate, evolve, pcbs_log_prob, pcbs_sample, sigmoid)
from .engine import Engine
from .index_layer import (Domain, EmbeddingStore, IndexId, IndexKind,
                          IndexRegistry, UpdateParams, attention_update,
                          decode_distribution, input_and_attention, logits,
                          multi_sample_update, sample_index, softmax,
                          topdown_update)
from .perception import (Decoder, Encoder, RoiSpec, SceneInstance, SceneSpec,
                         SyntheticWorld, associative_warm_start, encode_input,
                         form_episodic_index, generate_scene, perceive_scene,
                         reconstruct)

__version__ = "0.1.0"

__all__ = [
    "BernoulliSample", "Decoder", "Domain", "DomainSpec", "EmbeddingStore",
    "Encoder", "Engine", "EngineConfig", "EvolutionNetwork", "IndexId",
    "IndexKind", "IndexRegistry", "RepresentationState", "RoiSpec",
    "SceneInstance", "SceneSpec", "SyntheticWorld", "TrainConfig",
    "UpdateParams", "activate", "associative_warm_start", "attention_update",
    "decode_distribution", "default_config", "encode_input", "evolve",
    "form_episodic_index", "generate_scene", "input_and_attention", "logits",
    "multi_sample_update", "pcbs_log_prob", "pcbs_sample", "perceive_scene",
    "reconstruct", "sample_index", "sigmoid", "softmax", "topdown_update",
]
