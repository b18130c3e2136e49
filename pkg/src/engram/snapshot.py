"""Bit-exact engine snapshots.

The container is canonical JSON (sorted keys) with every float64 array
base64-encoded in little-endian byte order, so save -> load -> save
reproduces identical bytes and all numeric state round-trips exactly.
"""

from __future__ import annotations

import base64
import binascii
import json

import numpy as np

from .config import EngineConfig
from .core_state import EvolutionNetwork
from .engine import Engine
from .errors import SnapshotError
from .index_layer import Domain, EmbeddingStore, IndexId, IndexKind, IndexRegistry
from .memory import (EpisodeMeta, EpisodicStore, KnowledgeGraph, SymbolicMatrix,
                     Triple, TripleSource)
from .perception import Decoder, Encoder
from .rng import RngHub

SNAPSHOT_VERSION = 1


def _encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape),
            "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"].encode("ascii"), validate=True)
    arr = np.frombuffer(raw, dtype="<f8")
    expected = int(np.prod(obj["shape"])) if obj["shape"] else 1
    if arr.size != expected:
        raise SnapshotError("array payload length does not match its shape")
    return arr.reshape(obj["shape"]).astype(np.float64, copy=True)


def _registry_payload(engine: Engine) -> dict:
    reg = engine.registry
    return {
        "indices": [[ix.id, ix.kind.value, ix.name] for ix in reg.indices],
        "domains": [{"name": dom.name, "members": [m.id for m in dom.members]}
                    for dom in reg.domains.values()],
    }


def _kg_payload(kg: KnowledgeGraph) -> dict:
    triples = []
    for triple, count in kg.iter_triples():
        time_id = triple.time.id if triple.time is not None else None
        triples.append([triple.subject.id, triple.predicate.id, triple.object.id,
                        triple.source.value, time_id, count])
    counts = [[ctx, dom, label, c]
              for (ctx, dom, label), c in kg.cooccurrence_counts.items()]
    return {"triples": triples, "counts": counts}


def snapshot_payload(engine: Engine) -> dict:
    emb = engine.embeddings
    return {
        "version": SNAPSHOT_VERSION,
        "config": engine.config.to_dict(),
        "step": engine.step,
        "reserved": {"type_predicate": engine.type_predicate.id,
                     "prior_index": engine.prior_index.id},
        "registry": _registry_payload(engine),
        "embeddings": {"a": _encode_array(emb.a), "a0": _encode_array(emb.a0)},
        "encoder": {"w": _encode_array(engine.encoder.w),
                    "b": _encode_array(engine.encoder.b)},
        "decoder": {"w": _encode_array(engine.decoder.w),
                    "b": _encode_array(engine.decoder.b)},
        "evolution": {"w_in": _encode_array(engine.evolution.w_in),
                      "b_hidden": _encode_array(engine.evolution.b_hidden),
                      "w_out": _encode_array(engine.evolution.w_out),
                      "b_out": _encode_array(engine.evolution.b_out)},
        "symbolic": {
            "b": [[s, k, v] for (s, k), v in engine.symbolic.b.items()],
            "b0": [[k, v] for k, v in engine.symbolic.b0.items()],
        },
        "knowledge_graph": _kg_payload(engine.kg),
        "episodes": {
            "entries": [[m.index.id, m.creation_step, m.tag, m.scene_id, m.n_blocks]
                        for m in engine.episodes.entries.values()],
            "by_scene_roi": [[scene, block, ix.id] for (scene, block), ix
                             in engine.episodes._by_scene_roi.items()],
        },
    }


def save_snapshot(engine: Engine, path) -> None:
    payload = snapshot_payload(engine)
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _restore_engine(payload: dict) -> Engine:
    config = EngineConfig.from_dict(payload["config"])
    engine: Engine = object.__new__(Engine)
    engine.config = config
    engine.rng = RngHub(config.seed)
    engine.step = int(payload["step"])

    registry = IndexRegistry()
    for id_, kind, name in payload["registry"]["indices"]:
        index = registry.create(IndexKind(kind), name)
        if index.id != id_:
            raise SnapshotError("registry ids are not contiguous")
    for dom in payload["registry"]["domains"]:
        registry.ensure_domain(dom["name"])
        for member_id in dom["members"]:
            registry.add_to_domain(registry.get(member_id), dom["name"])
    engine.registry = registry

    emb = EmbeddingStore(config.n)
    emb.a = _decode_array(payload["embeddings"]["a"])
    emb.a0 = _decode_array(payload["embeddings"]["a0"])
    if emb.a.shape != (config.n, len(registry)) or emb.a0.shape != (len(registry),):
        raise SnapshotError("embedding payload does not match the registry")
    engine.embeddings = emb

    engine.encoder = Encoder(w=_decode_array(payload["encoder"]["w"]),
                             b=_decode_array(payload["encoder"]["b"]))
    engine.decoder = Decoder(w=_decode_array(payload["decoder"]["w"]),
                             b=_decode_array(payload["decoder"]["b"]))
    engine.evolution = EvolutionNetwork(
        w_in=_decode_array(payload["evolution"]["w_in"]),
        b_hidden=_decode_array(payload["evolution"]["b_hidden"]),
        w_out=_decode_array(payload["evolution"]["w_out"]),
        b_out=_decode_array(payload["evolution"]["b_out"]))

    engine.type_predicate = registry.get(payload["reserved"]["type_predicate"])
    engine.prior_index = registry.get(payload["reserved"]["prior_index"])

    symbolic = SymbolicMatrix()
    for s, k, v in payload["symbolic"]["b"]:
        symbolic.b[(int(s), int(k))] = float(v)
    for k, v in payload["symbolic"]["b0"]:
        symbolic.b0[int(k)] = float(v)
    engine.symbolic = symbolic

    kg = KnowledgeGraph()
    for s, p, o, source, time_id, count in payload["knowledge_graph"]["triples"]:
        kg.add_triple(Triple(subject=registry.get(s), predicate=registry.get(p),
                             object=registry.get(o), source=TripleSource(source),
                             time=registry.get(time_id) if time_id is not None else None),
                      count=int(count))
    for ctx, dom, label, count in payload["knowledge_graph"]["counts"]:
        key = (int(ctx), str(dom), int(label))
        kg.cooccurrence_counts[key] = int(count)
        total_key = (int(ctx), str(dom))
        kg._context_totals[total_key] = kg._context_totals.get(total_key, 0) + int(count)
    engine.kg = kg

    episodes = EpisodicStore()
    for id_, creation_step, tag, scene_id, n_blocks in payload["episodes"]["entries"]:
        episodes.add(EpisodeMeta(index=registry.get(id_), creation_step=creation_step,
                                 tag=tag, scene_id=scene_id, n_blocks=n_blocks))
    for scene, block, id_ in payload["episodes"]["by_scene_roi"]:
        episodes.add_roi(registry.get(id_), scene, int(block))
    engine.episodes = episodes
    return engine


def clone_engine(engine: Engine) -> Engine:
    """Independent deep copy via an in-memory snapshot round trip."""
    return _restore_engine(json.loads(json.dumps(snapshot_payload(engine))))


def load_snapshot(path) -> Engine:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SnapshotError(f"corrupt snapshot payload: {exc}") from exc
    if not isinstance(payload, dict) or "version" not in payload:
        raise SnapshotError("corrupt snapshot payload: missing version field")
    if payload["version"] != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {payload['version']}")
    try:
        return _restore_engine(payload)
    except (KeyError, TypeError, ValueError, binascii.Error) as exc:
        raise SnapshotError(f"corrupt snapshot payload: {exc}") from exc
