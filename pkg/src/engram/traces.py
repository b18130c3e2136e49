"""Label traces produced by perception and recall pipelines.

A trace records every sampled label in order, grouped into a scene
phase, per-ROI blocks, and relation blocks, together with the full
pre-activation snapshot taken when the episodic anchor of the event was
fixed.  Traces are the sole input to triple extraction and to
self-supervised training, and they export as line-delimited records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .index_layer import IndexId

PHASE_SCENE = "scene"
PHASE_ROI = "roi"
PHASE_RELATION = "relation"


@dataclass
class LabelEvent:
    """One sampled label and the state change its top-down step caused."""

    step: int
    phase: str
    block: int
    domain: str
    index: IndexId
    pre_before: np.ndarray
    pre_after: np.ndarray

    @property
    def pre_norm_before(self) -> float:
        return float(np.linalg.norm(self.pre_before))

    @property
    def pre_norm_after(self) -> float:
        return float(np.linalg.norm(self.pre_after))

    def record(self) -> dict:
        return {
            "step": self.step,
            "phase": self.phase,
            "block": self.block,
            "domain": self.domain,
            "index": self.index.id,
            "name": self.index.name,
            "pre_norm_before": self.pre_norm_before,
            "pre_norm_after": self.pre_norm_after,
        }


@dataclass
class RelationBlock:
    """Which ROI blocks a relation block connects."""

    block: int
    subject_block: int
    object_block: int


@dataclass
class Trace:
    """Ordered label events of one perception or recall episode."""

    source: str
    scene_id: str | None = None
    events: list[LabelEvent] = field(default_factory=list)
    relation_blocks: list[RelationBlock] = field(default_factory=list)
    snapshot_pre: np.ndarray | None = None
    snapshot_distributions: dict[str, np.ndarray] = field(default_factory=dict)
    episodic_index: IndexId | None = None
    roi_episodes: dict[int, IndexId] = field(default_factory=dict)
    final_pre: np.ndarray | None = None
    # Feature payloads kept for training; recall traces leave them None.
    scene_features: np.ndarray | None = None
    roi_features: list[np.ndarray] = field(default_factory=list)
    relation_features: list[np.ndarray] = field(default_factory=list)

    def scene_events(self) -> list[LabelEvent]:
        return [e for e in self.events if e.phase == PHASE_SCENE]

    def roi_blocks(self) -> dict[int, list[LabelEvent]]:
        blocks: dict[int, list[LabelEvent]] = {}
        for e in self.events:
            if e.phase == PHASE_ROI:
                blocks.setdefault(e.block, []).append(e)
        return blocks

    def relation_events(self, block: int) -> list[LabelEvent]:
        return [e for e in self.events
                if e.phase == PHASE_RELATION and e.block == block]

    def records(self) -> list[dict]:
        return [e.record() for e in self.events]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())


def write_trace(trace: Trace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(trace.to_jsonl())
