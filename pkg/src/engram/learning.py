"""Self-supervised training on self-generated labels.

Each training event scores an ordered label sequence against a
conditioning base that mirrors the state the pipeline was in when those
labels were sampled:

* perception: encoded ROI + encoded scene + evolution step on the scene,
* episodic:   the episode embedding + an evolution step on it,
* semantic:   the constant prior embedding + an evolution step on it,
  with the concept embedding added unscored in front.

Every scored label conditions the next one by adding its embedding, so
the losses are order-sensitive by construction.  Gradients are exact
reverse-mode derivatives of these objectives (plus an optional
reconstruction term and L1 penalty) and are verified against central
finite differences.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .core_state import sigmoid
from .errors import ConfigurationError
from .index_layer import (EmbeddingStore, IndexId, IndexKind, IndexRegistry,
                          register_index)
from .perception import perceive_scene
from .traces import Trace

if TYPE_CHECKING:
    from .engine import Engine
    from .config import TrainConfig
    from .perception import Decoder, SceneInstance
    from .core_state import RepresentationState


class Mode(enum.Enum):
    PERCEPTION = "perception"
    EPISODIC = "episodic"
    SEMANTIC = "semantic"


@dataclass
class TrainEvent:
    """One scored label sequence plus its conditioning inputs."""

    mode: Mode
    labels: list[tuple[str, IndexId]]
    scene_features: np.ndarray | None = None
    roi_features: np.ndarray | None = None
    episode: IndexId | None = None
    roi_episode: IndexId | None = None
    prefix: list[IndexId] = field(default_factory=list)
    recon_target: np.ndarray | None = None
    recon_weight: float = 0.0
    weight: float = 1.0


@dataclass
class LossSpec:
    """A batch of training events plus global loss settings."""

    events: list[TrainEvent]
    temperature: float = 1.0
    l1_embedding: float = 0.0


@dataclass
class GradientSet:
    """Gradients of the summed objective; shapes mirror the parameters."""

    d_embeddings: np.ndarray
    d_a0: np.ndarray
    d_enc_w: np.ndarray
    d_enc_b: np.ndarray
    d_dec_w: np.ndarray
    d_dec_b: np.ndarray
    d_evo_w_in: np.ndarray
    d_evo_b_hidden: np.ndarray
    d_evo_w_out: np.ndarray
    d_evo_b_out: np.ndarray
    d_abar: np.ndarray | None = None

    @classmethod
    def zeros_like(cls, engine: "Engine") -> "GradientSet":
        emb, enc, dec, evo = (engine.embeddings, engine.encoder,
                              engine.decoder, engine.evolution)
        return cls(
            d_embeddings=np.zeros_like(emb.a),
            d_a0=np.zeros_like(emb.a0),
            d_enc_w=np.zeros_like(enc.w),
            d_enc_b=np.zeros_like(enc.b),
            d_dec_w=np.zeros_like(dec.w),
            d_dec_b=np.zeros_like(dec.b),
            d_evo_w_in=np.zeros_like(evo.w_in),
            d_evo_b_hidden=np.zeros_like(evo.b_hidden),
            d_evo_w_out=np.zeros_like(evo.w_out),
            d_evo_b_out=np.zeros_like(evo.b_out),
        )

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "embeddings": self.d_embeddings,
            "a0": self.d_a0,
            "enc_w": self.d_enc_w,
            "enc_b": self.d_enc_b,
            "dec_w": self.d_dec_w,
            "dec_b": self.d_dec_b,
            "evo_w_in": self.d_evo_w_in,
            "evo_b_hidden": self.d_evo_b_hidden,
            "evo_w_out": self.d_evo_w_out,
            "evo_b_out": self.d_evo_b_out,
        }

    def norms(self) -> dict[str, float]:
        return {name: float(np.linalg.norm(a)) for name, a in self.arrays().items()}


def _parameter_arrays(engine: "Engine") -> dict[str, np.ndarray]:
    return {
        "embeddings": engine.embeddings.a,
        "a0": engine.embeddings.a0,
        "enc_w": engine.encoder.w,
        "enc_b": engine.encoder.b,
        "dec_w": engine.decoder.w,
        "dec_b": engine.decoder.b,
        "evo_w_in": engine.evolution.w_in,
        "evo_b_hidden": engine.evolution.b_hidden,
        "evo_w_out": engine.evolution.w_out,
        "evo_b_out": engine.evolution.b_out,
    }


# ---------------------------------------------------------------------------
# Forward / backward for one event


def _evolution_forward(engine: "Engine", gamma: np.ndarray):
    evo = engine.evolution
    hidden = sigmoid(evo.w_in @ gamma + evo.b_hidden)
    return evo.w_out @ hidden + evo.b_out, hidden


def _evolution_backward(engine: "Engine", grads: GradientSet, d_out: np.ndarray,
                        gamma: np.ndarray, hidden: np.ndarray) -> np.ndarray:
    """Accumulate network gradients; returns the gradient w.r.t. gamma."""
    evo = engine.evolution
    grads.d_evo_w_out += np.outer(d_out, hidden)
    grads.d_evo_b_out += d_out
    d_hidden = evo.w_out.T @ d_out
    d_z = d_hidden * hidden * (1.0 - hidden)
    grads.d_evo_w_in += np.outer(d_z, gamma)
    grads.d_evo_b_hidden += d_z
    return evo.w_in.T @ d_z


def _event_run(engine: "Engine", ev: TrainEvent, temperature: float,
               grads: GradientSet | None = None) -> tuple[float, float]:
    """Evaluate one event; optionally accumulate gradients.

    Returns (label negative log-likelihood, reconstruction term), both
    already scaled by the event weight.
    """
    emb, reg = engine.embeddings, engine.registry
    T = temperature

    # Conditioning base h.
    anchor: IndexId | None = None
    gamma_in = hidden = None
    if ev.mode is Mode.PERCEPTION:
        if ev.scene_features is None:
            raise ConfigurationError("perception event requires scene features")
        e_scene = engine.encoder.w @ ev.scene_features + engine.encoder.b
        if ev.roi_features is not None:
            gamma_in = sigmoid(e_scene)
            f_out, hidden = _evolution_forward(engine, gamma_in)
            e_roi = engine.encoder.w @ ev.roi_features + engine.encoder.b
            h = e_roi + e_scene + f_out
        else:
            h = e_scene  # scene-level labels decode before any evolution step
    else:
        anchor = ev.episode if ev.mode is Mode.EPISODIC else engine.prior_index
        if anchor is None:
            raise ConfigurationError("episodic event requires an episode index")
        a_anchor = emb.a[:, anchor.id]
        gamma_in = sigmoid(a_anchor)
        f_out, hidden = _evolution_forward(engine, gamma_in)
        h = a_anchor + f_out
        if ev.mode is Mode.EPISODIC and ev.roi_episode is not None:
            h = h + emb.a[:, ev.roi_episode.id]

    # Label chain: each scored label conditions on h plus all previous
    # embeddings (prefix indices condition without being scored).
    u = h.copy()
    for p in ev.prefix:
        u = u + emb.a[:, p.id]
    steps = []
    nll = 0.0
    for dom_name, label in ev.labels:
        dom = reg.domain(dom_name)
        cols = dom.columns()
        gamma = sigmoid(u)
        logit = (emb.a0[cols] + emb.a[:, cols].T @ gamma) / T
        m = logit.max()
        shifted = logit - m
        exp_shifted = np.exp(shifted)
        nll += m + np.log(exp_shifted.sum()) - logit[dom.position(label)]
        if grads is not None:
            steps.append((cols, dom.position(label), gamma,
                          exp_shifted / exp_shifted.sum()))
        u = u + emb.a[:, label.id]

    recon = 0.0
    gamma0 = resid = None
    if ev.recon_target is not None and ev.recon_weight != 0.0:
        gamma0 = sigmoid(h)
        resid = engine.decoder.w @ gamma0 + engine.decoder.b - ev.recon_target
        recon = 0.5 * float(resid @ resid)

    if grads is None:
        return ev.weight * nll, ev.weight * ev.recon_weight * recon

    # Backward pass.  carry holds dL/du_j flowing back through the chain.
    carry = np.zeros(emb.n)
    for (dom_name, label), (cols, pos, gamma, probs) in zip(reversed(ev.labels),
                                                            reversed(steps)):
        grads.d_embeddings[:, label.id] += carry
        d_logit = ev.weight * probs / T
        d_logit[pos] -= ev.weight / T
        grads.d_a0[cols] += d_logit
        grads.d_embeddings[:, cols] += np.outer(gamma, d_logit)
        d_gamma = emb.a[:, cols] @ d_logit
        carry = carry + d_gamma * gamma * (1.0 - gamma)
    for p in ev.prefix:
        grads.d_embeddings[:, p.id] += carry

    d_h = carry
    if resid is not None:
        w_rec = ev.weight * ev.recon_weight
        grads.d_dec_w += w_rec * np.outer(resid, gamma0)
        grads.d_dec_b += w_rec * resid
        d_gamma0 = w_rec * (engine.decoder.w.T @ resid)
        d_h = d_h + d_gamma0 * gamma0 * (1.0 - gamma0)

    if ev.mode is Mode.PERCEPTION:
        if ev.roi_features is not None:
            grads.d_enc_w += np.outer(d_h, ev.roi_features)
            grads.d_enc_b += d_h
            d_gamma_in = _evolution_backward(engine, grads, d_h, gamma_in, hidden)
            d_e_scene = d_h + d_gamma_in * gamma_in * (1.0 - gamma_in)
        else:
            d_e_scene = d_h
        grads.d_enc_w += np.outer(d_e_scene, ev.scene_features)
        grads.d_enc_b += d_e_scene
    else:
        d_gamma_in = _evolution_backward(engine, grads, d_h, gamma_in, hidden)
        grads.d_embeddings[:, anchor.id] += d_h + d_gamma_in * gamma_in * (1.0 - gamma_in)
        if ev.mode is Mode.EPISODIC and ev.roi_episode is not None:
            grads.d_embeddings[:, ev.roi_episode.id] += d_h

    return ev.weight * nll, ev.weight * ev.recon_weight * recon


# ---------------------------------------------------------------------------
# Public loss surfaces


def loss_perception(engine: "Engine", roi_features: np.ndarray,
                    scene_features: np.ndarray, labels: list[tuple[str, IndexId]],
                    temperature: float = 1.0) -> float:
    """Negative log-likelihood of an ordered ROI label sequence."""
    if not labels:
        raise ValueError("labels must be a non-empty ordered list")
    ev = TrainEvent(mode=Mode.PERCEPTION, labels=list(labels),
                    scene_features=np.asarray(scene_features, dtype=np.float64),
                    roi_features=np.asarray(roi_features, dtype=np.float64))
    nll, _ = _event_run(engine, ev, temperature)
    return nll


def loss_episodic(engine: "Engine", t: IndexId, labels: list[tuple[str, IndexId]],
                  temperature: float = 1.0, roi_episode: IndexId | None = None) -> float:
    """Negative log-likelihood of labels conditioned on a stored episode."""
    if not labels:
        raise ValueError("labels must be a non-empty ordered list")
    ev = TrainEvent(mode=Mode.EPISODIC, labels=list(labels), episode=t,
                    roi_episode=roi_episode)
    nll, _ = _event_run(engine, ev, temperature)
    return nll


def loss_semantic(engine: "Engine", s: IndexId, labels: list[tuple[str, IndexId]],
                  temperature: float = 1.0) -> float:
    """Negative log-likelihood of labels conditioned on a concept and the prior."""
    if not labels:
        raise ValueError("labels must be a non-empty ordered list")
    ev = TrainEvent(mode=Mode.SEMANTIC, labels=list(labels), prefix=[s])
    nll, _ = _event_run(engine, ev, temperature)
    return nll


def loss_reconstruction(features: np.ndarray, state: "RepresentationState",
                        decoder: "Decoder") -> float:
    """Half squared error between features and their reconstruction."""
    features = np.asarray(features, dtype=np.float64)
    resid = decoder.forward(state.post) - features
    return 0.5 * float(resid @ resid)


def total_loss(engine: "Engine", spec: LossSpec) -> float:
    total = 0.0
    for ev in spec.events:
        nll, recon = _event_run(engine, ev, spec.temperature)
        total += nll + recon
    if spec.l1_embedding:
        total += spec.l1_embedding * float(np.abs(engine.embeddings.a).sum())
    return total


def mode_losses(engine: "Engine", spec: LossSpec) -> dict[str, float]:
    """Per-mode loss decomposition (reconstruction reported separately)."""
    out = {m.value: 0.0 for m in Mode}
    out["reconstruction"] = 0.0
    for ev in spec.events:
        nll, recon = _event_run(engine, ev, spec.temperature)
        out[ev.mode.value] += nll
        out["reconstruction"] += recon
    out["l1"] = spec.l1_embedding * float(np.abs(engine.embeddings.a).sum()) \
        if spec.l1_embedding else 0.0
    out["total"] = sum(out.values())
    return out


def gradients(engine: "Engine", spec: LossSpec) -> GradientSet:
    """Exact analytic gradients of the summed objective."""
    grads = GradientSet.zeros_like(engine)
    for ev in spec.events:
        _event_run(engine, ev, spec.temperature, grads)
    if spec.l1_embedding:
        grads.d_embeddings += spec.l1_embedding * np.sign(engine.embeddings.a)
    grads.d_abar = grads.d_embeddings[:, engine.prior_index.id].copy()
    return grads


def finite_difference_gradients(engine: "Engine", spec: LossSpec,
                                eps: float = 1e-5) -> GradientSet:
    """Central-difference gradients; the independent oracle for `gradients`."""
    grads = GradientSet.zeros_like(engine)
    targets = grads.arrays()
    for name, param in _parameter_arrays(engine).items():
        out = targets[name]
        flat_param = param.reshape(-1)
        flat_out = out.reshape(-1)
        for i in range(flat_param.size):
            saved = flat_param[i]
            flat_param[i] = saved + eps
            loss_plus = total_loss(engine, spec)
            flat_param[i] = saved - eps
            loss_minus = total_loss(engine, spec)
            flat_param[i] = saved
            flat_out[i] = (loss_plus - loss_minus) / (2.0 * eps)
    grads.d_abar = grads.d_embeddings[:, engine.prior_index.id].copy()
    return grads


def gradient_check(engine: "Engine", spec: LossSpec, eps: float = 1e-5,
                   floor: float = 1e-4) -> float:
    """Max relative error between analytic and finite-difference gradients.

    The denominator is floored so parameters with (near-)zero gradient
    compare on an absolute scale instead of amplifying rounding noise.
    """
    analytic = gradients(engine, spec)
    numeric = finite_difference_gradients(engine, spec, eps)
    worst = 0.0
    for name, a in analytic.arrays().items():
        f = numeric.arrays()[name]
        denom = np.maximum(np.abs(a) + np.abs(f), floor)
        worst = max(worst, float((np.abs(a - f) / denom).max()))
    return worst


def apply_gradients(engine: "Engine", grads: GradientSet, learning_rate: float) -> None:
    """One plain gradient-descent step on every parameter."""
    for name, param in _parameter_arrays(engine).items():
        param -= learning_rate * grads.arrays()[name]


# ---------------------------------------------------------------------------
# Index creation


def create_index(registry: IndexRegistry, emb: EmbeddingStore, kind: IndexKind,
                 name: str, init: np.ndarray | None = None,
                 domain: str | None = None) -> IndexId:
    """Introduce a new index with a zero or given embedding column."""
    return register_index(registry, emb, kind, name, init=init, domain=domain)


# ---------------------------------------------------------------------------
# Self-supervised rounds


@dataclass
class TrainReport:
    step: int
    loss_before: dict[str, float]
    loss_after: dict[str, float]
    grad_norms: dict[str, float]
    episodic_index: str | None = None
    grad_check_error: float | None = None

    def record(self) -> dict:
        rec = {"step": self.step, "episode": self.episodic_index}
        rec.update({f"loss_before_{k}": v for k, v in sorted(self.loss_before.items())})
        rec.update({f"loss_after_{k}": v for k, v in sorted(self.loss_after.items())})
        rec.update({f"grad_norm_{k}": v for k, v in sorted(self.grad_norms.items())})
        if self.grad_check_error is not None:
            rec["grad_check_error"] = self.grad_check_error
        return rec


def build_loss_spec(engine: "Engine", trace: Trace,
                    config: "TrainConfig | None" = None) -> LossSpec:
    """Turn a perception trace's sampled labels into training events."""
    cfg = config if config is not None else engine.config.learning
    ecfg = engine.config
    events: list[TrainEvent] = []
    t = trace.episodic_index
    w_recon = cfg.reconstruction_weight

    scene_labels = [(e.domain, e.index) for e in trace.scene_events()]
    if (scene_labels or w_recon) and cfg.perception_weight:
        events.append(TrainEvent(
            mode=Mode.PERCEPTION, labels=scene_labels,
            scene_features=trace.scene_features,
            recon_target=trace.scene_features if w_recon else None,
            recon_weight=w_recon, weight=cfg.perception_weight))
    if t is not None and scene_labels and cfg.episodic_weight:
        events.append(TrainEvent(mode=Mode.EPISODIC, labels=scene_labels,
                                 episode=t, weight=cfg.episodic_weight))

    subjects: dict[int, IndexId] = {}
    for block, block_events in sorted(trace.roi_blocks().items()):
        labels = [(e.domain, e.index) for e in block_events]
        if cfg.perception_weight:
            events.append(TrainEvent(
                mode=Mode.PERCEPTION, labels=labels,
                scene_features=trace.scene_features,
                roi_features=trace.roi_features[block],
                recon_target=trace.roi_features[block] if w_recon else None,
                recon_weight=w_recon, weight=cfg.perception_weight))
        if t is not None and cfg.episodic_weight:
            events.append(TrainEvent(
                mode=Mode.EPISODIC, labels=labels, episode=t,
                roi_episode=trace.roi_episodes.get(block),
                weight=cfg.episodic_weight))
        entity_events = [e for e in block_events if e.domain == ecfg.entity_domain]
        if entity_events:
            subject = entity_events[0].index
            subjects[block] = subject
            rest = [(e.domain, e.index) for e in block_events
                    if e is not entity_events[0]]
            if rest and cfg.semantic_weight:
                events.append(TrainEvent(mode=Mode.SEMANTIC, labels=rest,
                                         prefix=[subject], weight=cfg.semantic_weight))

    for rel in trace.relation_blocks:
        subj = subjects.get(rel.subject_block)
        obj = subjects.get(rel.object_block)
        rel_labels = [(e.domain, e.index) for e in trace.relation_events(rel.block)]
        if subj is None or obj is None or not rel_labels:
            continue
        labels = rel_labels + [(ecfg.entity_domain, obj)]
        if cfg.perception_weight:
            events.append(TrainEvent(
                mode=Mode.PERCEPTION, labels=labels,
                scene_features=trace.scene_features,
                roi_features=trace.relation_features[rel.block],
                prefix=[subj], weight=cfg.perception_weight))
        if t is not None and cfg.episodic_weight:
            events.append(TrainEvent(mode=Mode.EPISODIC, labels=labels, episode=t,
                                     prefix=[subj], weight=cfg.episodic_weight))
        if cfg.semantic_weight:
            events.append(TrainEvent(mode=Mode.SEMANTIC, labels=labels,
                                     prefix=[subj], weight=cfg.semantic_weight))

    return LossSpec(events=events, temperature=cfg.temperature,
                    l1_embedding=cfg.l1_embedding)


def self_supervised_round(engine: "Engine", scene: "SceneInstance",
                          config: "TrainConfig | None" = None) -> TrainReport:
    """Perceive a scene, treat the sampled labels as targets, take a step."""
    cfg = config if config is not None else engine.config.learning
    trace = perceive_scene(engine, scene)
    spec = build_loss_spec(engine, trace, cfg)
    before = mode_losses(engine, spec)
    grads = gradients(engine, spec)
    norms = grads.norms()
    steps = max(1, cfg.rounds_per_event)
    for i in range(steps):
        apply_gradients(engine, grads, cfg.learning_rate)
        if i + 1 < steps:
            grads = gradients(engine, spec)
    after = mode_losses(engine, spec)
    report = TrainReport(
        step=engine.step, loss_before=before, loss_after=after,
        grad_norms=norms,
        episodic_index=trace.episodic_index.name if trace.episodic_index else None)
    if cfg.grad_check:
        report.grad_check_error = gradient_check(engine, spec)
    return report
