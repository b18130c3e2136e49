"""Synthetic world, encoder/decoder, and the perception pipeline."""

import copy

import numpy as np
import pytest

from conftest import PARK_SCENE, SPARKY_SCENE, build_sparky_engine, fresh, small_config
from engram.core_state import EvolutionNetwork, RepresentationState, activate, evolve
from engram.engine import Engine
from engram.errors import ConfigurationError, UnknownIndexError
from engram.index_layer import (IndexKind, UpdateParams, decode_distribution,
                                input_and_attention, sample_index_rng,
                                topdown_update)
from engram.perception import (Decoder, Encoder, RoiSpec, SceneSpec,
                               SyntheticWorld, encode_input, form_episodic_index,
                               generate_scene, perceive_scene, reconstruct)
from engram.rng import generator


@pytest.fixture
def world_engine():
    engine = Engine(small_config(seed=2))
    return engine, engine.build_world()


class TestSyntheticWorld:
    def test_generation_deterministic(self, world_engine):
        engine, world = world_engine
        again = SyntheticWorld.generate(engine.registry, engine.d, 0.0,
                                        engine.config.seed)
        for id_, sig in world.signatures.items():
            assert np.array_equal(sig, again.signatures[id_])

    def test_episodic_indices_have_no_signature(self, world_engine):
        engine, world = world_engine
        with pytest.raises(UnknownIndexError):
            world.signature(engine.prior_index)

    def test_single_concept_roi_equals_signature(self, world_engine):
        engine, world = world_engine
        spec = SceneSpec("s", [], [RoiSpec("E1", [])], [])
        scene = generate_scene(world, spec, 3)
        assert np.array_equal(scene.rois[0].features,
                              world.signature_by_name("E1"))

    def test_roi_features_additive(self, world_engine):
        engine, world = world_engine
        spec = SceneSpec("s", [], [RoiSpec("E1", ["C1", "X2"])], [])
        scene = generate_scene(world, spec, 3)
        expected = (world.signature_by_name("E1") + world.signature_by_name("C1")
                    + world.signature_by_name("X2"))
        assert np.array_equal(scene.rois[0].features, expected)

    def test_noise_standard_deviation(self, world_engine):
        engine, world = world_engine
        noisy = SyntheticWorld.generate(engine.registry, engine.d, 0.1,
                                        engine.config.seed)
        spec = SceneSpec("s", [], [RoiSpec("E1", [])], [])
        base = world.signature_by_name("E1")
        residuals = []
        for seed in range(1000):
            scene = generate_scene(noisy, spec, seed)
            residuals.append(scene.rois[0].features - base)
        std = np.asarray(residuals).std()
        assert abs(std - 0.1) < 0.01

    def test_scene_features_composition(self, world_engine):
        engine, world = world_engine
        spec = SceneSpec("s", ["X1"], [RoiSpec("E1", []), RoiSpec("E2", [])], [])
        scene = generate_scene(world, spec, 3)
        expected = (world.signature_by_name("E1") + world.signature_by_name("E2")) / 2 \
            + world.signature_by_name("X1")
        assert np.allclose(scene.scene_features, expected, atol=1e-15)

    def test_relation_roi_composition(self, world_engine):
        engine, world = world_engine
        spec = SceneSpec("s", [], [RoiSpec("E1", []), RoiSpec("E2", [])],
                         [(0, "p1", 1)])
        scene = generate_scene(world, spec, 3)
        rel = scene.relation_rois[0]
        expected = (scene.rois[0].features + scene.rois[1].features
                    + world.signature_by_name("p1"))
        assert np.array_equal(rel.features, expected)
        assert ("E1", "p1", "E2") in scene.ground_truth

    def test_unknown_concept_rejected(self, world_engine):
        engine, world = world_engine
        with pytest.raises(UnknownIndexError):
            generate_scene(world, SceneSpec("s", [], [RoiSpec("nope", [])], []), 0)


class TestEncodeInput:
    def test_zero_features_zero_bias_identity(self):
        enc = Encoder.zeros(3, 4)
        state = RepresentationState(pre=np.array([1.0, 2.0, 3.0]))
        before = state.pre.copy()
        encode_input(state, enc, np.zeros(4))
        assert np.array_equal(state.pre, before)

    def test_identity_block_adds_features(self):
        enc = Encoder(w=np.eye(4), b=np.zeros(4))
        state = RepresentationState.zeros(4)
        f = np.array([0.1, -0.2, 0.3, 0.4])
        encode_input(state, enc, f)
        assert np.array_equal(state.pre, f)

    def test_matches_matvec_oracle(self):
        rng = generator(31, "enc")
        enc = Encoder(w=rng.normal(0.0, 1.0, (5, 7)), b=rng.normal(0.0, 0.2, 5))
        f = rng.normal(0.0, 1.0, 7)
        state = RepresentationState(pre=rng.normal(0.0, 1.0, 5))
        before = state.pre.copy()
        encode_input(state, enc, f)
        expected = before.copy()
        for i in range(5):
            expected[i] += enc.b[i] + sum(enc.w[i, j] * f[j] for j in range(7))
        assert np.abs(state.pre - expected).max() < 1e-12

    def test_dimension_mismatch(self):
        with pytest.raises(ConfigurationError):
            encode_input(RepresentationState.zeros(3), Encoder.zeros(3, 4),
                         np.zeros(5))


class TestReconstruct:
    def test_zero_decoder_returns_zero(self):
        state = RepresentationState(pre=np.array([1.0, -1.0]))
        assert not reconstruct(state, Decoder.zeros(4, 2)).any()

    def test_matches_matvec_oracle(self):
        rng = generator(32, "dec")
        dec = Decoder(w=rng.normal(0.0, 1.0, (4, 3)), b=rng.normal(0.0, 0.2, 4))
        state = RepresentationState(pre=rng.normal(0.0, 1.0, 3))
        got = reconstruct(state, dec)
        expected = dec.b.copy()
        for i in range(4):
            expected[i] += sum(dec.w[i, j] * state.post[j] for j in range(3))
        assert np.abs(got - expected).max() < 1e-12

    def test_trained_reconstruction_beats_signature_variance(self):
        # autoencoder events on single-concept ROIs; the trained decoder's
        # error must fall below the spread of the signature set itself
        from engram import learning
        from engram.learning import LossSpec, Mode, TrainEvent

        engine = Engine(small_config(seed=5))
        world = engine.build_world()
        names = ["E1", "E2", "E3", "C1", "C2", "C3"]
        sigs = [world.signature_by_name(n) for n in names]
        events = [TrainEvent(mode=Mode.PERCEPTION, labels=[], scene_features=s,
                             recon_target=s, recon_weight=1.0) for s in sigs]
        spec = LossSpec(events)
        for _ in range(400):
            learning.apply_gradients(engine, learning.gradients(engine, spec), 0.1)
        errors = []
        for s in sigs:
            state = RepresentationState.zeros(engine.n)
            encode_input(state, engine.encoder, s)
            errors.append(np.mean((reconstruct(state, engine.decoder) - s) ** 2))
        stack = np.asarray(sigs)
        variance = float(((stack - stack.mean(axis=0)) ** 2).mean())
        assert float(np.mean(errors)) < variance


class TestFormEpisodicIndex:
    def test_copies_pre_bitwise(self):
        engine = Engine(small_config(seed=3))
        state = RepresentationState(pre=generator(4, "ep").normal(0.0, 1.0, 6))
        t = form_episodic_index(state, engine.registry, engine.embeddings)
        assert np.array_equal(engine.embeddings.column(t), state.pre)
        assert engine.embeddings.bias(t) == 0.0
        assert t.kind is IndexKind.EPISODIC
        # copy semantics: later state mutation must not leak into the engram
        state.pre[0] += 10.0
        assert engine.embeddings.column(t)[0] != state.pre[0]

    def test_identical_states_give_distinct_indices(self):
        engine = Engine(small_config(seed=3))
        state = RepresentationState(pre=np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]))
        t1 = form_episodic_index(state, engine.registry, engine.embeddings)
        t2 = form_episodic_index(state, engine.registry, engine.embeddings)
        assert t1.id != t2.id
        assert np.array_equal(engine.embeddings.column(t1),
                              engine.embeddings.column(t2))

    def test_new_index_ranks_near_top_among_dissimilar_episodes(self):
        # dot-product ranking oracle over the episodic domain
        engine = Engine(small_config(seed=3))
        rng = generator(5, "rank")
        for _ in range(4):
            noise = RepresentationState(pre=rng.normal(0.0, 1.0, 6))
            form_episodic_index(noise, engine.registry, engine.embeddings)
        probe = RepresentationState(pre=rng.normal(0.0, 3.0, 6))
        t = form_episodic_index(probe, engine.registry, engine.embeddings)
        dom = engine.registry.domain("episodes")
        dist = decode_distribution(probe, engine.embeddings, dom)
        raw = [engine.embeddings.bias(m) + engine.embeddings.column(m) @ probe.post
               for m in dom.members]
        assert np.argmax(dist) == np.argmax(raw)
        order = np.argsort(dist)[::-1]
        rank = [dom.members[i].id for i in order].index(t.id)
        assert rank <= 1


class TestPerceiveScene:
    def test_trace_matches_hand_composed_pipeline(self):
        # zero noise, zero-weight evolution net, one ROI: replay every op
        engine = Engine(small_config(seed=4))
        engine.evolution = EvolutionNetwork.zeros(engine.n, engine.config.h)
        world = engine.build_world()
        scene = generate_scene(world, SceneSpec("s", ["X1"], [RoiSpec("E1", ["C2"])], []), 9)
        trace = perceive_scene(engine, scene, seed=77)

        replay_engine = Engine(small_config(seed=4))
        replay_engine.evolution = EvolutionNetwork.zeros(engine.n, engine.config.h)
        emb, reg, cfg = replay_engine.embeddings, replay_engine.registry, replay_engine.config
        params = replay_engine.update_params()
        rng = generator(77, "perceive")
        state = RepresentationState.zeros(cfg.n)
        input_and_attention(state, scene.scene_features, replay_engine.encoder, emb, None)
        sampled = []
        for i in range(cfg.rounds_scene):
            dom = reg.domain(cfg.scene_domains[i % len(cfg.scene_domains)])
            k = sample_index_rng(state, emb, dom, params.temperature, rng)
            topdown_update(state, emb, k, params)
            sampled.append(k.name)
        evolve(state, replay_engine.evolution)
        ents = reg.domain(cfg.roi_attention_domain)
        input_and_attention(state, scene.rois[0].features, replay_engine.encoder, emb, ents)
        for i in range(cfg.rounds_roi):
            dom = reg.domain(cfg.roi_domains[i % len(cfg.roi_domains)])
            k = sample_index_rng(state, emb, dom, params.temperature, rng)
            topdown_update(state, emb, k, params)
            sampled.append(k.name)

        assert [e.index.name for e in trace.events] == sampled
        assert np.array_equal(trace.final_pre, state.pre)

    def test_trace_deterministic(self, pretrained_sparky):
        engine, world, scenes = pretrained_sparky
        e1, e2 = fresh(engine), fresh(engine)
        t1 = perceive_scene(e1, scenes["park_scene"], seed=31)
        t2 = perceive_scene(e2, scenes["park_scene"], seed=31)
        assert t1.to_jsonl() == t2.to_jsonl()
        assert np.array_equal(t1.final_pre, t2.final_pre)
        assert np.array_equal(t1.snapshot_pre, t2.snapshot_pre)

    def test_ground_truth_never_read(self, pretrained_sparky):
        engine, world, scenes = pretrained_sparky
        scene = scenes["park_scene"]
        scrubbed = copy.deepcopy(scene)
        scrubbed.ground_truth = []
        for roi in scrubbed.rois:
            roi.true_concepts = set()
        for rel in scrubbed.relation_rois:
            rel.true_predicate = None
        t1 = perceive_scene(fresh(engine), scene, seed=13)
        t2 = perceive_scene(fresh(engine), scrubbed, seed=13)
        assert t1.to_jsonl() == t2.to_jsonl()

    def test_planted_concept_sampled_above_chance(self, trained_sparky):
        engine, world, scenes = trained_sparky
        probe = fresh(engine)
        probe.config.form_episodic = False  # keep the registry static
        hits = 0
        runs = 100
        for k in range(runs):
            trace = perceive_scene(probe, scenes["sparky_scene"], seed=50_000 + k)
            hits += any(e.index.name == "Sparky" for e in trace.events)
        chance = 1.0 / len(engine.registry.domain("entities"))
        assert hits / runs > chance

    def test_two_roi_scene_covers_both_fixture_concepts(self, pretrained_sparky):
        # two-object scene: each block's top-ranked labels name its object,
        # and the relation block yields a sampled triple between the subjects
        from engram import memory as memory_mod

        engine, world, scenes = pretrained_sparky
        probe = fresh(engine)
        trace = perceive_scene(probe, scenes["park_scene"], seed=999)
        tops = {}
        for e in trace.events:
            if e.phase != "roi":
                continue
            dom = probe.registry.domain(e.domain)
            state = RepresentationState(pre=e.pre_before.copy())
            dist = decode_distribution(state, probe.embeddings, dom)
            tops.setdefault(e.block, set()).add(dom.members[int(np.argmax(dist))].name)
        assert {"Sparky", "Dog"} <= tops[0]
        assert {"Bench1", "Bench"} <= tops[1]
        triples = memory_mod.triples_from_trace(probe, trace)
        relations = [t for t in triples if t.predicate.name != "type"]
        assert relations
        assert relations[0].subject.name == "Sparky"
        assert relations[0].object.name == "Bench1"

    def test_episodic_index_reused_per_scene(self, pretrained_sparky):
        engine, world, scenes = pretrained_sparky
        probe = fresh(engine)
        t1 = perceive_scene(probe, scenes["sparky_scene"], seed=1).episodic_index
        k_before = probe.embeddings.count
        t2 = perceive_scene(probe, scenes["sparky_scene"], seed=2).episodic_index
        assert t1.id == t2.id
        assert probe.embeddings.count == k_before
