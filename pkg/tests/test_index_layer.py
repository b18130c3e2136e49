"""Index layer: domains, embeddings, decode/encode, attention."""

import math

import numpy as np
import pytest

from engram.core_state import RepresentationState
from engram.errors import DomainError, ParameterError, UnknownIndexError
from engram.index_layer import (Domain, EmbeddingStore, IndexKind, IndexRegistry,
                                UpdateParams, attention_update,
                                decode_distribution, input_and_attention, logits,
                                multi_sample_update, register_index, sample_index,
                                sample_index_rng, softmax, topdown_update)
from engram.perception import Encoder
from engram.rng import generator


def make_domain(n, names, rng=None, scale=1.0):
    """Registry + store with one domain of the given member names."""
    registry = IndexRegistry()
    emb = EmbeddingStore(n)
    for name in names:
        init = None if rng is None else rng.normal(0.0, scale, n)
        register_index(registry, emb, IndexKind.CONCEPT, name, init=init, domain="dom")
    return registry, emb, registry.domain("dom")


class TestLogits:
    def test_zero_embeddings_return_biases(self):
        registry, emb, dom = make_domain(4, ["a", "b", "c"])
        emb.a0[:] = [0.5, -1.0, 2.0]
        state = RepresentationState.zeros(4)
        assert np.array_equal(logits(state, emb, dom), [0.5, -1.0, 2.0])

    def test_all_ones_embedding_dot_product(self):
        registry, emb, dom = make_domain(4, ["k"])
        emb.a[:, 0] = 1.0
        state = RepresentationState.zeros(4)  # post = 0.5 everywhere
        assert logits(state, emb, dom)[0] == pytest.approx(2.0, abs=1e-15)

    def test_matches_naive_loop_oracle(self):
        rng = generator(7, "logits")
        registry, emb, dom = make_domain(5, ["a", "b", "c"], rng)
        emb.a0[:] = rng.normal(0.0, 1.0, 3)
        state = RepresentationState(pre=rng.normal(0.0, 1.0, 5))
        got = logits(state, emb, dom)
        for pos, member in enumerate(dom.members):
            expected = emb.a0[member.id]
            for i in range(5):
                expected += emb.a[i, member.id] * state.post[i]
            assert abs(got[pos] - expected) < 1e-12

    def test_empty_domain_rejected(self):
        registry = IndexRegistry()
        emb = EmbeddingStore(3)
        registry.ensure_domain("empty")
        with pytest.raises(DomainError):
            logits(RepresentationState.zeros(3), emb, registry.domain("empty"))


class TestDecodeDistribution:
    def test_equal_logits_uniform(self):
        registry, emb, dom = make_domain(3, list("abcde"))
        state = RepresentationState.zeros(3)
        assert np.allclose(decode_distribution(state, emb, dom), 0.2, atol=1e-15)

    def test_two_class_softmax_oracle(self):
        # softmax([1, 0]) equals the logistic of the difference
        p = softmax(np.array([1.0, 0.0]))
        assert abs(p[0] - 0.73105857863) < 1e-10
        assert abs(p[1] - 0.26894142137) < 1e-10
        assert abs(p[0] - 1.0 / (1.0 + math.exp(-1.0))) < 1e-15

    def test_low_temperature_is_winner_take_all(self):
        p = softmax(np.array([1.0, 0.0]), temperature=1e-3)
        assert p[0] >= 1.0 - 1e-12

    def test_temperature_must_be_positive(self):
        registry, emb, dom = make_domain(3, ["a", "b"])
        with pytest.raises(ParameterError):
            decode_distribution(RepresentationState.zeros(3), emb, dom, temperature=0.0)

    def test_normalization_over_random_states(self):
        rng = generator(13, "norm")
        registry, emb, dom = make_domain(6, list("abcdefgh"), rng, scale=3.0)
        for _ in range(200):
            state = RepresentationState(pre=rng.normal(0.0, 5.0, 6))
            T = float(rng.uniform(0.05, 4.0))
            p = decode_distribution(state, emb, dom, T)
            assert abs(p.sum() - 1.0) < 1e-9
            assert (p >= 0.0).all()

    def test_argmax_invariant_under_temperature(self):
        rng = generator(14, "argmax")
        registry, emb, dom = make_domain(5, list("abcdef"), rng)
        state = RepresentationState(pre=rng.normal(0.0, 2.0, 5))
        raw = logits(state, emb, dom)
        for T in (0.01, 0.5, 1.0, 7.0):
            assert np.argmax(decode_distribution(state, emb, dom, T)) == np.argmax(raw)

    def test_shift_invariance(self):
        rng = generator(15, "shift")
        registry, emb, dom = make_domain(4, list("abc"), rng)
        state = RepresentationState(pre=rng.normal(0.0, 1.0, 4))
        p1 = decode_distribution(state, emb, dom)
        emb.a0[[m.id for m in dom.members]] += 17.3  # same shift for every member
        p2 = decode_distribution(state, emb, dom)
        assert np.abs(p1 - p2).max() < 1e-12


class TestSampleIndex:
    def test_singleton_domain_always_fires(self):
        registry, emb, dom = make_domain(3, ["only"])
        state = RepresentationState.zeros(3)
        for seed in range(10):
            assert sample_index(state, emb, dom, rng_seed=seed).name == "only"

    def test_uniform_frequencies(self):
        registry, emb, dom = make_domain(3, list("abcd"))
        state = RepresentationState.zeros(3)
        rng = generator(99, "decode")
        counts = {name: 0 for name in "abcd"}
        draws = 100_000
        for _ in range(draws):
            counts[sample_index_rng(state, emb, dom, 1.0, rng).name] += 1
        for name in "abcd":
            assert abs(counts[name] / draws - 0.25) < 0.01

    def test_biased_frequencies(self):
        registry, emb, dom = make_domain(2, ["hi", "lo"])
        emb.a0[:] = [math.log(0.9), math.log(0.1)]
        state = RepresentationState(pre=np.full(2, -1000.0), post=np.zeros(2))
        rng = generator(100, "decode")
        draws = 10_000
        hits = sum(sample_index_rng(state, emb, dom, 1.0, rng).name == "hi"
                   for _ in range(draws))
        assert abs(hits / draws - 0.9) < 0.02

    def test_deterministic_given_seed(self):
        rng = generator(16, "setup")
        registry, emb, dom = make_domain(4, list("abcd"), rng)
        state = RepresentationState(pre=rng.normal(0.0, 1.0, 4))
        picks1 = [sample_index(state, emb, dom, rng_seed=s).name for s in range(20)]
        picks2 = [sample_index(state, emb, dom, rng_seed=s).name for s in range(20)]
        assert picks1 == picks2


class TestTopdownUpdate:
    def test_rnn_mode_leaves_pre_unchanged(self):
        rng = generator(17, "td")
        registry, emb, dom = make_domain(4, ["k"], rng)
        state = RepresentationState(pre=rng.normal(0.0, 1.0, 4))
        before = state.pre.copy()
        topdown_update(state, emb, dom.members[0], UpdateParams(alpha=1.0, beta=0.0))
        assert np.array_equal(state.pre, before)

    def test_overwrite_mode_copies_embedding(self):
        rng = generator(18, "td")
        registry, emb, dom = make_domain(4, ["k"], rng)
        state = RepresentationState(pre=rng.normal(0.0, 1.0, 4))
        topdown_update(state, emb, dom.members[0], UpdateParams(alpha=0.0, beta=1.0))
        assert np.array_equal(state.pre, emb.column(dom.members[0]))

    def test_additive_mode(self):
        registry, emb, dom = make_domain(2, ["k"])
        emb.a[:, 0] = [0.5, -1.0]
        state = RepresentationState(pre=np.array([1.0, 2.0]))
        topdown_update(state, emb, dom.members[0], UpdateParams())
        assert np.array_equal(state.pre, [1.5, 1.0])

    def test_unknown_index_rejected(self):
        registry, emb, dom = make_domain(2, ["k"])
        from engram.index_layer import IndexId
        ghost = IndexId(id=99, kind=IndexKind.CONCEPT, name="ghost")
        with pytest.raises(UnknownIndexError):
            topdown_update(RepresentationState.zeros(2), emb, ghost)

    def test_alpha_out_of_range(self):
        with pytest.raises(ParameterError):
            UpdateParams(alpha=1.5)

    def test_tied_weights_bitwise(self):
        # the column read by logits is the very storage added by top-down
        rng = generator(19, "tied")
        registry, emb, dom = make_domain(3, ["k"], rng)
        k = dom.members[0]
        emb.a[1, k.id] = 123.456
        state = RepresentationState.zeros(3)
        assert logits(state, emb, dom)[0] == 0.5 * (emb.a[:, k.id].sum())
        before = state.pre.copy()
        topdown_update(state, emb, k, UpdateParams())
        assert np.array_equal(state.pre - before, emb.a[:, k.id])


class TestMultiSampleUpdate:
    def test_zero_embeddings_leave_state_unchanged(self):
        registry, emb, dom = make_domain(3, ["a", "b"])
        state = RepresentationState(pre=np.array([1.0, -1.0, 0.5]))
        before = state.pre.copy()
        _, sampled = multi_sample_update(state, emb, dom, rounds=2, rng_seed=5)
        assert len(sampled) == 2
        assert np.array_equal(state.pre, before)

    def test_additivity_of_sampled_embeddings(self):
        rng = generator(20, "multi")
        registry, emb, dom = make_domain(5, list("abcd"), rng)
        state = RepresentationState(pre=rng.normal(0.0, 1.0, 5))
        before = state.pre.copy()
        _, sampled = multi_sample_update(state, emb, dom, rounds=3, rng_seed=6)
        total = np.zeros(5)
        for k in sampled:
            total += emb.a[:, k.id]
        assert np.abs((state.pre - before) - total).max() < 1e-12

    def test_rounds_must_be_positive(self):
        registry, emb, dom = make_domain(2, ["a"])
        with pytest.raises(ParameterError):
            multi_sample_update(RepresentationState.zeros(2), emb, dom, rounds=0)

    def test_dominant_logit_replay_oracle(self):
        # one member with a huge bias; replay the sequential update by hand
        rng = generator(23, "dominant")
        registry, emb, dom = make_domain(4, ["big", "small"], rng, scale=0.1)
        emb.a0[dom.members[0].id] = 35.0
        state = RepresentationState(pre=rng.normal(0.0, 0.5, 4))
        replay = state.copy()
        final, sampled = multi_sample_update(state, emb, dom, rounds=3, rng_seed=8)
        expected = []
        for _ in range(3):
            raw = logits(replay, emb, dom)
            k = dom.members[int(np.argmax(raw))]
            # gap > 30 nats: sampling is effectively deterministic
            assert raw.max() - sorted(raw)[-2] > 30
            topdown_update(replay, emb, k, UpdateParams())
            expected.append(k.name)
        assert [k.name for k in sampled] == expected
        assert np.array_equal(final.pre, replay.pre)


class TestAttention:
    def test_single_member_adds_its_embedding(self):
        rng = generator(24, "att")
        registry, emb, dom = make_domain(4, ["k"], rng)
        state = RepresentationState(pre=rng.normal(0.0, 1.0, 4))
        before = state.pre.copy()
        attention_update(state, emb, dom)
        assert np.allclose(state.pre - before, emb.a[:, dom.members[0].id], atol=1e-15)

    def test_identical_embeddings_add_common_vector(self):
        registry, emb, dom = make_domain(3, ["a", "b"])
        shared = np.array([0.4, -0.7, 1.1])
        emb.a[:, dom.members[0].id] = shared
        emb.a[:, dom.members[1].id] = shared
        state = RepresentationState.zeros(3)
        attention_update(state, emb, dom)
        assert np.allclose(state.pre, shared, atol=1e-15)

    def test_matches_two_pass_oracle(self):
        rng = generator(25, "att2")
        registry, emb, dom = make_domain(6, list("abcde"), rng)
        emb.a0[:] = rng.normal(0.0, 0.5, 5)
        state = RepresentationState(pre=rng.normal(0.0, 1.0, 6))
        probs = decode_distribution(state, emb, dom)  # pass one: distribution
        expected = state.pre + emb.a[:, [m.id for m in dom.members]] @ probs
        attention_update(state, emb, dom)
        assert np.abs(state.pre - expected).max() < 1e-12

    def test_update_is_convex_combination(self):
        # solve the small linear system: delta = A x with x >= 0, sum x = 1
        rng = generator(26, "hull")
        registry, emb, dom = make_domain(8, list("abcd"), rng)
        state = RepresentationState(pre=rng.normal(0.0, 1.0, 8))
        before = state.pre.copy()
        attention_update(state, emb, dom)
        delta = state.pre - before
        A = emb.a[:, [m.id for m in dom.members]]
        x, residual, *_ = np.linalg.lstsq(A, delta, rcond=None)
        assert np.abs(A @ x - delta).max() < 1e-9
        assert (x >= -1e-9).all()
        assert abs(x.sum() - 1.0) < 1e-9


class TestInputAndAttention:
    def test_zero_features_and_skip_attention_is_identity(self):
        registry, emb, dom = make_domain(3, ["k"])
        enc = Encoder.zeros(3, 4)
        state = RepresentationState(pre=np.array([1.0, 2.0, 3.0]))
        before = state.pre.copy()
        input_and_attention(state, np.zeros(4), enc, emb, None)
        assert np.array_equal(state.pre, before)

    def test_additivity_without_attention(self):
        rng = generator(27, "ia")
        registry, emb, dom = make_domain(3, ["k"], rng)
        enc = Encoder(w=rng.normal(0.0, 1.0, (3, 4)), b=rng.normal(0.0, 0.1, 3))
        features = rng.normal(0.0, 1.0, 4)
        state = RepresentationState(pre=rng.normal(0.0, 1.0, 3))
        before = state.pre.copy()
        input_and_attention(state, features, enc, emb, None)
        assert np.allclose(state.pre, before + enc.forward(features), atol=1e-15)

    def test_composition_matches_manual_pipeline(self):
        rng = generator(28, "ia2")
        registry, emb, dom = make_domain(4, ["a", "b", "c"], rng)
        enc = Encoder(w=rng.normal(0.0, 1.0, (4, 5)), b=np.zeros(4))
        features = rng.normal(0.0, 1.0, 5)
        state = RepresentationState(pre=rng.normal(0.0, 1.0, 4))
        manual = state.copy()
        input_and_attention(state, features, enc, emb, dom)
        manual.pre = manual.pre + enc.forward(features)
        from engram.core_state import activate
        activate(manual)
        attention_update(manual, emb, dom)
        assert np.array_equal(state.pre, manual.pre)


class TestRegistry:
    def test_duplicate_names_rejected_per_kind(self):
        registry = IndexRegistry()
        emb = EmbeddingStore(2)
        register_index(registry, emb, IndexKind.CONCEPT, "x")
        from engram.errors import DuplicateNameError
        with pytest.raises(DuplicateNameError):
            register_index(registry, emb, IndexKind.CONCEPT, "x")
        # same name under another kind is fine
        register_index(registry, emb, IndexKind.PREDICATE, "x")

    def test_single_domain_membership(self):
        registry = IndexRegistry()
        emb = EmbeddingStore(2)
        index = register_index(registry, emb, IndexKind.CONCEPT, "x", domain="d1")
        from engram.errors import ConfigurationError
        with pytest.raises(ConfigurationError):
            registry.add_to_domain(index, "d2")

    def test_embedding_store_grows_append_only(self):
        registry = IndexRegistry()
        emb = EmbeddingStore(3)
        a = register_index(registry, emb, IndexKind.CONCEPT, "a")
        b = register_index(registry, emb, IndexKind.CONCEPT, "b",
                           init=np.array([1.0, 2.0, 3.0]))
        assert emb.count == 2 and (a.id, b.id) == (0, 1)
        assert np.array_equal(emb.column(b), [1.0, 2.0, 3.0])
        assert not emb.column(a).any()
