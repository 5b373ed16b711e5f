import math
import struct

import numpy as np
import pytest

from src.advanced.neural import (
    MAGIC, N_KINDS, AdamState, ModelDims, ModelFormatError, ModelParams,
    NumericalError, SentenceGraph, TargetDistribution, Vocab, backward_and_step,
    encode, feature_slots, load_model, save_model, score, soft_cross_entropy,
    softmax,
)
from src.core.oracle import oracle_walk
from src.core.transition_system import TransitionKind, initial, replay, SHIFT
from tests.conftest import MICRO_DIMS, chain_tree, phrase_tree, flat_tree


def build_graph(params, vocab, tree):
    """Deterministic sentence graph: no dropout, larc-first path, soft targets"""
    encoding = encode(tree.tokens, params, vocab, train_mode=False)
    graph = SentenceGraph(params, encoding)
    for c, outcome in oracle_walk(tree, np.random.default_rng(0), p_shift=0.0):
        target = TargetDistribution.uniform([t.kind for t in outcome.correct_set], N_KINDS)
        label = None
        if outcome.chosen.kind != TransitionKind.SHIFT:
            label = vocab.label_id(outcome.chosen.label)
        graph.add_step(c, target, label)
    return graph


class TestLoss:
    def test_two_way_soft_target_at_half(self):
        loss = soft_cross_entropy(np.array([0.5, 0.5, 1e-300]), np.array([0.5, 0.5, 0.0]))
        assert abs(loss - math.log(2)) < 1e-9

    def test_two_way_soft_target_at_uniform(self):
        target = TargetDistribution.uniform([0, 1], 3)
        loss = soft_cross_entropy(np.full(3, 1.0 / 3), target)
        assert abs(loss - math.log(3)) < 1e-9

    def test_one_hot_is_negative_log_likelihood(self):
        probs = np.array([0.2, 0.7, 0.1])
        assert soft_cross_entropy(probs, TargetDistribution.uniform([1], 3)) == pytest.approx(-math.log(0.7))

    def test_zero_probability_is_clamped(self):
        loss = soft_cross_entropy(np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]))
        assert loss == pytest.approx(-math.log(1e-12))

    def test_never_below_target_entropy(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            k = int(rng.integers(2, 6))
            y = rng.dirichlet(np.ones(k))
            y[rng.random(k) < 0.3] = 0.0
            if y.sum() == 0.0:
                y[0] = 1.0
            y = y / y.sum()
            support = y > 0
            entropy = float(-np.sum(y[support] * np.log(y[support])))

            p = rng.dirichlet(np.ones(k))
            assert soft_cross_entropy(p, y) >= entropy - 1e-12
            assert soft_cross_entropy(y, y) == pytest.approx(entropy, abs=1e-9)

    def test_target_must_be_uniform_distribution(self):
        with pytest.raises(ValueError):
            TargetDistribution(np.array([0.7, 0.3, 0.0]))
        with pytest.raises(ValueError):
            TargetDistribution.uniform([], 3)
        assert TargetDistribution.uniform([2, 0, 2], 3).support == [0, 2]


def test_softmax_is_stable():
    logits = np.array([[1000.0, -1000.0, 999.0], [-1000.0, -1000.0, -1000.0]])
    probs = softmax(logits)
    assert np.all(np.isfinite(probs))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)
    np.testing.assert_allclose(probs[1], 1.0 / 3)


def test_vocab_build_and_unknowns():
    vocab = Vocab.build([phrase_tree(), phrase_tree()])
    assert vocab.word_id('<unk>') == 0
    assert vocab.word_id('never-seen') == 0
    assert vocab.pos_id('VV') == 0
    assert vocab.word_freq['文'] == 2
    assert vocab.labels == ['case', 'root']
    assert Vocab.from_dict(vocab.to_dict()) == vocab


def test_encode_shapes(micro_model):
    params, vocab = micro_model
    tree = phrase_tree()
    encoding = encode(tree.tokens, params, vocab)
    assert encoding.n == 3
    assert encoding.vectors.shape == (4, 2 * MICRO_DIMS['lstm_dim'])
    np.testing.assert_array_equal(encoding.vectors[0], params['root_vec'])
    np.testing.assert_array_equal(encoding.table[-1], params['pad_vec'])
    assert encoding.mask is None


def test_dropout_is_seeded(micro_model):
    params, vocab = micro_model
    tokens = phrase_tree().tokens
    a = encode(tokens, params, vocab, train_mode=True, rng=np.random.default_rng(3))
    b = encode(tokens, params, vocab, train_mode=True, rng=np.random.default_rng(3))
    np.testing.assert_array_equal(a.table, b.table)
    assert set(np.unique(a.mask)) <= {0.0, 2.0}


def test_feature_slots_use_sentinel():
    c = initial(3)
    assert feature_slots(c) == (4, 4, 0)
    c = replay(3, [SHIFT, SHIFT])
    assert feature_slots(c) == (0, 1, 2)


def test_score_returns_distributions(micro_model):
    params, vocab = micro_model
    tree = phrase_tree()
    encoding = encode(tree.tokens, params, vocab)
    trans, labels = score(replay(3, [SHIFT, SHIFT, SHIFT]), encoding, params)
    assert trans.shape == (3,)
    assert labels.shape == (len(vocab.labels),)
    assert trans.sum() == pytest.approx(1.0)
    assert labels.sum() == pytest.approx(1.0)


def test_gradients_match_finite_differences(micro_model):
    params, vocab = micro_model
    tree = phrase_tree()

    params.zero_grad()
    graph = build_graph(params, vocab, tree)
    graph.forward()
    graph.backward()
    analytic = {name: g.copy() for name, g in params.grads.items()}

    eps = 1e-6
    for name, value in params.values.items():
        numeric = np.zeros_like(value)
        for index in np.ndindex(value.shape):
            original = value[index]
            value[index] = original + eps
            plus = build_graph(params, vocab, tree).forward()
            value[index] = original - eps
            minus = build_graph(params, vocab, tree).forward()
            value[index] = original
            numeric[index] = (plus - minus) / (2 * eps)

        difference = np.linalg.norm(analytic[name] - numeric)
        scale = max(np.linalg.norm(analytic[name]) + np.linalg.norm(numeric), 1e-12)
        assert difference / scale < 1e-4, name


def test_gradient_through_dropout_mask():
    tree = flat_tree(1, 1)
    vocab = Vocab.build([tree])
    dims = ModelDims.for_vocab(vocab, **MICRO_DIMS)
    params = ModelParams.initialize(dims, np.random.default_rng(1), dtype=np.float64)

    def loss_with_mask():
        encoding = encode(tree.tokens, params, vocab, train_mode=True, rng=np.random.default_rng(9), dropout=0.3)
        graph = SentenceGraph(params, encoding)
        for c, outcome in oracle_walk(tree, standard=True):
            label = None if outcome.chosen.kind == TransitionKind.SHIFT else vocab.label_id(outcome.chosen.label)
            graph.add_step(c, TargetDistribution.uniform([outcome.chosen.kind], N_KINDS), label)
        return graph

    params.zero_grad()
    loss_with_mask().backward()
    analytic = params.grads['fw_Wx'].copy()

    value = params.values['fw_Wx']
    numeric = np.zeros_like(value)
    for index in np.ndindex(value.shape):
        original = value[index]
        value[index] = original + 1e-6
        plus = loss_with_mask().forward()
        value[index] = original - 1e-6
        minus = loss_with_mask().forward()
        value[index] = original
        numeric[index] = (plus - minus) / 2e-6

    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-12)
    assert np.linalg.norm(analytic - numeric) / scale < 1e-4


def test_adam_step_reduces_loss(micro_model):
    params, vocab = micro_model
    tree = phrase_tree()
    adam = AdamState(lr=0.01)
    first = build_graph(params, vocab, tree).forward()
    for _ in range(30):
        backward_and_step(build_graph(params, vocab, tree), params, adam)
    assert build_graph(params, vocab, tree).forward() < first
    assert adam.t == 30


def test_repeated_steps_overfit_one_sentence():
    tree = chain_tree(2)
    vocab = Vocab.build([tree])
    dims = ModelDims.for_vocab(vocab, word_dim=8, pos_dim=4, lstm_dim=8, hidden_dim=16)
    params = ModelParams.initialize(dims, np.random.default_rng(3), dtype=np.float64)
    adam = AdamState(lr=0.05)
    for _ in range(400):
        backward_and_step(build_graph(params, vocab, tree), params, adam)
    assert build_graph(params, vocab, tree).forward() < 1e-3


def test_adam_leaves_zero_gradient_blocks_unchanged(micro_model):
    params, vocab = micro_model
    before = params['word_emb'][0].copy()  # UNK row, unused by the sentence
    backward_and_step(build_graph(params, vocab, phrase_tree()), params, AdamState())
    np.testing.assert_array_equal(params['word_emb'][0], before)


def test_non_finite_gradient_raises(micro_model):
    params, vocab = micro_model
    params.values['trans_W2'][0, 0] = np.nan
    before = params['label_W1'].copy()
    adam = AdamState()
    with pytest.raises(NumericalError, match="Non-finite gradient"):
        backward_and_step(build_graph(params, vocab, phrase_tree()), params, adam)
    assert adam.t == 0
    np.testing.assert_array_equal(params['label_W1'], before)


class TestModelFile:
    @pytest.fixture
    def trained(self):
        tree = phrase_tree()
        vocab = Vocab.build([tree])
        dims = ModelDims.for_vocab(vocab, **MICRO_DIMS)
        params = ModelParams.initialize(dims, np.random.default_rng(2))
        adam = AdamState()
        backward_and_step(build_graph(params, vocab, tree), params, adam)
        return params, vocab, adam

    def test_round_trip_is_bit_identical(self, tmp_path, trained):
        params, vocab, adam = trained
        path = tmp_path / 'model.bin'
        save_model(params, vocab, path, adam=adam)
        loaded = load_model(path)

        assert loaded.vocab == vocab
        assert loaded.params.dims == params.dims
        for name, value in params.values.items():
            assert loaded.params[name].dtype == np.float32
            assert loaded.params[name].tobytes() == value.tobytes()
            assert loaded.adam.m[name].tobytes() == adam.m[name].tobytes()
            assert loaded.adam.v[name].tobytes() == adam.v[name].tobytes()
        assert loaded.adam.t == 1

        again = tmp_path / 'again.bin'
        save_model(loaded.params, loaded.vocab, again, adam=loaded.adam)
        assert again.read_bytes() == path.read_bytes()

    def test_without_adam(self, tmp_path, trained):
        params, vocab, _ = trained
        save_model(params, vocab, tmp_path / 'm.bin')
        assert load_model(tmp_path / 'm.bin').adam is None

    def test_bad_magic(self, tmp_path, trained):
        params, vocab, _ = trained
        path = tmp_path / 'm.bin'
        save_model(params, vocab, path)
        data = bytearray(path.read_bytes())
        data[:len(MAGIC)] = b'XXXXXXXX'
        path.write_bytes(bytes(data))
        with pytest.raises(ModelFormatError, match='magic'):
            load_model(path)

    def test_version_mismatch(self, tmp_path, trained):
        params, vocab, _ = trained
        path = tmp_path / 'm.bin'
        save_model(params, vocab, path)
        data = bytearray(path.read_bytes())
        struct.pack_into('<I', data, len(MAGIC), 99)
        path.write_bytes(bytes(data))
        with pytest.raises(ModelFormatError, match='version 99'):
            load_model(path)

    def test_truncated(self, tmp_path, trained):
        params, vocab, _ = trained
        path = tmp_path / 'm.bin'
        save_model(params, vocab, path)
        path.write_bytes(path.read_bytes()[:-100])
        with pytest.raises(ModelFormatError):
            load_model(path)
        path.write_bytes(b'NNDEP')
        with pytest.raises(ModelFormatError, match='truncated'):
            load_model(path)

    def test_corrupted_payload(self, tmp_path, trained):
        params, vocab, _ = trained
        path = tmp_path / 'm.bin'
        save_model(params, vocab, path)
        data = bytearray(path.read_bytes())
        data[-40] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(ModelFormatError, match='checksum'):
            load_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelFormatError, match='not found'):
            load_model(tmp_path / 'nope.bin')
