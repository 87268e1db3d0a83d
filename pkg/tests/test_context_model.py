import math

import numpy as np
import pytest

from figment.context_model import (
    MODES,
    CMConfig,
    ContextModel,
    ContextVocab,
    aggregate_avg,
    aggregate_max,
    attention_weights,
    cm_predict,
    train_cm,
)
from figment.corpus import PAD, SLOT, Context
from figment.errors import ConfigError
from figment.tensor import Parameter, grad_check
from figment.training import TrainConfig

WORDS = [PAD, SLOT, "<UNK>"] + [f"w{i}" for i in range(8)]


def vocab():
    return ContextVocab(WORDS)


def model(encoder="ff", mode="ds", n_types=3, width=6, seed=0, **kw):
    args = dict(encoder=encoder, mode=mode, word_dim=3, hidden=4, widths=(1, 2), n_filters=2, width=width)
    args.update(kw)
    return ContextModel(CMConfig(**args), vocab(), n_types, np.random.default_rng(seed))


def random_bags(rng, sizes, width=6):
    return [rng.integers(0, len(WORDS), size=(q, width)) for q in sizes]


def concat(bags):
    return np.concatenate(bags), np.concatenate([[0], np.cumsum([len(b) for b in bags])])


class TableEncoder:
    """Encoder stub: the context ids index rows of a trainable matrix of encodings."""

    def __init__(self, C):
        self.C = Parameter(C, name="C")
        self.out_dim = C.shape[1]

    @property
    def params(self):
        return [self.C]

    def forward(self, ids):
        return self.C.value[ids], ids

    def backward(self, ids, dC):
        np.add.at(self.C.grad, ids, dC)


def test_vocab_encoding():
    ctx = [Context("e", ("a", SLOT, "b", PAD), ("t",)), Context("e", ("a", SLOT, "c", "c"), ("t",))]
    v = ContextVocab.build(ctx, min_count=1)
    assert v.tokens[:3] == [PAD, SLOT, "<UNK>"]
    assert v.encode(["a", "zzz", SLOT]).tolist() == [v.index["a"], 2, 1]
    assert ContextVocab.build(ctx, min_count=2).tokens == [PAD, SLOT, "<UNK>", "a", "c"]


def test_bad_mode():
    with pytest.raises(ConfigError):
        CMConfig(mode="sum")


# -- encoders -----------------------------------------------------------------


def test_ff_zero_weights():
    m = model("ff")
    m.encoder.W_h.value[...] = 0.0
    c, _ = m.encoder.forward(np.array([[3, 4, 1, 5, 0, 0]]))
    assert not c.any()


def test_ff_default_hidden_500():
    m = ContextModel(CMConfig(encoder="ff", word_dim=2, width=6), vocab(), 2, np.random.default_rng(0))
    c, _ = m.encoder.forward(np.array([[3, 4, 1, 5, 0, 0]]))
    assert c.shape == (1, 500)


def test_ff_three_token_oracle():
    m = model("ff", width=3)
    ids = [4, 1, 7]
    T, W = m.encoder.table.value, m.encoder.W_h.value
    x = [T[i, k] for i in ids for k in range(3)]
    expected = [math.tanh(sum(W[j, a] * x[a] for a in range(9))) for j in range(4)]
    c, _ = m.encoder.forward(np.array([ids]))
    np.testing.assert_allclose(c[0], expected, atol=1e-10, rtol=0)


def test_cnn_phi_length_2400():
    cfg = CMConfig(encoder="cnn", word_dim=2, hidden=3, widths=(1, 2, 3, 4), n_filters=300, width=10)
    m = ContextModel(cfg, vocab(), 2, np.random.default_rng(0))
    c, cache = m.encoder.forward(np.array([[3, 4, 5, 6, 7, 1, 8, 9, 10, 0]]))
    assert cache[6].shape == (1, 2400) and c.shape == (1, 3)
    assert ContextModel(CMConfig(encoder="cnn", word_dim=2, n_filters=1, width=10), vocab(), 2,
                        np.random.default_rng(0)).encoder.out_dim == 600


def test_cnn_symmetric_halves_pool_equal():
    m = model("cnn", widths=(1, 2, 3), n_filters=5)
    _, cache = m.encoder.forward(np.array([[3, 5, 7, 3, 5, 7]]))
    phi = cache[6][0]
    np.testing.assert_array_equal(phi[:15], phi[15:])


def test_cnn_short_half_is_pad_extended():
    m = model("cnn", widths=(1, 2, 3, 4), n_filters=2)
    c, _ = m.encoder.forward(np.array([[3, 5, 1, 3, 5, 7]]))
    assert c.shape == (1, 4)
    L, R = m.encoder.halves(np.array([[3, 5, 7, 1, 4, 6]]))
    assert L.tolist() == [[0, 3, 5, 7]] and R.tolist() == [[1, 4, 6, 0]]


def test_cnn_one_filter_oracle():
    m = model("cnn", widths=(2,), n_filters=1, hidden=1)
    ids = [3, 4, 5, 1, 6, 7]
    T, H, W = m.encoder.table.value, m.encoder.left[0].value[0], m.encoder.W_h.value
    pooled = []
    for half in (ids[:3], ids[3:]):
        best = -math.inf
        for i in range(2):
            acc = sum(T[half[i + c], r] * H[r, c] for r in range(3) for c in range(2))
            best = max(best, max(acc, 0.0))
        pooled.append(best)
    expected = math.tanh(W[0, 0] * pooled[0] + W[0, 1] * pooled[1])
    c, _ = m.encoder.forward(np.array([ids]))
    assert abs(c[0, 0] - expected) < 1e-10


def test_unshared_halves_have_own_filters():
    m = model("cnn", share_halves=False)
    names = [p.name for p in m.params]
    assert "H1" in names and "H1_right" in names
    assert "H1_right" not in [p.name for p in model("cnn").params]


# -- head ----------------------------------------------------------------------


def test_context_prob_cases():
    m = model()
    m.W_t.value[...] = 0.0
    assert m.context_probs(np.ones((1, 4))).tolist() == [[0.5, 0.5, 0.5]]
    m = model()
    c = np.random.default_rng(1).normal(size=(1, 4))
    before = m.context_probs(c)
    m.b_t.value[:] += 0.3
    assert np.all(m.context_probs(c) > before)
    expected = [1 / (1 + math.exp(-(sum(m.W_t.value[t, k] * c[0, k] for k in range(4)) + m.b_t.value[t])))
                for t in range(3)]
    np.testing.assert_allclose(m.context_probs(c)[0], expected, atol=1e-12, rtol=0)


# -- aggregation ----------------------------------------------------------------


def test_max_and_avg_small_case():
    P = np.array([[0.2], [0.9], [0.4]])
    assert aggregate_max(P, [0, 3])[0].tolist() == [[0.9]]
    assert aggregate_avg(P, [0, 3])[0, 0] == pytest.approx(0.5, abs=1e-15)


def test_aggregation_oracle_random_bags():
    rng = np.random.default_rng(7)
    for _ in range(200):
        sizes = rng.integers(1, 21, size=rng.integers(1, 6))
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        P = rng.uniform(size=(offsets[-1], 5))
        Qmax, _ = aggregate_max(P, offsets)
        Qavg = aggregate_avg(P, offsets)
        for b in range(len(sizes)):
            for t in range(5):
                col = [P[i, t] for i in range(offsets[b], offsets[b + 1])]
                assert Qmax[b, t] == max(col)
                assert abs(Qavg[b, t] - sum(col) / len(col)) < 1e-12
        assert np.all(Qmax >= Qavg)


def test_empty_bag_rejected():
    with pytest.raises(ValueError):
        aggregate_avg(np.ones((2, 1)), [0, 0, 2])


@pytest.mark.parametrize("q", [1, 2, 10, 1000])
def test_attention_sums_to_one(q):
    rng = np.random.default_rng(q)
    alpha = attention_weights(rng.normal(scale=3, size=(q, 6)), rng.normal(size=(6, 4)))
    assert np.all(np.abs(alpha.sum(axis=0) - 1.0) < 1e-9)


def test_attention_identical_contexts_uniform():
    m = model(mode="att")
    C = np.tile(np.random.default_rng(0).normal(size=4), (5, 1))
    np.testing.assert_allclose(m.attention(C), np.full((5, 3), 0.2), atol=1e-15)


def test_bag_of_one_all_modes_identical():
    rng = np.random.default_rng(3)
    ref = model(mode="att", seed=1)
    bags = random_bags(rng, [1, 1, 1, 1])
    preds = {}
    for mode in MODES:
        m = model(mode=mode, seed=1)
        for p, q in zip(m.params, ref.params):
            p.value[...] = q.value
        preds[mode] = m.predict_bags(bags)
    C, _ = ref.encoder.forward(np.concatenate(bags))
    single = ref.context_probs(C)
    for mode, P in preds.items():
        assert np.array_equal(P, single), mode


def test_ds_prediction_is_average():
    m = model(mode="ds")
    rng = np.random.default_rng(0)
    bag = random_bags(rng, [3])[0]
    C, _ = m.encoder.forward(bag)
    P = m.context_probs(C)
    hand = [(P[0, t] + P[1, t] + P[2, t]) / 3 for t in range(3)]
    np.testing.assert_allclose(m.predict_bags([bag])[0], hand, atol=1e-15)
    np.testing.assert_allclose(m.predict_bags([np.repeat(bag[:1], 4, axis=0)])[0], P[0], atol=1e-15)
    assert np.array_equal(m.predict_bags([bag]), m.predict_bags([bag], agg="avg"))


def test_max_avg_predicts_like_avg_and_trains_like_max():
    rng = np.random.default_rng(0)
    bags = random_bags(rng, [3, 2])
    a, b = model(mode="max_avg", seed=4), model(mode="max", seed=4)
    assert np.array_equal(a.predict_bags(bags), a.predict_bags(bags, agg="avg"))
    ids, off = concat(bags)
    Y = np.array([[1, 0, 1], [0, 1, 0]], float)
    assert a.bag_loss_and_grad(ids, off, Y) == b.bag_loss_and_grad(ids, off, Y)
    for p, q in zip(a.params, b.params):
        assert np.array_equal(p.grad, q.grad)


def stub_model(mode, C, seed=0):
    m = model(mode=mode, seed=seed)
    m.encoder = TableEncoder(C)
    return m


def test_max_gradient_only_through_argmax():
    rng = np.random.default_rng(2)
    m = stub_model("max", rng.normal(size=(3, 4)))
    Y = np.array([[1.0, 0.0, 1.0]])

    def fn():
        for p in m.params:
            p.zero_grad()
        return m.bag_loss_and_grad(np.arange(3), [0, 3], Y)

    assert grad_check(fn, m.params) < 1e-6
    _, arg = aggregate_max(m.context_probs(m.encoder.C.value), [0, 3])
    unused = sorted(set(range(3)) - set(arg.ravel().tolist()))
    fn()
    for i in unused:
        assert not m.encoder.C.grad[i].any()
    for i in set(arg.ravel().tolist()):
        assert m.encoder.C.grad[i].any()


def test_avg_gradient_splits_equally():
    c = np.random.default_rng(0).normal(size=4)
    m = stub_model("avg", np.tile(c, (3, 1)))
    m.bag_loss_and_grad(np.arange(3), [0, 3], np.array([[1.0, 0.0, 1.0]]))
    g = m.encoder.C.grad
    assert np.allclose(g[0], g[1]) and np.allclose(g[1], g[2]) and g.any()


CASES = [(enc, mode) for enc in ("ff", "cnn") for mode in ("ds", "max", "avg", "att")]


@pytest.mark.parametrize("encoder,mode", CASES)
def test_gradients(encoder, mode):
    m = model(encoder, mode, seed=5, widths=(1, 2, 3, 4))
    m.b_t.value[:] = [0.1, -0.2, 0.3]
    # a zero PAD row puts all-PAD windows exactly on the rectifier kink
    m.encoder.table.value[0] = [0.05, -0.07, 0.02]
    rng = np.random.default_rng(6)
    bags = random_bags(rng, [3, 2, 1])
    ids, off = concat(bags)
    Y = np.array([[1, 0, 1], [0, 1, 0], [1, 1, 0]], float)

    def fn():
        for p in m.params:
            p.zero_grad()
        if mode == "ds":
            owner = np.repeat(np.arange(3), np.diff(off))
            return m.context_loss_and_grad(ids, Y[owner])
        return m.bag_loss_and_grad(ids, off, Y)

    if mode == "att":
        assert {"M", "type_emb"} <= {p.name for p in m.params}
    assert grad_check(fn, m.params) < 1e-4


def test_loss_item_counts():
    rng = np.random.default_rng(0)
    bags = random_bags(rng, [3, 3])
    Y = np.array([[1, 0, 0], [0, 1, 0]], float)
    cfg = TrainConfig(epochs=1, batch_size=4)
    for mode, expected in (("ds", 6), ("avg", 2), ("att", 2)):
        m = model(mode=mode)
        train_cm(m, bags, Y, bags, Y, cfg, np.random.default_rng(0))
        assert m.n_loss_items == expected


def test_empty_context_set():
    with pytest.raises(ValueError):
        train_cm(model(), [], np.zeros((0, 3)), [], np.zeros((0, 3)), TrainConfig(), np.random.default_rng(0))


def indicative_bags(rng, n_bags, n_types=3, q=4, width=6):
    # type t is signaled by token w{t}; other tokens are from w5..w7
    bags, Y = [], np.zeros((n_bags, n_types))
    for b in range(n_bags):
        t = b % n_types
        Y[b, t] = 1
        bag = rng.integers(8, 11, size=(q, width))
        bag[:, width // 2] = 1
        bag[:, rng.integers(0, width // 2)] = 3 + t
        bags.append(bag)
    return bags, Y


@pytest.mark.parametrize("mode", ["ds", "max_avg", "att"])
def test_indicative_tokens_are_learned(mode):
    rng = np.random.default_rng(0)
    bags, Y = indicative_bags(rng, 60)
    m = model("cnn", mode, hidden=8, n_filters=4)
    res = train_cm(m, bags[:40], Y[:40], bags[40:], Y[40:], TrainConfig(learning_rate=0.1, epochs=30, batch_size=8),
                   np.random.default_rng(0))
    assert res.best_score >= 0.9


def test_training_deterministic_and_bag_cap():
    rng = np.random.default_rng(0)
    bags, Y = indicative_bags(rng, 12, q=6)
    out = []
    for _ in range(2):
        m = model("ff", "max", bag_cap=3)
        train_cm(m, bags, Y, bags, Y, TrainConfig(epochs=2, batch_size=4), np.random.default_rng(9))
        out.append([p.value.copy() for p in m.params])
    for a, b in zip(*out):
        assert np.array_equal(a, b)


def test_cm_predict_matrix():
    m = model(mode="max")
    bags = random_bags(np.random.default_rng(0), [2, 5])
    s = cm_predict(m, bags, ["a", "b"], ["x", "y", "z"])
    assert s.shape == (2, 3) and s.entity_ids == ["a", "b"]
    assert np.array_equal(s.values, m.predict_bags(bags, agg="max"))
