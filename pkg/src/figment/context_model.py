"""Context model: FF/CNN context encoders, a per-type sigmoid head and MIML aggregation over bags."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .corpus import PAD, SLOT, UNK
from .errors import ConfigError, ShapeError
from .scores import TypeScoreMatrix
from .tensor import (
    Parameter,
    bce,
    bce_grad,
    conv1d_narrow,
    conv1d_narrow_backward,
    glorot_uniform,
    lookup_backward,
    lookup_forward,
    maxpool,
    maxpool_backward,
    sigmoid,
    sigmoid_backward,
    tanh_backward,
    zeros_param,
)
from .training import dev_micro_f1, fit

# mode -> (train aggregation, predict aggregation); "context" trains on single contexts
MODES = {
    "ds": ("context", "avg"),
    "max": ("max", "max"),
    "avg": ("avg", "avg"),
    "max_avg": ("max", "avg"),
    "att": ("att", "att"),
}


class ContextVocab:
    """Token ids for context windows. PAD=0, SLOT=1, UNK=2."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[:3] != [PAD, SLOT, UNK]:
            raise ValueError("vocabulary must start with PAD, SLOT, UNK")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}

    PAD_ID, SLOT_ID, UNK_ID = 0, 1, 2

    @classmethod
    def build(cls, contexts, min_count=1):
        counts = Counter(t for c in contexts for t in c.tokens)
        for t in (PAD, SLOT, UNK):
            counts.pop(t, None)
        return cls([PAD, SLOT, UNK] + sorted(t for t, n in counts.items() if n >= min_count))

    def __len__(self):
        return len(self.tokens)

    def encode(self, tokens):
        return np.array([self.index.get(t, self.UNK_ID) for t in tokens], dtype=np.int64)

    def encode_bag(self, bag):
        return np.stack([self.encode(c.tokens) for c in bag.contexts]) if bag.contexts else np.zeros((0, 0), np.int64)


def word_table(vocab, dim, rng, pretrained=None):
    """Trainable lookup table; PAD starts at zero, known words from ``pretrained`` when given."""
    W = rng.normal(0.0, 0.1, size=(len(vocab), dim))
    W[ContextVocab.PAD_ID] = 0.0
    if pretrained is not None:
        if pretrained.dim != dim:
            raise ShapeError(f"pretrained word vectors have dim {pretrained.dim}, config says {dim}")
        for i, t in enumerate(vocab.tokens):
            if i != ContextVocab.PAD_ID and t in pretrained:
                W[i] = pretrained[t]
    return Parameter(W, name="word_table")


class FFContextEncoder:
    """Concatenate all s token vectors, then ``tanh(W_h x)``."""

    def __init__(self, table, width, hidden, rng):
        self.table = table
        d = table.shape[1]
        self.width = width
        self.W_h = glorot_uniform(rng, (hidden, d * width), d * width, hidden, name="W_h")
        self.out_dim = hidden

    @property
    def params(self):
        return [self.table, self.W_h]

    def forward(self, ids):
        if ids.shape[1] != self.width:
            raise ShapeError(f"context width {ids.shape[1]}, encoder expects {self.width}")
        E, ids = lookup_forward(self.table, ids)
        x = E.reshape(len(ids), -1)
        c = np.tanh(x @ self.W_h.value.T)
        return c, (ids, x, c)

    def backward(self, cache, dc):
        ids, x, c = cache
        dz = tanh_backward(c, dc)
        self.W_h.grad += dz.T @ x
        dx = dz @ self.W_h.value
        lookup_backward(self.table, ids, dx.reshape(ids.shape + (-1,)))


class CNNContextEncoder:
    """Convolve left and right halves, max-pool, concatenate, then ``tanh(W_h phi)``.

    Filters have no bias.  With ``share_halves`` the same filter bank is applied
    to both halves.  A half shorter than the widest filter is extended with PAD
    on its outer side.
    """

    def __init__(self, table, widths, n_filters, hidden, rng, share_halves=True):
        self.table = table
        d = table.shape[1]
        self.widths = tuple(widths)
        self.n_filters = n_filters
        self.left = [glorot_uniform(rng, (n_filters, d, w), d * w, n_filters, name=f"H{w}") for w in self.widths]
        if share_halves:
            self.right = self.left
        else:
            self.right = [glorot_uniform(rng, (n_filters, d, w), d * w, n_filters, name=f"H{w}_right")
                          for w in self.widths]
        phi = 2 * n_filters * len(self.widths)
        self.W_h = glorot_uniform(rng, (hidden, phi), phi, hidden, name="W_h")
        self.out_dim = hidden

    @property
    def params(self):
        filters = self.left if self.right is self.left else self.left + self.right
        return [self.table] + filters + [self.W_h]

    def halves(self, ids):
        half = ids.shape[1] // 2
        L, R = ids[:, :half], ids[:, half:]
        short = max(self.widths) - half
        if short > 0:
            pad = np.full((len(ids), short), ContextVocab.PAD_ID, dtype=ids.dtype)
            L = np.concatenate([pad, L], axis=1)
        short = max(self.widths) - R.shape[1]
        if short > 0:
            pad = np.full((len(ids), short), ContextVocab.PAD_ID, dtype=ids.dtype)
            R = np.concatenate([R, pad], axis=1)
        return L, R

    def _pool(self, E, bank):
        pooled, caches = [], []
        for H in bank:
            m, cache = conv1d_narrow(E, H)
            v, idx = maxpool(m)
            pooled.append(v)
            caches.append((cache, idx, m.shape[-1]))
        return pooled, caches

    def forward(self, ids):
        L, R = self.halves(ids)
        EL, L = lookup_forward(self.table, L)
        ER, R = lookup_forward(self.table, R)
        pl, cl = self._pool(EL, self.left)
        pr, cr = self._pool(ER, self.right)
        phi = np.concatenate(pl + pr, axis=-1)
        c = np.tanh(phi @ self.W_h.value.T)
        return c, (L, R, EL.shape, ER.shape, cl, cr, phi, c)

    def backward(self, cache, dc):
        L, R, shape_l, shape_r, cl, cr, phi, c = cache
        dz = tanh_backward(c, dc)
        self.W_h.grad += dz.T @ phi
        dphi = dz @ self.W_h.value
        n, k = self.n_filters, len(self.widths)
        for ids, shape, bank, caches, off in ((L, shape_l, self.left, cl, 0), (R, shape_r, self.right, cr, n * k)):
            dE = np.zeros(shape)
            for j, (H, (conv_cache, idx, length)) in enumerate(zip(bank, caches)):
                dm = maxpool_backward(idx, length, dphi[:, off + j * n: off + (j + 1) * n])
                dE += conv1d_narrow_backward(H, conv_cache, dm)
            lookup_backward(self.table, ids, dE)


# -- aggregation -------------------------------------------------------------


def check_offsets(offsets, n):
    offsets = np.asarray(offsets, dtype=np.int64)
    if offsets[0] != 0 or offsets[-1] != n or np.any(np.diff(offsets) < 1):
        raise ValueError("every bag needs at least one context")
    return offsets


def aggregate_max(P, offsets):
    """Per bag and type, the maximum context probability and the row it came from."""
    offsets = check_offsets(offsets, len(P))
    Q = np.maximum.reduceat(P, offsets[:-1], axis=0)
    arg = np.empty(Q.shape, dtype=np.int64)
    for b in range(len(Q)):
        arg[b] = offsets[b] + np.argmax(P[offsets[b]:offsets[b + 1]], axis=0)
    return Q, arg


def aggregate_avg(P, offsets):
    offsets = check_offsets(offsets, len(P))
    return np.add.reduceat(P, offsets[:-1], axis=0) / np.diff(offsets)[:, None]


def attention_weights(C, K):
    """Softmax over the bag (axis 0) of ``C @ K``; ``K`` is ``M @ type_emb.T``."""
    S = C @ K
    S = S - S.max(axis=0)
    E = np.exp(S)
    return E / E.sum(axis=0)


def head_logits(X, W, b):
    # elementwise product-sum so that every aggregation path computes w_t . x identically
    return (X * W).sum(axis=-1) + b


# -- model -------------------------------------------------------------------


@dataclass
class CMConfig:
    encoder: str = "cnn"
    mode: str = "ds"
    word_dim: int = 100
    hidden: int | None = None
    widths: tuple = (1, 2, 3, 4)
    n_filters: int = 300
    share_halves: bool = True
    type_dim: int | None = None
    bag_cap: int = 100
    width: int = 10

    def __post_init__(self):
        if self.encoder not in ("ff", "cnn"):
            raise ConfigError(f"unknown context encoder {self.encoder!r}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown MIML mode {self.mode!r}; expected one of {sorted(MODES)}")
        if self.hidden is None:
            self.hidden = 500 if self.encoder == "ff" else 600
        if self.type_dim is None:
            self.type_dim = self.word_dim
        self.widths = tuple(self.widths)
        if self.bag_cap < 1:
            raise ConfigError("bag_cap must be >= 1")


class ContextModel:
    def __init__(self, config, vocab, n_types, rng, pretrained_words=None, type_vectors=None):
        self.config = config
        self.vocab = vocab
        table = word_table(vocab, config.word_dim, rng, pretrained_words)
        if config.encoder == "ff":
            self.encoder = FFContextEncoder(table, config.width, config.hidden, rng)
        else:
            self.encoder = CNNContextEncoder(table, config.widths, config.n_filters, config.hidden, rng,
                                             config.share_halves)
        h = self.encoder.out_dim
        self.W_t = glorot_uniform(rng, (n_types, h), h, n_types, name="W_t")
        self.b_t = zeros_param(n_types, name="b_t")
        self.M = self.type_emb = None
        if config.mode == "att":
            self.M = glorot_uniform(rng, (h, config.type_dim), h, config.type_dim, name="M")
            if type_vectors is None:
                te = rng.normal(0.0, 0.1, size=(n_types, config.type_dim))
            else:
                te = np.array(type_vectors, dtype=np.float64)
                if te.shape != (n_types, config.type_dim):
                    raise ShapeError(f"type vectors {te.shape}, expected {(n_types, config.type_dim)}")
            self.type_emb = Parameter(te, name="type_emb")
        self.train_agg, self.predict_agg = MODES[config.mode]
        self.n_loss_items = 0

    @property
    def params(self):
        extra = [self.M, self.type_emb] if self.M is not None else []
        return self.encoder.params + [self.W_t, self.b_t] + extra

    @property
    def n_types(self):
        return self.W_t.shape[0]

    def context_probs(self, C):
        return sigmoid(head_logits(C[:, None, :], self.W_t.value, self.b_t.value))

    # bag-level forward/backward over concatenated contexts with bag offsets

    def bag_forward(self, ids, offsets, agg):
        C, enc_cache = self.encoder.forward(ids)
        offsets = check_offsets(offsets, len(C))
        if agg == "att":
            return self._att_forward(C, offsets, enc_cache)
        P = self.context_probs(C)
        if agg == "max":
            Q, arg = aggregate_max(P, offsets)
        elif agg == "avg":
            Q, arg = aggregate_avg(P, offsets), None
        else:
            raise ConfigError(f"unknown aggregation {agg!r}")
        return Q, (agg, enc_cache, C, P, offsets, arg)

    def _att_forward(self, C, offsets, enc_cache):
        if self.M is None:
            raise ConfigError("attention needs a model built with mode 'att'")
        K = self.M.value @ self.type_emb.value.T
        W, b = self.W_t.value, self.b_t.value
        Q = np.empty((len(offsets) - 1, self.n_types))
        saved = []
        for j in range(len(Q)):
            Cb = C[offsets[j]:offsets[j + 1]]
            alpha = attention_weights(Cb, K)
            A = (alpha[:, :, None] * Cb[:, None, :]).sum(axis=0)
            Q[j] = sigmoid(head_logits(A, W, b))
            saved.append((alpha, A))
        return Q, ("att", enc_cache, C, K, offsets, saved)

    def attention(self, C):
        """Attention weights of one bag of encoded contexts, shape (q, |T|)."""
        return attention_weights(C, self.M.value @ self.type_emb.value.T)

    def bag_backward(self, cache, Q, dQ):
        agg, enc_cache, C = cache[:3]
        dC = np.zeros_like(C)
        if agg == "att":
            _, _, _, K, offsets, saved = cache
            W = self.W_t.value
            dK = np.zeros_like(K)
            for j, (alpha, A) in enumerate(saved):
                sl = slice(offsets[j], offsets[j + 1])
                dz = sigmoid_backward(Q[j], dQ[j])
                self.W_t.grad += dz[:, None] * A
                self.b_t.grad += dz
                dA = dz[:, None] * W
                Cb = C[sl]
                dalpha = Cb @ dA.T
                dS = alpha * (dalpha - (alpha * dalpha).sum(axis=0))
                dC[sl] = alpha @ dA + dS @ K.T
                dK += Cb.T @ dS
            self.M.grad += dK @ self.type_emb.value
            self.type_emb.grad += dK.T @ self.M.value
        else:
            _, _, _, P, offsets, arg = cache
            if agg == "max":
                dP = np.zeros_like(P)
                cols = np.broadcast_to(np.arange(P.shape[1]), arg.shape)
                np.add.at(dP, (arg, cols), dQ)
            else:
                sizes = np.diff(offsets)
                dP = np.repeat(dQ / sizes[:, None], sizes, axis=0)
            self._head_backward(C, P, dP, dC)
        self.encoder.backward(enc_cache, dC)

    def _head_backward(self, C, P, dP, dC):
        dz = sigmoid_backward(P, dP)
        self.W_t.grad += dz.T @ C
        self.b_t.grad += dz.sum(axis=0)
        dC += dz @ self.W_t.value

    def bag_loss_and_grad(self, ids, offsets, Y, agg=None):
        """Entity-level loss: mean over bags of the per-bag summed BCE."""
        Q, cache = self.bag_forward(ids, offsets, agg or self.train_agg)
        self.bag_backward(cache, Q, bce_grad(Y, Q) / len(Y))
        self.n_loss_items += len(Y)
        return float(bce(Y, Q).sum(axis=1).mean())

    def context_loss_and_grad(self, ids, Y):
        """Context-level loss: mean over contexts of the per-context summed BCE."""
        C, enc_cache = self.encoder.forward(ids)
        P = self.context_probs(C)
        dC = np.zeros_like(C)
        self._head_backward(C, P, bce_grad(Y, P) / len(Y), dC)
        self.encoder.backward(enc_cache, dC)
        self.n_loss_items += len(Y)
        return float(bce(Y, P).sum(axis=1).mean())

    def predict_bags(self, bag_ids, batch_size=64, agg=None):
        """Corpus-level probabilities for a list of (q, s) id arrays."""
        agg = agg or self.predict_agg
        out = np.zeros((len(bag_ids), self.n_types))
        for start in range(0, len(bag_ids), batch_size):
            chunk = bag_ids[start:start + batch_size]
            offsets = np.concatenate([[0], np.cumsum([len(b) for b in chunk])])
            out[start:start + len(chunk)], _ = self.bag_forward(np.concatenate(chunk), offsets, agg)
        return out


def cap_bag(ids, cap, rng):
    if len(ids) <= cap:
        return ids
    return ids[np.sort(rng.choice(len(ids), cap, replace=False))]


def train_cm(model, train_bags, Y_train, dev_bags, Y_dev, config, rng):
    """Train on lists of (q, s) id arrays with gold matrices; returns the best-dev TrainResult.

    DS iterates over individual contexts, every MIML mode over whole bags.
    """
    if not train_bags or sum(len(b) for b in train_bags) == 0:
        raise ValueError("empty context set")
    Y_train = np.asarray(Y_train, dtype=np.float64)

    def dev_score():
        return dev_micro_f1(model.predict_bags(dev_bags), np.asarray(Y_dev, dtype=bool))

    if model.train_agg == "context":
        ids = np.concatenate(train_bags)
        owner = np.repeat(np.arange(len(train_bags)), [len(b) for b in train_bags])
        return fit(model, len(ids),
                   step=lambda rows: model.context_loss_and_grad(ids[rows], Y_train[owner[rows]]),
                   dev_score=dev_score, config=config, rng=rng)

    epoch_bags = list(train_bags)

    def resample(r):
        epoch_bags[:] = [cap_bag(b, model.config.bag_cap, r) for b in train_bags]

    def step(rows):
        chunk = [epoch_bags[i] for i in rows]
        offsets = np.concatenate([[0], np.cumsum([len(b) for b in chunk])])
        return model.bag_loss_and_grad(np.concatenate(chunk), offsets, Y_train[rows])

    return fit(model, len(train_bags), step=step, dev_score=dev_score, config=config, rng=rng,
               on_epoch_start=resample)


def cm_predict(model, bag_ids, entity_ids, type_ids):
    return TypeScoreMatrix(entity_ids, type_ids, model.predict_bags(bag_ids))
