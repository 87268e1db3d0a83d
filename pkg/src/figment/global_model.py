"""Global model: one-hidden-layer MLP from an entity representation to per-type probabilities."""
from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .scores import TypeScoreMatrix
from .tensor import (
    bce,
    bce_grad,
    dense_backward,
    dense_forward,
    glorot_uniform,
    rectifier,
    rectifier_backward,
    sigmoid,
    sigmoid_backward,
    zeros_param,
)
from .training import dev_micro_f1, fit


class GlobalModel:
    """``sigmoid(W_out relu(W_in e + b_in) + b_out)`` over an encoder's output ``e``.

    ``encoder`` is an :class:`~figment.representations.EntityEncoder` or
    :class:`~figment.representations.SparseEncoder`; its trainable parameters
    (the CLR character network) are trained jointly with the MLP.
    """

    def __init__(self, encoder, n_types, hidden, rng):
        d = encoder.out_dim
        self.encoder = encoder
        self.W_in = glorot_uniform(rng, (hidden, d), d, hidden, name="W_in")
        self.b_in = zeros_param(hidden, name="b_in")
        self.W_out = glorot_uniform(rng, (n_types, hidden), hidden, n_types, name="W_out")
        self.b_out = zeros_param(n_types, name="b_out")

    @property
    def params(self):
        return [self.W_in, self.b_in, self.W_out, self.b_out] + list(self.encoder.params)

    @property
    def n_types(self):
        return self.W_out.shape[0]

    def score_vector(self, e):
        """Per-type probabilities for one precomputed representation vector."""
        e = np.asarray(e)
        if e.shape != (self.W_in.shape[1],):
            raise ShapeError(f"representation has shape {e.shape}, model expects ({self.W_in.shape[1]},)")
        h = rectifier(self.W_in.value @ e + self.b_in.value)
        return sigmoid(self.W_out.value @ h + self.b_out.value)

    def forward(self, feats, rows):
        x, enc_cache = self.encoder.forward(feats, rows)
        z1, c1 = dense_forward(self.W_in, x, self.b_in)
        a1 = rectifier(z1)
        z2, c2 = dense_forward(self.W_out, a1, self.b_out)
        p = sigmoid(z2)
        return p, (enc_cache, c1, z1, c2, p)

    def backward(self, cache, dp):
        enc_cache, c1, z1, c2, p = cache
        dz2 = sigmoid_backward(p, dp)
        da1 = dense_backward(self.W_out, c2, dz2, self.b_out)
        dz1 = rectifier_backward(z1, da1)
        dx = dense_backward(self.W_in, c1, dz1, self.b_in)
        self.encoder.backward(enc_cache, dx)

    def loss_and_grad(self, feats, rows, Y):
        """Mean over the batch of the per-entity loss; gradients accumulate in params."""
        p, cache = self.forward(feats, rows)
        y = Y[rows]
        self.backward(cache, bce_grad(y, p) / len(rows))
        return float(bce(y, p).sum(axis=1).mean())

    def predict(self, feats, batch_size=512):
        n = len(feats.ids) if hasattr(feats, "ids") else len(feats)
        out = np.zeros((n, self.n_types))
        for start in range(0, n, batch_size):
            rows = np.arange(start, min(n, start + batch_size))
            out[rows], _ = self.forward(feats, rows)
        return out


def gm_loss(probs, gold):
    """Binary cross-entropy summed over types."""
    return float(bce(np.asarray(gold, dtype=np.float64), probs).sum())


def train_gm(model, train_feats, Y_train, dev_feats, Y_dev, config, rng):
    """AdaGrad minibatch training; returns the TrainResult of the best dev epoch."""
    n = len(Y_train)
    return fit(
        model, n,
        step=lambda rows: model.loss_and_grad(train_feats, rows, Y_train),
        dev_score=lambda: dev_micro_f1(model.predict(dev_feats), Y_dev.astype(bool)),
        config=config, rng=rng,
    )


def gm_predict(model, feats, entity_ids, type_ids):
    return TypeScoreMatrix(entity_ids, type_ids, model.predict(feats))


def mft_baseline(train_gold, entity_ids, type_ids):
    """Score 1 for the most frequent training type (lowest index on ties), 0 elsewhere."""
    counts = np.asarray(train_gold, dtype=np.int64).sum(axis=0)
    values = np.zeros((len(entity_ids), len(type_ids)))
    values[:, int(np.argmax(counts))] = 1.0
    return TypeScoreMatrix(entity_ids, type_ids, values)
