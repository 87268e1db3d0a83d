"""Minibatch AdaGrad loop with best-on-dev model selection."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .evaluation import apply_thresholds, micro_f1, tune_thresholds
from .tensor import Adagrad

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 32
    epochs: int = 100
    patience: int = 10
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 1:
            raise ConfigError("batch_size, epochs and patience must be >= 1")


@dataclass
class TrainResult:
    best_epoch: int
    best_score: float
    log: list = field(default_factory=list)


def dev_micro_f1(probs, gold):
    """Micro F1 on dev after tuning per-type thresholds on the same dev scores."""
    return micro_f1(apply_thresholds(probs, tune_thresholds(probs, gold)), gold)


def fit(model, n_items, step, dev_score, config, rng, on_epoch_start=None):
    """Generic training loop.

    ``step(batch_indices)`` runs forward/backward for one minibatch and
    returns its mean loss; ``dev_score()`` evaluates the current parameters.
    The parameters of the best dev epoch are restored before returning.
    """
    if n_items == 0:
        raise ValueError("empty training set")
    opt = Adagrad(model.params, config.learning_rate, config.epsilon)
    best = TrainResult(0, -np.inf)
    best_state = None
    stale = 0
    for epoch in range(1, config.epochs + 1):
        if on_epoch_start is not None:
            on_epoch_start(rng)
        order = rng.permutation(n_items)
        total = 0.0
        for start in range(0, n_items, config.batch_size):
            batch = order[start:start + config.batch_size]
            opt.zero_grad()
            total += step(batch) * len(batch)
            opt.step()
        score = float(dev_score())
        best.log.append({"epoch": epoch, "loss": total / n_items, "dev_micro_f1": score})
        log.info("epoch %d loss %.5f dev micro-F1 %.4f", epoch, total / n_items, score)
        if score > best.best_score:
            best.best_score, best.best_epoch = score, epoch
            best_state = [p.value.copy() for p in model.params]
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    for p, v in zip(model.params, best_state):
        p.value[...] = v
    return best
