"""Example-based and label-based multi-label metrics.

``scores`` is an ``(entities, types)`` array of probabilities, ``gold`` and
``assign`` are boolean arrays of the same shape.  Rankings break ties by the
lower index (stable sort), so every metric is deterministic.
"""
from __future__ import annotations

import logging

import numpy as np

log = logging.getLogger(__name__)

ENTITY_METRICS = ("p_at_1", "bep", "accuracy", "micro_f1", "entity_macro_f1", "map", "p_at_k", "type_macro_f1")
TYPE_METRICS = ("map", "p_at_k", "type_macro_f1")


def _f1(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)


def _require_gold(gold):
    if gold.shape[0] and not gold.any(axis=1).all():
        raise ValueError("every evaluated entity needs at least one gold type")


def tune_thresholds(scores, gold):
    """Per type, the threshold maximising that type's F1 on dev.

    Candidates are 0, the midpoints between consecutive distinct scores, and
    1; a type is assigned when ``score > threshold``.  Ties go to the smallest
    candidate.  Types without dev positives get 1.0 (never assigned).
    """
    scores = np.asarray(scores, dtype=np.float64)
    gold = np.asarray(gold, dtype=bool)
    n, T = scores.shape
    thresholds = np.ones(T)
    for t in range(T):
        y = gold[:, t]
        n_pos = int(y.sum())
        if n_pos == 0:
            log.debug("type column %d has no dev positives; threshold set to 1.0", t)
            continue
        order = np.argsort(scores[:, t], kind="stable")
        ss, yy = scores[order, t], y[order]
        distinct = np.unique(ss)
        cands = np.concatenate(([0.0], (distinct[:-1] + distinct[1:]) / 2, [1.0]))
        below = np.searchsorted(ss, cands, side="right")
        pos_below = np.concatenate(([0], np.cumsum(yy)))[below]
        tp = n_pos - pos_below
        fp = (n - below) - tp
        fn = n_pos - tp
        thresholds[t] = cands[int(np.argmax(_f1(tp, fp, fn)))]
    return thresholds


def apply_thresholds(scores, thresholds):
    return np.asarray(scores) > np.asarray(thresholds)[None, :]


def p_at_1(scores, gold):
    gold = np.asarray(gold, dtype=bool)
    _require_gold(gold)
    if not len(gold):
        return None
    top = np.argmax(scores, axis=1)
    return float(gold[np.arange(len(top)), top].mean())


def bep(scores, gold):
    """Mean per-entity precision at rank ``|gold|``, where precision equals recall."""
    gold = np.asarray(gold, dtype=bool)
    _require_gold(gold)
    if not len(gold):
        return None
    order = np.argsort(-np.asarray(scores), axis=1, kind="stable")
    ranked = np.take_along_axis(gold, order, axis=1)
    r = gold.sum(axis=1)
    hits = np.cumsum(ranked, axis=1)[np.arange(len(r)), r - 1]
    return float((hits / r).mean())


def strict_accuracy(assign, gold):
    gold = np.asarray(gold, dtype=bool)
    _require_gold(gold)
    if not len(gold):
        return None
    return float((np.asarray(assign, dtype=bool) == gold).all(axis=1).mean())


def micro_f1(assign, gold):
    assign = np.asarray(assign, dtype=bool)
    gold = np.asarray(gold, dtype=bool)
    if not gold.size:
        return None
    tp = int((assign & gold).sum())
    fp = int((assign & ~gold).sum())
    fn = int((~assign & gold).sum())
    return float(_f1(tp, fp, fn))


def entity_macro_f1(assign, gold):
    assign = np.asarray(assign, dtype=bool)
    gold = np.asarray(gold, dtype=bool)
    _require_gold(gold)
    if not len(gold):
        return None
    tp = (assign & gold).sum(axis=1)
    fp = (assign & ~gold).sum(axis=1)
    fn = (~assign & gold).sum(axis=1)
    return float(_f1(tp, fp, fn).mean())


def type_macro_f1(assign, gold):
    """Mean per-type F1 over types with at least one gold or predicted entity."""
    assign = np.asarray(assign, dtype=bool)
    gold = np.asarray(gold, dtype=bool)
    tp = (assign & gold).sum(axis=0)
    fp = (assign & ~gold).sum(axis=0)
    fn = (~assign & gold).sum(axis=0)
    used = (tp + fp + fn) > 0
    if not used.any():
        return None
    return float(_f1(tp, fp, fn)[used].mean())


def _type_rankings(scores, gold):
    order = np.argsort(-np.asarray(scores), axis=0, kind="stable")
    return np.take_along_axis(np.asarray(gold, dtype=bool), order, axis=0)


def mean_average_precision(scores, gold):
    """Mean over types (with at least one positive) of average precision."""
    gold = np.asarray(gold, dtype=bool)
    if not gold.size:
        return None
    ranked = _type_rankings(scores, gold)
    hits = np.cumsum(ranked, axis=0)
    ranks = np.arange(1, len(ranked) + 1)[:, None]
    n_pos = ranked.sum(axis=0)
    used = n_pos > 0
    if not used.any():
        return None
    ap = (ranked * hits / ranks).sum(axis=0)[used] / n_pos[used]
    return float(ap.mean())


def label_p_at_k(scores, gold, k=50):
    """Mean over types (with at least one positive) of precision in the top ``k`` entities."""
    gold = np.asarray(gold, dtype=bool)
    if not gold.size:
        return None
    ranked = _type_rankings(scores, gold)
    used = ranked.sum(axis=0) > 0
    if not used.any():
        return None
    return float((ranked[:k].sum(axis=0)[used] / k).mean())


def partition_entities(records, head_min=100, tail_max=5):
    """all / head (freq > head_min) / tail (freq < tail_max) entity ids."""
    records = list(records)
    return {
        "all": [r.id for r in records],
        "head": [r.id for r in records if r.freq > head_min],
        "tail": [r.id for r in records if r.freq < tail_max],
    }


def partition_types(inventory, head_min=3000, tail_max=200):
    """all / head / tail type ids by train-entity frequency."""
    counts = inventory.counts
    return {
        "all": list(inventory.types),
        "head": [t for t in inventory.types if counts.get(t, 0) > head_min],
        "tail": [t for t in inventory.types if counts.get(t, 0) < tail_max],
    }


def all_metrics(scores, gold, assign, k=50):
    if not len(gold):
        return {m: None for m in ENTITY_METRICS}
    return {
        "p_at_1": p_at_1(scores, gold),
        "bep": bep(scores, gold),
        "accuracy": strict_accuracy(assign, gold),
        "micro_f1": micro_f1(assign, gold),
        "entity_macro_f1": entity_macro_f1(assign, gold),
        "map": mean_average_precision(scores, gold),
        "p_at_k": label_p_at_k(scores, gold, k),
        "type_macro_f1": type_macro_f1(assign, gold),
    }


def evaluate(scores, gold, thresholds, entity_slices=None, type_slices=None, k=50):
    """Full report: every metric per entity slice, label-based metrics per type slice.

    ``entity_slices`` maps a slice name to row indices and ``type_slices`` to
    column indices; both default to a single ``all`` slice.
    """
    scores = np.asarray(scores, dtype=np.float64)
    gold = np.asarray(gold, dtype=bool)
    assign = apply_thresholds(scores, thresholds)
    entity_slices = entity_slices or {"all": np.arange(len(scores))}
    type_slices = type_slices or {"all": np.arange(scores.shape[1])}
    report = {"k": k, "entities": {}, "types": {}}
    for name, rows in entity_slices.items():
        rows = np.asarray(rows, dtype=np.int64)
        report["entities"][name] = dict(all_metrics(scores[rows], gold[rows], assign[rows], k), n=int(len(rows)))
    for name, cols in type_slices.items():
        cols = np.asarray(cols, dtype=np.int64)
        s, g, a = scores[:, cols], gold[:, cols], assign[:, cols]
        report["types"][name] = {
            "map": mean_average_precision(s, g) if len(cols) else None,
            "p_at_k": label_p_at_k(s, g, k) if len(cols) else None,
            "type_macro_f1": type_macro_f1(a, g) if len(cols) else None,
            "n": int(len(cols)),
        }
    return report
