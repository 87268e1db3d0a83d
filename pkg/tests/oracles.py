"""Slow, literal reference implementations used as test oracles.

Written with plain loops and set arithmetic, independent of the vectorised
code paths they check.
"""
from fractions import Fraction


def _gold_sets(gold):
    return [{t for t, g in enumerate(row) if g} for row in gold]


def _ranked_types(row):
    # descending score, ties to the lower index
    return sorted(range(len(row)), key=lambda t: (-row[t], t))


def _f1(tp, fp, fn):
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def p_at_1(scores, gold):
    sets = _gold_sets(gold)
    hits = 0
    for row, g in zip(scores, sets):
        best = 0
        for t in range(len(row)):
            if row[t] > row[best]:
                best = t
        hits += best in g
    return hits / len(sets)


def bep(scores, gold):
    """Scan the ranked list for the point where precision equals recall."""
    total = 0.0
    for row, g in zip(scores, _gold_sets(gold)):
        ranked = _ranked_types(row)
        value = 0.0
        for k in range(1, len(ranked) + 1):
            tp = len(set(ranked[:k]) & g)
            p, r = Fraction(tp, k), Fraction(tp, len(g))
            if p == r and tp > 0:
                value = float(p)
        total += value
    return total / len(scores)


def strict_accuracy(assign, gold):
    pred = _gold_sets(assign)
    return sum(p == g for p, g in zip(pred, _gold_sets(gold))) / len(gold)


def micro_f1(assign, gold):
    tp = fp = fn = 0
    for p, g in zip(_gold_sets(assign), _gold_sets(gold)):
        tp += len(p & g)
        fp += len(p - g)
        fn += len(g - p)
    return 0.0 if tp == 0 else 2 * tp / (2 * tp + fp + fn)


def entity_macro_f1(assign, gold):
    vals = []
    for p, g in zip(_gold_sets(assign), _gold_sets(gold)):
        vals.append(_f1(len(p & g), len(p - g), len(g - p)))
    return sum(vals) / len(vals)


def type_macro_f1(assign, gold):
    T = len(gold[0])
    vals = []
    for t in range(T):
        tp = sum(1 for a, g in zip(assign, gold) if a[t] and g[t])
        fp = sum(1 for a, g in zip(assign, gold) if a[t] and not g[t])
        fn = sum(1 for a, g in zip(assign, gold) if not a[t] and g[t])
        if tp + fp + fn:
            vals.append(_f1(tp, fp, fn))
    return sum(vals) / len(vals) if vals else None


def _ranked_entities(scores, t):
    return sorted(range(len(scores)), key=lambda e: (-scores[e][t], e))


def mean_average_precision(scores, gold):
    aps = []
    for t in range(len(gold[0])):
        ranked = _ranked_entities(scores, t)
        positives = [i for i, e in enumerate(ranked, 1) if gold[e][t]]
        if not positives:
            continue
        precs = []
        for pos in positives:
            precs.append(sum(1 for e in ranked[:pos] if gold[e][t]) / pos)
        aps.append(sum(precs) / len(precs))
    return sum(aps) / len(aps) if aps else None


def label_p_at_k(scores, gold, k):
    vals = []
    for t in range(len(gold[0])):
        if not any(g[t] for g in gold):
            continue
        ranked = _ranked_entities(scores, t)
        vals.append(sum(1 for e in ranked[:k] if gold[e][t]) / k)
    return sum(vals) / len(vals) if vals else None


def best_threshold(col_scores, col_gold):
    """Exhaustive search over every candidate threshold for one type."""
    values = sorted(set(col_scores))
    cands = [0.0] + [(a + b) / 2 for a, b in zip(values, values[1:])] + [1.0]
    best, best_f1 = None, -1.0
    for c in cands:
        tp = sum(1 for s, g in zip(col_scores, col_gold) if s > c and g)
        fp = sum(1 for s, g in zip(col_scores, col_gold) if s > c and not g)
        fn = sum(1 for s, g in zip(col_scores, col_gold) if not s > c and g)
        f = _f1(tp, fp, fn)
        if f > best_f1:
            best, best_f1 = c, f
    return best, best_f1
