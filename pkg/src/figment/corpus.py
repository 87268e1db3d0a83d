"""Corpus ingestion: file formats, preprocessing, context windows, sampling, splits."""
from __future__ import annotations

import logging
import re
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, UnknownEntityError

log = logging.getLogger(__name__)

PAD = "<PAD>"
SLOT = "<SLOT>"
UNK = "<UNK>"
TYPE_PREFIX = "TYPE_"
META_PREFIX = "## "

_URL_RE = re.compile(r"^(?:[a-z][a-z0-9+.\-]*://|www\.)\S+$", re.IGNORECASE)
_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")
_DIGIT_RE = re.compile(r"\d")


@dataclass(frozen=True)
class EntityRecord:
    id: str
    name: tuple
    notable_type: str
    gold_types: tuple
    freq: int = 0

    @property
    def name_text(self):
        return " ".join(self.name)


@dataclass(frozen=True)
class Sentence:
    tokens: tuple
    mentions: tuple = ()  # (entity_id, start, end), end exclusive

    @property
    def text(self):
        return " ".join(self.tokens)


@dataclass(frozen=True)
class Context:
    entity_id: str
    tokens: tuple
    labels: tuple

    @property
    def width(self):
        return len(self.tokens)

    @property
    def left(self):
        return self.tokens[: self.width // 2]

    @property
    def right(self):
        return self.tokens[self.width // 2:]


@dataclass
class Bag:
    entity_id: str
    contexts: list = field(default_factory=list)

    def __len__(self):
        return len(self.contexts)


class TypeInventory:
    """Ordered type ids with dense indices and train-entity frequencies."""

    def __init__(self, types, counts=None):
        types = list(types)
        if len(set(types)) != len(types):
            raise ConfigError("duplicate type ids in inventory")
        self.types = types
        self.index = {t: i for i, t in enumerate(types)}
        self.counts = dict(counts or {})

    def __len__(self):
        return len(self.types)

    def __iter__(self):
        return iter(self.types)

    def __contains__(self, t):
        return t in self.index

    def indicator(self, type_ids):
        y = np.zeros(len(self.types))
        for t in type_ids:
            if t in self.index:
                y[self.index[t]] = 1.0
        return y

    def with_counts(self, records):
        counts = {t: 0 for t in self.types}
        for r in records:
            for t in r.gold_types:
                if t in counts:
                    counts[t] += 1
        return TypeInventory(self.types, counts)


# -- file formats ----------------------------------------------------------


def _data_lines(path):
    with open(path, encoding="utf-8", newline="\n") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if line.startswith(META_PREFIX):
                continue
            yield lineno, line


def read_meta(path):
    """Collect ``## key=value`` header lines of a file written by this package."""
    meta = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.startswith(META_PREFIX):
                break
            key, _, value = line[len(META_PREFIX):].rstrip("\n").partition("=")
            meta[key] = value
    return meta


def _meta_header(meta):
    return "".join(f"{META_PREFIX}{k}={v}\n" for k, v in (meta or {}).items())


def parse_corpus_line(line, path="<corpus>", lineno=0):
    text, sep, ann = line.partition("\t")
    if not sep:
        raise FormatError(path, lineno, "missing TAB between tokens and mentions")
    tokens = tuple(text.split(" ")) if text else ()
    if any(t == "" for t in tokens):
        raise FormatError(path, lineno, "empty token (tokens must be single-space separated)")
    mentions = []
    if ann:
        for item in ann.split(";"):
            parts = item.split(",")
            if len(parts) != 3:
                raise FormatError(path, lineno, f"bad mention {item!r}")
            eid, start, end = parts
            try:
                start, end = int(start), int(end)
            except ValueError:
                raise FormatError(path, lineno, f"bad mention offsets {item!r}") from None
            if not (0 <= start < end <= len(tokens)):
                raise FormatError(path, lineno, f"mention span {start},{end} out of bounds")
            mentions.append((eid, start, end))
    spans = sorted((s, e) for _, s, e in mentions)
    for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
        if s2 < e1:
            raise FormatError(path, lineno, "overlapping mentions")
    return Sentence(tokens, tuple(mentions))


def format_corpus_line(sent):
    ann = ";".join(f"{e},{s},{t}" for e, s, t in sent.mentions)
    return " ".join(sent.tokens) + "\t" + ann


def read_corpus(path):
    return [parse_corpus_line(line, path, n) for n, line in _data_lines(path)]


def write_corpus(path, sentences):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for s in sentences:
            f.write(format_corpus_line(s) + "\n")


def read_catalog(path):
    catalog = {}
    for lineno, line in _data_lines(path):
        if not line:
            continue
        cols = line.split("\t")
        if len(cols) not in (4, 5):
            raise FormatError(path, lineno, f"expected 4 or 5 columns, got {len(cols)}")
        eid, name, notable, types = cols[:4]
        gold = tuple(t for t in types.split(",") if t)
        freq = 0
        if len(cols) == 5:
            try:
                freq = int(cols[4])
            except ValueError:
                raise FormatError(path, lineno, f"bad freq {cols[4]!r}") from None
        if eid in catalog:
            raise FormatError(path, lineno, f"duplicate entity {eid!r}")
        if not gold or notable not in gold:
            raise FormatError(path, lineno, f"notable type {notable!r} must be one of the gold types")
        catalog[eid] = EntityRecord(eid, tuple(name.split()), notable, gold, freq)
    return catalog


def write_catalog(path, records):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for r in records:
            f.write(f"{r.id}\t{r.name_text}\t{r.notable_type}\t{','.join(r.gold_types)}\t{r.freq}\n")


def read_inventory(path):
    return TypeInventory([line for _, line in _data_lines(path) if line])


def write_inventory(path, inventory):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for t in inventory:
            f.write(t + "\n")


def write_contexts(path, contexts, meta=None):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(_meta_header(meta))
        for c in contexts:
            f.write(f"{c.entity_id}\t{','.join(c.labels)}\t{' '.join(c.tokens)}\n")


def read_contexts(path):
    out = []
    for lineno, line in _data_lines(path):
        cols = line.split("\t")
        if len(cols) != 3:
            raise FormatError(path, lineno, "expected 3 columns")
        labels = tuple(t for t in cols[1].split(",") if t)
        out.append(Context(cols[0], tuple(cols[2].split(" ")), labels))
    return out


def write_splits(path, splits, meta=None):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(_meta_header(meta))
        for name in ("train", "dev", "test"):
            for eid in sorted(splits[name]):
                f.write(f"{eid}\t{name}\n")


def read_splits(path):
    splits = {"train": [], "dev": [], "test": []}
    for lineno, line in _data_lines(path):
        eid, _, name = line.partition("\t")
        if name not in splits:
            raise FormatError(path, lineno, f"unknown split {name!r}")
        splits[name].append(eid)
    return splits


# -- preprocessing ---------------------------------------------------------


def _is_punct(ch):
    return unicodedata.category(ch)[0] in "PS"


def _split_token(tok):
    if _URL_RE.match(tok) or _EMAIL_RE.match(tok):
        return ["HTTP"]
    tok = _DIGIT_RE.sub("7", tok)
    i, j = 0, len(tok)
    while i < j and _is_punct(tok[i]):
        i += 1
    if i == j:
        return list(tok)
    while j > i and _is_punct(tok[j - 1]):
        j -= 1
    return list(tok[:i]) + [tok[i:j]] + list(tok[j:])


def _all_punct(tok):
    return all(_is_punct(ch) for ch in tok)


def preprocess(sentences, min_chars=40):
    """Clean sentences: digits to 7, links to HTTP, punctuation split off, short ones dropped.

    Returns ``(sentences, report)``.  Mention spans are carried through the
    re-tokenisation; a mention that ends up covering only punctuation is
    dropped and counted.
    """
    report = {"sentences_in": 0, "sentences_dropped_short": 0, "mentions_in": 0, "mentions_skipped": 0}
    out = []
    for sent in sentences:
        report["sentences_in"] += 1
        report["mentions_in"] += len(sent.mentions)
        tokens, starts = [], []
        for tok in sent.tokens:
            starts.append(len(tokens))
            tokens.extend(_split_token(tok))
        starts.append(len(tokens))
        if len(" ".join(tokens)) < min_chars:
            report["sentences_dropped_short"] += 1
            continue
        mentions = []
        for eid, s, e in sent.mentions:
            a, b = starts[s], starts[e]
            while a < b and _all_punct(tokens[a]):
                a += 1
            while b > a and _all_punct(tokens[b - 1]):
                b -= 1
            if a == b:
                report["mentions_skipped"] += 1
                continue
            mentions.append((eid, a, b))
        out.append(Sentence(tuple(tokens), tuple(mentions)))
    return out, report


def write_descriptions(path, descriptions):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for eid in sorted(descriptions):
            f.write(f"{eid}\t{' '.join(descriptions[eid])}\n")


def read_descriptions(path):
    """``entity_id <TAB> tokens`` per line; returns id -> token list."""
    out = {}
    for lineno, line in _data_lines(path):
        eid, sep, text = line.partition("\t")
        if not sep:
            raise FormatError(path, lineno, "expected entity_id TAB description")
        out[eid] = text.split()
    return out


# -- context extraction ----------------------------------------------------


def type_token(type_id):
    return TYPE_PREFIX + type_id


def extract_contexts(sentences, catalog, s=10, replace_ids=frozenset()):
    """One SLOT context of width ``s`` per catalogued mention.

    The window holds the ``s/2`` tokens before the mention, then SLOT, then
    ``s/2 - 1`` tokens after it.  Other mentions of entities in
    ``replace_ids`` (the training entities) collapse to their notable-type
    token; everything else keeps its surface form.
    """
    if s < 2 or s % 2:
        raise ConfigError(f"context width must be even and >= 2, got {s}")
    half = s // 2
    out = []
    for sent in sentences:
        spans = sorted(sent.mentions, key=lambda m: m[1])
        for target in spans:
            eid = target[0]
            if eid not in catalog:
                continue
            seq = []
            slot_at = None
            i = 0
            for m in spans:
                seq.extend(sent.tokens[i:m[1]])
                if m is target:
                    slot_at = len(seq)
                    seq.append(SLOT)
                elif m[0] in replace_ids and m[0] in catalog:
                    seq.append(type_token(catalog[m[0]].notable_type))
                else:
                    seq.extend(sent.tokens[m[1]:m[2]])
                i = m[2]
            seq.extend(sent.tokens[i:])
            left = seq[max(0, slot_at - half):slot_at]
            right = seq[slot_at + 1:slot_at + half]
            window = [PAD] * (half - len(left)) + left + [SLOT] + right + [PAD] * (half - 1 - len(right))
            out.append(Context(eid, tuple(window), distant_labels(eid, catalog)))
    return out


def distant_labels(entity_id, catalog):
    """Every context inherits all gold types of its entity."""
    try:
        return tuple(catalog[entity_id].gold_types)
    except KeyError:
        raise UnknownEntityError(entity_id) from None


def group_bags(contexts, entity_ids=None):
    bags = {}
    if entity_ids is not None:
        for eid in entity_ids:
            bags[eid] = Bag(eid)
    for c in contexts:
        if entity_ids is None and c.entity_id not in bags:
            bags[c.entity_id] = Bag(c.entity_id)
        if c.entity_id in bags:
            bags[c.entity_id].contexts.append(c)
    return bags


# -- sampling --------------------------------------------------------------


def weighted_sample_without_replacement(rng, weights, k):
    """Indices of a size-``k`` successive weighted sample (Efraimidis-Spirakis keys)."""
    weights = np.asarray(weights, dtype=np.float64)
    if k >= len(weights):
        return np.arange(len(weights))
    keys = np.log(rng.random(len(weights))) / weights
    chosen = np.argpartition(-keys, k - 1)[:k]
    return np.sort(chosen)


def sample_train_contexts(contexts, catalog, train_ids, rng, min_per_type=10000, cap_per_type=20000,
                          per_entity=50.0):
    """Down-sample training contexts per notable type.

    A type keeps every context when it has at most ``min_per_type``.
    Otherwise it keeps ``clip(per_entity * n_train_entities, min, cap)``
    contexts, drawn without replacement with weight ``1/|gold types|`` of the
    source entity.  Returns ``(sampled, report)``; output preserves input order.
    """
    if min_per_type > cap_per_type:
        raise ConfigError("min_per_type exceeds cap_per_type")
    train_ids = set(train_ids)
    entities_of = defaultdict(int)
    for eid in train_ids:
        entities_of[catalog[eid].notable_type] += 1
    pools = defaultdict(list)
    for i, c in enumerate(contexts):
        if c.entity_id in train_ids:
            pools[catalog[c.entity_id].notable_type].append(i)
    keep = []
    report = {}
    for t in sorted(set(entities_of) | set(pools)):
        pool = pools.get(t, [])
        if not pool:
            log.warning("type %s has no training contexts", t)
            report[t] = (0, 0)
            continue
        if len(pool) <= min_per_type:
            keep.extend(pool)
            report[t] = (len(pool), len(pool))
            continue
        target = int(min(cap_per_type, max(min_per_type, round(per_entity * entities_of[t])), len(pool)))
        weights = [1.0 / len(catalog[contexts[i].entity_id].gold_types) for i in pool]
        chosen = weighted_sample_without_replacement(rng, weights, target)
        keep.extend(pool[j] for j in chosen)
        report[t] = (len(pool), target)
    keep.sort()
    return [contexts[i] for i in keep], report


def sample_eval_contexts(bags, n, rng):
    """Uniform sample of at most ``n`` contexts per bag, without replacement.

    Returns ``(bags, flagged)`` where ``flagged`` lists entities with empty
    bags; those are left out of the result.
    """
    out, flagged = {}, []
    for eid in sorted(bags):
        bag = bags[eid]
        if len(bag) == 0:
            flagged.append(eid)
            continue
        if len(bag) <= n:
            out[eid] = Bag(eid, list(bag.contexts))
        else:
            idx = np.sort(rng.choice(len(bag), size=n, replace=False))
            out[eid] = Bag(eid, [bag.contexts[i] for i in idx])
    return out, flagged


def split_entities(entity_ids, ratios=(0.5, 0.2, 0.3), seed=0):
    """Random train/dev/test partition of the catalog."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ConfigError(f"split ratios must be three nonnegative values summing to 1, got {ratios}")
    ids = sorted(entity_ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    n_train = int(round(ratios[0] * len(ids)))
    n_dev = min(int(round(ratios[1] * len(ids))), len(ids) - n_train)
    shuffled = [ids[i] for i in order]
    return {
        "train": sorted(shuffled[:n_train]),
        "dev": sorted(shuffled[n_train:n_train + n_dev]),
        "test": sorted(shuffled[n_train + n_dev:]),
    }
