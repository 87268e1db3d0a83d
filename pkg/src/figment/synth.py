"""Synthetic entity-linked corpus with controllable type signal in contexts and names."""
from __future__ import annotations

import json
import string
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .corpus import EntityRecord, Sentence, TypeInventory, write_catalog, write_corpus, write_descriptions, write_inventory
from .embeddings import EmbeddingTable, save_embeddings
from .errors import ConfigError

LETTERS = np.array(list(string.ascii_lowercase))


@dataclass
class SyntheticSpec:
    n_types: int = 20
    n_coarse: int = 5
    n_entities: int = 2000
    vocab_size: int = 800
    indicators_per_type: int = 5
    indicative_strength: int = 1  # indicator tokens per signaled type in a clean context
    contexts_per_entity: int = 30
    context_dist: str = "fixed"  # or "lognormal"
    freq_sigma: float = 1.0
    noise: float = 0.2  # share of contexts carrying no type signal
    name_strength: float = 1.0  # chance a name word carries its type's suffix
    second_type_rate: float = 0.3
    signal: str = "both"  # "split": half the coarse groups signal in names only, the rest in contexts only
    elr_dim: int = 50
    elr_noise: float = 0.5
    elr_missing: float = 0.0  # lowest-frequency share of entities without an entity vector
    word_dim: int = 50
    sentence_len: int = 12
    window: int = 10
    cooccur_rate: float = 0.0
    seed: int = 13

    def __post_init__(self):
        if not 0.0 <= self.noise <= 1.0:
            raise ConfigError("noise must lie in [0, 1]")
        if not 0 < self.n_coarse < self.n_types:
            raise ConfigError("need at least one coarse and one fine type")
        if self.context_dist not in ("fixed", "lognormal"):
            raise ConfigError("context_dist must be fixed or lognormal")
        if self.signal not in ("both", "split"):
            raise ConfigError("signal must be both or split")
        if self.n_entities < 1 or self.contexts_per_entity < 1 or self.vocab_size < 1:
            raise ConfigError("entity, context and vocabulary counts must be positive")

    @classmethod
    def from_config(cls, section):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in section.items() if k in names})


@dataclass
class SyntheticData:
    spec: SyntheticSpec
    types: list
    coarse_of: dict
    name_side: set  # types whose signal lives in names
    context_side: set  # types whose signal lives in contexts
    indicators: dict
    suffixes: dict
    records: list
    sentences: list
    descriptions: dict
    entity_table: EmbeddingTable
    word_table: EmbeddingTable
    subword_table: EmbeddingTable
    type_table: EmbeddingTable


class _Words:
    """Unique random lowercase strings."""

    def __init__(self, rng):
        self.rng = rng
        self.seen = set()

    def take(self, lo, hi):
        while True:
            w = "".join(self.rng.choice(LETTERS, size=int(self.rng.integers(lo, hi + 1))))
            if w not in self.seen:
                self.seen.add(w)
                return w

    def many(self, n, lo, hi):
        return [self.take(lo, hi) for _ in range(n)]


def subword_vectors(words, dim, rng, n_min=3, n_max=5):
    """fastText-like vectors: the mean of character n-gram vectors of ``<word>``."""
    grams = {}
    out = np.zeros((len(words), dim))
    for i, w in enumerate(words):
        s = f"<{w}>"
        keys = [s[j:j + n] for n in range(n_min, n_max + 1) for j in range(len(s) - n + 1)]
        for k in keys:
            if k not in grams:
                grams[k] = rng.normal(size=dim)
        out[i] = np.mean([grams[k] for k in keys], axis=0)
    return out


def generate(spec):
    rng = np.random.default_rng(spec.seed)
    words = _Words(rng)

    # type hierarchy: coarse groups with fine children, round robin
    coarse = [f"c{g}" for g in range(spec.n_coarse)]
    fine = []
    coarse_of = {}
    for j in range(spec.n_types - spec.n_coarse):
        g = j % spec.n_coarse
        t = f"c{g}-f{j // spec.n_coarse}"
        fine.append(t)
        coarse_of[t] = coarse[g]
    types = []
    for c in coarse:
        types.append(c)
        types.extend(t for t in fine if coarse_of[t] == c)
    if spec.signal == "both":
        name_side, context_side = set(types), set(types)
    else:
        name_groups = set(coarse[: spec.n_coarse // 2])
        name_side = {t for t in types if coarse_of.get(t, t) in name_groups}
        context_side = set(types) - name_side

    indicators = {t: words.many(spec.indicators_per_type, 5, 8) for t in types}
    suffixes = {t: words.take(3, 3) for t in fine}
    filler = words.many(spec.vocab_size, 4, 7)
    pool = filler + [w for t in types for w in indicators[t]]
    given = [w.capitalize() for w in words.many(200, 3, 6)]
    other_suffix = words.many(50, 3, 3)

    # entities
    if spec.context_dist == "fixed":
        freq = np.full(spec.n_entities, spec.contexts_per_entity)
    else:
        draw = rng.lognormal(np.log(spec.contexts_per_entity), spec.freq_sigma, size=spec.n_entities)
        freq = np.clip(np.rint(draw), 1, 20 * spec.contexts_per_entity).astype(int)
    records = []
    for i in range(spec.n_entities):
        f1 = fine[rng.integers(len(fine))]
        gold_fine = [f1]
        if rng.random() < spec.second_type_rate:
            f2 = fine[rng.integers(len(fine))]
            if f2 != f1:
                gold_fine.append(f2)
        gold = set(gold_fine) | {coarse_of[t] for t in gold_fine}
        name = []
        if rng.random() < 0.5:
            name.append(given[rng.integers(len(given))])
        for t in gold_fine:
            stem = "".join(rng.choice(LETTERS, size=int(rng.integers(3, 6))))
            if t in name_side and rng.random() < spec.name_strength:
                suf = suffixes[t]
            else:
                suf = other_suffix[rng.integers(len(other_suffix))]
            name.append((stem + suf).capitalize())
        ordered = tuple(t for t in types if t in gold)
        records.append(EntityRecord(f"m.{i:05d}", tuple(name), f1, ordered, int(freq[i])))

    # sentences, one target mention each
    half = spec.window // 2
    sentences, mention_count = [], np.zeros(spec.n_entities, dtype=int)
    for i, r in enumerate(records):
        signaled = [t for t in r.gold_types if t in context_side]
        for _ in range(int(freq[i])):
            L = spec.sentence_len
            items = [pool[j] for j in rng.integers(len(pool), size=L)]
            n_ind = spec.indicative_strength * len(signaled)
            clean = rng.random() >= spec.noise
            p = int(rng.integers(0, L + 1))
            slots = [j for j in range(max(0, p - half), p)] + [j for j in range(p, min(L, p + half - 1))]
            if clean and len(slots) < n_ind:
                p = L // 2
                slots = [j for j in range(max(0, p - half), p)] + [j for j in range(p, min(L, p + half - 1))]
            if clean and n_ind:
                chosen = rng.choice(len(slots), size=min(n_ind, len(slots)), replace=False)
                toks = [indicators[t][rng.integers(spec.indicators_per_type)]
                        for t in signaled for _ in range(spec.indicative_strength)]
                for j, tok in zip(chosen, toks):
                    items[slots[j]] = tok
            tokens = items[:p] + list(r.name) + items[p:]
            mentions = [(r.id, p, p + len(r.name))]
            mention_count[i] += 1
            if spec.cooccur_rate and rng.random() < spec.cooccur_rate:
                # another entity well outside the window, to the right
                if len(tokens) - (p + len(r.name) + half) > 0:
                    k = int(rng.integers(spec.n_entities))
                    at = len(tokens)
                    other = records[k]
                    tokens = tokens + list(other.name)
                    mentions.append((other.id, at, at + len(other.name)))
                    mention_count[k] += 1
            sentences.append(Sentence(tuple(tokens), tuple(mentions)))
    order = rng.permutation(len(sentences))
    sentences = [sentences[j] for j in order]
    records = [EntityRecord(r.id, r.name, r.notable_type, r.gold_types, int(mention_count[i]))
               for i, r in enumerate(records)]

    # entity vectors: noisy sum of gold-type centroids
    centroids = {t: rng.normal(size=spec.elr_dim) for t in types}
    vecs = np.array([sum(centroids[t] for t in r.gold_types) + rng.normal(scale=spec.elr_noise, size=spec.elr_dim)
                     for r in records])
    n_missing = int(round(spec.elr_missing * spec.n_entities))
    by_freq = sorted(range(len(records)), key=lambda j: (records[j].freq, records[j].id))
    missing = set(by_freq[:n_missing])
    keep = [j for j in range(len(records)) if j not in missing]
    entity_table = EmbeddingTable([records[j].id for j in keep], vecs[keep])

    descriptions = {}
    for r in records:
        desc = [pool[j] for j in rng.integers(len(pool), size=15)]
        desc += [indicators[t][rng.integers(spec.indicators_per_type)] for t in r.gold_types for _ in range(2)]
        rng.shuffle(desc)
        descriptions[r.id] = desc

    vocab = sorted(set(pool) | {w for r in records for w in r.name})
    word_table = EmbeddingTable(vocab, rng.normal(size=(len(vocab), spec.word_dim)))
    subword_table = EmbeddingTable(vocab, subword_vectors(vocab, spec.word_dim, rng))
    type_table = EmbeddingTable(types, np.array([centroids[t] for t in types]))
    return SyntheticData(spec, types, coarse_of, name_side, context_side, indicators, suffixes, records,
                         sentences, descriptions, entity_table, word_table, subword_table, type_table)


FILES = {
    "corpus": "corpus.txt",
    "catalog": "catalog.tsv",
    "inventory": "types.txt",
    "entity_vectors": "entities.vec",
    "word_vectors": "words.vec",
    "subword_vectors": "subwords.vec",
    "description_vectors": "words.vec",
    "descriptions": "descriptions.tsv",
    "type_vectors": "types.vec",
}


def write_synthetic(data, out_dir):
    """Write every artifact under ``out_dir``; returns the [paths] mapping for a run config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(out / FILES["corpus"], data.sentences)
    write_catalog(out / FILES["catalog"], data.records)
    write_inventory(out / FILES["inventory"], TypeInventory(data.types))
    save_embeddings(out / FILES["entity_vectors"], data.entity_table)
    save_embeddings(out / FILES["word_vectors"], data.word_table)
    save_embeddings(out / FILES["subword_vectors"], data.subword_table)
    save_embeddings(out / FILES["type_vectors"], data.type_table)
    write_descriptions(out / FILES["descriptions"], data.descriptions)
    meta = dict(asdict(data.spec), name_side=sorted(data.name_side), context_side=sorted(data.context_side))
    with open(out / "synth.json", "w", encoding="utf-8", newline="\n") as f:
        json.dump(meta, f, sort_keys=True, indent=1)
        f.write("\n")
    return {k: str(out / v) for k, v in FILES.items()}
