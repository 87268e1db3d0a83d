"""Entity representations for the global model.

Levels, always concatenated in this order when enabled:

* ELR      frozen entity embedding
* WLR      frozen mean of name-word vectors (word-level or subword table)
* CLR      trainable character encoder over the name (FF or CNN)
* AVG-DES  frozen mean of the top tf-idf description words

Sparse NSL/BOW name features are provided for the hand-crafted baselines.
"""
from __future__ import annotations

import logging
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, MissingEmbedding
from .tensor import (
    Parameter,
    SparseRows,
    conv1d_narrow,
    conv1d_narrow_backward,
    glorot_uniform,
    lookup_backward,
    lookup_forward,
    maxpool,
    maxpool_backward,
    zeros_param,
)

log = logging.getLogger(__name__)


@dataclass
class EntityRepresentation:
    vector: np.ndarray
    levels: tuple


@dataclass
class LevelConfig:
    elr: bool = False
    wlr: str | None = None  # "word" or "subword"
    clr: str | None = None  # "ff" or "cnn"
    avg_des: bool = False
    char_dim: int = 10
    max_name_len: int = 30
    char_widths: tuple = (1, 2, 3, 4, 5, 6, 7)
    char_filters: int = 50
    elr_policy: str = "zero"  # or "strict"
    avg_des_k: int = 20

    def __post_init__(self):
        if not (self.elr or self.wlr or self.clr or self.avg_des):
            raise ConfigError("at least one representation level must be enabled")
        if self.wlr not in (None, "word", "subword"):
            raise ConfigError(f"unknown WLR variant {self.wlr!r}")
        if self.clr not in (None, "ff", "cnn"):
            raise ConfigError(f"unknown CLR variant {self.clr!r}")
        if self.elr_policy not in ("zero", "strict"):
            raise ConfigError(f"unknown ELR missing policy {self.elr_policy!r}")
        self.char_widths = tuple(int(w) for w in self.char_widths)
        if self.clr == "cnn" and max(self.char_widths) > self.max_name_len:
            raise ConfigError(f"char filter width {max(self.char_widths)} exceeds name length {self.max_name_len}")

    @property
    def tags(self):
        tags = []
        if self.elr:
            tags.append("ELR")
        if self.wlr:
            tags.append("WWLR" if self.wlr == "word" else "SWLR")
        if self.clr:
            tags.append("CLR-" + self.clr.upper())
        if self.avg_des:
            tags.append("AVG-DES")
        return tuple(tags)


# -- frozen levels ---------------------------------------------------------


def elr(entity_id, table, policy="strict"):
    """Entity-level representation: the entity's row in the entity table."""
    v = table.get(entity_id)
    if v is None:
        if policy == "strict":
            raise MissingEmbedding(entity_id)
        return np.zeros(table.dim)
    return np.array(v)


def wlr(name, table):
    """Mean of the in-vocabulary word vectors of the name; zeros if none is known."""
    vecs = [table[w] for w in name if w in table]
    if not vecs:
        return np.zeros(table.dim)
    return np.mean(vecs, axis=0)


def document_frequencies(descriptions):
    df = Counter()
    for tokens in descriptions.values():
        df.update(set(tokens))
    return df, len(descriptions)


def top_tfidf_words(tokens, table, df, n_docs, k=20):
    tf = Counter(t for t in tokens if t in table)
    scored = [(c * math.log(n_docs / (df.get(w, 0) + 1)), w) for w, c in tf.items()]
    scored.sort(key=lambda sw: (-sw[0], sw[1]))
    return [w for _, w in scored[:k]]


def avg_des(tokens, table, df, n_docs, k=20):
    """Mean embedding of the ``k`` highest tf-idf in-vocabulary description words.

    tf is the raw count, idf is ``log(N / (df + 1))``.  Returns ``None`` when no
    word of the description is in the table.
    """
    words = top_tfidf_words(tokens, table, df, n_docs, k)
    if not words:
        return None
    return np.mean([table[w] for w in words], axis=0)


# -- characters ------------------------------------------------------------


class CharVocab:
    CPAD, START, END, UNK = 0, 1, 2, 3
    RESERVED = ("<cpad>", "<s>", "</s>", "<unk>")

    def __init__(self, chars, max_len=30):
        if max_len < 2:
            raise ConfigError("max name length must leave room for start/end symbols")
        self.chars = list(self.RESERVED) + sorted(set(chars) - set(self.RESERVED))
        self.index = {c: i for i, c in enumerate(self.chars)}
        self.max_len = max_len

    @classmethod
    def build(cls, names, max_len=30):
        return cls({ch for name in names for ch in name}, max_len)

    def __len__(self):
        return len(self.chars)

    def encode(self, name):
        """START + characters + END, truncated to keep END, then padded to ``max_len``."""
        body = [self.index.get(ch, self.UNK) for ch in name][: self.max_len - 2]
        ids = [self.START] + body + [self.END]
        ids += [self.CPAD] * (self.max_len - len(ids))
        return np.array(ids, dtype=np.int64)

    def encode_many(self, names):
        if not names:
            return np.zeros((0, self.max_len), dtype=np.int64)
        return np.stack([self.encode(n) for n in names])


class CharFFEncoder:
    """Concatenation of the character embeddings of the padded name."""

    def __init__(self, n_chars, char_dim, max_len, rng):
        self.table = Parameter(rng.uniform(-0.1, 0.1, size=(n_chars, char_dim)), name="char_table")
        self.out_dim = char_dim * max_len

    @property
    def params(self):
        return [self.table]

    def forward(self, ids):
        C, ids = lookup_forward(self.table, ids)
        return C.reshape(C.shape[0], -1), (ids, C.shape)

    def backward(self, cache, g):
        ids, shape = cache
        lookup_backward(self.table, ids, g.reshape(shape))


class CharCNNEncoder:
    """``n`` filters per width, narrow convolution, rectifier, max pooling."""

    def __init__(self, n_chars, char_dim, widths, n_filters, rng):
        self.table = Parameter(rng.uniform(-0.1, 0.1, size=(n_chars, char_dim)), name="char_table")
        self.widths = tuple(widths)
        self.filters = [
            glorot_uniform(rng, (n_filters, char_dim, w), char_dim * w, n_filters, name=f"char_H{w}")
            for w in self.widths
        ]
        self.biases = [zeros_param(n_filters, name=f"char_b{w}") for w in self.widths]
        self.out_dim = n_filters * len(self.widths)

    @property
    def params(self):
        return [self.table] + self.filters + self.biases

    def forward(self, ids):
        C, ids = lookup_forward(self.table, ids)
        pooled, caches = [], []
        for H, b in zip(self.filters, self.biases):
            m, cache = conv1d_narrow(C, H, b)
            v, idx = maxpool(m)
            pooled.append(v)
            caches.append((cache, idx, m.shape[-1]))
        return np.concatenate(pooled, axis=-1), (ids, caches, C.shape)

    def backward(self, cache, g):
        ids, caches, shape = cache
        dC = np.zeros(shape)
        n = self.filters[0].shape[0]
        for k, (H, b, (conv_cache, idx, length)) in enumerate(zip(self.filters, self.biases, caches)):
            dm = maxpool_backward(idx, length, g[..., k * n:(k + 1) * n])
            dC += conv1d_narrow_backward(H, conv_cache, dm, b)
        lookup_backward(self.table, ids, dC)


# -- multi-level -----------------------------------------------------------


@dataclass
class RepresentationSources:
    """Pretrained inputs the frozen levels read from."""

    entity_table: object = None
    word_table: object = None
    subword_table: object = None
    desc_table: object = None
    descriptions: dict = field(default_factory=dict)

    def __post_init__(self):
        self.doc_freq, self.n_docs = document_frequencies(self.descriptions)


@dataclass
class EntityFeatures:
    ids: list
    pre: np.ndarray  # frozen ELR/WLR block
    chars: np.ndarray | None  # CLR input ids
    post: np.ndarray  # frozen AVG-DES block
    missing_elr: list = field(default_factory=list)
    no_name_words: list = field(default_factory=list)
    no_description: list = field(default_factory=list)

    def __len__(self):
        return len(self.ids)

    def subset(self, keep):
        keep = set(keep)
        rows = [i for i, eid in enumerate(self.ids) if eid in keep]
        return EntityFeatures(
            [self.ids[i] for i in rows], self.pre[rows],
            None if self.chars is None else self.chars[rows], self.post[rows],
        )


class EntityEncoder:
    """Builds and differentiates the multi-level representation of entities."""

    def __init__(self, levels, sources, char_vocab=None, rng=None):
        self.levels = levels
        self.sources = sources
        self.char_vocab = char_vocab
        self.clr = None
        if levels.elr and sources.entity_table is None:
            raise ConfigError("ELR requested but no entity embedding table given")
        if levels.wlr and self._wlr_table() is None:
            raise ConfigError(f"{levels.wlr} WLR requested but no table given")
        if levels.avg_des and sources.desc_table is None:
            raise ConfigError("AVG-DES requested but no description word table given")
        if levels.clr:
            if char_vocab is None:
                raise ConfigError("CLR requested but no character vocabulary given")
            rng = rng if rng is not None else np.random.default_rng(0)
            if levels.clr == "ff":
                self.clr = CharFFEncoder(len(char_vocab), levels.char_dim, char_vocab.max_len, rng)
            else:
                self.clr = CharCNNEncoder(len(char_vocab), levels.char_dim, levels.char_widths, levels.char_filters, rng)

    def _wlr_table(self):
        if self.levels.wlr == "word":
            return self.sources.word_table
        if self.levels.wlr == "subword":
            return self.sources.subword_table
        return None

    @property
    def pre_dim(self):
        d = 0
        if self.levels.elr:
            d += self.sources.entity_table.dim
        if self.levels.wlr:
            d += self._wlr_table().dim
        return d

    @property
    def post_dim(self):
        return self.sources.desc_table.dim if self.levels.avg_des else 0

    @property
    def out_dim(self):
        return self.pre_dim + (self.clr.out_dim if self.clr else 0) + self.post_dim

    @property
    def params(self):
        return self.clr.params if self.clr else []

    def featurize(self, records):
        lv, src = self.levels, self.sources
        n = len(records)
        pre = np.zeros((n, self.pre_dim))
        post = np.zeros((n, self.post_dim))
        feats = EntityFeatures([r.id for r in records], pre, None, post)
        for i, r in enumerate(records):
            col = 0
            if lv.elr:
                table = src.entity_table
                if r.id not in table:
                    feats.missing_elr.append(r.id)
                pre[i, col:col + table.dim] = elr(r.id, table, lv.elr_policy)
                col += table.dim
            if lv.wlr:
                table = self._wlr_table()
                if not any(w in table for w in r.name):
                    feats.no_name_words.append(r.id)
                pre[i, col:col + table.dim] = wlr(r.name, table)
            if lv.avg_des:
                v = avg_des(src.descriptions.get(r.id, ()), src.desc_table, src.doc_freq, src.n_docs, lv.avg_des_k)
                if v is None:
                    feats.no_description.append(r.id)
                else:
                    post[i] = v
        if feats.missing_elr:
            log.warning("%d entities have no ELR vector (policy=%s)", len(feats.missing_elr), lv.elr_policy)
        if self.clr is not None:
            feats.chars = self.char_vocab.encode_many([r.name_text for r in records])
        pre.setflags(write=False)
        post.setflags(write=False)
        return feats

    def forward(self, feats, rows):
        parts = [feats.pre[rows]]
        cache = None
        if self.clr is not None:
            h, cache = self.clr.forward(feats.chars[rows])
            parts.append(h)
        parts.append(feats.post[rows])
        return np.concatenate(parts, axis=1), cache

    def backward(self, cache, dX):
        if self.clr is not None:
            a = self.pre_dim
            self.clr.backward(cache, dX[:, a:a + self.clr.out_dim])

    def represent(self, record):
        """Single-entity convenience wrapper returning an EntityRepresentation."""
        feats = self.featurize([record])
        x, _ = self.forward(feats, np.array([0]))
        return EntityRepresentation(x[0], self.levels.tags)

    def state(self):
        return {p.name: p.value for p in self.params}


# -- sparse hand-crafted features ------------------------------------------


def _char_class(ch):
    if ch.isupper():
        return "X"
    if ch.islower():
        return "x"
    if ch.isdigit():
        return "d"
    return "."


def token_shape(token):
    out = []
    for ch in token:
        c = _char_class(ch)
        if not out or out[-1] != c:
            out.append(c)
    return "".join(out)


def normalize_name(name):
    out = []
    for ch in name.lower():
        if ch.isdigit():
            out.append("7")
        elif unicodedata.category(ch)[0] in "PS":
            out.append(".")
        else:
            out.append(ch)
    return "".join(out)


def char_ngrams(text, n_max):
    bounded = "^" + text + "$"
    return {bounded[i:i + n] for n in range(1, n_max + 1) for i in range(len(bounded) - n + 1)}


def nsl_features(name, n_max=5):
    """Shape, length and character n-gram indicator names for an entity name string."""
    feats = {f"len:{len(name)}"}
    if not name:
        return feats
    tokens = name.split()
    if tokens:
        feats.add("shape:" + "-".join(token_shape(t) for t in tokens))
    feats.update("ng:" + g for g in char_ngrams(name, n_max))
    feats.update("nng:" + g for g in char_ngrams(normalize_name(name), n_max))
    return feats


def bow_features(name):
    words = name.split()
    return {"bow:" + w for w in words} | {"bow:" + w.lower() for w in words}


class FeatureDictionary:
    """Feature-name -> column map, fixed on the training entities."""

    def __init__(self, names):
        self.names = sorted(set(names))
        self.index = {f: i for i, f in enumerate(self.names)}

    @classmethod
    def build(cls, feature_sets):
        return cls(f for fs in feature_sets for f in fs)

    def __len__(self):
        return len(self.names)

    def transform(self, features):
        return np.array(sorted(self.index[f] for f in features if f in self.index), dtype=np.int64)


class SparseEncoder:
    """Binary sparse name features (NSL or BOW) fed straight into the MLP."""

    def __init__(self, kind, dictionary, n_max=5):
        if kind not in ("nsl", "bow"):
            raise ConfigError(f"unknown sparse feature set {kind!r}")
        self.kind = kind
        self.dictionary = dictionary
        self.n_max = n_max
        self.params = []

    @classmethod
    def fit(cls, kind, train_records, n_max=5):
        extract = cls._extractor(kind, n_max)
        return cls(kind, FeatureDictionary.build(extract(r.name_text) for r in train_records), n_max)

    @staticmethod
    def _extractor(kind, n_max):
        if kind == "nsl":
            return lambda name: nsl_features(name, n_max)
        return bow_features

    @property
    def out_dim(self):
        return len(self.dictionary)

    def featurize(self, records):
        extract = self._extractor(self.kind, self.n_max)
        return [self.dictionary.transform(extract(r.name_text)) for r in records]

    def forward(self, feats, rows):
        return SparseRows.from_lists([feats[i] for i in rows], self.out_dim), None

    def backward(self, cache, dX):
        pass


def known_unknown_partition(test_records, train_records):
    """Split test entities by whether any name word occurs in a training entity name."""
    train_words = {w for r in train_records for w in r.name}
    known, unknown = [], []
    for r in test_records:
        (known if any(w in train_words for w in r.name) else unknown).append(r.id)
    return known, unknown
