"""Read-only token -> vector tables in the word2vec text format."""
from __future__ import annotations

import numpy as np

from .errors import FormatError, MissingEmbedding


class EmbeddingTable:
    """Immutable map from token to a fixed-length vector."""

    def __init__(self, tokens, vectors):
        vectors = np.array(vectors, dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
            raise ValueError(f"{len(tokens)} tokens but vectors of shape {vectors.shape}")
        self.tokens = list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in embedding table")
        vectors.setflags(write=False)
        self.vectors = vectors

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __getitem__(self, token):
        try:
            return self.vectors[self.index[token]]
        except KeyError:
            raise MissingEmbedding(token) from None

    def get(self, token, default=None):
        i = self.index.get(token)
        return default if i is None else self.vectors[i]


def load_embeddings(path):
    with open(path, encoding="utf-8") as f:
        header = f.readline().split()
        if len(header) != 2:
            raise FormatError(path, 1, "expected header 'vocab_size dim'")
        try:
            n, dim = int(header[0]), int(header[1])
        except ValueError:
            raise FormatError(path, 1, "non-integer header") from None
        tokens = []
        vectors = np.empty((n, dim))
        for i, line in enumerate(f):
            if i >= n:
                if line.strip():
                    raise FormatError(path, i + 2, f"more rows than the declared {n}")
                continue
            parts = line.rstrip("\n").split(" ")
            if len(parts) != dim + 1:
                raise FormatError(path, i + 2, f"expected {dim} values, got {len(parts) - 1}")
            tokens.append(parts[0])
            try:
                vectors[i] = [float(v) for v in parts[1:]]
            except ValueError:
                raise FormatError(path, i + 2, "non-numeric value") from None
        if len(tokens) != n:
            raise FormatError(path, len(tokens) + 1, f"expected {n} rows, got {len(tokens)}")
    return EmbeddingTable(tokens, vectors)


def save_embeddings(path, table):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"{len(table)} {table.dim}\n")
        for tok, vec in zip(table.tokens, table.vectors):
            f.write(tok + " " + " ".join(repr(float(v)) for v in vec) + "\n")
