"""TypeScoreMatrix: entities x types probabilities, and its TSV format."""
from __future__ import annotations

import numpy as np

from .corpus import META_PREFIX, read_meta
from .errors import AlignmentError, FormatError, ShapeError


class TypeScoreMatrix:
    def __init__(self, entity_ids, type_ids, values, meta=None):
        values = np.array(values, dtype=np.float64)
        if values.shape != (len(entity_ids), len(type_ids)):
            raise ShapeError(f"{len(entity_ids)}x{len(type_ids)} ids but values of shape {values.shape}")
        if values.size and (values.min() < 0.0 or values.max() > 1.0 or not np.isfinite(values).all()):
            raise ValueError("scores must lie in [0, 1]")
        self.entity_ids = list(entity_ids)
        self.type_ids = list(type_ids)
        self.values = values
        self.meta = dict(meta or {})

    @property
    def shape(self):
        return self.values.shape

    def rows(self, entity_ids):
        index = {e: i for i, e in enumerate(self.entity_ids)}
        missing = [e for e in entity_ids if e not in index]
        if missing:
            raise AlignmentError(f"entity {missing[0]!r} has no score row")
        return TypeScoreMatrix(entity_ids, self.type_ids, self.values[[index[e] for e in entity_ids]], self.meta)

    def check_aligned(self, other):
        if self.type_ids != other.type_ids:
            bad = next((a, b) for a, b in zip(self.type_ids + [None], other.type_ids + [None]) if a != b)
            raise AlignmentError(f"type mismatch: {bad[0]!r} vs {bad[1]!r}")
        if self.entity_ids != other.entity_ids:
            bad = next((a, b) for a, b in zip(self.entity_ids + [None], other.entity_ids + [None]) if a != b)
            raise AlignmentError(f"entity mismatch: {bad[0]!r} vs {bad[1]!r}")

    def __eq__(self, other):
        return (isinstance(other, TypeScoreMatrix) and self.entity_ids == other.entity_ids
                and self.type_ids == other.type_ids and np.array_equal(self.values, other.values))

    def write_tsv(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            for k, v in self.meta.items():
                f.write(f"{META_PREFIX}{k}={v}\n")
            for e, row in zip(self.entity_ids, self.values):
                for t, s in zip(self.type_ids, row):
                    f.write(f"{e}\t{t}\t{float(s)!r}\n")

    @classmethod
    def read_tsv(cls, path, type_ids=None):
        """Parse a score TSV; missing (entity, type) cells are 0.

        Types follow ``type_ids`` when given, else order of first appearance.
        """
        entities, cells = {}, []
        types = {t: i for i, t in enumerate(type_ids)} if type_ids is not None else {}
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                if line.startswith(META_PREFIX):
                    continue
                cols = line.rstrip("\n").split("\t")
                if len(cols) != 3:
                    raise FormatError(path, lineno, "expected entity_id, type_id, score")
                e, t, s = cols
                try:
                    s = float(s)
                except ValueError:
                    raise FormatError(path, lineno, f"bad score {s!r}") from None
                if t not in types:
                    if type_ids is not None:
                        raise FormatError(path, lineno, f"type {t!r} not in inventory")
                    types[t] = len(types)
                entities.setdefault(e, len(entities))
                cells.append((entities[e], types[t], s))
        values = np.zeros((len(entities), len(types)))
        for i, j, s in cells:
            values[i, j] = s
        return cls(list(entities), list(types), values, read_meta(path))
