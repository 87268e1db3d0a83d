"""Run configuration: one INI file with a section per stage, validated up front."""
from __future__ import annotations

import configparser
import copy
import hashlib
import json
import zlib
from pathlib import Path

import numpy as np

from .errors import ConfigError

# section -> key -> default; the type of the default drives parsing
DEFAULTS = {
    "run": {"seed": 0},
    "paths": {
        "corpus": "", "catalog": "", "inventory": "",
        "entity_vectors": "", "word_vectors": "", "subword_vectors": "",
        "description_vectors": "", "descriptions": "", "type_vectors": "",
        "work_dir": "work",
    },
    "corpus": {
        "min_chars": 40, "window": 10,
        "min_per_type": 10000, "cap_per_type": 20000, "per_entity": 50.0,
        "dev_contexts": 200, "test_contexts": 300,
        "split": (0.5, 0.2, 0.3),
    },
    "gm": {
        "levels": ("elr",), "hidden": 700,
        "char_dim": 10, "max_name_len": 30, "char_widths": (1, 2, 3, 4, 5, 6, 7), "char_filters": 50,
        "elr_policy": "zero", "avg_des_k": 20, "ngram_max": 5,
        "learning_rate": 0.01, "batch_size": 32, "epochs": 100, "patience": 10,
    },
    "cm": {
        "encoder": "cnn", "mode": "ds", "word_dim": 100, "hidden": 0,
        "widths": (1, 2, 3, 4), "n_filters": 300, "share_halves": True,
        "type_dim": 100, "bag_cap": 100, "vocab_min_count": 1,
        "init_words": False, "init_types": False,
        "learning_rate": 0.01, "batch_size": 32, "epochs": 100, "patience": 10,
    },
    "eval": {
        "head_entity_min": 100, "tail_entity_max": 5,
        "head_type_min": 3000, "tail_type_max": 200, "k": 50,
    },
    "synth": {
        "n_types": 20, "n_coarse": 5, "n_entities": 2000, "vocab_size": 800,
        "indicators_per_type": 5, "indicative_strength": 1,
        "contexts_per_entity": 30, "context_dist": "fixed", "freq_sigma": 1.0,
        "noise": 0.2, "name_strength": 1.0, "second_type_rate": 0.3, "signal": "both",
        "elr_dim": 50, "elr_noise": 0.5, "elr_missing": 0.0, "word_dim": 50,
        "sentence_len": 12, "window": 10, "cooccur_rate": 0.0, "seed": 13,
    },
}

GM_LEVELS = {"elr", "wwlr", "swlr", "clr-ff", "clr-cnn", "avg-des", "nsl", "bow"}


def _parse(value, default, where):
    value = value.strip()
    try:
        if isinstance(default, bool):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            items = [v.strip() for v in value.split(",") if v.strip()]
            kind = type(default[0]) if default else str
            return tuple(kind(v) for v in items)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {value!r} as {type(default).__name__}") from None
    return value


class RunConfig:
    """Validated settings. Access as ``cfg["gm"]["hidden"]``."""

    def __init__(self, values=None, base_dir="."):
        self.values = copy.deepcopy(DEFAULTS)
        self.base_dir = Path(base_dir)
        for section, items in (values or {}).items():
            for key, value in items.items():
                self.set(section, key, value)
        self.validate()

    @classmethod
    def load(cls, path=None, overrides=()):
        """Read an INI file (optional) and apply ``section.key=value`` overrides."""
        raw = {}
        base = Path(".")
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None)
            parser.optionxform = str
            with open(path, encoding="utf-8") as f:
                parser.read_file(f)
            raw = {s: dict(parser[s]) for s in parser.sections()}
            base = Path(path).parent
        for item in overrides:
            name, sep, value = item.partition("=")
            section, dot, key = name.partition(".")
            if not sep or not dot:
                raise ConfigError(f"override {item!r} is not of the form section.key=value")
            raw.setdefault(section, {})[key] = value
        return cls(raw, base)

    def set(self, section, key, value):
        if section not in self.values:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in self.values[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        default = DEFAULTS[section][key]
        if isinstance(value, str) and not isinstance(default, str):
            value = _parse(value, default, f"{section}.{key}")
        elif isinstance(default, tuple):
            value = tuple(value)
        self.values[section][key] = value

    def __getitem__(self, section):
        return self.values[section]

    def validate(self):
        c, gm, cm = self["corpus"], self["gm"], self["cm"]
        if c["window"] < 2 or c["window"] % 2:
            raise ConfigError("corpus.window must be even and >= 2")
        if len(c["split"]) != 3 or abs(sum(c["split"]) - 1.0) > 1e-9:
            raise ConfigError("corpus.split must be three ratios summing to 1")
        bad = set(gm["levels"]) - GM_LEVELS
        if bad or not gm["levels"]:
            raise ConfigError(f"gm.levels: unknown level(s) {sorted(bad)}; choose from {sorted(GM_LEVELS)}")
        sparse = {"nsl", "bow"} & set(gm["levels"])
        if sparse and len(gm["levels"]) > 1:
            raise ConfigError("gm.levels: nsl/bow are stand-alone baselines and cannot be combined")
        if {"wwlr", "swlr"} <= set(gm["levels"]) or {"clr-ff", "clr-cnn"} <= set(gm["levels"]):
            raise ConfigError("gm.levels: pick one WLR and one CLR variant")
        if cm["encoder"] not in ("ff", "cnn"):
            raise ConfigError("cm.encoder must be ff or cnn")
        for section in ("gm", "cm"):
            s = self[section]
            if s["learning_rate"] <= 0 or s["batch_size"] < 1 or s["epochs"] < 1 or s["patience"] < 1:
                raise ConfigError(f"{section}: learning_rate must be > 0, batch_size/epochs/patience >= 1")
        if not 0.0 <= self["synth"]["noise"] <= 1.0:
            raise ConfigError("synth.noise must lie in [0, 1]")

    def path(self, key):
        value = self["paths"][key]
        if not value:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def canonical(self):
        """Everything except the output location, in a stable JSON form."""
        values = copy.deepcopy(self.values)
        values["paths"].pop("work_dir")
        return json.dumps(values, sort_keys=True, separators=(",", ":"), default=list)

    @property
    def hash(self):
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:16]

    def dump(self, path):
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for section, items in self.values.items():
            parser[section] = {k: ",".join(map(str, v)) if isinstance(v, tuple) else str(v) for k, v in items.items()}
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            parser.write(f)


def stage_rng(seed, stage):
    """Independent, reproducible stream for one pipeline stage."""
    return np.random.default_rng([int(seed), zlib.crc32(stage.encode("utf-8"))])
