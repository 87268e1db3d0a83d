"""File-to-file stages: preprocess, train, predict, joint, evaluate, synth."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, stage_rng
from .context_model import CMConfig, ContextModel, ContextVocab, cm_predict, train_cm
from .corpus import (
    extract_contexts,
    group_bags,
    preprocess,
    read_catalog,
    read_contexts,
    read_corpus,
    read_descriptions,
    read_inventory,
    read_splits,
    sample_eval_contexts,
    sample_train_contexts,
    split_entities,
    write_contexts,
    write_splits,
)
from .embeddings import load_embeddings
from .errors import ConfigError, FigmentError, HashMismatchError
from .evaluation import evaluate, partition_entities, partition_types, tune_thresholds
from .global_model import GlobalModel, gm_predict, mft_baseline, train_gm
from .joint import joint_predict
from .representations import (
    CharVocab,
    EntityEncoder,
    LevelConfig,
    RepresentationSources,
    SparseEncoder,
    known_unknown_partition,
)
from .scores import TypeScoreMatrix
from .synth import FILES, SyntheticSpec, generate, write_synthetic
from .training import TrainConfig

log = logging.getLogger(__name__)

SPLITS = ("train", "dev", "test")


class Workspace:
    def __init__(self, cfg):
        self.cfg = cfg
        root = Path(cfg["paths"]["work_dir"])
        self.root = root if root.is_absolute() else cfg.base_dir / root

    def __truediv__(self, name):
        return self.root / name

    def contexts(self, split):
        return self.root / f"contexts.{split}.tsv"

    def checkpoint(self, kind):
        return self.root / f"{kind}.ckpt"

    def scores(self, kind, split):
        return self.root / f"{kind}.{split}.tsv"


def _require(cfg, key):
    p = cfg.path(key)
    if p is None:
        raise ConfigError(f"paths.{key} is required for this stage")
    return p


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(obj, f, sort_keys=True, indent=1)
        f.write("\n")


def load_kb(cfg):
    catalog = read_catalog(_require(cfg, "catalog"))
    inventory = read_inventory(_require(cfg, "inventory"))
    for r in catalog.values():
        for t in r.gold_types:
            if t not in inventory:
                raise ConfigError(f"entity {r.id} has type {t!r} missing from the inventory")
    return catalog, inventory


def gold_matrix(catalog, inventory, entity_ids):
    return np.array([inventory.indicator(catalog[e].gold_types) for e in entity_ids]).reshape(-1, len(inventory))


# -- preprocess ----------------------------------------------------------------


def run_preprocess(cfg):
    """Corpus -> cleaned sentences -> contexts -> sampled per-split context dumps."""
    c = cfg["corpus"]
    seed = cfg["run"]["seed"]
    catalog, inventory = load_kb(cfg)
    raw = read_corpus(_require(cfg, "corpus"))
    if not raw:
        raise FigmentError("corpus is empty")
    sentences, report = preprocess(raw, c["min_chars"])
    split_seed = int(stage_rng(seed, "split").integers(2**31))
    splits = split_entities(list(catalog), c["split"], split_seed)
    contexts = extract_contexts(sentences, catalog, c["window"], replace_ids=frozenset(splits["train"]))
    report["contexts"] = len(contexts)

    ws = Workspace(cfg)
    ws.root.mkdir(parents=True, exist_ok=True)
    meta = {"config_hash": cfg.hash}
    train_set = set(splits["train"])
    sampled, per_type = sample_train_contexts(
        [x for x in contexts if x.entity_id in train_set], catalog, splits["train"],
        stage_rng(seed, "sample-train"), c["min_per_type"], c["cap_per_type"], c["per_entity"])
    write_contexts(ws.contexts("train"), sampled, meta)
    report["train_sampling"] = {t: {"available": a, "kept": k} for t, (a, k) in per_type.items()}
    counts = {"train": len(sampled)}
    for split, n in (("dev", c["dev_contexts"]), ("test", c["test_contexts"])):
        bags = group_bags([x for x in contexts if x.entity_id in set(splits[split])], splits[split])
        kept, flagged = sample_eval_contexts(bags, n, stage_rng(seed, f"sample-{split}"))
        flat = [x for eid in sorted(kept) for x in kept[eid].contexts]
        write_contexts(ws.contexts(split), flat, meta)
        counts[split] = len(flat)
        report[f"{split}_without_contexts"] = flagged
    report["contexts_written"] = counts
    report["entities"] = {s: len(splits[s]) for s in SPLITS}
    write_splits(ws / "splits.tsv", splits, meta)
    report["config_hash"] = cfg.hash
    _write_json(ws / "preprocess.json", report)
    return report


# -- model construction --------------------------------------------------------


def _levels(cfg):
    gm = cfg["gm"]
    lv = set(gm["levels"])
    return LevelConfig(
        elr="elr" in lv,
        wlr="word" if "wwlr" in lv else "subword" if "swlr" in lv else None,
        clr="ff" if "clr-ff" in lv else "cnn" if "clr-cnn" in lv else None,
        avg_des="avg-des" in lv,
        char_dim=gm["char_dim"], max_name_len=gm["max_name_len"], char_widths=gm["char_widths"],
        char_filters=gm["char_filters"], elr_policy=gm["elr_policy"], avg_des_k=gm["avg_des_k"],
    )


def _sources(cfg, lv):
    def table(key, needed):
        if not needed:
            return None
        return load_embeddings(_require(cfg, key))

    descriptions = read_descriptions(_require(cfg, "descriptions")) if lv.avg_des else {}
    return RepresentationSources(
        entity_table=table("entity_vectors", lv.elr),
        word_table=table("word_vectors", lv.wlr == "word"),
        subword_table=table("subword_vectors", lv.wlr == "subword"),
        desc_table=table("description_vectors", lv.avg_des),
        descriptions=descriptions,
    )


def build_gm(cfg, catalog, inventory, splits):
    gm = cfg["gm"]
    train_records = [catalog[e] for e in splits["train"]]
    rng = stage_rng(cfg["run"]["seed"], "gm-init")
    sparse = {"nsl", "bow"} & set(gm["levels"])
    if sparse:
        encoder = SparseEncoder.fit(sparse.pop(), train_records, gm["ngram_max"])
    else:
        lv = _levels(cfg)
        chars = CharVocab.build([r.name_text for r in train_records], gm["max_name_len"]) if lv.clr else None
        encoder = EntityEncoder(lv, _sources(cfg, lv), chars, rng)
    return GlobalModel(encoder, len(inventory), gm["hidden"], rng)


def _cm_config(cfg):
    cm = cfg["cm"]
    return CMConfig(
        encoder=cm["encoder"], mode=cm["mode"], word_dim=cm["word_dim"], hidden=cm["hidden"] or None,
        widths=cm["widths"], n_filters=cm["n_filters"], share_halves=cm["share_halves"],
        type_dim=cm["type_dim"], bag_cap=cm["bag_cap"], width=cfg["corpus"]["window"],
    )


def build_cm(cfg, inventory, train_contexts):
    cm = cfg["cm"]
    vocab = ContextVocab.build(train_contexts, cm["vocab_min_count"])
    words = load_embeddings(_require(cfg, "word_vectors")) if cm["init_words"] else None
    types = None
    if cm["init_types"] and cm["mode"] == "att":
        table = load_embeddings(_require(cfg, "type_vectors"))
        types = np.array([table[t] for t in inventory.types])
    return ContextModel(_cm_config(cfg), vocab, len(inventory), stage_rng(cfg["run"]["seed"], "cm-init"),
                        words, types)


def _bags(cfg, vocab, split, entity_ids=None):
    contexts = read_contexts(Workspace(cfg).contexts(split))
    bags = group_bags(contexts)
    ids = sorted(bags) if entity_ids is None else [e for e in entity_ids if e in bags]
    return ids, [vocab.encode_bag(bags[e]) for e in ids]


def _train_config(section):
    return TrainConfig(learning_rate=section["learning_rate"], batch_size=section["batch_size"],
                       epochs=section["epochs"], patience=section["patience"])


# -- train / predict -----------------------------------------------------------


def run_train(cfg, kind):
    """Train GM or CM, keep the best dev epoch, write checkpoint and epoch log."""
    catalog, inventory = load_kb(cfg)
    ws = Workspace(cfg)
    splits = read_splits(ws / "splits.tsv")
    seed = cfg["run"]["seed"]
    if kind == "gm":
        model = build_gm(cfg, catalog, inventory, splits)
        feats = {s: model.encoder.featurize([catalog[e] for e in splits[s]]) for s in ("train", "dev")}
        Y = {s: gold_matrix(catalog, inventory, splits[s]) for s in ("train", "dev")}
        result = train_gm(model, feats["train"], Y["train"], feats["dev"], Y["dev"],
                          _train_config(cfg["gm"]), stage_rng(seed, "gm-train"))
    elif kind == "cm":
        train_contexts = read_contexts(ws.contexts("train"))
        model = build_cm(cfg, inventory, train_contexts)
        ids, bags = _bags(cfg, model.vocab, "train")
        dev_ids, dev_bags = _bags(cfg, model.vocab, "dev")
        result = train_cm(model, bags, gold_matrix(catalog, inventory, ids), dev_bags,
                          gold_matrix(catalog, inventory, dev_ids), _train_config(cfg["cm"]),
                          stage_rng(seed, "cm-train"))
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    meta = {"config_hash": cfg.hash, "kind": kind, "best_epoch": result.best_epoch,
            "best_dev_micro_f1": result.best_score, "types": inventory.types}
    save_checkpoint(ws.checkpoint(kind), {p.name: p.value for p in model.params}, meta)
    with open(ws / f"{kind}.log.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.write(f"## config_hash={cfg.hash}\n")
        for row in result.log:
            f.write(f"{row['epoch']}\t{row['loss']!r}\t{row['dev_micro_f1']!r}\n")
    return result


def load_model(cfg, kind, force=False):
    catalog, inventory = load_kb(cfg)
    ws = Workspace(cfg)
    arrays, meta = load_checkpoint(ws.checkpoint(kind))
    if meta.get("config_hash") != cfg.hash and not force:
        raise HashMismatchError(f"checkpoint {ws.checkpoint(kind)} was trained under config "
                                f"{meta.get('config_hash')}, current config is {cfg.hash}")
    splits = read_splits(ws / "splits.tsv")
    if kind == "gm":
        model = build_gm(cfg, catalog, inventory, splits)
    else:
        model = build_cm(cfg, inventory, read_contexts(ws.contexts("train")))
    params = {p.name: p for p in model.params}
    if set(params) != set(arrays):
        raise ConfigError(f"checkpoint parameters {sorted(arrays)} do not match the configured model")
    for name, p in params.items():
        if arrays[name].shape != p.shape:
            raise ConfigError(f"parameter {name}: checkpoint shape {arrays[name].shape}, model {p.shape}")
        p.value[...] = arrays[name]
    return model, catalog, inventory, splits


def run_predict(cfg, kind, split="test", out=None, force=False):
    """Score one split with a trained model (or the MFT baseline) and write the TSV."""
    ws = Workspace(cfg)
    meta = {"config_hash": cfg.hash, "model": kind, "split": split}
    if kind == "mft":
        catalog, inventory = load_kb(cfg)
        splits = read_splits(ws / "splits.tsv")
        scores = mft_baseline(gold_matrix(catalog, inventory, splits["train"]), splits[split], inventory.types)
    else:
        model, catalog, inventory, splits = load_model(cfg, kind, force)
        if kind == "gm":
            feats = model.encoder.featurize([catalog[e] for e in splits[split]])
            scores = gm_predict(model, feats, splits[split], inventory.types)
        else:
            ids, bags = _bags(cfg, model.vocab, split, splits[split])
            missing = len(splits[split]) - len(ids)
            if missing:
                log.warning("%d %s entities have no contexts and get no context-model scores", missing, split)
            scores = cm_predict(model, bags, ids, inventory.types)
    scores.meta = meta
    path = Path(out) if out else ws.scores(kind, split)
    path.parent.mkdir(parents=True, exist_ok=True)
    scores.write_tsv(path)
    return scores


def run_joint(gm_path, cm_path, out, force=False):
    gm, cm = TypeScoreMatrix.read_tsv(gm_path), TypeScoreMatrix.read_tsv(cm_path)
    h1, h2 = gm.meta.get("config_hash"), cm.meta.get("config_hash")
    if h1 != h2 and not force:
        raise HashMismatchError(f"{gm_path} has config {h1}, {cm_path} has config {h2}")
    joint = joint_predict(gm, cm)
    joint.meta = {"config_hash": h1, "model": "joint", "split": gm.meta.get("split", "")}
    joint.write_tsv(out)
    return joint


def run_evaluate(cfg, scores_path, dev_scores_path, out=None, force=False):
    """Tune per-type thresholds on dev scores, apply them to the scores, report every slice."""
    catalog, inventory = load_kb(cfg)
    ws = Workspace(cfg)
    splits = read_splits(ws / "splits.tsv")
    test = TypeScoreMatrix.read_tsv(scores_path, inventory.types)
    dev = TypeScoreMatrix.read_tsv(dev_scores_path, inventory.types)
    for path, m in ((scores_path, test), (dev_scores_path, dev)):
        if m.meta.get("config_hash") != cfg.hash and not force:
            raise HashMismatchError(f"{path} carries config {m.meta.get('config_hash')}, expected {cfg.hash}")
    for m in (test, dev):
        unknown = [e for e in m.entity_ids if e not in catalog]
        if unknown:
            raise FigmentError(f"entity {unknown[0]!r} is not in the catalog")
    dev_gold = gold_matrix(catalog, inventory, dev.entity_ids).astype(bool)
    thresholds = tune_thresholds(dev.values, dev_gold)
    absent = [inventory.types[j] for j in np.flatnonzero(~dev_gold.any(axis=0))]
    if absent:
        log.warning("%d types have no dev positives and are never assigned: %s", len(absent), ", ".join(absent))
    e = cfg["eval"]
    records = [catalog[x] for x in test.entity_ids]
    row = {x: i for i, x in enumerate(test.entity_ids)}
    entity_slices = partition_entities(records, e["head_entity_min"], e["tail_entity_max"])
    known, unknown = known_unknown_partition(records, [catalog[x] for x in splits["train"]])
    entity_slices.update(known=known, unknown=unknown)
    entity_slices = {k: [row[x] for x in v] for k, v in entity_slices.items()}
    counted = inventory.with_counts([catalog[x] for x in splits["train"]])
    type_slices = partition_types(counted, e["head_type_min"], e["tail_type_max"])
    type_slices = {k: [inventory.index[t] for t in v] for k, v in type_slices.items()}
    gold = gold_matrix(catalog, inventory, test.entity_ids).astype(bool)
    report = evaluate(test.values, gold, thresholds, entity_slices, type_slices, e["k"])
    report["config_hash"] = cfg.hash
    report["scores"] = {"model": test.meta.get("model", ""), "split": test.meta.get("split", "")}
    if out:
        _write_json(out, report)
    return report


# -- synthetic data ------------------------------------------------------------


def run_synth(cfg, out_dir):
    """Generate a synthetic corpus and a ready-to-use run config pointing at it."""
    spec = SyntheticSpec.from_config(cfg["synth"])
    data = generate(spec)
    write_synthetic(data, out_dir)
    run = RunConfig(cfg.values)
    for key, name in FILES.items():
        run.set("paths", key, name)
    run.dump(Path(out_dir) / "figment.ini")
    return data
