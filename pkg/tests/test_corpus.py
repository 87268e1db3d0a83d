import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from figment.corpus import (
    PAD,
    SLOT,
    Bag,
    Context,
    EntityRecord,
    Sentence,
    distant_labels,
    extract_contexts,
    group_bags,
    parse_corpus_line,
    preprocess,
    read_catalog,
    read_contexts,
    read_corpus,
    sample_eval_contexts,
    sample_train_contexts,
    split_entities,
    write_catalog,
    write_contexts,
    write_corpus,
)
from figment.errors import ConfigError, FormatError, UnknownEntityError


def sent(text, mentions=()):
    return Sentence(tuple(text.split()), tuple(mentions))


def test_digits_become_seven():
    out, _ = preprocess([sent("Call 911 now")], min_chars=0)
    assert out[0].tokens == ("Call", "777", "now")


def test_short_sentence_dropped():
    s = sent("twenty chars exactly")  # 20 characters
    assert len(s.text) == 20
    out, report = preprocess([s])
    assert out == [] and report["sentences_dropped_short"] == 1


def test_links_and_emails_become_http():
    out, _ = preprocess([sent("see http://x.com ok"), sent("mail bob@example.org now")], min_chars=0)
    assert out[0].tokens == ("see", "HTTP", "ok")
    assert out[1].tokens == ("mail", "HTTP", "now")


def test_punctuation_split_keeps_mention_alignment():
    s = sent("He met (Rolph P. Kugl), the painter of many famous works", [("m1", 2, 5)])
    out, report = preprocess([s])
    toks = out[0].tokens
    eid, a, b = out[0].mentions[0]
    assert toks[a:b] == ("Rolph", "P", ".", "Kugl")
    assert toks[a - 1] == "(" and toks[b] == ")"
    assert report["mentions_skipped"] == 0


def test_mention_on_pure_punctuation_is_skipped():
    s = sent("a sentence that is long enough to be kept by the filter --", [("m1", 12, 13)])
    out, report = preprocess([s])
    assert out[0].mentions == () and report["mentions_skipped"] == 1


token_st = st.text(alphabet="ab9Z.,()-@:/", min_size=1, max_size=6)


@given(st.lists(token_st, min_size=1, max_size=12))
@settings(max_examples=200)
def test_preprocess_idempotent(tokens):
    s = Sentence(tuple(tokens), (("e", 0, len(tokens)),))
    once, _ = preprocess([s], min_chars=10)
    twice, _ = preprocess(once, min_chars=10)
    assert once == twice


def test_corpus_roundtrip_bytes(tmp_path):
    src = tmp_path / "c.txt"
    raw = "Berlin is big and old .\tm1,0,1\nno mentions here at all\t\nA B C\tx,0,2;y,2,3\n"
    src.write_text(raw, encoding="utf-8")
    out = tmp_path / "d.txt"
    write_corpus(out, read_corpus(src))
    assert out.read_bytes() == src.read_bytes()


@pytest.mark.parametrize("line", ["a b c", "a b\tm,0,9", "a b c\tm,0,2;n,1,3", "a b\tm,x,1", "a  b\t"])
def test_malformed_corpus_lines(line):
    with pytest.raises(FormatError):
        parse_corpus_line(line, "f", 3)


def test_catalog_roundtrip(tmp_path):
    recs = [EntityRecord("m1", ("New", "York"), "city", ("city", "location"), 12)]
    p = tmp_path / "cat.tsv"
    write_catalog(p, recs)
    assert list(read_catalog(p).values()) == recs


def test_catalog_notable_must_be_gold(tmp_path):
    p = tmp_path / "cat.tsv"
    p.write_text("m1\tX\tcity\tperson\t1\n")
    with pytest.raises(FormatError, match=":1:"):
        read_catalog(p)


CATALOG = {
    "e1": EntityRecord("e1", ("Obama",), "politician", ("politician", "person", "author")),
    "e2": EntityRecord("e2", ("Berlin",), "city", ("city",)),
    "e3": EntityRecord("e3", ("Paris",), "city", ("city",)),
}


def test_window_at_sentence_start_is_left_padded():
    ctx = extract_contexts([sent("Obama spoke to the press today", [("e1", 0, 1)])], CATALOG, s=10)
    c = ctx[0]
    assert c.left == (PAD,) * 5
    assert c.right == (SLOT, "spoke", "to", "the", "press")
    assert c.width == 10 and c.tokens.count(SLOT) == 1


def test_other_train_entity_replaced_by_notable_type():
    s = sent("Obama flew to Berlin yesterday", [("e1", 0, 1), ("e2", 3, 4)])
    ctx = extract_contexts([s], CATALOG, s=10, replace_ids={"e1", "e2"})
    assert ctx[0].tokens[5:] == (SLOT, "flew", "to", "TYPE_city", "yesterday")
    # test entities are left as surface tokens
    ctx = extract_contexts([s], CATALOG, s=10, replace_ids={"e1"})
    assert "Berlin" in ctx[0].tokens


def test_two_mentions_two_contexts():
    s = sent("Obama and Berlin", [("e1", 0, 1), ("e2", 2, 3)])
    ctx = extract_contexts([s], CATALOG, s=6)
    assert [c.entity_id for c in ctx] == ["e1", "e2"]
    assert ctx[0].tokens == (PAD, PAD, PAD, SLOT, "and", "Berlin")
    assert ctx[1].tokens == (PAD, "Obama", "and", SLOT, PAD, PAD)


def test_multitoken_mention_collapses_to_one_slot():
    s = Sentence(("x", "New", "York", "y"), (("e2", 1, 3),))
    c = extract_contexts([s], CATALOG, s=4)[0]
    assert c.tokens == (PAD, "x", SLOT, "y")


def test_odd_width_rejected():
    with pytest.raises(ConfigError):
        extract_contexts([], CATALOG, s=7)


def test_distant_labels():
    assert set(distant_labels("e1", CATALOG)) == {"politician", "person", "author"}
    assert distant_labels("e2", CATALOG) == ("city",)
    with pytest.raises(UnknownEntityError):
        distant_labels("nope", CATALOG)


def test_context_dump_roundtrip(tmp_path):
    ctx = extract_contexts([sent("Obama flew to Berlin yesterday", [("e1", 0, 1), ("e2", 3, 4)])], CATALOG, s=6)
    p = tmp_path / "ctx.tsv"
    write_contexts(p, ctx, meta={"config_hash": "abc"})
    assert read_contexts(p) == ctx


def _contexts(entity_counts):
    out = []
    for eid, n in entity_counts.items():
        out.extend(Context(eid, (SLOT, "w", str(i)), ()) for i in range(n))
    return out


def _catalog(spec):
    return {eid: EntityRecord(eid, (eid,), t, (t,) + tuple(f"x{k}" for k in range(extra)))
            for eid, (t, extra) in spec.items()}


def test_sampling_keeps_small_types_whole():
    cat = _catalog({"a": ("city", 0)})
    ctx = _contexts({"a": 5000})
    out, report = sample_train_contexts(ctx, cat, {"a"}, np.random.default_rng(0))
    assert len(out) == 5000


def test_sampling_caps_large_types():
    cat = _catalog({f"e{i}": ("person", 0) for i in range(1000)})
    ctx = _contexts({f"e{i}": 100 for i in range(1000)})
    out, report = sample_train_contexts(ctx, cat, set(cat), np.random.default_rng(0))
    assert len(out) <= 20000
    assert len(out) == 20000  # 50 per entity * 1000 entities is clipped to the cap


def test_sampling_prefers_entities_with_fewer_types():
    # oracle: weights 1 vs 1/4 give an expected share of 4:1
    cat = _catalog({"one": ("t", 0), "four": ("t", 3)})
    ctx = _contexts({"one": 50000, "four": 50000})
    got = {"one": 0, "four": 0}
    for seed in range(5):
        out, _ = sample_train_contexts(ctx, cat, set(cat), np.random.default_rng(seed),
                                       min_per_type=2000, cap_per_type=2000, per_entity=1000)
        assert len(out) == 2000
        for c in out:
            got[c.entity_id] += 1
    assert sum(got.values()) == 10000
    ratio = got["one"] / got["four"]
    assert abs(ratio - 4.0) / 4.0 < 0.05


def test_sampling_deterministic():
    cat = _catalog({f"e{i}": ("person", i % 3) for i in range(50)})
    ctx = _contexts({f"e{i}": 40 for i in range(50)})
    kw = dict(min_per_type=100, cap_per_type=300, per_entity=2)
    a, _ = sample_train_contexts(ctx, cat, set(cat), np.random.default_rng(3), **kw)
    b, _ = sample_train_contexts(ctx, cat, set(cat), np.random.default_rng(3), **kw)
    assert a == b and len(a) == 100


def test_eval_sampling():
    bags = {"a": Bag("a", _contexts({"a": 50})), "b": Bag("b", _contexts({"b": 1000})), "c": Bag("c")}
    out, flagged = sample_eval_contexts(bags, 300, np.random.default_rng(0))
    assert len(out["a"]) == 50 and len(out["b"]) == 300
    assert flagged == ["c"] and "c" not in out
    assert len(set(out["b"].contexts)) == 300
    again, _ = sample_eval_contexts(bags, 300, np.random.default_rng(0))
    assert again["b"].contexts == out["b"].contexts


def test_group_bags():
    ctx = _contexts({"a": 2, "b": 1})
    bags = group_bags(ctx, ["a", "b", "z"])
    assert len(bags["a"]) == 2 and len(bags["z"]) == 0


def test_split_sizes_and_determinism():
    ids = [f"e{i}" for i in range(10)]
    sp = split_entities(ids, (0.5, 0.2, 0.3), seed=1)
    assert [len(sp[k]) for k in ("train", "dev", "test")] == [5, 2, 3]
    assert sorted(sp["train"] + sp["dev"] + sp["test"]) == sorted(ids)
    assert split_entities(ids, (0.5, 0.2, 0.3), seed=1) == sp
    with pytest.raises(ConfigError):
        split_entities(ids, (0.5, 0.2, 0.2))


@given(st.integers(1, 500), st.integers(0, 10))
@settings(max_examples=50)
def test_split_ratio_tolerance(n, seed):
    sp = split_entities([str(i) for i in range(n)], (0.5, 0.2, 0.3), seed)
    for name, r in zip(("train", "dev", "test"), (0.5, 0.2, 0.3)):
        assert abs(len(sp[name]) - r * n) <= 1
    assert len(set(sp["train"]) | set(sp["dev"]) | set(sp["test"])) == n
