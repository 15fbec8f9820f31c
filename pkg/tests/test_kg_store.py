from collections import Counter

import numpy as np
import pytest

from kgalign.kg_store import (
    CLS, MASK, UNK, GraphLoadError, Vocab, connecting_triples, khop_reach, load_graph, tokenize,
)
from conftest import floyd_warshall, make_graph, random_graph


def _write(tmp_path, triples, descs, vocab=("[UNK]", "[MASK]", "[CLS]", "a", "thing")):
    (tmp_path / "t.tsv").write_text("".join("\t".join(t) + "\n" for t in triples))
    (tmp_path / "d.tsv").write_text("".join("\t".join(d) + "\n" for d in descs))
    (tmp_path / "v.txt").write_text("\n".join(vocab) + "\n")
    return tmp_path / "t.tsv", tmp_path / "d.tsv", Vocab.load(tmp_path / "v.txt")


def test_reserved_tokens():
    assert (UNK, MASK, CLS) == (0, 1, 2)


def test_tokenize_lowercase_and_punct():
    assert tokenize("NASA landed.  Moon") == ["nasa", "landed", ".", "moon"]


def test_load_two_triples(tmp_path):
    tp, dp, v = _write(tmp_path, [("a", "r1", "b"), ("b", "r2", "c")],
                       [("a", "A", "a thing"), ("b", "B", "thing"), ("c", "C", "zzz")])
    g = load_graph(tp, dp, v)
    assert g.n_entities == 3 and len(g.relations) == 2
    assert g.degree == [1, 2, 1]
    assert g.entities[2].description == (UNK,)
    assert g.entities[0].description == (3, 4)
    assert (g.INTERACT, g.SELF) == (2, 3)


def test_load_empty_triples(tmp_path):
    tp, dp, v = _write(tmp_path, [], [("a", "A", "")])
    g = load_graph(tp, dp, v)
    assert g.n_entities == 1 and g.triples == []
    assert g.entities[0].description == (UNK,)


def test_load_unknown_entity_names_line(tmp_path):
    tp, dp, v = _write(tmp_path, [("a", "r", "b"), ("a", "r", "zz")], [("a", "A", "x"), ("b", "B", "y")])
    with pytest.raises(GraphLoadError, match=":2:"):
        load_graph(tp, dp, v)


def test_load_duplicate_label(tmp_path):
    tp, dp, v = _write(tmp_path, [], [("a", "A", "x"), ("a", "A2", "y")])
    with pytest.raises(GraphLoadError, match="duplicate"):
        load_graph(tp, dp, v)


def test_degrees_match_raw_recount(tmp_path, rng):
    raw = [(f"n{rng.integers(50)}", f"r{rng.integers(5)}", f"n{rng.integers(50)}") for _ in range(300)]
    descs = [(f"n{i}", f"N{i}", "a") for i in range(50)]
    tp, dp, v = _write(tmp_path, raw, descs)
    g = load_graph(tp, dp, v)
    # recount straight from the file text
    count = Counter()
    for line in tp.read_text().splitlines():
        h, _, t = line.split("\t")
        count[h] += 1
        count[t] += 1
    for e in g.entities:
        assert g.degree[e.id] == count[e.label]
    assert sum(g.degree) == 2 * len(g.triples)


def test_self_loop_counts_twice():
    g = make_graph([("a", "r", "a")])
    assert g.degree == [2]


def test_adjacency_reindexes_triples(rng):
    g = random_graph(rng, 30, 120)
    rebuilt = sorted((i, g.triples[i].head, g.triples[i].tail) for h in range(30) for i, _ in g.out_adj[h])
    assert rebuilt == sorted((i, t.head, t.tail) for i, t in enumerate(g.triples))
    assert sum(len(x) for x in g.in_adj) == len(g.triples)


def test_khop_chain():
    g = make_graph([("a", "r", "b"), ("b", "r", "c")])
    assert khop_reach(g, {0}, 1) == {1: (1, frozenset({0}))}
    assert khop_reach(g, {0, 2}, 1) == {1: (1, frozenset({0, 2}))}


def test_khop_bad_seed():
    g = make_graph([("a", "r", "b")])
    with pytest.raises(ValueError):
        khop_reach(g, {7}, 1)


@pytest.mark.parametrize("seed", range(10))
def test_khop_matches_floyd_warshall(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 50, 80)
    d = floyd_warshall(g)
    seeds = set(rng.choice(50, 3, replace=False).tolist())
    got = khop_reach(g, seeds, 2)
    want = {}
    for e in range(50):
        if e in seeds:
            continue
        reach = {s for s in seeds if d[s, e] <= 2}
        if reach:
            want[e] = (int(min(d[s, e] for s in seeds)), frozenset(reach))
    assert got == want


@pytest.mark.parametrize("seed", range(5))
def test_khop_monotone(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 40, 60)
    seeds = set(rng.choice(40, 2, replace=False).tolist())
    prev = set()
    for k in range(1, 5):
        cur = set(khop_reach(g, seeds, k))
        assert prev <= cur
        prev = cur


def test_connecting_triples_small():
    g = make_graph([("a", "r", "b")])
    assert connecting_triples(g, {0, 1}) == [g.triples[0]]
    assert connecting_triples(g, {0}) == []


@pytest.mark.parametrize("seed", range(5))
def test_connecting_triples_scan_oracle(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 40, 150)
    nodes = set(rng.choice(40, 12, replace=False).tolist())
    want = [t for t in g.triples if t.head in nodes and t.tail in nodes]
    assert connecting_triples(g, nodes) == want
