from pathlib import Path

import numpy as np
import pytest

from kgalign.kg_store import EntityRecord, KnowledgeGraph, Triple, Vocab, load_graph

FIXTURES = Path(__file__).parent / "fixtures"


def load_kg5():
    """The five-entity capitals fixture: (graph, vocab)."""
    vocab = Vocab.load(FIXTURES / "kg5_vocab.txt")
    g = load_graph(FIXTURES / "kg5_triples.tsv", FIXTURES / "kg5_descriptions.tsv", vocab)
    return g, vocab


def make_graph(triples, extra_entities=(), names=None):
    """KnowledgeGraph from (head, rel, tail) label triples."""
    labels, rels = [], []
    for h, r, t in triples:
        for lab in (h, t):
            if lab not in labels:
                labels.append(lab)
        if r not in rels:
            rels.append(r)
    for lab in extra_entities:
        if lab not in labels:
            labels.append(lab)
    names = names or {}
    ents = [EntityRecord(i, lab, names.get(lab, lab), (3 + i,)) for i, lab in enumerate(labels)]
    idx = {lab: i for i, lab in enumerate(labels)}
    ridx = {r: i for i, r in enumerate(rels)}
    return KnowledgeGraph(ents, rels, [Triple(idx[h], ridx[r], idx[t]) for h, r, t in triples])


def random_graph(rng, n_nodes, n_edges, n_rel=4):
    ents = [EntityRecord(i, f"e{i}", f"e{i}", (3,)) for i in range(n_nodes)]
    triples = [Triple(int(rng.integers(n_nodes)), int(rng.integers(n_rel)), int(rng.integers(n_nodes)))
               for _ in range(n_edges)]
    return KnowledgeGraph(ents, [f"r{i}" for i in range(n_rel)], triples)


def floyd_warshall(g):
    n = g.n_entities
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0)
    for t in g.triples:
        if t.head != t.tail:
            d[t.head, t.tail] = d[t.tail, t.head] = 1
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_subgraph(rng, n_entities, n_rel=3, n_edges=None):
    """Random subgraph over entity ids 0..n_entities-1 (first half extracted)
    plus the interaction node; relation ids n_rel / n_rel + 1 are INTERACT / SELF."""
    from kgalign.selection import INTERACTION, NodeKind, Subgraph

    n_ext = max(1, n_entities // 2)
    nodes = [(e, NodeKind.EXTRACTED if e < n_ext else NodeKind.NEIGHBOR) for e in range(n_entities)]
    nodes.append((INTERACTION, NodeKind.INTERACTION))
    hub = n_entities
    n_edges = int(rng.integers(0, 2 * n_entities + 1)) if n_edges is None else n_edges
    edges = [(int(rng.integers(n_entities)), int(rng.integers(n_rel)), int(rng.integers(n_entities)))
             for _ in range(n_edges)]
    for e in range(n_ext):
        edges += [(hub, n_rel, e), (e, n_rel, hub)]
    return Subgraph(nodes, edges, hub)


def permute_subgraph(sg, perm):
    """Same graph with node i moved to position perm[i]."""
    from kgalign.selection import Subgraph

    nodes = [None] * sg.n_nodes
    for i, node in enumerate(sg.nodes):
        nodes[perm[i]] = node
    edges = [(perm[s], r, perm[d]) for s, r, d in sg.edges]
    return Subgraph(nodes, edges, int(perm[sg.interaction_index]))


TINY = {
    "model.d": 8, "kg.ffn_dim": 8, "kg.pretrain_steps": 3, "gat.qk_dim": 4, "gat.hidden": 8,
    "text.ffn_dim": 8, "image.ffn_dim": 8, "image.d_c": 4, "image.d_o": 4, "select.top_k": 6,
    "train.batch_size": 8, "train.phase1_epochs": 2, "train.phase2_epochs": 1, "train.base_lr": 5e-3,
    "train.phase2_lr": 1e-4,
}


@pytest.fixture(scope="session")
def tiny_world(tmp_path_factory):
    """A 12-entity synthetic world with a shrunken config, written once per session."""
    from kgalign.synth import synth_generate

    out = tmp_path_factory.mktemp("tiny")
    synth_generate(3, n_entities=12, n_relations=3, n_samples=24, out_dir=out, d_c=4, d_o=4)
    with open(out / "config.txt", "a") as fh:
        fh.writelines(f"{k} = {v}\n" for k, v in TINY.items())
    return out


@pytest.fixture(scope="session")
def world7(tmp_path_factory):
    """The seed-7 synthetic world (50 entities, 8 relations, 500 samples) with its desk preset."""
    from kgalign.synth import synth_generate

    out = tmp_path_factory.mktemp("world7")
    synth_generate(7, 50, 8, 500, out_dir=out)
    return out


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
