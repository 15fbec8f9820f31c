"""Knowledge-graph triple store: loading, degree index, k-hop reach."""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

UNK, MASK, CLS = 0, 1, 2
RESERVED_TOKENS = ("[UNK]", "[MASK]", "[CLS]")

_TOKEN_RE = re.compile(r"[^\s.,;:!?]+|[.,;:!?]")


class GraphLoadError(ValueError):
    pass


class Vocab:
    """Token table. Line number in the vocab file is the token id."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if len(tokens) < 3:
            raise ValueError("vocab needs the three reserved tokens UNK, MASK, CLS")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def load(cls, path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    def __len__(self):
        return len(self.tokens)

    def encode(self, text: str) -> list[int]:
        return [self.index.get(tok, UNK) for tok in tokenize(text)]


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace; sentence punctuation becomes its own token."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Triple:
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class EntityRecord:
    id: int
    label: str
    name: str
    description: tuple[int, ...]


@dataclass
class KnowledgeGraph:
    entities: list[EntityRecord]
    relations: list[str]
    triples: list[Triple]
    out_adj: list[list[tuple[int, int]]] = field(init=False)
    in_adj: list[list[tuple[int, int]]] = field(init=False)
    degree: list[int] = field(init=False)

    def __post_init__(self):
        n = len(self.entities)
        self.out_adj = [[] for _ in range(n)]
        self.in_adj = [[] for _ in range(n)]
        self.degree = [0] * n
        for idx, t in enumerate(self.triples):
            if not (0 <= t.head < n and 0 <= t.tail < n):
                raise GraphLoadError(f"triple {t} references an unknown entity")
            self.out_adj[t.head].append((idx, t.tail))
            self.in_adj[t.tail].append((idx, t.head))
            self.degree[t.head] += 1
            self.degree[t.tail] += 1
        self.entity_index = {e.label: e.id for e in self.entities}
        self.relation_index = {r: i for i, r in enumerate(self.relations)}
        # reserved relation ids live after every file relation
        self.INTERACT = len(self.relations)
        self.SELF = len(self.relations) + 1

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relation_ids(self) -> int:
        """File relations plus the INTERACT and SELF ids."""
        return len(self.relations) + 2

    def relation_label(self, rid: int) -> str:
        if rid == self.INTERACT:
            return "<interact>"
        if rid == self.SELF:
            return "<self>"
        return self.relations[rid]

    def neighbors(self, e: int):
        """Undirected neighbours of ``e`` (with repetition for multi-edges)."""
        for _, t in self.out_adj[e]:
            yield t
        for _, h in self.in_adj[e]:
            yield h

    def triples_between(self, a: int, b: int) -> list[Triple]:
        """Triples with endpoints {a, b} in either direction."""
        found = [self.triples[i] for i, t in self.out_adj[a] if t == b]
        if a != b:
            found += [self.triples[i] for i, h in self.in_adj[a] if h == b]
        return found

    def _check(self, e: int):
        if not 0 <= e < self.n_entities:
            raise ValueError(f"unknown entity id {e}")


def load_graph(triples_path, descriptions_path, vocab: Vocab) -> KnowledgeGraph:
    """Read the descriptions TSV then the triples TSV into an indexed graph.

    Entity ids follow first appearance in the descriptions file; relation ids
    follow first appearance in the triples file.
    """
    entities: list[EntityRecord] = []
    index: dict[str, int] = {}
    for lineno, line in enumerate(Path(descriptions_path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise GraphLoadError(f"{descriptions_path}:{lineno}: expected 3 tab-separated fields")
        label, name, desc = parts
        if label in index:
            raise GraphLoadError(f"{descriptions_path}:{lineno}: duplicate entity label {label!r}")
        tokens = tuple(vocab.encode(desc)) or (UNK,)
        index[label] = len(entities)
        entities.append(EntityRecord(len(entities), label, name, tokens))

    relations: list[str] = []
    rel_index: dict[str, int] = {}
    triples: list[Triple] = []
    for lineno, line in enumerate(Path(triples_path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise GraphLoadError(f"{triples_path}:{lineno}: expected 3 tab-separated fields")
        h, r, t = parts
        for lab in (h, t):
            if lab not in index:
                raise GraphLoadError(f"{triples_path}:{lineno}: unknown entity label {lab!r}")
        if r not in rel_index:
            rel_index[r] = len(relations)
            relations.append(r)
        triples.append(Triple(index[h], rel_index[r], index[t]))
    return KnowledgeGraph(entities, relations, triples)


def khop_reach(g: KnowledgeGraph, seeds, k: int) -> dict[int, tuple[int, frozenset]]:
    """Entities within undirected distance ``k`` of any seed.

    Maps each reached non-seed entity to (min distance over seeds, seeds whose
    own BFS reaches it within ``k``).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    seeds = sorted(set(seeds))
    for s in seeds:
        g._check(s)
    seed_set = set(seeds)
    best: dict[int, int] = {}
    reached_by: dict[int, set] = {}
    for s in seeds:
        for e, d in bfs_distances(g, s, k).items():
            if e in seed_set:
                continue
            if e not in best or d < best[e]:
                best[e] = d
            reached_by.setdefault(e, set()).add(s)
    return {e: (best[e], frozenset(reached_by[e])) for e in sorted(best)}


def bfs_distances(g: KnowledgeGraph, source: int, k: int) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        if dist[u] == k:
            continue
        for v in g.neighbors(u):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def connecting_triples(g: KnowledgeGraph, nodes) -> list[Triple]:
    """Triples whose head and tail are both in ``nodes``, in file order."""
    nodes = set(nodes)
    idx = sorted({i for e in nodes for i, t in g.out_adj[e] if t in nodes})
    return [g.triples[i] for i in idx]
