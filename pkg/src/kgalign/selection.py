"""Neighbour selection, NLI filtering and per-sample subgraph construction."""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kg_store import KnowledgeGraph, Triple, connecting_triples, khop_reach, tokenize

INTERACTION = -1  # entity slot of the interaction node


class SelectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class SelectionConfig:
    hop_k: int = 2
    top_k: int = 8
    min_shared_seeds: int = 2
    nli_threshold: float = 0.5
    # nli: degree top-k then NLI filter; degree: no NLI; random: uniform top-k; none: no neighbours
    mode: str = "nli"

    def __post_init__(self):
        if self.hop_k < 1:
            raise ValueError("hop_k must be >= 1")
        if self.top_k < 0:
            raise ValueError("top_k must be >= 0")
        if not 0.0 <= self.nli_threshold <= 1.0:
            raise ValueError("nli_threshold must lie in [0, 1]")
        if self.mode not in ("nli", "degree", "random", "none"):
            raise ValueError(f"unknown selection mode {self.mode!r}")


@dataclass(frozen=True)
class NliVerdict:
    entail: float
    contradict: float
    neutral: float

    def __post_init__(self):
        vals = (self.entail, self.contradict, self.neutral)
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ValueError(f"NLI probabilities out of range: {vals}")
        if abs(sum(vals) - 1.0) > 1e-9:
            raise ValueError(f"NLI probabilities must sum to 1, got {sum(vals)}")

    @property
    def score(self) -> float:
        return max(self.entail, self.contradict)


NEUTRAL = NliVerdict(0.0, 0.0, 1.0)


def premise_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class TableNliScorer:
    """Exact verdicts from a TSV fixture keyed by (premise hash, hypothesis).

    Pairs missing from the table are neutral unless ``strict`` is set.
    """

    def __init__(self, table: dict[tuple[str, str], NliVerdict] | None = None, strict: bool = False):
        self.table = dict(table or {})
        self.strict = strict

    @classmethod
    def load(cls, path, strict: bool = False) -> "TableNliScorer":
        table = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ValueError(f"{path}:{lineno}: expected 5 tab-separated fields")
            h, hyp, ent, neu, con = parts
            table[(h, hyp)] = NliVerdict(float(ent), float(con), float(neu))
        return cls(table, strict)

    def save(self, path) -> None:
        rows = [f"{h}\t{hyp}\t{v.entail!r}\t{v.neutral!r}\t{v.contradict!r}"
                for (h, hyp), v in sorted(self.table.items())]
        Path(path).write_text("\n".join(rows) + ("\n" if rows else ""), encoding="utf-8")

    def add(self, premise: str, hypothesis: str, verdict: NliVerdict) -> None:
        self.table[(premise_hash(premise), hypothesis)] = verdict

    def score(self, premise: str, hypothesis: str) -> NliVerdict:
        key = (premise_hash(premise), hypothesis)
        if key in self.table:
            return self.table[key]
        if self.strict:
            raise SelectionError(f"no NLI fixture entry for hypothesis {hypothesis!r}")
        return NEUTRAL


_STOPWORDS = frozenset("a an the of in on at to by for and or is was are were be been it its this that with as".split())
_NEGATIONS = frozenset("not no never false fake isn't wasn't didn't doesn't".split())


class LexicalNliScorer:
    """Heuristic stand-in for an NLI model.

    The Jaccard overlap of content tokens counts as entailment, or as
    contradiction when the premise carries a negation marker; the rest is
    neutral.
    """

    def score(self, premise: str, hypothesis: str) -> NliVerdict:
        p_tok = [t for t in tokenize(premise) if t.isalnum() or "'" in t]
        prem = {t for t in p_tok if t not in _STOPWORDS}
        hyp = {t for t in tokenize(hypothesis) if t.isalnum() and t not in _STOPWORDS}
        union = prem | hyp
        overlap = len(prem & hyp) / len(union) if union else 0.0
        if _NEGATIONS & set(p_tok):
            return NliVerdict(0.0, overlap, 1.0 - overlap)
        return NliVerdict(overlap, 0.0, 1.0 - overlap)


class NodeKind(enum.IntEnum):
    EXTRACTED = 0
    NEIGHBOR = 1
    INTERACTION = 2


@dataclass
class Subgraph:
    nodes: list[tuple[int, NodeKind]]
    edges: list[tuple[int, int, int]]
    interaction_index: int

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def kinds(self) -> np.ndarray:
        return np.array([k for _, k in self.nodes], dtype=np.int64)

    @property
    def entity_ids(self) -> list[int]:
        return [e for e, _ in self.nodes]

    def to_json(self, g: KnowledgeGraph, nli_scores: dict | None = None) -> dict:
        nodes = []
        for e, kind in self.nodes:
            label = "<interaction>" if e == INTERACTION else g.entities[e].label
            nodes.append({"id": e, "label": label, "kind": kind.name.lower()})
        edges = [{"src": s, "rel": g.relation_label(r), "dst": d} for s, r, d in self.edges]
        out = {"nodes": nodes, "edges": edges}
        if nli_scores is not None:
            out["nli_scores"] = {g.entities[e].label: v for e, v in nli_scores.items()}
        return out


def candidate_neighbors(g: KnowledgeGraph, extracted, cfg: SelectionConfig) -> list[tuple[int, int]]:
    """(entity, degree) for every non-extracted entity within ``hop_k`` of at
    least ``min_shared_seeds`` extracted entities, in id order."""
    extracted = set(extracted)
    if not extracted:
        raise ValueError("extracted entity set is empty")
    reach = khop_reach(g, extracted, cfg.hop_k)
    return [(e, g.degree[e]) for e, (_, seeds) in reach.items() if len(seeds) >= cfg.min_shared_seeds]


def select_by_degree(candidates, top_k: int) -> list[int]:
    ranked = sorted(candidates, key=lambda c: (c[1], c[0]))
    return [e for e, _ in ranked[:top_k]]


def select_random(candidates, top_k: int, rng: np.random.Generator) -> list[int]:
    """Uniformly random ``top_k`` candidates (ablation baseline), sorted by id."""
    ids = [e for e, _ in candidates]
    if len(ids) <= top_k:
        return ids
    pick = rng.choice(len(ids), size=top_k, replace=False)
    return sorted(ids[i] for i in pick)


def verbalize_triple(g: KnowledgeGraph, t: Triple) -> str:
    rel = g.relation_label(t.relation).replace("_", " ")
    return f"{g.entities[t.head].name} {rel} {g.entities[t.tail].name}."


def linking_triples(g: KnowledgeGraph, neighbor: int, extracted) -> list[Triple]:
    """Triples joining ``neighbor`` (either end) to any extracted entity."""
    out = []
    for e in sorted(set(extracted)):
        out.extend(g.triples_between(neighbor, e))
    return out


def score_neighbors(g: KnowledgeGraph, text: str, extracted, neighbors, scorer) -> dict[int, dict]:
    """Best max(entail, contradict) over each neighbour's linking triples."""
    scores = {}
    for e in neighbors:
        best, best_triple, best_v = 0.0, None, None
        for t in linking_triples(g, e, extracted):
            hyp = verbalize_triple(g, t)
            try:
                v = scorer.score(text, hyp)
            except SelectionError:
                raise
            except Exception as exc:  # scorer plug-ins may fail arbitrarily
                raise SelectionError(f"NLI scorer failed on {hyp!r}: {exc}") from exc
            if best_triple is None or v.score > best:
                best, best_triple, best_v = v.score, hyp, v
        scores[e] = {
            "score": best,
            "triple": best_triple,
            "entail": best_v.entail if best_v else 0.0,
            "contradict": best_v.contradict if best_v else 0.0,
        }
    return scores


def nli_filter(g: KnowledgeGraph, text: str, extracted, selected, scorer, cfg: SelectionConfig) -> list[int]:
    """Keep neighbours with some linking triple scoring above the threshold."""
    scores = score_neighbors(g, text, extracted, selected, scorer)
    return [e for e in selected if scores[e]["triple"] is not None and scores[e]["score"] > cfg.nli_threshold]


def build_subgraph(g: KnowledgeGraph, extracted, kept_neighbors) -> Subgraph:
    extracted = sorted(set(extracted))
    if not extracted:
        raise ValueError("cannot build a subgraph without extracted entities")
    kept = sorted(set(kept_neighbors))
    if set(kept) & set(extracted):
        raise ValueError("kept neighbours overlap the extracted entities")
    nodes = [(e, NodeKind.EXTRACTED) for e in extracted] + [(e, NodeKind.NEIGHBOR) for e in kept]
    pos = {e: i for i, (e, _) in enumerate(nodes)}
    nodes.append((INTERACTION, NodeKind.INTERACTION))
    hub = len(nodes) - 1
    edges = [(pos[t.head], t.relation, pos[t.tail]) for t in connecting_triples(g, pos)]
    for e in extracted:
        edges.append((hub, g.INTERACT, pos[e]))
        edges.append((pos[e], g.INTERACT, hub))
    return Subgraph(nodes, edges, hub)


@dataclass
class Selection:
    """Outcome of neighbour selection for one sample."""

    subgraph: Subgraph
    candidates: list[tuple[int, int]] = field(default_factory=list)
    selected: list[int] = field(default_factory=list)
    kept: list[int] = field(default_factory=list)
    nli_scores: dict = field(default_factory=dict)


def select_and_build(g: KnowledgeGraph, text: str, extracted, scorer, cfg: SelectionConfig,
                     rng: np.random.Generator | None = None) -> Selection:
    """Run the configured selection chain and build the sample subgraph."""
    extracted = sorted(set(extracted))
    if cfg.mode == "none":
        return Selection(build_subgraph(g, extracted, []))
    cands = candidate_neighbors(g, extracted, cfg)
    if cfg.mode == "random":
        if rng is None:
            raise ValueError("random selection needs an rng")
        selected = select_random(cands, cfg.top_k, rng)
    else:
        selected = select_by_degree(cands, cfg.top_k)
    scores = {}
    kept = selected
    if cfg.mode == "nli":
        scores = score_neighbors(g, text, extracted, selected, scorer)
        kept = [e for e in selected if scores[e]["triple"] is not None and scores[e]["score"] > cfg.nli_threshold]
    return Selection(build_subgraph(g, extracted, kept), cands, selected, kept, scores)

