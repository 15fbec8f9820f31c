"""Deterministic synthetic world for end-to-end checks.

A random KG whose entity descriptions are templated from their own facts, a
news-like dataset whose samples each state 2-3 facts about one head entity,
and an NLI fixture keyed to those texts. Fake samples swap the tail of one
stated fact for an entity unrelated to the head. The fixture entails stated
true facts and contradicts both the swapped statement and the KG fact it
displaces, so a fake sample's selected neighbourhood contains the true tail
while a real sample's neighbourhood is filtered away.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kg_store import Triple, tokenize
from .modality import ImageFeatures, save_image_features
from .selection import NliVerdict, TableNliScorer

MIN_ENTITIES = 10
RESERVED = ["[UNK]", "[MASK]", "[CLS]"]
SYLLABLES = ["ba", "ko", "ri", "tal", "men", "su", "dor", "vi", "lan", "ez",
             "mor", "pa", "quin", "sel", "tor", "ul", "gar", "he", "no", "wy"]
RELATION_WORDS = ["located_in", "part_of", "founded_by", "member_of", "born_in", "works_for",
                  "capital_of", "owned_by", "allied_with", "named_after", "produced_by", "sister_of"]

STRONG, WEAK = 0.9, 0.1
ENTAILED = NliVerdict(STRONG, 0.0, WEAK)
CONTRADICTED = NliVerdict(0.0, STRONG, WEAK)

# desk-scale preset written next to the generated data
PRESET = {
    "select.top_k": 24,
    "kg.pretrain_steps": 100,
    "train.batch_size": 32,
    "train.phase1_epochs": 12,
    "train.phase2_epochs": 3,
    "train.base_lr": 5e-3,
    "train.lr_decay": 0.5,
    "train.lr_period": 3,
    "train.phase2_lr": 1e-4,
}


@dataclass
class SynthSample:
    id: str
    head: int
    stated: list[Triple]  # as written in the text, corrupted triple included
    corrupted: int | None = None  # index into ``stated``
    original: Triple | None = None  # the KG fact a fake sample displaces
    n_objects: int = 4

    @property
    def label(self) -> str:
        return "real" if self.corrupted is None else "fake"


@dataclass
class SynthWorld:
    labels: list[str]
    names: list[str]
    relations: list[str]
    triples: list[Triple]
    samples: list[SynthSample] = field(default_factory=list)
    texts: dict[str, str] = field(default_factory=dict)

    def sentence(self, t: Triple) -> str:
        return f"{self.names[t.head]} {self.relations[t.relation].replace('_', ' ')} {self.names[t.tail]}."

    def description(self, e: int) -> str:
        facts = [t for t in self.triples if t.head == e][:2]
        if not facts:
            return f"{self.names[e]} is an entity"
        return " and ".join(self.sentence(t)[:-1] for t in facts)


def _names(rng: np.random.Generator, n: int) -> list[str]:
    seen, out = set(), []
    while len(out) < n:
        k = 2 if len(seen) < 300 else 3
        name = "".join(SYLLABLES[i] for i in rng.integers(0, len(SYLLABLES), size=k))
        if name not in seen:
            seen.add(name)
            out.append(name.capitalize())
    return out


def _graph(rng: np.random.Generator, n_entities: int, n_relations: int) -> list[Triple]:
    """Each entity heads 1-3 facts, at most one tail per (head, relation) and
    at most one fact between any two entities."""
    linked: set[frozenset] = set()
    triples = []
    for h in range(n_entities):
        rels = rng.permutation(n_relations)[: int(rng.integers(1, 4))]
        for r in rels:
            for _ in range(20):
                t = int(rng.integers(n_entities))
                if t != h and frozenset((h, t)) not in linked:
                    linked.add(frozenset((h, t)))
                    triples.append(Triple(h, int(r), t))
                    break
    return triples


def synth_generate(seed: int, n_entities: int = 50, n_relations: int = 8, n_samples: int = 500,
                   out_dir=None, d_c: int = 8, d_o: int = 8, train_fraction: float = 0.8) -> SynthWorld:
    """Build the world in memory and, when ``out_dir`` is given, write it out."""
    if n_entities < MIN_ENTITIES:
        raise ValueError(f"n_entities must be >= {MIN_ENTITIES}")
    if n_relations < 1 or n_samples < 1:
        raise ValueError("n_relations and n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    relations = RELATION_WORDS[:n_relations] + [f"related_to_{i}" for i in range(len(RELATION_WORDS), n_relations)]
    world = SynthWorld([f"Q{i}" for i in range(n_entities)], _names(rng, n_entities), relations,
                       _graph(rng, n_entities, n_relations))
    out_facts: dict[int, list[Triple]] = {}
    linked: set[frozenset] = set()
    for t in world.triples:
        out_facts.setdefault(t.head, []).append(t)
        linked.add(frozenset((t.head, t.tail)))
    heads = sorted(h for h, ts in out_facts.items() if len(ts) >= 2)
    if not heads:
        raise ValueError("generated graph has no entity with two facts; increase n_entities")

    # exact class balance, shuffled
    fake_flags = np.zeros(n_samples, dtype=bool)
    fake_flags[: n_samples // 2] = True
    rng.shuffle(fake_flags)
    width = len(str(n_samples))
    for i in range(n_samples):
        h = heads[int(rng.integers(len(heads)))]
        facts = out_facts[h]
        k = min(len(facts), int(rng.integers(2, 4)))
        stated = [facts[j] for j in sorted(rng.choice(len(facts), size=k, replace=False))]
        s = SynthSample(f"s{i:0{width}d}", h, stated, n_objects=int(rng.integers(1, 6)))
        if fake_flags[i]:
            c = int(rng.integers(k))
            used = {h} | {t.tail for t in stated}
            pool = [e for e in range(n_entities) if e not in used and frozenset((h, e)) not in linked]
            orig = stated[c]
            s.stated = list(stated)
            s.stated[c] = Triple(h, orig.relation, int(pool[int(rng.integers(len(pool)))]))
            s.corrupted, s.original = c, orig
        world.samples.append(s)
        world.texts[s.id] = " ".join(world.sentence(t) for t in s.stated)

    if out_dir is not None:
        write_world(world, Path(out_dir), np.random.default_rng([seed, 1]), d_c, d_o, train_fraction)
    return world


def nli_fixture(world: SynthWorld) -> TableNliScorer:
    table = TableNliScorer()
    for s in world.samples:
        text = world.texts[s.id]
        for j, t in enumerate(s.stated):
            table.add(text, world.sentence(t), CONTRADICTED if j == s.corrupted else ENTAILED)
        if s.original is not None:
            table.add(text, world.sentence(s.original), CONTRADICTED)
    return table


def vocab_tokens(world: SynthWorld) -> list[str]:
    toks = set()
    for e in range(len(world.labels)):
        toks.update(tokenize(world.description(e)))
    for text in world.texts.values():
        toks.update(tokenize(text))
    return RESERVED + sorted(toks)


def write_world(world: SynthWorld, out: Path, rng: np.random.Generator, d_c: int = 8, d_o: int = 8,
                train_fraction: float = 0.8) -> dict[str, Path]:
    out.mkdir(parents=True, exist_ok=True)
    (out / "features").mkdir(exist_ok=True)
    files = {name: out / name for name in ("triples.tsv", "descriptions.tsv", "vocab.txt",
                                           "nli_fixture.tsv", "dataset.jsonl")}
    files["triples.tsv"].write_text("".join(
        f"{world.labels[t.head]}\t{world.relations[t.relation]}\t{world.labels[t.tail]}\n" for t in world.triples))
    files["descriptions.tsv"].write_text("".join(
        f"{lab}\t{world.names[e]}\t{world.description(e)}\n" for e, lab in enumerate(world.labels)))
    files["vocab.txt"].write_text("\n".join(vocab_tokens(world)) + "\n")
    nli_fixture(world).save(files["nli_fixture.tsv"])

    lines = []
    for s in world.samples:
        # image features carry no label information
        feats = ImageFeatures(rng.normal(size=d_c), rng.normal(size=(s.n_objects, d_o)))
        rel = f"features/{s.id}.txt"
        save_image_features(out / rel, feats)
        entities = sorted({s.head} | {t.tail for t in s.stated})
        lines.append(json.dumps({"id": s.id, "text": world.texts[s.id],
                                 "entities": [world.labels[e] for e in entities],
                                 "image_features": rel, "label": s.label}))
    files["dataset.jsonl"].write_text("\n".join(lines) + "\n")

    n_train = int(round(train_fraction * len(world.samples)))
    ids = [s.id for s in world.samples]
    (out / "train_ids.txt").write_text("\n".join(ids[:n_train]) + "\n")
    (out / "test_ids.txt").write_text("\n".join(ids[n_train:]) + "\n")
    preset = {"data.train_ids": "train_ids.txt", "data.test_ids": "test_ids.txt",
              "image.d_c": d_c, "image.d_o": d_o, **PRESET}
    (out / "config.txt").write_text(
        "# desk-scale preset for the synthetic world\n"
        + "".join(f"{k} = {v}\n" for k, v in preset.items()))
    return files
