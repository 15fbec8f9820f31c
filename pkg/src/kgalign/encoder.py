"""KGAlign entity encoder: description transformer trained with MLM plus a
translation-style margin loss over knowledge-graph triples."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .kg_store import CLS, MASK, KnowledgeGraph, Triple
from .layers import Module, TokenEncoder, pad_sequences
from .numerics import ParamGroup, Tensor
from .numerics.init import embedding_table, zeros

log = logging.getLogger(__name__)


@dataclass
class EncoderConfig:
    vocab_size: int
    d: int = 16
    layers: int = 1
    heads: int = 2
    ffn_dim: int = 32
    max_len: int = 16
    mask_prob: float = 0.15
    margin: float = 1.0
    negatives: int = 1
    mlm_weight: float = 1.0
    kg_weight: float = 1.0
    lr: float = 5e-3
    batch_triples: int = 0  # 0 = every triple each step
    batch_entities: int = 0  # 0 = every description each step

    def __post_init__(self):
        if self.d % self.heads:
            raise ValueError("d must be divisible by heads")
        if not 0.0 < self.mask_prob < 1.0:
            raise ValueError("mask_prob must lie in (0, 1)")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.negatives != 1:
            raise ValueError("only one negative per positive is supported")


class KGAlignEncoder(Module):
    """Description encoder (group ``kg_encoder``) plus relation table (group ``relations``)."""

    def __init__(self, cfg: EncoderConfig, n_relation_ids: int, rng: np.random.Generator,
                 group: ParamGroup | None = None, relations: ParamGroup | None = None):
        super().__init__(group)
        self.cfg = cfg
        self.tokens = TokenEncoder(rng, cfg.vocab_size, cfg.max_len, cfg.d, cfg.layers, cfg.heads,
                                   cfg.ffn_dim, group=self.group, prefix="desc.")
        self.add_param("mlm.b", zeros(cfg.vocab_size))
        self.relations = relations if relations is not None else ParamGroup()
        self.relations.add("rel", embedding_table(rng, n_relation_ids, cfg.d))

    @property
    def rel(self) -> Tensor:
        return self.relations["rel"]

    def encode(self, token_lists) -> Tensor:
        """CLS states (N, d) for a batch of descriptions."""
        ids, mask = pad_sequences(self.tokens.prepare(token_lists, CLS))
        return self.tokens(ids, mask)[:, 0, :]

    def encode_description(self, tokens) -> Tensor:
        return self.encode([tokens])[0]

    def encode_entities(self, g: KnowledgeGraph, ids=None) -> Tensor:
        ids = range(g.n_entities) if ids is None else ids
        return self.encode([g.entities[e].description for e in ids])

    # -- objectives -----------------------------------------------------
    def mask_tokens(self, token_lists, rng: np.random.Generator):
        """i.i.d. masking with at least one masked position per sequence.

        Returns (masked sequences, list of (row, position, original id)).
        """
        masked, targets = [], []
        for row, toks in enumerate(token_lists):
            toks = list(toks)[: self.cfg.max_len]
            pick = rng.random(len(toks)) < self.cfg.mask_prob
            if not pick.any():
                pick[rng.integers(len(toks))] = True
            out = list(toks)
            for pos in np.flatnonzero(pick):
                targets.append((row, int(pos), toks[pos]))
                out[pos] = MASK
            masked.append(out)
        return masked, targets

    def mlm_logits(self, masked, targets) -> Tensor:
        ids, mask = pad_sequences(self.tokens.prepare(masked, CLS))
        hidden = self.tokens(ids, mask)
        rows = np.array([r for r, _, _ in targets])
        cols = np.array([p + 1 for _, p, _ in targets])  # +1 skips CLS
        h = hidden[rows, cols]
        return nx.matmul(h, nx.transpose(self.tokens.p("tok"))) + self.p("mlm.b")

    def mlm_loss(self, token_lists, rng: np.random.Generator) -> Tensor:
        if len(token_lists) == 0:
            raise ValueError("empty MLM batch")
        masked, targets = self.mask_tokens(token_lists, rng)
        logits = self.mlm_logits(masked, targets)
        return nx.cross_entropy(logits, [t for _, _, t in targets])

    def distances(self, emb: Tensor, heads, rels, tails) -> Tensor:
        """||e_h + r - e_t||_2 for aligned index arrays."""
        diff = nx.take(emb, heads) + nx.take(self.rel, rels) - nx.take(emb, tails)
        return nx.l2_norm(diff, axis=-1)

    def kg_triplet_loss(self, g: KnowledgeGraph, positives, rng: np.random.Generator) -> Tensor:
        positives = list(positives)
        if g.n_entities < 2:
            raise ValueError("need at least two entities to corrupt triples")
        if not positives:
            raise ValueError("no positive triples")
        negs = corrupt(positives, g.n_entities, rng)
        ids = sorted({e for t in positives + negs for e in (t.head, t.tail)})
        where = {e: i for i, e in enumerate(ids)}
        emb = self.encode_entities(g, ids)

        def idx(ts, attr):
            return np.array([where[getattr(t, attr)] for t in ts])

        rels = np.array([t.relation for t in positives])
        d_pos = self.distances(emb, idx(positives, "head"), rels, idx(positives, "tail"))
        d_neg = self.distances(emb, idx(negs, "head"), rels, idx(negs, "tail"))
        return triplet_hinge(d_pos, d_neg, self.cfg.margin)

    def joint_loss(self, g: KnowledgeGraph, positives, desc_ids, rng: np.random.Generator):
        """Returns (total, mlm, kg) with total = w_mlm * mlm + w_kg * kg."""
        mlm = self.mlm_loss([g.entities[e].description for e in desc_ids], rng)
        kg = self.kg_triplet_loss(g, positives, rng)
        total = nx.scale(mlm, self.cfg.mlm_weight) + nx.scale(kg, self.cfg.kg_weight)
        return total, mlm, kg


def corrupt(positives, n_entities: int, rng: np.random.Generator) -> list[Triple]:
    """One negative per positive: swap head or tail (fair coin) for a
    uniformly drawn different entity."""
    out = []
    for t in positives:
        side = rng.random() < 0.5
        orig = t.head if side else t.tail
        e = int(rng.integers(n_entities - 1))
        if e >= orig:
            e += 1
        out.append(Triple(e, t.relation, t.tail) if side else Triple(t.head, t.relation, e))
    return out


def triplet_hinge(d_pos: Tensor, d_neg: Tensor, margin: float) -> Tensor:
    """mean(max(0, margin + d_pos - d_neg))."""
    return nx.mean(nx.hinge(d_pos - d_neg + margin))


def joint_loss(mlm: Tensor, kg: Tensor) -> Tensor:
    return nx.add(mlm, kg)


def train_encoder(g: KnowledgeGraph, cfg: EncoderConfig, steps: int, seed: int,
                  encoder: KGAlignEncoder | None = None, log_path=None):
    """Adam on the joint objective; returns (encoder, per-step loss rows)."""
    rng = np.random.default_rng(seed)
    if encoder is None:
        encoder = KGAlignEncoder(cfg, g.n_relation_ids, rng)
    rows = []
    for step in range(steps):
        positives = g.triples
        if cfg.batch_triples and len(positives) > cfg.batch_triples:
            positives = [positives[i] for i in rng.choice(len(positives), cfg.batch_triples, replace=False)]
        desc_ids = np.arange(g.n_entities)
        if cfg.batch_entities and g.n_entities > cfg.batch_entities:
            desc_ids = np.sort(rng.choice(g.n_entities, cfg.batch_entities, replace=False))
        encoder.group.zero_grad()
        encoder.relations.zero_grad()
        if positives:
            total, mlm, kg = encoder.joint_loss(g, positives, desc_ids, rng)
        else:
            mlm = encoder.mlm_loss([g.entities[e].description for e in desc_ids], rng)
            kg = Tensor(0.0)
            total = mlm
        total.backward()
        nx.adam_step(encoder.group, encoder.group.grads(), cfg.lr)
        nx.adam_step(encoder.relations, encoder.relations.grads(), cfg.lr)
        rows.append((step, mlm.item(), kg.item(), total.item()))
        if step % 50 == 0:
            log.debug("encoder step %d loss %.4f (mlm %.4f, kg %.4f)", step, rows[-1][3], rows[-1][1], rows[-1][2])
    if log_path is not None:
        write_loss_log(log_path, rows)
    return encoder, rows


def write_loss_log(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss_mlm", "loss_kg", "loss_total"])
        for step, m, k, t in rows:
            w.writerow([step, repr(m), repr(k), repr(t)])
