"""Typed graph attention over per-sample subgraphs with an interaction-node readout.

Several subgraphs are processed at once as one disjoint union; attention is
a softmax over each destination node's in-edges plus a self edge.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .layers import Module
from .numerics import ParamGroup, Tensor
from .numerics.init import embedding_table
from .selection import INTERACTION, NodeKind, Subgraph


@dataclass
class GatConfig:
    layers: int = 2
    d: int = 16
    qk_dim: int = 8
    hidden: int = 32

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("GAT needs at least one layer")
        if self.qk_dim < 1:
            raise ValueError("qk_dim must be >= 1")


class GraphBatch:
    """Disjoint union of subgraphs with SELF edges appended for every node."""

    def __init__(self, subgraphs: list[Subgraph], self_relation: int):
        ent, kinds, src, rel, dst, sample = [], [], [], [], [], []
        self.offsets, self.hubs = [], []
        base = 0
        for b, sg in enumerate(subgraphs):
            self.offsets.append(base)
            for e, k in sg.nodes:
                ent.append(e)
                kinds.append(int(k))
                sample.append(b)
            for s, r, d in sg.edges:
                src.append(base + s)
                rel.append(r)
                dst.append(base + d)
            self.hubs.append(base + sg.interaction_index)
            base += sg.n_nodes
        n = base
        self.n_nodes = n
        self.entity = np.array(ent, dtype=np.int64)
        self.kinds = np.array(kinds, dtype=np.int64)
        self.sample = np.array(sample, dtype=np.int64)
        self.src = np.array(src + list(range(n)), dtype=np.int64)
        self.rel = np.array(rel + [self_relation] * n, dtype=np.int64)
        self.dst = np.array(dst + list(range(n)), dtype=np.int64)
        self.hubs = np.array(self.hubs, dtype=np.int64)
        self.sizes = [sg.n_nodes for sg in subgraphs]

    def padded_index(self) -> tuple[np.ndarray, np.ndarray]:
        """(B, max nodes) gather index into the union plus validity mask."""
        M = max(self.sizes)
        idx = np.zeros((len(self.sizes), M), dtype=np.int64)
        mask = np.zeros((len(self.sizes), M), dtype=bool)
        for b, (off, n) in enumerate(zip(self.offsets, self.sizes)):
            idx[b, :n] = np.arange(off, off + n)
            mask[b, :n] = True
        return idx, mask


class GAT(Module):
    def __init__(self, cfg: GatConfig, rng: np.random.Generator, group: ParamGroup | None = None):
        super().__init__(group)
        self.cfg = cfg
        d, D, H = cfg.d, cfg.qk_dim, cfg.hidden
        self.add_param("type", embedding_table(rng, len(NodeKind), d))
        self.add_param("int0", Tensor(rng.uniform(-1 / math.sqrt(d), 1 / math.sqrt(d), size=d)))
        for i in range(cfg.layers):
            L = f"l{i}."
            self.add_linear(L + "q", rng, 2 * d, D)
            self.add_linear(L + "k", rng, 3 * d, D)
            self.add_linear(L + "m1", rng, 3 * d, H)
            self.add_linear(L + "m2", rng, H, d)
            self.add_linear(L + "n", rng, d, d)

    def initial_states(self, batch: GraphBatch, entity_emb: Tensor) -> Tensor:
        table = nx.concat([entity_emb, nx.reshape(self.p("int0"), (1, -1))], axis=0)
        idx = np.where(batch.entity == INTERACTION, entity_emb.shape[0], batch.entity)
        return nx.take(table, idx)

    def edge_inputs(self, batch: GraphBatch, x: Tensor, rel: Tensor) -> Tensor:
        types = self.p("type")
        return nx.concat([nx.take(x, batch.src), nx.take(types, batch.kinds[batch.src]),
                          nx.take(rel, batch.rel)], axis=-1)

    def attention(self, i: int, batch: GraphBatch, x: Tensor, rel: Tensor) -> tuple[Tensor, Tensor]:
        """Per-edge attention (aligned with batch.src/dst) and edge inputs."""
        L = f"l{i}."
        q = self.linear(L + "q", nx.concat([x, nx.take(self.p("type"), batch.kinds)], axis=-1))
        kin = self.edge_inputs(batch, x, rel)
        k = self.linear(L + "k", kin)
        scores = nx.scale(nx.tsum(nx.take(q, batch.dst) * k, axis=-1), 1.0 / math.sqrt(self.cfg.qk_dim))
        return nx.segment_softmax(scores, batch.dst, batch.n_nodes), kin

    def layer(self, i: int, batch: GraphBatch, x: Tensor, rel: Tensor, attn_out: list | None = None) -> Tensor:
        L = f"l{i}."
        alpha, kin = self.attention(i, batch, x, rel)
        if attn_out is not None:
            attn_out.append(alpha.data)
        msg = self.linear(L + "m2", nx.relu(self.linear(L + "m1", kin)))
        agg = nx.segment_sum(nx.reshape(alpha, (-1, 1)) * msg, batch.dst, batch.n_nodes)
        return self.linear(L + "n", agg) + x

    def __call__(self, batch: GraphBatch, entity_emb: Tensor, rel: Tensor,
                 attn_out: list | None = None) -> tuple[Tensor, Tensor]:
        """Returns (final states of every union node, T_kg per subgraph)."""
        x = self.initial_states(batch, entity_emb)
        for i in range(self.cfg.layers):
            x = self.layer(i, batch, x, rel, attn_out)
        return x, nx.take(x, batch.hubs)


def attention_weights(gat: GAT, layer: int, sg: Subgraph, states: Tensor, j: int, rel: Tensor,
                      self_relation: int) -> dict[tuple[int, int], float]:
    """α over N_j ∪ {j} for one node, keyed by (source index, relation id)."""
    batch = GraphBatch([sg], self_relation)
    with nx.no_grad():
        alpha, _ = gat.attention(layer, batch, states, rel)
    out = {}
    for a, s, r, d in zip(alpha.data, batch.src, batch.rel, batch.dst):
        if d == j:
            out[(int(s), int(r))] = out.get((int(s), int(r)), 0.0) + float(a)
    return out


def gat_forward(gat: GAT, sg: Subgraph, entity_emb: Tensor, rel: Tensor, self_relation: int):
    """Single-subgraph forward: (final node states, T_kg)."""
    states, t_kg = gat(GraphBatch([sg], self_relation), entity_emb, rel)
    return states, t_kg[0]
