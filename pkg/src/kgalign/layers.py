"""Shared building blocks: parameter-owning modules and a post-LN transformer."""
from __future__ import annotations

import math

import numpy as np

from . import numerics as nx
from .numerics import ParamGroup, Tensor
from .numerics.init import embedding_table, ones, uniform_matrix, zeros


class Module:
    """Owns a slice of a :class:`ParamGroup`, addressed by name prefix."""

    def __init__(self, group: ParamGroup | None = None, prefix: str = ""):
        self.group = group if group is not None else ParamGroup()
        self.prefix = prefix

    def p(self, name: str) -> Tensor:
        return self.group[self.prefix + name]

    def add_param(self, name: str, t: Tensor) -> Tensor:
        return self.group.add(self.prefix + name, t)

    def add_linear(self, name: str, rng, fan_in: int, fan_out: int, bias: bool = True):
        self.add_param(name + ".w", uniform_matrix(rng, fan_in, fan_out))
        if bias:
            self.add_param(name + ".b", zeros(fan_out))

    def linear(self, name: str, x: Tensor) -> Tensor:
        b = self.prefix + name + ".b"
        return nx.linear(x, self.p(name + ".w"), self.group[b] if b in self.group else None)

    def add_layer_norm(self, name: str, dim: int):
        self.add_param(name + ".g", ones(dim))
        self.add_param(name + ".b", zeros(dim))

    def layer_norm(self, name: str, x: Tensor) -> Tensor:
        return nx.layer_norm(x, self.p(name + ".g"), self.p(name + ".b"))


class TransformerEncoder(Module):
    """Post-LN encoder stack: x = LN(x + MHA(x)); x = LN(x + FFN(x))."""

    def __init__(self, rng, d: int, n_layers: int, n_heads: int, ffn_dim: int,
                 group: ParamGroup | None = None, prefix: str = ""):
        super().__init__(group, prefix)
        if d % n_heads:
            raise ValueError(f"model dim {d} not divisible by {n_heads} heads")
        self.d, self.n_layers, self.n_heads = d, n_layers, n_heads
        for i in range(n_layers):
            L = f"l{i}."
            for name in ("q", "k", "v", "o"):
                self.add_linear(L + name, rng, d, d)
            self.add_layer_norm(L + "ln1", d)
            self.add_linear(L + "ff1", rng, d, ffn_dim)
            self.add_linear(L + "ff2", rng, ffn_dim, d)
            self.add_layer_norm(L + "ln2", d)

    def __call__(self, x: Tensor, mask: np.ndarray | None = None, attn_out: list | None = None) -> Tensor:
        """x: (B, T, d); mask: (B, T) bool, True for real tokens."""
        B, T, d = x.shape
        h, dh = self.n_heads, d // self.n_heads
        key_mask = None if mask is None else mask[:, None, None, :]
        for i in range(self.n_layers):
            L = f"l{i}."

            def heads(t):
                return nx.transpose(nx.reshape(t, (B, T, h, dh)), (0, 2, 1, 3))

            q = heads(self.linear(L + "q", x))
            k = heads(self.linear(L + "k", x))
            v = heads(self.linear(L + "v", x))
            scores = nx.scale(nx.matmul(q, nx.swap_last(k)), 1.0 / math.sqrt(dh))
            att = nx.softmax(scores, axis=-1, mask=key_mask)
            if attn_out is not None:
                attn_out.append(att.data)
            ctx = nx.reshape(nx.transpose(nx.matmul(att, v), (0, 2, 1, 3)), (B, T, d))
            x = self.layer_norm(L + "ln1", x + self.linear(L + "o", ctx))
            ff = self.linear(L + "ff2", nx.gelu(self.linear(L + "ff1", x)))
            x = self.layer_norm(L + "ln2", x + ff)
        return x


def pad_sequences(seqs, pad: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad integer sequences; returns (ids (B, T), mask (B, T))."""
    T = max(len(s) for s in seqs)
    ids = np.full((len(seqs), T), pad, dtype=np.int64)
    mask = np.zeros((len(seqs), T), dtype=bool)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = True
    return ids, mask


class TokenEncoder(Module):
    """Token + learned position embeddings into a transformer; CLS pooled."""

    def __init__(self, rng, vocab_size: int, max_len: int, d: int, n_layers: int, n_heads: int,
                 ffn_dim: int, positions: bool = True, group: ParamGroup | None = None, prefix: str = ""):
        super().__init__(group, prefix)
        self.max_len, self.d, self.positions = max_len, d, positions
        self.add_param("tok", embedding_table(rng, vocab_size, d))
        if positions:
            self.add_param("pos", embedding_table(rng, max_len + 1, d))
        self.encoder = TransformerEncoder(rng, d, n_layers, n_heads, ffn_dim, self.group, prefix + "enc.")

    def prepare(self, token_lists, cls_id: int) -> list[list[int]]:
        out = []
        for toks in token_lists:
            if len(toks) == 0:
                raise ValueError("cannot encode an empty token sequence")
            out.append([cls_id] + list(toks)[: self.max_len])
        return out

    def __call__(self, ids: np.ndarray, mask: np.ndarray, attn_out: list | None = None) -> Tensor:
        """ids already CLS-prefixed and padded; returns hidden states (B, T, d)."""
        x = nx.take(self.p("tok"), ids)
        if self.positions:
            x = x + nx.take(self.p("pos"), np.arange(ids.shape[1]))
        return self.encoder(x, mask, attn_out)
