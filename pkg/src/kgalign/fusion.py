"""Two-stage cross-modal attention (text over knowledge, then over image) and
the softmax classifier."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .layers import Module
from .numerics import ParamGroup, Tensor

REAL, FAKE = 0, 1


@dataclass
class FusionConfig:
    d: int = 16
    pooled_only: bool = False


class Fusion(Module):
    def __init__(self, cfg: FusionConfig, rng: np.random.Generator, group: ParamGroup | None = None):
        super().__init__(group)
        self.cfg = cfg
        for stage in ("kg", "img"):
            for name in ("q", "k", "v", "o"):
                self.add_linear(f"{stage}.{name}", rng, cfg.d, cfg.d)
            self.add_layer_norm(f"{stage}.ln", cfg.d)

    def cross_attend(self, stage: str, query: Tensor, ctx: Tensor, mask: np.ndarray | None = None):
        """Single-query attention of ``query`` (B, d) over ``ctx`` (B, M, d).

        Returns (LN(query + W_o · Σ α W_v ctx), α of shape (B, M)).
        """
        if ctx.shape[1] == 0:
            raise ValueError("cross-attention context is empty")
        B, M, d = ctx.shape
        q = self.linear(f"{stage}.q", query)
        k = self.linear(f"{stage}.k", ctx)
        v = self.linear(f"{stage}.v", ctx)
        scores = nx.scale(nx.reshape(nx.matmul(k, nx.reshape(q, (B, d, 1))), (B, M)), 1.0 / math.sqrt(d))
        alpha = nx.softmax(scores, axis=-1, mask=mask)
        att = nx.reshape(nx.matmul(nx.reshape(alpha, (B, 1, M)), v), (B, d))
        return self.layer_norm(f"{stage}.ln", query + self.linear(f"{stage}.o", att)), alpha

    def __call__(self, t_txt: Tensor, kg_ctx: Tensor | None, kg_mask, img_ctx: Tensor, img_mask):
        """T_fused and the two attention maps. ``kg_ctx=None`` skips stage 1."""
        weights = {}
        h = t_txt
        if kg_ctx is not None:
            h, weights["kg"] = self.cross_attend("kg", h, kg_ctx, kg_mask)
        fused, weights["img"] = self.cross_attend("img", h, img_ctx, img_mask)
        return fused, weights


def cross_attend(fusion: Fusion, stage: str, query: Tensor, context: list) -> Tensor:
    """Unbatched form: ``query`` (d,), ``context`` a list of (d,) vectors."""
    if not context:
        raise ValueError("cross-attention context is empty")
    ctx = nx.reshape(nx.stack([nx.as_tensor(c) for c in context]), (1, len(context), -1))
    out, _ = fusion.cross_attend(stage, nx.reshape(nx.as_tensor(query), (1, -1)), ctx)
    return out[0]


class Classifier(Module):
    """softmax(T_fused W + b) over (real, fake); W stored as (d, 2)."""

    def __init__(self, d: int, rng: np.random.Generator, group: ParamGroup | None = None):
        super().__init__(group)
        self.add_linear("out", rng, d, 2)

    def logits(self, t_fused: Tensor) -> Tensor:
        return self.linear("out", t_fused)

    def __call__(self, t_fused: Tensor) -> Tensor:
        return nx.softmax(self.logits(t_fused), axis=-1)


def ce_loss(logits: Tensor, labels) -> Tensor:
    """Mean -log p_label computed from logits."""
    logits = nx.as_tensor(logits)
    if logits.ndim == 1:
        logits = nx.reshape(logits, (1, -1))
    return nx.cross_entropy(logits, np.atleast_1d(labels))
