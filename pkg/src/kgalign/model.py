"""The assembled detector: KGAlign entity encoder, GAT, text/image branches,
fusion and classifier, with one parameter group per component."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics as nx
from .encoder import EncoderConfig, KGAlignEncoder
from .fusion import Classifier, Fusion, FusionConfig
from .gat import GAT, GatConfig, GraphBatch
from .kg_store import KnowledgeGraph
from .modality import ImageConfig, ImageEncoder, ImageFeatures, TextConfig, TextEncoder
from .numerics import ParamGroup, Tensor
from .selection import INTERACTION, Subgraph

# groups held fixed during the first training phase
KNOWLEDGE_GROUPS = ("kg_encoder", "relations")


@dataclass
class ModelConfig:
    encoder: EncoderConfig
    text: TextConfig
    gat: GatConfig = field(default_factory=GatConfig)
    image: ImageConfig = field(default_factory=ImageConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    use_kg: bool = True

    def __post_init__(self):
        dims = {self.encoder.d, self.text.d, self.gat.d, self.image.d, self.fusion.d}
        if len(dims) != 1:
            raise ValueError(f"all components must share the model dim, got {sorted(dims)}")

    @property
    def d(self) -> int:
        return self.gat.d


@dataclass
class Example:
    """Model-ready inputs for one sample."""

    id: str
    tokens: list[int]
    subgraph: Subgraph
    image: ImageFeatures
    label: int


class Model:
    def __init__(self, cfg: ModelConfig, n_relation_ids: int, rng: np.random.Generator):
        self.cfg = cfg
        self.groups: dict[str, ParamGroup] = {name: ParamGroup() for name in
                                              ("kg_encoder", "relations", "gat", "text", "image",
                                               "fusion", "classifier")}
        self.kg = KGAlignEncoder(cfg.encoder, n_relation_ids, rng, self.groups["kg_encoder"],
                                 self.groups["relations"])
        self.gat = GAT(cfg.gat, rng, self.groups["gat"])
        self.text = TextEncoder(cfg.text, rng, self.groups["text"])
        self.image = ImageEncoder(cfg.image, rng, self.groups["image"])
        self.fusion = Fusion(cfg.fusion, rng, self.groups["fusion"])
        self.classifier = Classifier(cfg.d, rng, self.groups["classifier"])
        self._frozen_emb: np.ndarray | None = None

    # -- parameters ----------------------------------------------------------
    def state(self) -> dict[str, np.ndarray]:
        return {f"{g}.{k}": t.data.copy() for g, grp in self.groups.items() for k, t in grp.items()}

    def load_state(self, arrays: dict[str, np.ndarray], strict: bool = True) -> None:
        for g, grp in self.groups.items():
            for k, t in grp.items():
                key = f"{g}.{k}"
                if key not in arrays:
                    if strict:
                        raise KeyError(f"checkpoint lacks {key}")
                    continue
                if arrays[key].shape != t.shape:
                    raise ValueError(f"shape mismatch for {key}: {arrays[key].shape} vs {t.shape}")
                t.data = np.array(arrays[key], dtype=np.float64)
        self._frozen_emb = None

    def freeze_knowledge(self, frozen: bool) -> None:
        for name in KNOWLEDGE_GROUPS:
            self.groups[name].set_trainable(not frozen)
        self._frozen_emb = None

    @property
    def knowledge_frozen(self) -> bool:
        return not self.groups["kg_encoder"]["desc.tok"].requires_grad

    # -- forward -------------------------------------------------------------
    def entity_embeddings(self, g: KnowledgeGraph, ids: np.ndarray) -> Tensor:
        if self.knowledge_frozen:
            if self._frozen_emb is None:
                with nx.no_grad():
                    self._frozen_emb = self.kg.encode_entities(g).data
            return Tensor(self._frozen_emb[ids])
        return self.kg.encode_entities(g, ids)

    def forward(self, g: KnowledgeGraph, batch: list[Example], trace: bool = False):
        """Logits (B, 2) and, when ``trace`` is set, intermediate attention maps."""
        info: dict = {}
        t_txt, _ = self.text([ex.tokens for ex in batch], [ex.id for ex in batch])
        t_img, img_tokens, img_mask = self.image([ex.image for ex in batch])
        kg_ctx = kg_mask = None
        if self.cfg.use_kg:
            gb = GraphBatch([ex.subgraph for ex in batch], g.SELF)
            ent = gb.entity[gb.entity != INTERACTION]
            uniq = np.unique(ent)
            emb = self.entity_embeddings(g, uniq)
            local = gb.entity.copy()
            local[local != INTERACTION] = np.searchsorted(uniq, ent)
            gb.entity = local
            gat_attn: list | None = [] if trace else None
            states, t_kg = self.gat(gb, emb, self.kg.rel, gat_attn)
            if self.cfg.fusion.pooled_only:
                kg_ctx = nx.reshape(t_kg, (len(batch), 1, -1))
            else:
                idx, kg_mask = gb.padded_index()
                kg_ctx = nx.take(states, idx)
            if trace:
                info["gat_batch"] = gb
                info["gat_alpha"] = gat_attn
        if self.cfg.fusion.pooled_only:
            img_ctx, img_mask = nx.reshape(t_img, (len(batch), 1, -1)), None
        else:
            img_ctx = img_tokens
        fused, weights = self.fusion(t_txt, kg_ctx, kg_mask, img_ctx, img_mask)
        logits = self.classifier.logits(fused)
        if trace:
            info["fusion"] = {k: v.data for k, v in weights.items()}
        return logits, info
