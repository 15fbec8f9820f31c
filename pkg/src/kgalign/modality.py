"""Text and image branches.

The text branch is a small transformer pooled at CLS, or precomputed vectors
read from disk. The image branch projects a global CLIP vector plus up to 36
region features into the model dimension and runs them through a transformer
whose slot 0 is read out.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import numerics as nx
from .kg_store import CLS
from .layers import Module, TokenEncoder, TransformerEncoder, pad_sequences
from .numerics import ParamGroup, Tensor
from .numerics.init import embedding_table

MAX_OBJECTS = 36


class FeatureFileError(ValueError):
    pass


@dataclass
class ImageFeatures:
    clip_cls: np.ndarray  # (d_c,)
    objects: np.ndarray  # (K, d_o)
    conf: float = 0.2
    iou: float = 0.7

    def __post_init__(self):
        self.clip_cls = np.asarray(self.clip_cls, dtype=np.float64)
        self.objects = np.atleast_2d(np.asarray(self.objects, dtype=np.float64))
        if not 1 <= len(self.objects) <= MAX_OBJECTS:
            raise FeatureFileError(f"need 1..{MAX_OBJECTS} object regions, got {len(self.objects)}")
        if not (np.isfinite(self.clip_cls).all() and np.isfinite(self.objects).all()):
            raise FeatureFileError("non-finite image feature")

    @property
    def k(self) -> int:
        return len(self.objects)


def save_image_features(path, feats: ImageFeatures) -> None:
    d_c, d_o = feats.clip_cls.size, feats.objects.shape[1]
    lines = [f"d_c={d_c},d_o={d_o},conf={feats.conf!r},iou={feats.iou!r}",
             ",".join(repr(float(v)) for v in feats.clip_cls)]
    lines += [",".join(repr(float(v)) for v in row) for row in feats.objects]
    Path(path).write_text("\n".join(lines) + "\n")


def load_image_features(path, sample_id: str = "?") -> ImageFeatures:
    try:
        lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    except OSError as exc:
        raise FeatureFileError(f"sample {sample_id}: cannot read {path}: {exc}") from exc
    if len(lines) < 3:
        raise FeatureFileError(f"sample {sample_id}: feature file needs header, CLS row and >=1 object row")
    try:
        header = dict(kv.split("=", 1) for kv in lines[0].split(","))
        d_c, d_o = int(header["d_c"]), int(header["d_o"])
        conf, iou = float(header.get("conf", 0.2)), float(header.get("iou", 0.7))
        rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    except (KeyError, ValueError) as exc:
        raise FeatureFileError(f"sample {sample_id}: malformed feature file {path}: {exc}") from exc
    if len(rows[0]) != d_c:
        raise FeatureFileError(f"sample {sample_id}: CLS row has {len(rows[0])} values, header says d_c={d_c}")
    for i, r in enumerate(rows[1:], 1):
        if len(r) != d_o:
            raise FeatureFileError(f"sample {sample_id}: object row {i} has {len(r)} values, header says d_o={d_o}")
    if len(rows) - 1 > MAX_OBJECTS:
        raise FeatureFileError(f"sample {sample_id}: {len(rows) - 1} object rows exceed the limit of {MAX_OBJECTS}")
    return ImageFeatures(np.array(rows[0]), np.array(rows[1:]), conf, iou)


@dataclass
class ImageConfig:
    d: int = 16
    d_c: int = 8
    d_o: int = 8
    layers: int = 1
    heads: int = 2
    ffn_dim: int = 32
    # cls: learned position on slot 0 only; all: every slot; none: no positions
    positions: str = "cls"

    def __post_init__(self):
        if self.positions not in ("cls", "all", "none"):
            raise ValueError(f"unknown image position mode {self.positions!r}")


class ImageEncoder(Module):
    def __init__(self, cfg: ImageConfig, rng: np.random.Generator, group: ParamGroup | None = None):
        super().__init__(group)
        self.cfg = cfg
        self.add_linear("clip", rng, cfg.d_c, cfg.d)
        self.add_linear("obj", rng, cfg.d_o, cfg.d)
        if cfg.positions != "none":
            self.add_param("pos", embedding_table(rng, MAX_OBJECTS + 1, cfg.d))
        self.encoder = TransformerEncoder(rng, cfg.d, cfg.layers, cfg.heads, cfg.ffn_dim, self.group, "enc.")

    def project(self, feats: list[ImageFeatures]) -> tuple[Tensor, np.ndarray]:
        """[I'_CLS, I'_1..I'_K] per sample, zero-padded to (B, K_max+1, d)."""
        for f in feats:
            if f.clip_cls.size != self.cfg.d_c or f.objects.shape[1] != self.cfg.d_o:
                raise FeatureFileError(
                    f"feature dims ({f.clip_cls.size}, {f.objects.shape[1]}) do not match "
                    f"projection ({self.cfg.d_c}, {self.cfg.d_o})")
        B, K = len(feats), max(f.k for f in feats)
        clip = self.linear("clip", Tensor(np.stack([f.clip_cls for f in feats])))
        objs = np.zeros((B, K, self.cfg.d_o))
        mask = np.zeros((B, K + 1), dtype=bool)
        mask[:, 0] = True
        for b, f in enumerate(feats):
            objs[b, : f.k] = f.objects
            mask[b, 1: f.k + 1] = True
        obj = self.linear("obj", Tensor(objs))
        seq = nx.concat([nx.reshape(clip, (B, 1, -1)), obj], axis=1)
        return seq, mask

    def __call__(self, feats: list[ImageFeatures], attn_out: list | None = None):
        """Returns (T_img (B, d), all output tokens (B, K+1, d), mask)."""
        seq, mask = self.project(feats)
        T = seq.shape[1]
        if self.cfg.positions == "cls":
            sel = np.zeros((T, 1))
            sel[0] = 1.0
            seq = seq + nx.take(self.p("pos"), np.zeros(T, dtype=np.int64)) * sel
        elif self.cfg.positions == "all":
            seq = seq + nx.take(self.p("pos"), np.arange(T))
        out = self.encoder(seq, mask, attn_out)
        return out[:, 0, :], out, mask


def project_image(enc: ImageEncoder, feats: ImageFeatures) -> Tensor:
    seq, _ = enc.project([feats])
    return seq[0]


@dataclass
class TextConfig:
    vocab_size: int
    d: int = 16
    layers: int = 1
    heads: int = 2
    ffn_dim: int = 32
    max_len: int = 32
    provider: str = "toy"  # toy | precomputed
    precomputed_path: str = ""

    def __post_init__(self):
        if self.provider not in ("toy", "precomputed"):
            raise ValueError(f"unknown text provider {self.provider!r}")


class TextEncoder(Module):
    def __init__(self, cfg: TextConfig, rng: np.random.Generator, group: ParamGroup | None = None):
        super().__init__(group)
        self.cfg = cfg
        self.tokens = TokenEncoder(rng, cfg.vocab_size, cfg.max_len, cfg.d, cfg.layers, cfg.heads,
                                   cfg.ffn_dim, group=self.group, prefix="txt.")
        self.vectors: dict[str, np.ndarray] = {}
        if cfg.provider == "precomputed":
            self.vectors = load_text_vectors(cfg.precomputed_path, cfg.d)

    def __call__(self, token_lists, sample_ids=None, attn_out: list | None = None):
        """Returns (T_txt (B, d), token states (B, T, d) or None)."""
        if self.cfg.provider == "precomputed":
            try:
                vecs = np.stack([self.vectors[s] for s in sample_ids])
            except KeyError as exc:
                raise KeyError(f"no precomputed text vector for sample {exc.args[0]!r}") from None
            return Tensor(vecs), None
        ids, mask = pad_sequences(self.tokens.prepare(token_lists, CLS))
        hidden = self.tokens(ids, mask, attn_out)
        return hidden[:, 0, :], hidden


def load_text_vectors(path, d: int) -> dict[str, np.ndarray]:
    out = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row:
                continue
            if len(row) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected sample id plus {d} values")
            out[row[0]] = np.array([float(x) for x in row[1:]])
    return out
