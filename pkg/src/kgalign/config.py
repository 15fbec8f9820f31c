"""Flat ``key = value`` configuration with typed defaults.

Lines starting with ``#`` are comments. Every key must be one of
:data:`DEFAULTS`; values are coerced to the default's type. Training
defaults follow the published full-scale schedule; desk-scale presets
(see ``synth``) override them.
"""
from __future__ import annotations

from pathlib import Path

DEFAULTS: dict[str, object] = {
    # input files (paths relative to the config file)
    "data.triples": "triples.tsv",
    "data.descriptions": "descriptions.tsv",
    "data.vocab": "vocab.txt",
    "data.nli": "nli_fixture.tsv",
    "data.train": "dataset.jsonl",
    "data.test": "",
    "data.train_ids": "",
    "data.test_ids": "",
    # shared width
    "model.d": 16,
    "model.use_kg": True,
    # KGAlign encoder and its pre-training
    "kg.layers": 1,
    "kg.heads": 2,
    "kg.ffn_dim": 32,
    "kg.max_len": 16,
    "kg.mask_prob": 0.15,
    "kg.margin": 1.0,
    "kg.mlm_weight": 1.0,
    "kg.kg_weight": 1.0,
    "kg.lr": 5e-3,
    "kg.pretrain_steps": 200,
    "kg.batch_triples": 0,
    "kg.batch_entities": 0,
    "kg.checkpoint": "",
    "kg.log": "",
    # neighbour selection
    "select.hop_k": 2,
    "select.top_k": 8,
    "select.min_shared_seeds": 2,
    "select.nli_threshold": 0.5,
    "select.mode": "nli",
    "select.scorer": "table",
    # GAT
    "gat.layers": 2,
    "gat.qk_dim": 8,
    "gat.hidden": 32,
    # text branch
    "text.layers": 1,
    "text.heads": 2,
    "text.ffn_dim": 32,
    "text.max_len": 32,
    "text.provider": "toy",
    "text.precomputed": "",
    # image branch
    "image.d_c": 8,
    "image.d_o": 8,
    "image.layers": 1,
    "image.heads": 2,
    "image.ffn_dim": 32,
    "image.positions": "cls",
    # fusion
    "fusion.pooled_only": False,
    # training
    "train.seed": 0,
    "train.batch_size": 64,
    "train.phase1_epochs": 30,
    "train.phase2_epochs": 20,
    "train.base_lr": 5e-4,
    "train.lr_decay": 0.1,
    "train.lr_period": 3,
    "train.phase2_lr": 1e-6,
    "train.checkpoint": "model.ckpt.json",
    "train.log": "train_log.csv",
}

PATH_KEYS = {k for k in DEFAULTS if k.startswith("data.")} | {
    "kg.checkpoint", "kg.log", "text.precomputed", "train.checkpoint", "train.log"}


class ConfigError(ValueError):
    pass


def _coerce(key: str, raw):
    default = DEFAULTS[key]
    if isinstance(raw, type(default)) and not (isinstance(default, int) and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return text


class Config:
    def __init__(self, values: dict | None = None, base_dir: Path | str = "."):
        self.base_dir = Path(base_dir)
        self.values = dict(DEFAULTS)
        for k, v in (values or {}).items():
            self[k] = v

    @classmethod
    def load(cls, path) -> "Config":
        path = Path(path)
        values = {}
        for lineno, line in enumerate(path.read_text().splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            k, v = (s.strip() for s in line.split("=", 1))
            if k not in DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown key {k!r}")
            values[k] = v
        return cls(values, path.parent)

    def __getitem__(self, key):
        return self.values[key]

    def __setitem__(self, key, value):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, value)

    def path(self, key) -> Path | None:
        v = self.values[key]
        if not v:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    def override(self, pairs) -> "Config":
        for k, v in pairs:
            self[k] = v
        return self

    def dump(self, path, keys=None) -> None:
        keys = keys or list(DEFAULTS)
        lines = [f"{k} = {self._fmt(self.values[k])}" for k in keys]
        Path(path).write_text("\n".join(lines) + "\n")

    @staticmethod
    def _fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        return repr(v) if isinstance(v, float) else str(v)
