"""Dataset ingestion, two-phase training, evaluation and per-sample tracing."""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import numerics as nx
from .config import Config
from .encoder import EncoderConfig, train_encoder, write_loss_log
from .fusion import FAKE, REAL, FusionConfig, ce_loss
from .gat import GatConfig
from .kg_store import KnowledgeGraph, Vocab, load_graph
from .modality import ImageConfig, TextConfig, load_image_features
from .model import KNOWLEDGE_GROUPS, Example, Model, ModelConfig
from .numerics import adam_step, lr_schedule
from .selection import (INTERACTION, LexicalNliScorer, SelectionConfig, SelectionError,
                        TableNliScorer, select_and_build)

log = logging.getLogger(__name__)

LABELS = {"real": REAL, "fake": FAKE}
LABEL_NAMES = {v: k for k, v in LABELS.items()}


class DatasetError(ValueError):
    pass


@dataclass
class Sample:
    id: str
    text: str
    tokens: list[int]
    entities: list[int]
    image_features: str
    label: int

    def to_json(self, g: KnowledgeGraph, base_dir: Path | None = None) -> dict:
        path = self.image_features
        if base_dir is not None:
            try:
                path = str(Path(path).relative_to(base_dir))
            except ValueError:
                pass
        return {"id": self.id, "text": self.text, "entities": [g.entities[e].label for e in self.entities],
                "image_features": path, "label": LABEL_NAMES[self.label]}


def load_dataset(path, g: KnowledgeGraph, vocab: Vocab) -> list[Sample]:
    """Line-delimited JSON samples. Samples naming entities that are not in
    the graph (or none at all) are dropped with a warning."""
    path = Path(path)
    samples = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:{lineno}: malformed JSON: {exc.msg}") from None
        try:
            sid, text, labels = str(obj["id"]), obj["text"], obj["entities"]
            feat, label = obj["image_features"], obj["label"]
        except (KeyError, TypeError) as exc:
            raise DatasetError(f"{path}:{lineno}: missing field {exc}") from None
        if label not in LABELS:
            raise DatasetError(f"{path}:{lineno}: label must be 'real' or 'fake', got {label!r}")
        unknown = [lab for lab in labels if lab not in g.entity_index]
        if unknown or not labels:
            log.warning("dropping sample %s: no knowledge-graph entry for %s", sid, unknown or "any entity")
            continue
        tokens = vocab.encode(text)
        if not tokens:
            raise DatasetError(f"{path}:{lineno}: sample {sid} has empty text")
        feat_path = Path(feat)
        if not feat_path.is_absolute():
            feat_path = path.parent / feat_path
        samples.append(Sample(sid, text, tokens, [g.entity_index[lab] for lab in labels],
                              str(feat_path), LABELS[label]))
    return samples


def save_dataset(path, samples: list[Sample], g: KnowledgeGraph) -> None:
    base = Path(path).parent
    lines = [json.dumps(s.to_json(g, base)) for s in samples]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def filter_ids(samples: list[Sample], ids_path) -> list[Sample]:
    """Keep samples listed (one id per line) in ``ids_path``, in file order."""
    wanted = [ln.strip() for ln in Path(ids_path).read_text().splitlines() if ln.strip()]
    by_id = {s.id: s for s in samples}
    return [by_id[i] for i in wanted if i in by_id]


def prepare(samples: list[Sample], g: KnowledgeGraph, scorer, sel: SelectionConfig, seed: int = 0):
    """Selection + subgraph + image features per sample.

    Returns (examples, selections); samples whose NLI scoring fails are skipped.
    """
    examples, selections = [], []
    for i, s in enumerate(samples):
        rng = np.random.default_rng([seed, i])
        try:
            chosen = select_and_build(g, s.text, s.entities, scorer, sel, rng)
        except SelectionError as exc:
            log.warning("skipping sample %s: %s", s.id, exc)
            continue
        feats = load_image_features(s.image_features, s.id)
        examples.append(Example(s.id, s.tokens, chosen.subgraph, feats, s.label))
        selections.append(chosen)
    return examples, selections


# -- metrics ----------------------------------------------------------------
@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int

    def line(self) -> str:
        return (f"acc={self.accuracy:.4f} prec={self.precision:.4f} rec={self.recall:.4f} "
                f"f1={self.f1:.4f} tp={self.tp} fp={self.fp} fn={self.fn} tn={self.tn}")


def metrics_from_confusion(tp: int, fp: int, fn: int, tn: int) -> Metrics:
    """Binary metrics with fake as the positive class; 0/0 is taken as 0."""
    total = tp + fp + fn + tn
    acc = (tp + tn) / total if total else 0.0
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return Metrics(acc, prec, rec, f1, tp, fp, fn, tn)


def metrics_from_predictions(labels, preds) -> Metrics:
    labels, preds = np.asarray(labels), np.asarray(preds)
    tp = int(np.sum((preds == FAKE) & (labels == FAKE)))
    fp = int(np.sum((preds == FAKE) & (labels == REAL)))
    fn = int(np.sum((preds == REAL) & (labels == FAKE)))
    tn = int(np.sum((preds == REAL) & (labels == REAL)))
    return metrics_from_confusion(tp, fp, fn, tn)


# -- model assembly -----------------------------------------------------------
@dataclass
class TrainConfig:
    seed: int = 0
    batch_size: int = 64
    phase1_epochs: int = 30
    phase2_epochs: int = 20
    base_lr: float = 5e-4
    lr_decay: float = 0.1
    lr_period: int = 3
    phase2_lr: float = 1e-6

    def __post_init__(self):
        if self.phase1_epochs < 0 or self.phase2_epochs < 0:
            raise ValueError("phase epochs must be >= 0")


def model_config(cfg: Config, vocab_size: int) -> ModelConfig:
    d = cfg["model.d"]
    enc = EncoderConfig(vocab_size=vocab_size, d=d, layers=cfg["kg.layers"], heads=cfg["kg.heads"],
                        ffn_dim=cfg["kg.ffn_dim"], max_len=cfg["kg.max_len"], mask_prob=cfg["kg.mask_prob"],
                        margin=cfg["kg.margin"], mlm_weight=cfg["kg.mlm_weight"], kg_weight=cfg["kg.kg_weight"],
                        lr=cfg["kg.lr"], batch_triples=cfg["kg.batch_triples"],
                        batch_entities=cfg["kg.batch_entities"])
    pre = cfg.path("text.precomputed")
    text = TextConfig(vocab_size=vocab_size, d=d, layers=cfg["text.layers"], heads=cfg["text.heads"],
                      ffn_dim=cfg["text.ffn_dim"], max_len=cfg["text.max_len"], provider=cfg["text.provider"],
                      precomputed_path=str(pre) if pre else "")
    return ModelConfig(
        encoder=enc, text=text,
        gat=GatConfig(layers=cfg["gat.layers"], d=d, qk_dim=cfg["gat.qk_dim"], hidden=cfg["gat.hidden"]),
        image=ImageConfig(d=d, d_c=cfg["image.d_c"], d_o=cfg["image.d_o"], layers=cfg["image.layers"],
                          heads=cfg["image.heads"], ffn_dim=cfg["image.ffn_dim"], positions=cfg["image.positions"]),
        fusion=FusionConfig(d=d, pooled_only=cfg["fusion.pooled_only"]),
        use_kg=cfg["model.use_kg"],
    )


def selection_config(cfg: Config) -> SelectionConfig:
    return SelectionConfig(hop_k=cfg["select.hop_k"], top_k=cfg["select.top_k"],
                           min_shared_seeds=cfg["select.min_shared_seeds"],
                           nli_threshold=cfg["select.nli_threshold"], mode=cfg["select.mode"])


def train_config(cfg: Config) -> TrainConfig:
    return TrainConfig(seed=cfg["train.seed"], batch_size=cfg["train.batch_size"],
                       phase1_epochs=cfg["train.phase1_epochs"], phase2_epochs=cfg["train.phase2_epochs"],
                       base_lr=cfg["train.base_lr"], lr_decay=cfg["train.lr_decay"],
                       lr_period=cfg["train.lr_period"], phase2_lr=cfg["train.phase2_lr"])


def make_scorer(cfg: Config):
    kind = cfg["select.scorer"]
    if kind == "table":
        return TableNliScorer.load(cfg.path("data.nli"))
    if kind == "lexical":
        return LexicalNliScorer()
    raise ValueError(f"unknown NLI scorer {kind!r}")


@dataclass
class World:
    """Everything loaded from a config: graph, vocab, scorer, model."""

    config: Config
    graph: KnowledgeGraph
    vocab: Vocab
    scorer: object
    model: Model


def load_world(cfg: Config, pretrain: bool = True) -> World:
    """Load inputs and build a model seeded from ``train.seed``.

    The knowledge encoder comes from ``kg.checkpoint`` when set, otherwise it
    is pre-trained for ``kg.pretrain_steps`` steps (if ``pretrain``).
    """
    vocab = Vocab.load(cfg.path("data.vocab"))
    g = load_graph(cfg.path("data.triples"), cfg.path("data.descriptions"), vocab)
    scorer = make_scorer(cfg) if cfg["select.mode"] == "nli" else LexicalNliScorer()
    mcfg = model_config(cfg, len(vocab))
    model = Model(mcfg, g.n_relation_ids, np.random.default_rng(cfg["train.seed"]))
    ckpt = cfg.path("kg.checkpoint")
    if ckpt is not None and ckpt.exists():
        arrays = nx.load_arrays(ckpt)
        model.load_state({k: v for k, v in arrays.items() if k.split(".", 1)[0] in KNOWLEDGE_GROUPS}, strict=False)
    elif pretrain and cfg["kg.pretrain_steps"] > 0:
        pretrain_knowledge(model, g, cfg["kg.pretrain_steps"], cfg["train.seed"], cfg.path("kg.log"))
    return World(cfg, g, vocab, scorer, model)


def pretrain_knowledge(model: Model, g: KnowledgeGraph, steps: int, seed: int, log_path=None):
    _, rows = train_encoder(g, model.cfg.encoder, steps, seed, encoder=model.kg)
    if log_path is not None:
        write_loss_log(log_path, rows)
    return rows


def knowledge_state(model: Model) -> dict[str, np.ndarray]:
    return {k: v for k, v in model.state().items() if k.split(".", 1)[0] in KNOWLEDGE_GROUPS}


# -- forward / train / evaluate ---------------------------------------------
def predict_proba(model: Model, g: KnowledgeGraph, examples: list[Example], batch_size: int = 64) -> np.ndarray:
    out = []
    with nx.no_grad():
        for start in range(0, len(examples), batch_size):
            logits, _ = model.forward(g, examples[start: start + batch_size])
            out.append(nx.softmax(logits, axis=-1).data)
    return np.concatenate(out) if out else np.zeros((0, 2))


def evaluate(model: Model, g: KnowledgeGraph, examples: list[Example]) -> Metrics:
    """Threshold 0.5 on p_fake."""
    if not examples:
        raise ValueError("cannot evaluate an empty dataset")
    probs = predict_proba(model, g, examples)
    preds = (probs[:, FAKE] > 0.5).astype(int)
    return metrics_from_predictions([ex.label for ex in examples], preds)


def train(model: Model, g: KnowledgeGraph, examples: list[Example], cfg: TrainConfig,
          eval_examples: list[Example] | None = None, log_path=None) -> list[dict]:
    """Two-phase training: phase 1 holds the knowledge encoder and relation
    table fixed under the step-decay schedule, phase 2 trains everything at
    ``phase2_lr``. Returns one log row per epoch."""
    if not examples:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    rows = []
    epoch = 0
    for phase, n_epochs in ((1, cfg.phase1_epochs), (2, cfg.phase2_epochs)):
        frozen = phase == 1
        model.freeze_knowledge(frozen)
        for ep in range(n_epochs):
            lr = lr_schedule(cfg.base_lr, ep, cfg.lr_decay, cfg.lr_period) if frozen else cfg.phase2_lr
            order = rng.permutation(len(examples))
            total = 0.0
            for start in range(0, len(examples), cfg.batch_size):
                batch = [examples[i] for i in order[start: start + cfg.batch_size]]
                for grp in model.groups.values():
                    grp.zero_grad()
                logits, _ = model.forward(g, batch)
                loss = ce_loss(logits, [ex.label for ex in batch])
                loss.backward()
                for name, grp in model.groups.items():
                    if frozen and name in KNOWLEDGE_GROUPS:
                        continue
                    adam_step(grp, grp.grads(), lr)
                total += loss.item() * len(batch)
            row = {"epoch": epoch, "phase": phase, "lr": lr, "train_loss": total / len(examples),
                   "eval_acc": "", "eval_f1": ""}
            if eval_examples:
                m = evaluate(model, g, eval_examples)
                row["eval_acc"], row["eval_f1"] = m.accuracy, m.f1
            log.info("epoch %d phase %d lr %.2e loss %.4f acc %s", epoch, phase, lr, row["train_loss"], row["eval_acc"])
            rows.append(row)
            epoch += 1
    model.freeze_knowledge(False)
    if log_path is not None:
        write_epoch_log(log_path, rows)
    return rows


def write_epoch_log(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "phase", "lr", "train_loss", "eval_acc", "eval_f1"])
        for r in rows:
            w.writerow([r["epoch"], r["phase"], repr(r["lr"]), repr(r["train_loss"]),
                        repr(r["eval_acc"]) if r["eval_acc"] != "" else "",
                        repr(r["eval_f1"]) if r["eval_f1"] != "" else ""])


def forward_sample(model: Model, g: KnowledgeGraph, scorer, sel: SelectionConfig, sample: Sample, seed: int = 0):
    """Probabilities (p_real, p_fake) for one sample plus a JSON-able trace of
    the selection, GAT attention per layer and both fusion attention maps."""
    try:
        chosen = select_and_build(g, sample.text, sample.entities, scorer, sel, np.random.default_rng([seed, 0]))
        ex = Example(sample.id, sample.tokens, chosen.subgraph,
                     load_image_features(sample.image_features, sample.id), sample.label)
        with nx.no_grad():
            logits, info = model.forward(g, [ex], trace=True)
    except Exception as exc:
        raise type(exc)(f"sample {sample.id}: {exc}") from exc
    probs = nx.softmax(logits, axis=-1).data[0]
    sg = chosen.subgraph
    trace = {
        "sample": sample.id,
        "probabilities": {"real": float(probs[REAL]), "fake": float(probs[FAKE])},
        "candidates": [g.entities[e].label for e, _ in chosen.candidates],
        "selected": [g.entities[e].label for e in chosen.selected],
        "kept": [g.entities[e].label for e in chosen.kept],
        "subgraph": sg.to_json(g, chosen.nli_scores),
    }
    if "gat_alpha" in info:
        gb = info["gat_batch"]
        layers = []
        for alpha in info["gat_alpha"]:
            mat = np.zeros((sg.n_nodes, sg.n_nodes))
            np.add.at(mat, (gb.dst, gb.src), alpha)  # rows: destination j, columns: source s
            layers.append(mat.tolist())
        trace["gat_attention"] = layers
        trace["fusion_kg_attention"] = info["fusion"]["kg"][0].tolist()
    trace["fusion_image_attention"] = info["fusion"]["img"][0].tolist()
    return probs, trace


__all__ = [
    "Sample", "DatasetError", "load_dataset", "save_dataset", "filter_ids", "prepare", "Metrics",
    "metrics_from_confusion", "metrics_from_predictions", "TrainConfig", "model_config",
    "selection_config", "train_config", "make_scorer", "World", "load_world", "pretrain_knowledge",
    "knowledge_state", "predict_proba", "evaluate", "train", "forward_sample", "INTERACTION", "asdict",
]
