"""Full model against random selection and a text+image-only variant, 3 seeds.

    python3 demos/ablations.py
"""
import tempfile
from pathlib import Path

import numpy as np

from kgalign import pipeline as P
from kgalign.config import Config
from kgalign.synth import synth_generate

work = Path(tempfile.mkdtemp(prefix="kgalign-abl-"))
synth_generate(7, out_dir=work)

VARIANTS = {"full": {}, "random selection": {"select.mode": "random"}, "text+image": {"model.use_kg": False}}


def run(seed, overrides):
    cfg = Config.load(work / "config.txt")
    cfg["train.seed"] = seed
    for k, v in overrides.items():
        cfg[k] = v
    w = P.load_world(cfg)
    samples = P.load_dataset(cfg.path("data.train"), w.graph, w.vocab)
    sel = P.selection_config(cfg)
    tr, _ = P.prepare(P.filter_ids(samples, cfg.path("data.train_ids")), w.graph, w.scorer, sel, seed)
    te, _ = P.prepare(P.filter_ids(samples, cfg.path("data.test_ids")), w.graph, w.scorer, sel, seed)
    P.train(w.model, w.graph, tr, P.train_config(cfg))
    return P.evaluate(w.model, w.graph, te).accuracy


for name, overrides in VARIANTS.items():
    accs = [run(s, overrides) for s in range(3)]
    print(f"{name:17s} " + " ".join(f"{a:.3f}" for a in accs) + f"  mean {np.mean(accs):.3f}")
