"""Command line entry point: synth, pretrain-kg, train, eval, inspect.

Every command except ``synth`` reads ``--config FILE`` and accepts
``--key=value`` overrides for any config key.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import numerics as nx
from . import pipeline as P
from .config import DEFAULTS, Config, ConfigError
from .synth import synth_generate


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kgalign", description="Knowledge-guided multimodal fake news detector")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic world")
    s.add_argument("--seed", type=int, default=7)
    s.add_argument("--out", required=True)
    s.add_argument("--entities", type=int, default=50)
    s.add_argument("--relations", type=int, default=8)
    s.add_argument("--samples", type=int, default=500)

    for name, help_ in (("pretrain-kg", "pre-train the knowledge encoder"), ("train", "two-phase training"),
                        ("eval", "evaluate a checkpoint"), ("inspect", "trace one sample")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        if name in ("train", "eval"):
            p.add_argument("--ids", help="file of sample ids to use instead of the configured split")
        if name == "pretrain-kg":
            p.add_argument("--out", help="checkpoint path (default: kg.checkpoint)")
        if name == "inspect":
            p.add_argument("--sample", required=True)
    return ap


def _overrides(extra: list[str]) -> list[tuple[str, str]]:
    pairs = []
    for arg in extra:
        if not arg.startswith("--") or "=" not in arg:
            raise UsageError(f"unrecognized argument {arg!r}")
        k, v = arg[2:].split("=", 1)
        if k not in DEFAULTS:
            raise UsageError(f"unknown config key {k!r}")
        pairs.append((k, v))
    return pairs


def _config(args, extra) -> Config:
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    return Config.load(path).override(_overrides(extra))


def _samples(cfg: Config, world: P.World, split: str, ids=None):
    """Samples for ``split`` ("train" or "test"), honouring explicit id lists."""
    source = cfg.path("data.test") if split == "test" and cfg["data.test"] else cfg.path("data.train")
    samples = P.load_dataset(source, world.graph, world.vocab)
    ids = ids or cfg.path(f"data.{split}_ids")
    return P.filter_ids(samples, ids) if ids else samples


def _restore(cfg: Config, world: P.World) -> None:
    ckpt = cfg.path("train.checkpoint")
    if ckpt is None or not ckpt.exists():
        raise UsageError(f"checkpoint not found: {ckpt}")
    world.model.load_state(nx.load_arrays(ckpt))


def cmd_synth(args) -> None:
    synth_generate(args.seed, args.entities, args.relations, args.samples, args.out)
    print(f"wrote synthetic world (seed {args.seed}) to {args.out}")


def cmd_pretrain(cfg: Config, args) -> None:
    world = P.load_world(cfg, pretrain=False)
    steps = cfg["kg.pretrain_steps"]
    rows = P.pretrain_knowledge(world.model, world.graph, steps, cfg["train.seed"], cfg.path("kg.log"))
    out = Path(args.out) if args.out else cfg.path("kg.checkpoint") or cfg.base_dir / "kg.ckpt.json"
    nx.save_arrays(out, P.knowledge_state(world.model))
    last = rows[-1] if rows else None
    print(f"pretrained {steps} steps" + (f", final loss {last[3]:.4f}" if last else "") + f"; saved {out}")


def cmd_train(cfg: Config, args) -> None:
    world = P.load_world(cfg)
    sel = P.selection_config(cfg)
    train_ex, _ = P.prepare(_samples(cfg, world, "train", args.ids), world.graph, world.scorer, sel, cfg["train.seed"])
    eval_ex = None
    if cfg["data.test"] or cfg["data.test_ids"]:
        eval_ex, _ = P.prepare(_samples(cfg, world, "test"), world.graph, world.scorer, sel, cfg["train.seed"])
    P.train(world.model, world.graph, train_ex, P.train_config(cfg), eval_ex, cfg.path("train.log"))
    ckpt = cfg.path("train.checkpoint")
    nx.save_arrays(ckpt, world.model.state())
    print(f"trained on {len(train_ex)} samples; saved {ckpt}")
    if eval_ex:
        print(P.evaluate(world.model, world.graph, eval_ex).line())


def cmd_eval(cfg: Config, args) -> None:
    world = P.load_world(cfg, pretrain=False)
    _restore(cfg, world)
    examples, _ = P.prepare(_samples(cfg, world, "test", args.ids), world.graph, world.scorer,
                            P.selection_config(cfg), cfg["train.seed"])
    print(P.evaluate(world.model, world.graph, examples).line())


def cmd_inspect(cfg: Config, args) -> None:
    world = P.load_world(cfg, pretrain=False)
    _restore(cfg, world)
    samples = P.load_dataset(cfg.path("data.train"), world.graph, world.vocab)
    if cfg["data.test"]:
        samples += P.load_dataset(cfg.path("data.test"), world.graph, world.vocab)
    match = [s for s in samples if s.id == args.sample]
    if not match:
        raise UsageError(f"no sample with id {args.sample!r}")
    _, trace = P.forward_sample(world.model, world.graph, world.scorer, P.selection_config(cfg), match[0],
                                cfg["train.seed"])
    print(json.dumps(trace, indent=2))


COMMANDS = {"pretrain-kg": cmd_pretrain, "train": cmd_train, "eval": cmd_eval, "inspect": cmd_inspect}


def main(argv=None) -> int:
    ap = _parser()
    args, extra = ap.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "synth":
            if extra:
                raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
            cmd_synth(args)
        else:
            COMMANDS[args.command](_config(args, extra), args)
    except (UsageError, ConfigError) as exc:
        ap.print_usage(sys.stderr)
        print(f"kgalign: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(f"kgalign: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
