"""``reve`` command line: train, evaluate, export-density, verify.

Errors print one JSON line on stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reve", description="REVE regularized training on desk-scale data")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model and write metrics + checkpoint")
    t.add_argument("--config", type=Path, help="YAML run configuration")
    t.add_argument("--seed", type=int)
    t.add_argument("--beta", type=float)
    t.add_argument("--sigma2", type=float)
    t.add_argument("--s-samples", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--q-model", choices=["bimodal", "single_gaussian"])
    t.add_argument("--data", help="data spec, e.g. blobs:nuisance=30 or idx:images=PATH,labels=PATH")
    t.add_argument("--out", help="output directory")

    e = sub.add_parser("evaluate", help="test error of a checkpoint")
    e.add_argument("--checkpoint", type=Path, required=True)
    e.add_argument("--data", help="data spec; defaults to the run's own test split")

    d = sub.add_parser("export-density", help="KDE of coordinates of Y and Z")
    d.add_argument("--checkpoint", type=Path, required=True)
    d.add_argument("--coords", default="0,1,2,3,4")
    d.add_argument("--data", help="data spec; defaults to the run's training split")
    d.add_argument("--split", choices=["train", "test"], default="train")
    d.add_argument("--out", type=Path, help="output file (default: density.txt next to the checkpoint)")

    v = sub.add_parser("verify", help="run the information-theory and gradient verification suites")
    v.add_argument("--trials", type=int, help="override randomized trial counts")
    return p


def build_config(args) -> cfgmod.RunConfig:
    cfg = cfgmod.load(args.config) if args.config else cfgmod.RunConfig()
    if args.data:
        cfg = replace(cfg, data=cfgmod.parse_data_spec(args.data, cfg.data))
    return cfg.with_overrides(**{
        "seed": args.seed,
        "epochs": args.epochs,
        "out_dir": args.out,
        "reve.beta": args.beta,
        "reve.sigma2": args.sigma2,
        "reve.S": args.s_samples,
        "reve.q_model": args.q_model,
    })


def _cmd_train(args) -> int:
    from .runner import train
    cfg = build_config(args)
    res = train(cfg)
    last = res.metrics[-1] if res.metrics else None
    print(json.dumps({"out_dir": str(cfg.out_dir), "checkpoint": str(res.checkpoint_path),
                      "test_error": None if last is None else last.test_error,
                      "omega": None if last is None else last.omega}))
    return 0


def _cmd_evaluate(args) -> int:
    from .runner import evaluate, load_checkpoint
    data = None
    if args.data:
        base = load_checkpoint(args.checkpoint).config.data
        data = cfgmod.parse_data_spec(args.data, base)
    print(json.dumps({"checkpoint": str(args.checkpoint), "test_error": evaluate(args.checkpoint, data)}))
    return 0


def _cmd_export_density(args) -> int:
    from .runner import export_density, load_checkpoint
    coords = [int(c) for c in args.coords.split(",") if c.strip()]
    out = args.out or args.checkpoint.with_name("density.txt")
    data = None
    if args.data:
        data = cfgmod.parse_data_spec(args.data, load_checkpoint(args.checkpoint).config.data)
    cols = export_density(args.checkpoint, out, coords, data, args.split)
    print(json.dumps({"density_file": str(out), "columns": list(cols)}))
    return 0


def _cmd_verify(args) -> int:
    from .verify import all_suites
    results = all_suites(args.trials)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


COMMANDS = {
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "export-density": _cmd_export_density,
    "verify": _cmd_verify,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # noqa: BLE001
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
