"""Command-line interface: `train` fits a generator on an exported CSI trace,
`generate` emits a spoofed-CSI trace file from a saved model."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .train import (GanConfig, GanError, TrainingDiverged, generate_trace,
                    load_model, save_model, train_gan)
from .traceio import TraceError


def _cmd_train(args) -> int:
    kwargs = {}
    if args.config:
        kwargs = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.dataset:
        kwargs["dataset_path"] = args.dataset
    if args.epochs:
        kwargs["epochs"] = args.epochs
    if args.seed is not None:
        kwargs["seed"] = args.seed
    config = GanConfig(**kwargs)
    trained, log = train_gan(config)
    out = Path(args.model)
    save_model(trained, out)
    log_path = out.with_suffix(".log.jsonl")
    with log_path.open("w", encoding="utf-8") as fh:
        for entry in log:
            fh.write(json.dumps(entry) + "\n")
    last = log[-1]
    print(f"trained {config.epochs} epochs: disc holdout acc "
          f"{last['disc_holdout_accuracy']:.3f}, gen loss {last['gen_loss']:.3f} "
          f"-> {out} (log: {log_path})")
    return 0


def _cmd_generate(args) -> int:
    trained = load_model(args.model)
    path = generate_trace(trained, args.n, args.out, seed=args.seed or 0)
    print(f"wrote {args.n} spoofed records -> {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ganspoof", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a generator on a CSI trace")
    p_train.add_argument("--config", help="JSON file of GanConfig fields")
    p_train.add_argument("--dataset", help="input CSI trace path")
    p_train.add_argument("--epochs", type=int, default=None)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--model", required=True, help="output model path (.pt)")
    p_train.set_defaults(func=_cmd_train)

    p_gen = sub.add_parser("generate", help="emit a spoofed-CSI trace")
    p_gen.add_argument("--model", required=True)
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.set_defaults(func=_cmd_generate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3
    except (GanError, TraceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
