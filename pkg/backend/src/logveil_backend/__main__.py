"""Entry point: ``python -m logveil_backend train|serve``."""
from __future__ import annotations

import argparse
import sys

from .config import BridgeConfig
from .serve import backend_serve
from .train import BackendError, backend_train


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="logveil-backend")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fine-tune a checkpoint on an annotated corpus")
    p.add_argument("corpus", help="annotated .ann.tsv file")
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=("coarse", "net"))
    p.add_argument("--base", default=BridgeConfig.base_checkpoint)
    p.add_argument("--learning-rate", type=float, default=BridgeConfig.learning_rate)
    p.add_argument("--weight-decay", type=float, default=BridgeConfig.weight_decay)
    p.add_argument("--epochs", type=int, default=BridgeConfig.epochs)
    p.add_argument("--eval-every", type=int, default=BridgeConfig.eval_every)
    p.add_argument("--batch-size", type=int, default=BridgeConfig.batch_size)
    p.add_argument("--seed", type=int, default=BridgeConfig.seed)

    p = sub.add_parser("serve", help="speak bridge protocol v1 on stdio")
    p.add_argument("--checkpoint", required=True)

    args = ap.parse_args(argv)
    try:
        if args.command == "train":
            cfg = BridgeConfig(
                base_checkpoint=args.base,
                learning_rate=args.learning_rate,
                weight_decay=args.weight_decay,
                epochs=args.epochs,
                eval_every=args.eval_every,
                batch_size=args.batch_size,
                seed=args.seed,
            )
            out = backend_train(args.corpus, cfg, args.out, mode=args.mode)
            print(f"checkpoint written to {out}", file=sys.stderr)
            return 0
        return backend_serve(args.checkpoint)
    except BackendError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
