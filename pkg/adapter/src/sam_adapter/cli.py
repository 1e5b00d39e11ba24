"""sam-adapter CLI: `infer` serves predictions for a manifest, `finetune`
updates the mask decoder. Flags mirror AdapterConfig."""

from __future__ import annotations

import argparse
import sys

from .config import AdapterConfig
from .errors import AdapterError
from .finetune import finetune_decoder
from .inference import run_inference


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sam-adapter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="write per-box probability maps for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="prediction directory")
    p.add_argument("--device", default="cpu")
    p.set_defaults(command="infer")

    p = sub.add_parser("finetune", help="fine-tune the mask decoder (encoders frozen)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--dataset", required=True, help="dataset root with <domain>/<stem>_gt.png")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--save", required=True, help="directory for the updated checkpoint")
    p.add_argument("--lr", type=float, default=0.0001)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--device", default="cpu")
    p.set_defaults(command="finetune")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "infer":
            cfg = AdapterConfig(
                checkpoint=args.checkpoint,
                mode="inference",
                output_dir=args.out,
                device=args.device,
            )
            written = run_inference(args.manifest, cfg)
            print(f"wrote {len(written)} prediction files to {args.out}")
        else:
            cfg = AdapterConfig(
                checkpoint=args.checkpoint,
                mode="finetune",
                learning_rate=args.lr,
                epochs=args.epochs,
                batch_size=args.batch_size,
                seed=args.seed,
                device=args.device,
            )
            history = finetune_decoder(args.manifest, args.dataset, cfg, save_dir=args.save)
            print(
                f"fine-tuned decoder for {cfg.epochs} epochs; "
                f"loss {history['loss'][0]:.4f} -> {history['loss'][-1]:.4f}"
            )
        return 0
    except (AdapterError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
