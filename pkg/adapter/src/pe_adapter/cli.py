"""pe-adapter: export classifier embeddings and probability caches.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""
from __future__ import annotations

import argparse
import sys

from .exporter import AdapterConfig, AlignmentError, export


def build_parser():
    parser = argparse.ArgumentParser(prog="pe-adapter", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="export one dataset through a model")
    p.add_argument("--model", required=True, help="local checkpoint path")
    p.add_argument("--data", required=True,
                   help="input JSONL with id, tokens, label")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--layer", type=int, default=-1,
                   help="hidden layer for embeddings (default: last)")
    p.add_argument("--strategy", choices=("del", "pad"), default="del")
    p.add_argument("--cache-masks",
                   choices=("singletons", "pairs", "file"),
                   default="singletons")
    p.add_argument("--masks-file", help="hex mask list for --cache-masks file")
    p.add_argument("--max-masks", type=int, default=4096)
    p.add_argument("--batch", type=int, default=32)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 1 if e.code not in (0, None) else 0
    try:
        cfg = AdapterConfig(model=args.model, data=args.data, out=args.out,
                            layer=args.layer, strategy=args.strategy,
                            cache_masks=args.cache_masks,
                            masks_file=args.masks_file,
                            max_masks=args.max_masks, batch_size=args.batch)
        records = export(cfg)
    except FileNotFoundError as e:
        print(f"error: missing file: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: I/O failure: {e}", file=sys.stderr)
        return 2
    except (AlignmentError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"exported {len(records)} examples to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
