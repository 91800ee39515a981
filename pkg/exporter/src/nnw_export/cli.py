"""Command-line entry points: export-model and export-dataset."""
from __future__ import annotations

import argparse
import json
import sys

from .convert import ExportError, export_dataset, export_model


def main_model(argv=None) -> None:
    parser = argparse.ArgumentParser(
        prog="export-model",
        description="Convert a fully-connected ReLU checkpoint to an NNW1 file.",
    )
    parser.add_argument("checkpoint", help="torch checkpoint holding the module (trusted input)")
    parser.add_argument("out", help="output .nnw1 path")
    parser.add_argument("--verify-out", default=None,
                        help="write verification vectors (16 source outputs) to this JSON")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        summary = export_model(args.checkpoint, args.out,
                               verify_out=args.verify_out, seed=args.seed)
    except (ExportError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(1)
    print(json.dumps({"out": args.out, "layers": summary["layers"],
                      "shapes": summary["shapes"]}, sort_keys=True))


def main_dataset(argv=None) -> None:
    parser = argparse.ArgumentParser(
        prog="export-dataset",
        description="Convert a labeled tensor dataset to the CSV layout "
                    "(header, integer label first, flattened features).",
    )
    parser.add_argument("source", help="torch file with (features, labels)")
    parser.add_argument("out", help="output .csv path")
    parser.add_argument("--normalize", action="store_true",
                        help="scale features by the global max absolute value")
    args = parser.parse_args(argv)
    try:
        summary = export_dataset(args.source, args.out, normalize=args.normalize)
    except (ExportError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(1)
    print(json.dumps({"out": args.out, **summary}, sort_keys=True))
