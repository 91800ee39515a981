"""Command-line entry point.

Subcommands: train, compress, sweep, eval, bound, convert. Progress goes to
stderr (verbosity via CORENET_LOG=debug|info|warning); data products go only
to files or stdout. Every output is byte-stable for a fixed seed.

Exit codes: 0 success, 2 missing input file, 3 usage error (unknown flag or
bad value), 4 file-format violation, 1 any other failure. Errors print one
machine-parsable line "error <code>: <message>" to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import kernels, nnw
from .compressor import CompressionConfig, compress
from .data import Dataset, load_csv, make_blobs, make_digits
from .errors import CorenetError, FormatError
from .evaluation import (
    GeneralizationBoundInput,
    accuracy_drop,
    generalization_bound,
    margin_loss,
    relative_error,
    sweep,
    write_report_csv,
    write_report_json,
)
from .network import TrainConfig, cache_activations, forward, size_of, train
from .sensitivity import (
    SensitivityConstants,
    compute_profile,
    delta_hat,
    profile_json,
    subsample_size,
)

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_MISSING = 2
EXIT_USAGE = 3
EXIT_FORMAT = 4

log = logging.getLogger("corenet")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error {EXIT_USAGE}: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _setup_logging():
    level = os.environ.get("CORENET_LOG", "warning").upper()
    logging.basicConfig(stream=sys.stderr, level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _require_file(path: str, what: str) -> str:
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _load_dataset(spec: str, args) -> Dataset:
    if spec == "blobs":
        return make_blobs(args.n_samples, args.n_features, args.n_classes, seed=args.seed)
    if spec == "digits":
        return make_digits(args.n_samples, seed=args.seed)
    _require_file(spec, "dataset")
    data = load_csv(spec)
    return data.split_randomly(seed=args.seed)


def _parse_fractions(text: str) -> list[float]:
    """Comma list, or a range 'a..b[..step]' inclusive with default step 0.1."""
    if ".." in text:
        parts = text.split("..")
        if len(parts) not in (2, 3):
            raise ValueError(f"bad fraction range {text!r}")
        start, stop = float(parts[0]), float(parts[1])
        step = float(parts[2]) if len(parts) == 3 else 0.1
        if step <= 0 or stop < start:
            raise ValueError(f"bad fraction range {text!r}")
        n = int(round((stop - start) / step))
        vals = [round(start + i * step, 10) for i in range(n + 1)]
        return [v for v in vals if v <= stop + 1e-12]
    return [float(x) for x in text.split(",") if x]


def _config_from_args(args) -> CompressionConfig:
    base: dict = {}
    if getattr(args, "config", None):
        with open(_require_file(args.config, "config")) as fh:
            base = json.load(fh)
    merged = {
        "eps": args.eps if args.eps is not None else base.get("eps", 0.5),
        "delta": args.delta if args.delta is not None else base.get("delta", 0.1),
        "mode": args.mode if args.mode is not None else base.get("mode", "corenet+"),
        "seed": args.seed if args.seed is not None else base.get("seed", 0),
        "jobs": args.jobs if args.jobs is not None else base.get("jobs", 1),
        "n_points": args.n_points if args.n_points is not None else base.get("n_points"),
        "tau_max": base.get("tau_max", 25),
        "recompute_hatted": base.get("recompute_hatted", False),
    }
    k = args.k if args.k is not None else base.get("k", 2.0)
    kprime = args.kprime if args.kprime is not None else base.get("kprime", 2.0)
    fraction = args.fraction if getattr(args, "fraction", None) is not None else base.get("fraction")
    if fraction is not None:
        merged["sizing"] = "budget"
        merged["fraction"] = fraction
    return CompressionConfig(constants=SensitivityConstants(k=k, kprime=kprime), **merged)


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, default=None, help="worker count; results identical for any value")


def _add_compress_flags(p):
    p.add_argument("--eps", type=float, default=None, help="relative error target in (0,1]")
    p.add_argument("--delta", type=float, default=None, help="failure probability in (0,1)")
    p.add_argument("--mode", default=None, choices=["corenet", "corenet+", "corenet++"],
                   help="edge sampling, +neuron pruning, ++amplification")
    p.add_argument("--k", type=float, default=None, help="sensitivity constant K (default 2)")
    p.add_argument("--kprime", type=float, default=None, help="subsample constant K' (default 2)")
    p.add_argument("--fraction", type=float, default=None,
                   help="budget sizing: retained fraction in (0,1]; omit for theory sizing")
    p.add_argument("--n-points", type=int, default=None,
                   help="generalize the guarantee over this many i.i.d. points")
    p.add_argument("--config", default=None, help="JSON config; explicit flags win")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="corenet",
        description="Sparsify fully-connected ReLU networks by sensitivity-driven edge sampling.",
        epilog="Exit codes: 0 ok, 2 missing file, 3 usage error, 4 format violation, 1 other. "
               "Set CORENET_LOG=info for progress on stderr.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a dense reference network", parents=[])
    p.add_argument("--data", required=True, help="CSV path, or 'blobs' / 'digits' for synthetic data")
    p.add_argument("--arch", required=True, help="comma-separated hidden layer sizes, e.g. 64,32")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--batch-size", type=int, default=300)
    p.add_argument("--n-samples", type=int, default=2000, help="synthetic data size")
    p.add_argument("--n-features", type=int, default=30, help="synthetic blob dimensionality")
    p.add_argument("--n-classes", type=int, default=10, help="synthetic blob class count")
    p.add_argument("--out", required=True, help="output NNW1 path")
    _add_common(p)

    p = sub.add_parser("compress", help="compress an NNW1 network")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True, help="CSV path or 'blobs'/'digits'")
    p.add_argument("--out", required=True, help="compressed NNW1 path")
    p.add_argument("--report", default=None, help="write the compression report JSON here")
    p.add_argument("--dump-sensitivities", default=None, metavar="PATH",
                   help="write sensitivities and cancellation estimates as JSON")
    p.add_argument("--dump-plan", default=None, metavar="PATH", help="write the plan as JSON")
    p.add_argument("--n-samples", type=int, default=2000)
    p.add_argument("--n-features", type=int, default=30)
    p.add_argument("--n-classes", type=int, default=10)
    _add_compress_flags(p)
    _add_common(p)

    p = sub.add_parser("sweep", help="error/accuracy sweep over retention fractions")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schemes", default="corenet+,uniform",
                   help="comma list from corenet,corenet+,corenet++,uniform,l1,l2,l1l2,svd")
    p.add_argument("--fractions", default="0.1..1.0", help="comma list or range a..b[..step]")
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--out-json", default="report.json")
    p.add_argument("--out-csv", default="report.csv")
    p.add_argument("--n-samples", type=int, default=2000)
    p.add_argument("--n-features", type=int, default=30)
    p.add_argument("--n-classes", type=int, default=10)
    _add_compress_flags(p)
    _add_common(p)

    p = sub.add_parser("eval", help="compare two NNW1 networks on a test split")
    p.add_argument("--weights", required=True, help="original network")
    p.add_argument("--compressed", required=True, help="compressed network")
    p.add_argument("--data", required=True)
    p.add_argument("--n-samples", type=int, default=2000)
    p.add_argument("--n-features", type=int, default=30)
    p.add_argument("--n-classes", type=int, default=10)
    _add_common(p)

    p = sub.add_parser("bound", help="compute the generalization diagnostic")
    p.add_argument("--weights", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--gamma", type=float, required=True, help="margin > 0")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--k", type=float, default=None)
    p.add_argument("--kprime", type=float, default=None)
    p.add_argument("--n-samples", type=int, default=2000)
    p.add_argument("--n-features", type=int, default=30)
    p.add_argument("--n-classes", type=int, default=10)
    _add_common(p)

    p = sub.add_parser("convert", help="validate datasets and NNW1 files")
    p.add_argument("--check-dataset", default=None, metavar="CSV")
    p.add_argument("--validate", default=None, metavar="NNW1")
    p.add_argument("--verify", nargs=2, default=None, metavar=("SIDECAR", "NNW1"),
                   help="check forward outputs against exported verification vectors")
    p.add_argument("--tolerance", type=float, default=1e-5)
    _add_common(p)

    return parser


def _cmd_train(args) -> int:
    data = _load_dataset(args.data, args)
    hidden = [int(x) for x in args.arch.split(",") if x]
    arch = [data.n_features] + hidden + [data.n_classes]
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                      batch_size=args.batch_size, seed=args.seed or 0)
    log.info("training %s for %d epochs", arch, cfg.epochs)
    net = train(arch, data, cfg)
    train_x, train_y = data.subset("train")
    test_x, test_y = data.subset("test")
    from .evaluation import accuracy
    nnw.save_network(net, args.out, meta={"arch": arch, "seed": cfg.seed})
    print(json.dumps({
        "out": args.out,
        "size": size_of(net),
        "train_accuracy": accuracy(net, train_x, train_y),
        "test_accuracy": accuracy(net, test_x, test_y),
    }, sort_keys=True))
    return EXIT_OK


def _cmd_compress(args) -> int:
    net = nnw.load_network(_require_file(args.weights, "weights"))
    data = _load_dataset(args.data, args)
    cfg = _config_from_args(args)
    val_x, _ = data.subset("validation")
    result, report = compress(net, val_x, cfg)
    nnw.save_network(result.network, args.out,
                     meta={"compressed": True, "config": cfg.to_jsonable()})
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
    if args.dump_plan:
        with open(args.dump_plan, "w") as fh:
            fh.write(json.dumps(report["plan"], sort_keys=True, indent=2) + "\n")
    if args.dump_sensitivities:
        cache = cache_activations(net, val_x[np.asarray(report["plan"]["subsample"], dtype=int)])
        profile = compute_profile(net, cache, report["plan"]["first_layer_split"])
        sizes = net.layer_sizes
        estimates = delta_hat(profile, cfg.constants, sum(sizes[1:]), max(sizes[1:]),
                              report["plan"]["delta_sizes"], cap=cfg.delta_cap)
        with open(args.dump_sensitivities, "w") as fh:
            fh.write(profile_json(profile, estimates))
    print(json.dumps({"out": args.out,
                      "original_size": report["sizes"]["original"],
                      "compressed_size": report["sizes"]["compressed"],
                      "retained_fraction": report["sizes"]["retained_fraction"]},
                     sort_keys=True))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    net = nnw.load_network(_require_file(args.weights, "weights"))
    data = _load_dataset(args.data, args)
    cfg = _config_from_args(args)
    schemes = [s for s in args.schemes.split(",") if s]
    fractions = _parse_fractions(args.fractions)
    report = sweep(net, data, schemes, fractions, args.trials, cfg,
                   jobs=args.jobs or 1)
    write_report_json(report, args.out_json)
    write_report_csv(report, args.out_csv)
    print(json.dumps({"out_json": args.out_json, "out_csv": args.out_csv,
                      "cells": len(report["cells"])}, sort_keys=True))
    return EXIT_OK


def _cmd_eval(args) -> int:
    net = nnw.load_network(_require_file(args.weights, "weights"))
    net_hat = nnw.load_network(_require_file(args.compressed, "compressed weights"))
    data = _load_dataset(args.data, args)
    test_x, test_y = data.subset("test")
    print(json.dumps({
        "relative_error": relative_error(net_hat, net, test_x),
        "accuracy_drop": accuracy_drop(net, net_hat, test_x, test_y),
        "original_size": size_of(net),
        "compressed_size": size_of(net_hat),
    }, sort_keys=True))
    return EXIT_OK


def _cmd_bound(args) -> int:
    net = nnw.load_network(_require_file(args.weights, "weights"))
    data = _load_dataset(args.data, args)
    constants = SensitivityConstants(k=args.k or 2.0, kprime=args.kprime or 2.0)
    delta = args.delta if args.delta is not None else 0.1
    val_x, val_y = data.subset("validation")
    sizes = net.layer_sizes
    eta, eta_star = sum(sizes[1:]), max(sizes[1:])
    n_sub = min(subsample_size(eta, eta_star, delta, constants.kprime), val_x.shape[0])
    cache = cache_activations(net, val_x[:n_sub])
    profile = compute_profile(net, cache, first_layer_split=bool(val_x.min() < 0))
    estimates = delta_hat(profile, constants, eta, eta_star, delta)
    n_layers = net.n_layers
    delta_products = tuple(estimates.layer_product(l, n_layers) for l in range(2, n_layers + 1))
    sens_sums = tuple(float(profile.layers[l].sum_total.sum()) for l in range(2, n_layers + 1))
    outputs = np.array([forward(net, x)[0] for x in val_x])
    inp = GeneralizationBoundInput(
        margin=args.gamma,
        n_points=val_x.shape[0],
        max_output_sq=float((outputs ** 2).sum(axis=1).max()),
        n_layers=n_layers,
        delta_products=delta_products,
        sens_sums=sens_sums,
        margin_loss=margin_loss(net, args.gamma, val_x, val_y),
    )
    print(json.dumps({
        "bound": generalization_bound(inp),
        "margin_loss": inp.margin_loss,
        "convention": "asymptotic constant taken as 1; comparative diagnostic only",
    }, sort_keys=True))
    return EXIT_OK


def _cmd_convert(args) -> int:
    did_anything = False
    out: dict = {}
    if args.check_dataset:
        data = load_csv(_require_file(args.check_dataset, "dataset"))
        out["dataset"] = {"rows": data.n_samples, "features": data.n_features,
                          "classes": data.n_classes}
        did_anything = True
    if args.validate:
        net = nnw.load_network(_require_file(args.validate, "weights"))
        out["network"] = {"layer_sizes": list(net.layer_sizes), "size": size_of(net),
                          "bias_embedded": net.bias_embedded}
        did_anything = True
    if args.verify:
        sidecar_path, weights_path = args.verify
        with open(_require_file(sidecar_path, "verification sidecar")) as fh:
            sidecar = json.load(fh)
        net = nnw.load_network(_require_file(weights_path, "weights"))
        inputs = np.asarray(sidecar["inputs"], dtype=np.float64)
        expected = np.asarray(sidecar["outputs"], dtype=np.float64)
        worst = 0.0
        for x, want in zip(inputs, expected):
            got = forward(net, x)[0]
            worst = max(worst, float(np.abs(got - want).max()))
        out["verify"] = {"vectors": int(inputs.shape[0]), "max_abs_diff": worst,
                         "tolerance": args.tolerance, "ok": worst <= args.tolerance}
        did_anything = True
        if worst > args.tolerance:
            print(json.dumps(out, sort_keys=True))
            raise CorenetError(f"verification failed: max diff {worst:.3e} > {args.tolerance:.1e}")
    if not did_anything:
        raise ValueError("convert needs --check-dataset, --validate, or --verify")
    print(json.dumps(out, sort_keys=True))
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "compress": _cmd_compress,
    "sweep": _cmd_sweep,
    "eval": _cmd_eval,
    "bound": _cmd_bound,
    "convert": _cmd_convert,
}


def run(argv: list[str]) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    log.debug("kernel backend: %s", kernels.BACKEND)
    try:
        return _COMMANDS[args.command](args)
    except FileNotFoundError as exc:
        print(f"error {EXIT_MISSING}: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except FormatError as exc:
        print(f"error {EXIT_FORMAT}: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ValueError, KeyError) as exc:
        print(f"error {EXIT_USAGE}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CorenetError as exc:
        print(f"error {EXIT_OTHER}: {exc}", file=sys.stderr)
        return EXIT_OTHER


def main() -> None:
    raise SystemExit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
