"""Metrics, the retention-fraction sweep harness, and the generalization
diagnostic.

Relative error is the mean l1 distance between original and compressed
outputs; accuracy drop the difference of 0/1 accuracies (negative means the
compressed net did better). Sweep cells are independent jobs with seeds
derived from (scheme, fraction, trial), so parallel and serial runs emit
identical reports.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .baselines import entrywise_compress, svd_compress, svd_ranks_for_fraction
from .compressor import CompressionConfig, compress
from .data import Dataset
from .errors import CorenetError
from .network import Network

SWEEP_SCHEMES = ("corenet", "corenet+", "corenet++", "uniform", "l1", "l2", "l1l2", "svd")

CSV_COLUMNS = ["scheme", "fraction", "trial_count", "size",
               "err_mean", "err_std", "accdrop_mean", "accdrop_std"]


def _outputs(model, points: np.ndarray) -> np.ndarray:
    out = np.empty((points.shape[0], model.output_dim))
    for i, x in enumerate(points):
        out[i] = model.forward(x)
    return out


def relative_error(model_hat, model, points: np.ndarray) -> float:
    """Mean over points of ||f_hat(x) - f(x)||_1."""
    if points.shape[0] == 0:
        raise CorenetError("empty test set")
    diff = _outputs(model_hat, points) - _outputs(model, points)
    return float(np.abs(diff).sum(axis=1).mean())


def accuracy(model, points: np.ndarray, labels: np.ndarray) -> float:
    preds = np.argmax(_outputs(model, points), axis=1)
    return float((preds == labels).mean())


def accuracy_drop(model, model_hat, points: np.ndarray, labels: np.ndarray) -> float:
    """acc(original) - acc(compressed); may be negative."""
    if points.shape[0] == 0:
        raise CorenetError("empty test set")
    return accuracy(model, points, labels) - accuracy(model_hat, points, labels)


def margin_loss(model, gamma: float, points: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of points whose true-class output fails to beat every other
    class by more than gamma; an exact-gamma margin counts as a loss."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if points.shape[0] == 0:
        raise CorenetError("empty set")
    out = _outputs(model, points)
    n = out.shape[0]
    true_vals = out[np.arange(n), labels]
    masked = out.copy()
    masked[np.arange(n), labels] = -np.inf
    best_other = masked.max(axis=1)
    return float((true_vals <= gamma + best_other).mean())


@dataclass(frozen=True)
class GeneralizationBoundInput:
    """Inputs of the compression-driven generalization diagnostic."""

    margin: float
    n_points: int
    max_output_sq: float
    n_layers: int
    delta_products: tuple[float, ...]  # per layer l=2..L: prod_{k=l..L} dhat_k
    sens_sums: tuple[float, ...]  # per layer l=2..L: sum_i S_i
    margin_loss: float


def generalization_bound(inp: GeneralizationBoundInput) -> float:
    """margin_loss + sqrt(max||f||^2 L^2 sum_l prod_l^2 S_l / (gamma^2 n)).

    The asymptotic constant is taken as 1; the value is a comparative
    diagnostic, not a certified bound.
    """
    if inp.margin <= 0:
        raise ValueError("margin must be positive")
    if inp.n_points < 1:
        raise ValueError("need at least one point")
    if len(inp.delta_products) != len(inp.sens_sums):
        raise ValueError("per-layer sequences disagree in length")
    acc = 0.0
    for prod, ssum in zip(inp.delta_products, inp.sens_sums):
        if ssum < 0:
            raise ValueError("sensitivity sums must be non-negative")
        acc += prod * prod * ssum
    radicand = inp.max_output_sq * inp.n_layers ** 2 * acc / (inp.margin ** 2 * inp.n_points)
    return inp.margin_loss + float(np.sqrt(radicand))


def _cell_seed(base_seed: int, scheme_i: int, fraction_i: int, trial: int) -> int:
    ss = np.random.SeedSequence(base_seed & 0xFFFFFFFFFFFFFFFF,
                                spawn_key=(scheme_i, fraction_i, trial))
    return int(ss.generate_state(1)[0])


def run_scheme(net: Network, validation: np.ndarray, scheme: str, fraction: float,
               seed: int, cfg: CompressionConfig):
    """One compression under the named scheme at a retention budget; returns
    (model, realized size)."""
    from .network import size_of

    if scheme in ("corenet", "corenet+", "corenet++", "uniform"):
        run_cfg = replace(
            cfg,
            mode="corenet" if scheme == "uniform" else scheme,
            sampling="uniform" if scheme == "uniform" else "sensitivity",
            sizing="budget",
            fraction=fraction,
            seed=seed,
        )
        result, _ = compress(net, validation, run_cfg)
        return result.network, size_of(result.network)
    if scheme in ("l1", "l2", "l1l2"):
        gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
            seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(0xE17,))))
        model = entrywise_compress(net, fraction, scheme, gen)
        return model, size_of(model)
    if scheme == "svd":
        model, size = svd_compress(net, svd_ranks_for_fraction(net, fraction))
        return model, size
    raise ValueError(f"unknown scheme {scheme!r}")


def sweep(net: Network, data: Dataset, schemes: list[str], fractions: list[float],
          trials: int, cfg: CompressionConfig, jobs: int = 1) -> dict:
    """Grid of (scheme, fraction) cells, each aggregating `trials` seeded
    compressions evaluated on the held-out test split. Per-cell failures are
    recorded in the cell rather than aborting the sweep."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ValueError("fractions must lie in (0, 1]")
    fractions = sorted(fractions)
    val_x, _ = data.subset("validation")
    test_x, test_y = data.subset("test")

    def run_cell(args):
        si, fi = args
        scheme, fraction = schemes[si], fractions[fi]
        sizes, errs, drops = [], [], []
        try:
            for trial in range(trials):
                seed = _cell_seed(cfg.seed, si, fi, trial)
                model, size = run_scheme(net, val_x, scheme, fraction, seed, cfg)
                sizes.append(size)
                errs.append(relative_error(model, net, test_x))
                drops.append(accuracy_drop(net, model, test_x, test_y))
        except CorenetError as exc:
            return {"scheme": scheme, "fraction": fraction, "error": str(exc)}
        return {
            "scheme": scheme,
            "fraction": fraction,
            "trial_count": trials,
            "size": float(np.mean(sizes)),
            "err_mean": float(np.mean(errs)),
            "err_std": float(np.std(errs)),
            "accdrop_mean": float(np.mean(drops)),
            "accdrop_std": float(np.std(drops)),
        }

    grid = [(si, fi) for si in range(len(schemes)) for fi in range(len(fractions))]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(run_cell, grid))
    else:
        cells = [run_cell(g) for g in grid]

    return {
        "schemes": list(schemes),
        "fractions": list(fractions),
        "trials": trials,
        "original_size": sum(w.nnz() for w in net.weights),
        "cells": cells,
        "config": cfg.to_jsonable(),
    }


def write_report_json(report: dict, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(report, sort_keys=True, indent=2) + "\n")


def write_report_csv(report: dict, path) -> None:
    """One row per sweep cell; failed cells keep the column count with empty
    stats (the JSON report carries their error messages)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for cell in report["cells"]:
            if "error" in cell:
                writer.writerow([cell["scheme"], cell["fraction"], 0, "", "", "", "", ""])
                continue
            writer.writerow([cell[c] for c in CSV_COLUMNS])
