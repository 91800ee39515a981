"""End-to-end compression driver.

Pipeline: draw the sensitivity subsample (and amplification holdout), cache
original activations once, prune dead neurons when enabled, compute all
cancellation estimates before any layer is touched (downstream products set
the per-layer budgets), then sparsify layer by layer. All randomness flows
through addressable per-neuron streams, so worker count never changes the
result.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import CorenetError, ValidationTooSmall
from .linalg import SparseRowMatrix, matvec, relu
from .network import ActivationCache, Network, cache_activations, size_of
from .sensitivity import (
    DELTA_CAP_DEFAULT,
    DeltaEstimates,
    EpsilonSchedule,
    SensitivityConstants,
    compute_profile,
    delta_hat,
    epsilon_schedule,
    sample_complexity,
    subsample_size,
)
from .sparsifier import RngStream, RowStats, SparseRow, sparsify_neuron_row

log = logging.getLogger("corenet.compressor")

MODES = ("corenet", "corenet+", "corenet++")
_MODE_ALIASES = {
    "corenet": "corenet",
    "corenet+": "corenet+",
    "corenet_plus": "corenet+",
    "corenet++": "corenet++",
    "corenet_plus_plus": "corenet++",
}


@dataclass(frozen=True)
class CompressionConfig:
    eps: float = 0.5
    delta: float = 0.1
    mode: str = "corenet+"
    constants: SensitivityConstants = field(default_factory=SensitivityConstants)
    sizing: str = "theory"  # "theory" | "budget"
    fraction: float | None = None
    seed: int = 0
    n_points: int | None = None  # generalize the guarantee over this many points
    tau_max: int = 25
    recompute_hatted: bool = False
    jobs: int = 1
    delta_cap: float = DELTA_CAP_DEFAULT
    sampling: str = "sensitivity"  # "sensitivity" | "uniform" (baseline plumbing share)

    def __post_init__(self):
        if not 0.0 < self.eps <= 1.0:
            raise ValueError("eps must be in (0, 1]")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("delta must be in (0, 1)")
        mode = _MODE_ALIASES.get(self.mode)
        if mode is None:
            raise ValueError(f"unknown mode {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        if self.sizing not in ("theory", "budget"):
            raise ValueError("sizing must be 'theory' or 'budget'")
        if self.sizing == "budget":
            if self.fraction is None or not 0.0 < self.fraction <= 1.0:
                raise ValueError("budget sizing needs fraction in (0, 1]")
        elif self.fraction is not None:
            raise ValueError("fraction is only valid with budget sizing")
        if self.sampling not in ("sensitivity", "uniform"):
            raise ValueError("sampling must be 'sensitivity' or 'uniform'")
        if self.n_points is not None and self.n_points < 1:
            raise ValueError("n_points must be >= 1")
        if self.jobs < 1 or self.tau_max < 1:
            raise ValueError("jobs and tau_max must be >= 1")

    def to_jsonable(self) -> dict:
        return {
            "eps": self.eps, "delta": self.delta, "mode": self.mode,
            "k": self.constants.k, "kprime": self.constants.kprime,
            "sizing": self.sizing, "fraction": self.fraction, "seed": self.seed,
            "n_points": self.n_points, "tau_max": self.tau_max,
            "recompute_hatted": self.recompute_hatted, "delta_cap": self.delta_cap,
            "sampling": self.sampling,
        }


def generalized_delta(delta: float, n_prime: int) -> float:
    """Failure budget after union-bounding the guarantee over n' points."""
    if n_prime < 1:
        raise ValueError("n_prime must be >= 1")
    return delta / (2.0 * n_prime)


def amplification_params(eta: int, delta: float, n_points: int) -> tuple[int, int, float]:
    """Trial count, holdout size, and per-trial failure budget:
    tau = ceil(log(4 eta/delta) / log(10/9)), |T| = ceil(8 log(8 tau eta/delta)),
    delta' = delta / (4 |P| tau)."""
    if eta < 1 or not 0.0 < delta < 1.0:
        raise ValueError("need eta >= 1 and delta in (0, 1)")
    tau = math.ceil(math.log(4.0 * eta / delta) / math.log(10.0 / 9.0))
    t_size = math.ceil(8.0 * math.log(8.0 * tau * eta / delta))
    return tau, t_size, delta / (4.0 * n_points * tau)


def prune_neurons(net: Network, cache: ActivationCache) -> dict[int, np.ndarray]:
    """Keep masks per weight layer; a hidden neuron survives iff its
    activation is positive for at least one cached point. The output layer is
    never pruned."""
    keep = {}
    for layer in range(2, net.n_layers + 1):
        if layer == net.n_layers:
            keep[layer] = np.ones(net.weights[layer - 2].rows, dtype=bool)
        else:
            keep[layer] = cache.a[layer].max(axis=0) > 0.0
    return keep


def apply_pruning(net: Network, keep: dict[int, np.ndarray]) -> Network:
    """Sparse copy of the network with pruned rows emptied and their outgoing
    columns dropped. Exact on the cached points: removed terms were all zero
    there, and mat-vec accumulation skips absent entries without reordering
    the survivors."""
    new_weights = []
    for layer in range(2, net.n_layers + 1):
        w = net.weights[layer - 2]
        dense = w.data if hasattr(w, "data") else w.to_dense().data
        rows_data = []
        col_keep = _column_keep(net, keep, layer, w.cols)
        for i in range(w.rows):
            if not keep[layer][i]:
                rows_data.append((np.zeros(0, dtype=np.int64), np.zeros(0)))
                continue
            row = dense[i]
            cidx = np.nonzero((row != 0.0) & col_keep)[0]
            rows_data.append((cidx, row[cidx]))
        new_weights.append(SparseRowMatrix.from_rows(rows_data, w.cols))
    return Network(tuple(new_weights), bias_embedded=net.bias_embedded)


def _column_keep(net: Network, keep: dict[int, np.ndarray], layer: int, cols: int) -> np.ndarray:
    mask = np.ones(cols, dtype=bool)
    if layer >= 3:
        prev = keep[layer - 1]
        mask[:prev.shape[0]] = prev
    return mask


def draws_for_expected_distinct(q: np.ndarray, target: int, cap_factor: int = 256) -> int:
    """Smallest-ish draw count whose expected number of distinct sampled
    indices is closest to `target` under with-replacement sampling from q.

    Keeps budget-mode realized sizes近 the requested retention budget despite
    duplicate draws; capped at cap_factor * support size for very skewed q.
    """
    q = np.asarray(q, dtype=np.float64)
    q = q[q > 0.0]
    n = q.size
    if target <= 0 or n == 0:
        return 0
    target = min(int(target), n)
    cap = max(cap_factor * n, 4)
    with np.errstate(divide="ignore"):
        log_miss = np.log1p(-q)  # log(1 - q_j); -inf when q_j == 1

    def expected(m: int) -> float:
        return float(np.sum(-np.expm1(m * log_miss)))

    lo, hi = 1, cap
    if expected(cap) < target:
        return cap
    while lo < hi:
        mid = (lo + hi) // 2
        if expected(mid) >= target:
            hi = mid
        else:
            lo = mid + 1
    if lo > 1 and abs(expected(lo - 1) - target) < abs(expected(lo) - target):
        return lo - 1
    return lo


@dataclass
class CompressionPlan:
    subsample: np.ndarray
    holdout: np.ndarray
    schedule: EpsilonSchedule
    estimates: DeltaEstimates
    m_plus: dict[int, np.ndarray]
    m_minus: dict[int, np.ndarray]
    keep: dict[int, np.ndarray]
    tau_formula: int
    tau_used: int
    holdout_formula: int
    delta_sizes: float
    first_layer_split: bool
    allow_exact: bool

    def to_jsonable(self) -> dict:
        return {
            "subsample_size": int(self.subsample.size),
            "holdout_size": int(self.holdout.size),
            "subsample": self.subsample.tolist(),
            "holdout": self.holdout.tolist(),
            "eps_schedule": self.schedule.to_jsonable(),
            "delta_estimates": self.estimates.to_jsonable(),
            "m_plus": {str(l): v.tolist() for l, v in self.m_plus.items()},
            "m_minus": {str(l): v.tolist() for l, v in self.m_minus.items()},
            "pruned_per_layer": {str(l): int((~v).sum()) for l, v in self.keep.items()},
            "tau_formula": self.tau_formula,
            "tau_used": self.tau_used,
            "holdout_formula": self.holdout_formula,
            "delta_sizes": self.delta_sizes,
            "first_layer_split": self.first_layer_split,
            "allow_exact": self.allow_exact,
        }


@dataclass
class CompressedNetwork:
    network: Network
    keep: dict[int, np.ndarray]
    config: CompressionConfig
    seed: int


_M_CLAMP = 10 ** 15


def _theory_m(sens_sum: float, constants: SensitivityConstants, eps_layer: float,
              eta: int, delta: float) -> int:
    m = sample_complexity(max(sens_sum, 1.0), constants.k, eps_layer, eta, delta)
    return min(m, _M_CLAMP)


def _budget_targets(budget: int, mass_plus: float, mass_minus: float,
                    support_plus: int, support_minus: int) -> tuple[int, int]:
    total = mass_plus + mass_minus
    if total <= 0:
        mass_plus, mass_minus = float(support_plus), float(support_minus)
        total = mass_plus + mass_minus
    if total <= 0:
        return 0, 0
    t_plus = min(int(round(budget * mass_plus / total)), support_plus)
    t_minus = min(budget - t_plus, support_minus)
    t_plus = min(budget - t_minus, support_plus)
    return t_plus, t_minus


def compress(net: Network, validation: np.ndarray, cfg: CompressionConfig
             ) -> tuple[CompressedNetwork, dict]:
    """Sparsify every layer of a trained network against a validation slice.

    Returns the compressed network plus a report with realized sizes, the
    plan parameters, and warning counters.
    """
    validation = np.asarray(validation, dtype=np.float64)
    if validation.ndim != 2 or validation.shape[1] != net.input_dim:
        raise CorenetError("validation must be (n, input_dim)")
    sizes = net.layer_sizes
    n_layers = net.n_layers
    eta = sum(sizes[1:])
    eta_star = max(sizes[1:])

    delta_sizes = cfg.delta
    if cfg.n_points is not None:
        delta_sizes = generalized_delta(delta_sizes, cfg.n_points)
    amplify = cfg.mode == "corenet++"
    tau_formula, holdout_formula, _ = amplification_params(eta, delta_sizes, max(validation.shape[0], 1)) \
        if amplify else (1, 0, delta_sizes)
    tau_used = min(tau_formula, cfg.tau_max) if amplify else 1
    n_holdout = 0
    if amplify:
        n_holdout = math.ceil(8.0 * math.log(8.0 * tau_used * eta / delta_sizes))
        delta_sizes = delta_sizes / (4.0 * validation.shape[0] * tau_used)

    n_sub = subsample_size(eta, eta_star, delta_sizes, cfg.constants.kprime)
    needed = n_sub + n_holdout
    if validation.shape[0] < needed:
        raise ValidationTooSmall(
            f"validation has {validation.shape[0]} points; need at least {needed} "
            f"({n_sub} subsample + {n_holdout} holdout)")

    pick = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(cfg.seed & 0xFFFFFFFFFFFFFFFF, spawn_key=(0xC0DE,))))
    order = pick.permutation(validation.shape[0])
    sub_idx = np.sort(order[:n_sub])
    hold_idx = np.sort(order[n_sub:n_sub + n_holdout])

    cache = cache_activations(net, validation[sub_idx])
    first_layer_split = bool(validation.min() < 0.0)

    if cfg.mode == "corenet":
        keep = {l: np.ones(sizes[l - 1], dtype=bool) for l in range(2, n_layers + 1)}
    else:
        keep = prune_neurons(net, cache)
    column_keep = {l: _column_keep(net, keep, l, net.weights[l - 2].cols)
                   for l in range(2, n_layers + 1)}

    profile = compute_profile(net, cache, first_layer_split, column_keep)
    estimates = delta_hat(profile, cfg.constants, eta, eta_star, delta_sizes,
                          cap=cfg.delta_cap, neuron_keep=keep)
    schedule = epsilon_schedule(cfg.eps, cfg.delta, n_layers, estimates.per_layer)

    cache_hold = cache_activations(net, validation[hold_idx]) if amplify and n_holdout else None

    m_plus: dict[int, np.ndarray] = {}
    m_minus: dict[int, np.ndarray] = {}
    allow_exact = cfg.sizing == "theory"
    plan = CompressionPlan(
        subsample=sub_idx, holdout=hold_idx, schedule=schedule, estimates=estimates,
        m_plus=m_plus, m_minus=m_minus, keep=keep, tau_formula=tau_formula,
        tau_used=tau_used, holdout_formula=holdout_formula, delta_sizes=delta_sizes,
        first_layer_split=first_layer_split, allow_exact=allow_exact)

    stats = RowStats()
    amplify_fallbacks = 0
    new_weights = []
    a_hat_sub = cache.inputs.copy() if cfg.recompute_hatted else None
    a_hat_hold = cache_hold.inputs.copy() if cache_hold is not None else None

    for layer in range(2, n_layers + 1):
        w_mat = net.weights[layer - 2]
        n_neurons = w_mat.rows
        split = first_layer_split and layer == 2
        layer_sens = profile.layers[layer]
        if cfg.recompute_hatted and layer > 2:
            layer_sens = compute_profile(
                net, cache, first_layer_split, column_keep,
                layer_inputs_override={layer: a_hat_sub},
            ).layers[layer]

        mp = np.zeros(n_neurons, dtype=np.int64)
        mm = np.zeros(n_neurons, dtype=np.int64)
        eps_layer = schedule.per_layer[layer]
        delta_m = delta_sizes / 4.0 if split else delta_sizes
        for i in range(n_neurons):
            if not keep[layer][i]:
                continue
            w = _dense_row(w_mat, i)
            admissible = column_keep[layer].copy()
            has_bias = 0
            if net.bias_embedded:
                admissible[-1] = False
                has_bias = int(w[-1] != 0.0)
            n_plus = int(((w > 0) & admissible).sum())
            n_minus = int(((w < 0) & admissible).sum())
            if cfg.sizing == "theory":
                m = _theory_m(float(layer_sens.sum_total[i]), cfg.constants,
                              eps_layer, eta, delta_m)
                mp[i] = m if n_plus else 0
                mm[i] = m if n_minus else 0
            else:
                # the retention budget covers the whole stored row, bias included
                budget = max(math.ceil(cfg.fraction * (n_plus + n_minus + has_bias)) - has_bias, 0)
                if cfg.sampling == "uniform":
                    mass_p, mass_m = float(n_plus), float(n_minus)
                    sup_p, sup_m = n_plus, n_minus
                    q_p = np.full(max(n_plus, 1), 1.0 / max(n_plus, 1))
                    q_m = np.full(max(n_minus, 1), 1.0 / max(n_minus, 1))
                else:
                    s_p = layer_sens.s_plus[i][(w > 0) & admissible]
                    s_m = layer_sens.s_minus[i][(w < 0) & admissible]
                    mass_p, mass_m = float(s_p.sum()), float(s_m.sum())
                    sup_p = int((s_p > 0).sum()) if mass_p > 0 else n_plus
                    sup_m = int((s_m > 0).sum()) if mass_m > 0 else n_minus
                    q_p = s_p / mass_p if mass_p > 0 else np.full(max(n_plus, 1), 1.0 / max(n_plus, 1))
                    q_m = s_m / mass_m if mass_m > 0 else np.full(max(n_minus, 1), 1.0 / max(n_minus, 1))
                t_plus, t_minus = _budget_targets(budget, mass_p, mass_m, sup_p, sup_m)
                mp[i] = draws_for_expected_distinct(q_p, t_plus) if n_plus else 0
                mm[i] = draws_for_expected_distinct(q_m, t_minus) if n_minus else 0
        m_plus[layer] = mp
        m_minus[layer] = mm

        uniform_sampling = cfg.sampling == "uniform"

        def build_one(i: int) -> tuple[SparseRow, RowStats, int]:
            if not keep[layer][i]:
                return SparseRow(np.zeros(0, dtype=np.int64), np.zeros(0)), RowStats(), 0
            w = _dense_row(w_mat, i)
            bias_col = w_mat.cols - 1 if net.bias_embedded else None
            if uniform_sampling:
                s_p = np.ones_like(w)
                s_m = np.ones_like(w)
            else:
                s_p = layer_sens.s_plus[i]
                s_m = layer_sens.s_minus[i]

            def stream(sign: int, trial: int):
                return RngStream(cfg.seed, layer, i, sign, trial).generator()

            fell_back = 0
            if tau_used == 1:
                row, row_stats = sparsify_neuron_row(
                    w, bias_col=bias_col, s_plus=s_p, s_minus=s_m,
                    m_plus=int(mp[i]), m_minus=int(mm[i]),
                    stream_factory=stream, trial=0, allow_exact=allow_exact,
                    keep_cols=column_keep[layer])
            else:
                cands, row_stats = [], RowStats()
                for t in range(tau_used):
                    cand, st = sparsify_neuron_row(
                        w, bias_col=bias_col, s_plus=s_p, s_minus=s_m,
                        m_plus=int(mp[i]), m_minus=int(mm[i]),
                        stream_factory=stream, trial=t, allow_exact=allow_exact,
                        keep_cols=column_keep[layer])
                    cands.append(cand)
                    row_stats.merge(st)
                a_hat_aug = _augment_batch(a_hat_hold, net.bias_embedded)
                z_orig = cache_hold.z[layer][:, i]
                best, fell_back = amplify_neuron(cands, z_orig, a_hat_aug)
                row = cands[best]
            return row, row_stats, fell_back

        if cfg.jobs > 1:
            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(build_one, range(n_neurons)))
        else:
            results = [build_one(i) for i in range(n_neurons)]

        rows_data = []
        for row, row_stats, fell_back in results:
            rows_data.append((row.columns, row.values))
            stats.merge(row_stats)
            amplify_fallbacks += fell_back
        new_weights.append(SparseRowMatrix.from_rows(rows_data, w_mat.cols))

        if a_hat_hold is not None:
            a_hat_hold = _advance(new_weights[-1], a_hat_hold, net.bias_embedded,
                                  last=layer == n_layers)
        if a_hat_sub is not None:
            a_hat_sub = _advance(new_weights[-1], a_hat_sub, net.bias_embedded,
                                 last=layer == n_layers)

    compressed = Network(tuple(new_weights), bias_embedded=net.bias_embedded)
    result = CompressedNetwork(network=compressed, keep=keep, config=cfg, seed=cfg.seed)

    orig_size = size_of(net)
    comp_size = size_of(compressed)
    theory_all_exact = allow_exact and stats.draws == 0 and comp_size > 0
    if theory_all_exact:
        log.warning("no compression at these (eps, delta): every theoretical "
                    "draw count covers its whole edge class")
    report = {
        "config": cfg.to_jsonable(),
        "kernel_backend": kernels.BACKEND,
        "sizes": {
            "original": orig_size,
            "compressed": comp_size,
            "retained_fraction": comp_size / orig_size if orig_size else 0.0,
            "per_layer_nnz": [w.nnz() for w in compressed.weights],
        },
        "plan": plan.to_jsonable(),
        "pruning": {
            "pruned_per_layer": {str(l): int((~v).sum()) for l, v in keep.items()},
            "total_pruned": int(sum((~v).sum() for v in keep.values())),
        },
        "warnings": {
            "uniform_fallbacks": stats.uniform_fallbacks,
            "exact_classes": stats.exact_classes,
            "capped_delta_points": estimates.capped_points,
            "amplify_fallbacks": amplify_fallbacks,
            "no_compression": bool(theory_all_exact),
        },
        "provenance": {
            "config_digest": hashlib.sha256(
                json.dumps(cfg.to_jsonable(), sort_keys=True).encode()).hexdigest(),
            "seed": cfg.seed,
        },
    }
    return result, report


def amplify_neuron(candidates: list[SparseRow], z_orig: np.ndarray,
                   a_hat_aug: np.ndarray) -> tuple[int, int]:
    """Index of the candidate with least mean relative error on the holdout;
    ties break to the lowest trial. Zero-denominator points are skipped; if
    every point is skipped the first trial wins and the fallback is counted."""
    live = z_orig != 0.0
    if not live.any():
        return 0, 1
    dens = z_orig[live]
    errs = np.empty(len(candidates))
    for t, row in enumerate(candidates):
        if row.nnz:
            nums = a_hat_aug[live][:, row.columns] @ row.values
        else:
            nums = np.zeros(dens.shape[0])
        errs[t] = float(np.mean(np.abs(nums / dens - 1.0)))
    return int(np.argmin(errs)), 0


def _augment_batch(a: np.ndarray, bias_embedded: bool) -> np.ndarray:
    if not bias_embedded:
        return a
    out = np.ones((a.shape[0], a.shape[1] + 1))
    out[:, :-1] = a
    return out


def _advance(w_sparse: SparseRowMatrix, a_hat: np.ndarray, bias_embedded: bool,
             last: bool) -> np.ndarray:
    out = np.empty((a_hat.shape[0], w_sparse.rows))
    for p in range(a_hat.shape[0]):
        v = np.append(a_hat[p], 1.0) if bias_embedded else a_hat[p]
        z = matvec(w_sparse, v)
        out[p] = z if last else relu(z)
    return out


def _dense_row(w_mat, i: int) -> np.ndarray:
    if hasattr(w_mat, "data"):
        return np.ascontiguousarray(w_mat.data[i])
    cols, vals = w_mat.row(i)
    row = np.zeros(w_mat.cols)
    row[cols] = vals
    return row
