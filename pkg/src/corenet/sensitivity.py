"""Empirical sensitivities, cancellation ratios, the per-layer error
schedule, and the sample-size formulas.

For a neuron with incoming weights w over an index class W (all strictly
positive after sign-splitting) and cached activations a(x) >= 0, the
relative importance of edge j at point x is
    g_j(x) = w_j a_j(x) / sum_{k in W} w_k a_k(x),
its empirical sensitivity s_j the maximum of g_j over the cached subsample.
The cancellation ratio of a neuron is (z+ + z-) / |z+ - z-| over the
positive/negative parts of its pre-activation; its empirical upper estimate
adds the slack term kappa. Per-layer error budgets shrink geometrically with
the downstream cancellation estimates so that layer errors compose to the
requested network-level bound.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CorenetError, DimensionMismatch
from .linalg import DenseMatrix
from .network import ActivationCache, Network

DELTA_CAP_DEFAULT = 1e6


@dataclass(frozen=True)
class SensitivityConstants:
    """Distributional constants; the theory treats them as universal but
    gives no values, so they default to 2 and stay configurable."""

    k: float = 2.0
    kprime: float = 2.0

    def __post_init__(self):
        if self.k <= 0 or self.kprime <= 0:
            raise ValueError("constants must be positive")

    @property
    def lambda_star(self) -> float:
        return self.kprime / 2.0


def relative_importance(weights: np.ndarray, activations: np.ndarray) -> tuple[np.ndarray, bool]:
    """Importance of each edge at one point: g_j = w_j a_j / sum_k w_k a_k.

    Weights must be strictly positive (callers pass a sign class with the
    sign folded in) and activations non-negative. A zero denominator marks
    the point inactive and yields an all-zero row.
    """
    weights = np.asarray(weights, dtype=np.float64)
    activations = np.asarray(activations, dtype=np.float64)
    if weights.shape != activations.shape:
        raise DimensionMismatch("weights/activations length mismatch")
    if np.any(weights <= 0):
        raise ValueError("relative importance needs strictly positive weights")
    contrib = weights * activations
    den = contrib.sum()
    if den <= 0:
        return np.zeros_like(contrib), False
    return contrib / den, True


def empirical_sensitivity(net: Network, cache: ActivationCache, layer: int,
                          neuron: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-edge sensitivities of one neuron, split by weight sign.

    Returns dense (s_plus, s_minus) rows over the layer's input columns;
    entries outside the respective sign class are zero. The bias column (when
    embedded) never participates. Points where a sign class has zero total
    contribution add nothing to the max.
    """
    w = _dense_row_from(net.weights[layer - 2], neuron)
    a = _augmented_inputs(net, cache, layer)
    exclude = w.shape[0] - 1 if net.bias_embedded else -1
    s_plus, _ = kernels.edge_sensitivities(w, a, 1.0, exclude)
    s_minus, _ = kernels.edge_sensitivities(w, a, -1.0, exclude)
    return s_plus, s_minus


def _augmented_inputs(net: Network, cache: ActivationCache, layer: int) -> np.ndarray:
    a = cache.layer_inputs(layer)
    if not net.bias_embedded:
        return np.ascontiguousarray(a)
    out = np.ones((a.shape[0], a.shape[1] + 1))
    out[:, :-1] = a
    return out


@dataclass
class LayerSensitivity:
    """Per-neuron sensitivity data for one weight layer.

    s_plus/s_minus are (neurons, cols) dense with zeros outside the sign
    class; z_plus/z_minus are (neurons, points) positive/negative parts of
    the original pre-activation (bias included). For the sign-split first
    layer the sensitivities run over the stacked {pos(x), neg(x)} point set.
    """

    layer: int
    s_plus: np.ndarray
    s_minus: np.ndarray
    sum_plus: np.ndarray
    sum_minus: np.ndarray
    z_plus: np.ndarray
    z_minus: np.ndarray
    inactive: np.ndarray  # both sign classes dead on the whole subsample

    @property
    def sum_total(self) -> np.ndarray:
        return self.sum_plus + self.sum_minus


@dataclass
class SensitivityProfile:
    layers: dict[int, LayerSensitivity]
    n_points: int
    first_layer_split: bool

    def to_jsonable(self) -> dict:
        out = {"n_points": self.n_points, "first_layer_split": self.first_layer_split, "layers": {}}
        for l, ls in self.layers.items():
            out["layers"][str(l)] = {
                "sum_plus": ls.sum_plus.tolist(),
                "sum_minus": ls.sum_minus.tolist(),
                "inactive": ls.inactive.astype(int).tolist(),
                "s_plus_nnz": int(np.count_nonzero(ls.s_plus)),
                "s_minus_nnz": int(np.count_nonzero(ls.s_minus)),
            }
        return out


def compute_profile(net: Network, cache: ActivationCache, first_layer_split: bool,
                    column_keep: dict[int, np.ndarray] | None = None,
                    layer_inputs_override: dict[int, np.ndarray] | None = None) -> SensitivityProfile:
    """Sensitivities and pre-activation sign parts for every layer/neuron.

    column_keep maps a layer to a boolean mask of admissible input columns
    (used to drop the outgoing edges of pruned neurons); layer_inputs_override
    substitutes the activation matrix feeding a layer (used when recomputing
    through already-compressed layers).
    """
    layers: dict[int, LayerSensitivity] = {}
    for layer in range(2, net.n_layers + 1):
        w_mat = net.weights[layer - 2]
        if layer_inputs_override and layer in layer_inputs_override:
            raw_inputs = layer_inputs_override[layer]
        else:
            raw_inputs = cache.layer_inputs(layer)
        split = first_layer_split and layer == 2
        if split:
            stacked = np.vstack([np.maximum(raw_inputs, 0.0), np.maximum(-raw_inputs, 0.0)])
        else:
            stacked = raw_inputs
        if net.bias_embedded:
            # the bias column is excluded from the scans below, so its
            # activation values here are never read
            a = np.ones((stacked.shape[0], stacked.shape[1] + 1))
            a[:, :-1] = stacked
        else:
            a = np.ascontiguousarray(stacked)
        bias_col = w_mat.cols - 1 if net.bias_embedded else -1
        keep = None if column_keep is None else column_keep.get(layer)

        n_neurons = w_mat.rows
        n_pts = raw_inputs.shape[0]
        s_plus = np.zeros((n_neurons, w_mat.cols))
        s_minus = np.zeros((n_neurons, w_mat.cols))
        z_plus = np.zeros((n_neurons, n_pts))
        z_minus = np.zeros((n_neurons, n_pts))
        for i in range(n_neurons):
            w = _dense_row_from(w_mat, i)
            if keep is not None:
                w = w.copy()
                w[~keep] = 0.0
            sp, den_p = kernels.edge_sensitivities(w, a, 1.0, bias_col)
            sm, den_m = kernels.edge_sensitivities(w, a, -1.0, bias_col)
            s_plus[i], s_minus[i] = sp, sm
            bias_p = bias_m = 0.0
            if net.bias_embedded:
                b = w[bias_col]
                bias_p, bias_m = max(b, 0.0), max(-b, 0.0)
            if split:
                z_plus[i] = den_p[:n_pts] + den_m[n_pts:] + bias_p
                z_minus[i] = den_m[:n_pts] + den_p[n_pts:] + bias_m
            else:
                z_plus[i] = den_p + bias_p
                z_minus[i] = den_m + bias_m
        sum_plus = s_plus.sum(axis=1)
        sum_minus = s_minus.sum(axis=1)
        layers[layer] = LayerSensitivity(
            layer=layer,
            s_plus=s_plus,
            s_minus=s_minus,
            sum_plus=sum_plus,
            sum_minus=sum_minus,
            z_plus=z_plus,
            z_minus=z_minus,
            inactive=(sum_plus + sum_minus) == 0.0,
        )
    return SensitivityProfile(layers=layers, n_points=cache.n_points,
                              first_layer_split=first_layer_split)


def _dense_row_from(w_mat, neuron: int) -> np.ndarray:
    if isinstance(w_mat, DenseMatrix):
        return np.ascontiguousarray(w_mat.data[neuron])
    cols, vals = w_mat.row(neuron)
    row = np.zeros(w_mat.cols)
    row[cols] = vals
    return row


def delta_neuron(z_plus: float, z_minus: float, cap: float = DELTA_CAP_DEFAULT) -> tuple[float, bool]:
    """Cancellation ratio (z+ + z-) / |z+ - z-| of one neuron at one point.

    Both parts zero means the neuron contributes nothing: ratio 1 by
    convention. Exact cancellation with mass present is unbounded; the value
    is capped and flagged so callers can count pathologies.
    """
    if z_plus < 0 or z_minus < 0:
        raise ValueError("sign parts must be non-negative")
    total = z_plus + z_minus
    if total == 0.0:
        return 1.0, False
    denom = abs(z_plus - z_minus)
    if denom == 0.0:
        return cap, True
    return min(total / denom, cap), total / denom > cap


@dataclass
class DeltaEstimates:
    """Empirical cancellation estimates: per-neuron means plus slack, and the
    per-layer maxima that drive the error schedule."""

    kappa: float
    per_neuron: dict[int, np.ndarray]
    per_layer: dict[int, float]
    capped_points: int = 0

    def layer_product(self, layer: int, last: int) -> float:
        """Product of per-layer estimates for layers layer..last (empty = 1)."""
        prod = 1.0
        for l in range(layer, last + 1):
            prod *= self.per_layer[l]
        return prod

    def to_jsonable(self) -> dict:
        return {
            "kappa": self.kappa,
            "per_layer": {str(l): v for l, v in self.per_layer.items()},
            "per_neuron": {str(l): v.tolist() for l, v in self.per_neuron.items()},
            "capped_points": self.capped_points,
        }


def kappa_slack(constants: SensitivityConstants, eta: int, eta_star: int, delta: float) -> float:
    """kappa = sqrt(2 lambda*) (1 + sqrt(2 lambda*) log(8 eta eta* / delta))."""
    root = math.sqrt(2.0 * constants.lambda_star)
    return root * (1.0 + root * math.log(8.0 * eta * eta_star / delta))


def delta_hat(profile: SensitivityProfile, constants: SensitivityConstants,
              eta: int, eta_star: int, delta: float,
              cap: float = DELTA_CAP_DEFAULT,
              neuron_keep: dict[int, np.ndarray] | None = None) -> DeltaEstimates:
    """Per-neuron mean cancellation ratio plus kappa; per-layer maxima.

    neuron_keep restricts the per-layer max to surviving neurons (pruned ones
    still get a value for inspection but do not drive the schedule).
    """
    if profile.n_points == 0:
        raise CorenetError("empty subsample")
    kap = kappa_slack(constants, eta, eta_star, delta)
    per_neuron: dict[int, np.ndarray] = {}
    per_layer: dict[int, float] = {}
    capped = 0
    for layer, ls in profile.layers.items():
        n_neurons, n_pts = ls.z_plus.shape
        vals = np.empty(n_neurons)
        for i in range(n_neurons):
            acc = 0.0
            for p in range(n_pts):
                d, was_capped = delta_neuron(ls.z_plus[i, p], ls.z_minus[i, p], cap)
                acc += d
                capped += int(was_capped)
            vals[i] = acc / n_pts + kap
        per_neuron[layer] = vals
        keep = None if neuron_keep is None else neuron_keep.get(layer)
        eligible = vals if keep is None else vals[keep]
        per_layer[layer] = float(eligible.max()) if eligible.size else 1.0 + kap
    return DeltaEstimates(kappa=kap, per_neuron=per_neuron, per_layer=per_layer,
                          capped_points=capped)


@dataclass(frozen=True)
class EpsilonSchedule:
    """Layer budgets eps_l = eps' / prod_{k=l..L} dhat_k with eps' the
    network budget split over 2(L-1); the L+1 entry is eps' itself."""

    eps: float
    delta: float
    eps_prime: float
    per_layer: dict[int, float]

    def to_jsonable(self) -> dict:
        return {"eps": self.eps, "delta": self.delta, "eps_prime": self.eps_prime,
                "per_layer": {str(l): v for l, v in self.per_layer.items()}}


def epsilon_schedule(eps: float, delta: float, n_layers: int,
                     layer_delta_hats: dict[int, float]) -> EpsilonSchedule:
    """Split the network-level budget across layers.

    Accepts eps up to and including 1 (the degenerate full-budget case used
    by smoke checks).
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must be in (0, 1]")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must be in (0, 1)")
    if n_layers < 2:
        raise CorenetError("need at least one weight layer (L >= 2)")
    for l in range(2, n_layers + 1):
        if layer_delta_hats[l] < 1.0:
            raise ValueError(f"layer {l}: cancellation estimate below 1")
    eps_prime = eps / (2.0 * (n_layers - 1))
    per_layer = {n_layers + 1: eps_prime}
    for l in range(n_layers, 1, -1):
        per_layer[l] = per_layer[l + 1] / layer_delta_hats[l]
    return EpsilonSchedule(eps=eps, delta=delta, eps_prime=eps_prime, per_layer=per_layer)


def subsample_size(eta: int, eta_star: int, delta: float, kprime: float) -> int:
    """ceil(K' log(8 eta eta* / delta)), clamped to at least 1."""
    if eta < 1 or eta_star < 1 or delta <= 0 or kprime <= 0:
        raise ValueError("arguments must be positive")
    return max(1, math.ceil(kprime * math.log(8.0 * eta * eta_star / delta)))


def sample_complexity(sens_sum: float, k: float, eps_layer: float, eta: int, delta: float) -> int:
    """Edge draws per neuron: ceil(8 S K log(8 eta / delta) / eps_layer^2)."""
    if sens_sum <= 0:
        raise CorenetError("no positive mass: sensitivity sum must be > 0")
    if not 0.0 < eps_layer < 1.0:
        raise ValueError("eps_layer must be in (0, 1)")
    return math.ceil(8.0 * sens_sum * k * math.log(8.0 * eta / delta) / (eps_layer * eps_layer))


def profile_json(profile: SensitivityProfile, estimates: DeltaEstimates | None = None) -> str:
    out = {"sensitivities": profile.to_jsonable()}
    if estimates is not None:
        out["delta_estimates"] = estimates.to_jsonable()
    return json.dumps(out, sort_keys=True, indent=2) + "\n"
