"""Importance-sampled row sparsification.

Edges of one sign class are drawn with replacement from q_j = s_j / S,
counts are aggregated, and kept weights are reweighed by w_j / (m q_j) so
the estimator of any fixed dot product stays unbiased. Positive and negative
classes are sampled separately and consolidated; the bias column is never
sampled and is carried over verbatim.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CorenetError, DimensionMismatch


@dataclass(frozen=True)
class RngStream:
    """Independent, addressable randomness: one stream per
    (layer, neuron, sign, trial) cell, so parallel and serial sweeps of the
    same seed draw identical samples."""

    seed: int
    layer: int
    neuron: int
    sign: int = 0
    trial: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(
            self.seed & 0xFFFFFFFFFFFFFFFF,
            spawn_key=(self.layer, self.neuron, self.sign, self.trial),
        )
        return np.random.Generator(np.random.PCG64(ss))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


@dataclass(frozen=True)
class SparseRow:
    """Compressed incoming weights of one neuron."""

    columns: np.ndarray
    values: np.ndarray
    uniform_fallback: bool = False

    def __post_init__(self):
        object.__setattr__(self, "columns", np.asarray(self.columns, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.columns.shape != self.values.shape:
            raise DimensionMismatch("columns/values length mismatch")

    @classmethod
    def _trusted(cls, columns: np.ndarray, values: np.ndarray,
                 uniform_fallback: bool = False) -> "SparseRow":
        """Bypass for internal producers with already-typed aligned arrays."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "columns", columns)
        object.__setattr__(obj, "values", values)
        object.__setattr__(obj, "uniform_fallback", uniform_fallback)
        return obj

    @property
    def nnz(self) -> int:
        return int(self.columns.shape[0])

    def dot(self, vec: np.ndarray) -> float:
        if self.nnz == 0:
            return 0.0
        return float(np.cumsum(self.values * vec[self.columns])[-1])

    def to_dense(self, cols: int) -> np.ndarray:
        out = np.zeros(cols)
        out[self.columns] = self.values
        return out


@dataclass(frozen=True)
class SamplingDistribution:
    """q over an index set with its cumulative table for inverse-CDF draws."""

    indices: np.ndarray
    q: np.ndarray
    cumulative: np.ndarray
    uniform_fallback: bool = False


def make_distribution(indices: np.ndarray, sens: np.ndarray) -> SamplingDistribution:
    """q_j = s_j / S; an all-zero sensitivity row falls back to uniform."""
    indices = np.asarray(indices, dtype=np.int64)
    sens = np.asarray(sens, dtype=np.float64)
    if indices.shape != sens.shape or indices.size == 0:
        raise DimensionMismatch("need matching, non-empty indices and sensitivities")
    if (sens < 0).any():
        raise ValueError("sensitivities must be non-negative")
    total = float(sens.sum())
    if total <= 0.0:
        q = np.full(indices.size, 1.0 / indices.size)
        return SamplingDistribution(indices, q, np.cumsum(q), uniform_fallback=True)
    q = sens / total
    return SamplingDistribution(indices, q, np.cumsum(q))


def draw_row(dist: SamplingDistribution, weights: np.ndarray, m: int, rng) -> SparseRow:
    """One with-replacement draw from a prebuilt distribution, reweighted for
    unbiasedness: kept value is count_j * w_j / (m q_j). weights align with
    dist.indices. This is the randomized step; amplification trials and
    Monte Carlo loops reuse one distribution across draws."""
    gen = _as_generator(rng)
    u = gen.random(m)
    pos, values = kernels.sample_row(dist.cumulative, dist.q, weights, u)
    return SparseRow._trusted(dist.indices[pos], values,
                              uniform_fallback=dist.uniform_fallback)


def sparsify(indices: np.ndarray, weights: np.ndarray, m: int, sens: np.ndarray,
             rng) -> SparseRow:
    """Draw m edges with replacement from q = s/S and reweight for
    unbiasedness. Zero-sensitivity edges are never drawn; S = 0 falls back
    to uniform q and flags the row.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if m < 1:
        raise ValueError("need at least one draw")
    if (weights <= 0).any():
        raise ValueError("sparsify expects strictly positive weights (fold the sign)")
    return draw_row(make_distribution(indices, sens), weights, m, rng)


def exact_row(indices: np.ndarray, weights: np.ndarray) -> SparseRow:
    """Degenerate sparsification keeping the class verbatim; used when the
    theoretical draw count already exceeds the class size."""
    return SparseRow(np.asarray(indices, dtype=np.int64), np.asarray(weights, dtype=np.float64))


def consolidate(pos: SparseRow | None, neg: SparseRow | None,
                bias_col: int | None = None, bias_val: float = 0.0) -> SparseRow:
    """Merge the sign-class rows into w_hat = w_hat_plus - w_hat_minus,
    dropping entries that cancel exactly, and append the retained bias."""
    cols_parts, vals_parts = [], []
    fallback = False
    if pos is not None and pos.nnz:
        cols_parts.append(pos.columns)
        vals_parts.append(pos.values)
        fallback |= pos.uniform_fallback
    if neg is not None and neg.nnz:
        cols_parts.append(neg.columns)
        vals_parts.append(-neg.values)
        fallback |= neg.uniform_fallback
    if bias_col is not None and bias_val != 0.0:
        cols_parts.append(np.array([bias_col], dtype=np.int64))
        vals_parts.append(np.array([bias_val]))
    if not cols_parts:
        return SparseRow(np.zeros(0, dtype=np.int64), np.zeros(0), uniform_fallback=fallback)
    cols = np.concatenate(cols_parts)
    vals = np.concatenate(vals_parts)
    order = np.argsort(cols, kind="stable")
    cols, vals = cols[order], vals[order]
    if cols.size < 2 or np.all(np.diff(cols) > 0):
        keep = vals != 0.0
        return SparseRow._trusted(cols[keep], vals[keep], uniform_fallback=fallback)
    # sign classes are disjoint, but be safe about repeated columns
    uniq, inverse = np.unique(cols, return_inverse=True)
    summed = np.zeros(uniq.size)
    np.add.at(summed, inverse, vals)
    keep = summed != 0.0
    return SparseRow(uniq[keep], summed[keep], uniform_fallback=fallback)


@dataclass
class RowStats:
    uniform_fallbacks: int = 0
    exact_classes: int = 0
    draws: int = 0

    def merge(self, other: "RowStats") -> None:
        self.uniform_fallbacks += other.uniform_fallbacks
        self.exact_classes += other.exact_classes
        self.draws += other.draws


def sparsify_neuron_row(w: np.ndarray, *, bias_col: int | None,
                        s_plus: np.ndarray, s_minus: np.ndarray,
                        m_plus: int, m_minus: int,
                        stream_factory, trial: int = 0,
                        allow_exact: bool = False,
                        keep_cols: np.ndarray | None = None) -> tuple[SparseRow, RowStats]:
    """Sparsify one neuron's incoming row: each sign class sampled against
    its sensitivities (the first layer feeds sensitivities taken over the
    sign-split input set through the same path), then consolidated with the
    deterministically kept bias.

    A sampled sign-class row serves every estimator role it appears in; with
    sign-split inputs both the positive- and negative-part estimates of one
    class share the same draw, which is what lets the four part-estimates
    consolidate into a single weight row.
    """
    cols = np.arange(w.shape[0])
    admissible = np.ones(w.shape[0], dtype=bool)
    if keep_cols is not None:
        admissible &= keep_cols
    if bias_col is not None:
        admissible[bias_col] = False
    stats = RowStats()
    pos_row = neg_row = None

    plus_mask = (w > 0) & admissible
    if plus_mask.any() and m_plus > 0:
        idx = cols[plus_mask]
        if allow_exact and m_plus >= idx.size:
            pos_row = exact_row(idx, w[idx])
            stats.exact_classes += 1
        else:
            pos_row = sparsify(idx, w[idx], m_plus, s_plus[idx],
                               stream_factory(0, trial))
            stats.uniform_fallbacks += pos_row.uniform_fallback
            stats.draws += m_plus

    minus_mask = (w < 0) & admissible
    if minus_mask.any() and m_minus > 0:
        idx = cols[minus_mask]
        if allow_exact and m_minus >= idx.size:
            neg_row = exact_row(idx, -w[idx])
            stats.exact_classes += 1
        else:
            neg_row = sparsify(idx, -w[idx], m_minus, s_minus[idx],
                               stream_factory(1, trial))
            stats.uniform_fallbacks += neg_row.uniform_fallback
            stats.draws += m_minus

    bias_val = w[bias_col] if bias_col is not None else 0.0
    return consolidate(pos_row, neg_row, bias_col, bias_val), stats


def row_relative_error(row: SparseRow, w_row: np.ndarray, a_hat: np.ndarray,
                       a: np.ndarray) -> float:
    """|<w_hat, a_hat> / <w, a> - 1| for one point."""
    den = float(np.dot(w_row, a))
    if den == 0.0:
        raise CorenetError("zero denominator: original pre-activation vanishes")
    return abs(row.dot(a_hat) / den - 1.0)


def mean_row_error(row: SparseRow, w_row: np.ndarray, a_hat_batch: np.ndarray,
                   a_batch: np.ndarray) -> tuple[float, int]:
    """Mean relative error over a point batch; zero-denominator points are
    skipped and counted. Returns (mean over survivors, skipped); an entirely
    skipped batch yields (inf, n)."""
    errs = []
    skipped = 0
    for a_hat, a in zip(a_hat_batch, a_batch):
        den = float(np.dot(w_row, a))
        if den == 0.0:
            skipped += 1
            continue
        errs.append(abs(row.dot(a_hat) / den - 1.0))
    if not errs:
        return float("inf"), skipped
    return float(np.mean(errs)), skipped
