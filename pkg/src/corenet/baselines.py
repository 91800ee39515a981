"""Competing sparsification schemes at matched retention budgets.

Uniform edge sampling rides the exact same per-neuron machinery as the
sensitivity sampler with q replaced, so comparisons isolate the sampling
distribution. The entrywise l1 / l2 / hybrid schemes sample whole-matrix
entries from norm-based distributions; SVD keeps rank-r factor pairs with
size counted as stored factor non-zeros.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import CorenetError, DimensionMismatch
from .linalg import DenseMatrix, SparseRowMatrix, relu, truncated_svd
from .network import Network
from .sparsifier import SparseRow, consolidate, sparsify

ENTRYWISE_SCHEMES = ("l1", "l2", "l1l2")


def uniform_sparsify_neuron(w: np.ndarray, m: int, rng,
                            bias_col: int | None = None) -> SparseRow:
    """Uniform-q counterpart of the sensitivity sampler: m draws per sign
    class with q = 1/|class|, reweighted, consolidated with the kept bias."""
    w = np.asarray(w, dtype=np.float64)
    admissible = np.ones(w.shape[0], dtype=bool)
    if bias_col is not None:
        admissible[bias_col] = False
    if not (w[admissible] != 0).any():
        raise CorenetError("empty row: nothing to sample")
    if m < 1:
        raise ValueError("need at least one draw")
    cols = np.arange(w.shape[0])
    pos = neg = None
    plus = (w > 0) & admissible
    if plus.any():
        idx = cols[plus]
        pos = sparsify(idx, w[idx], m, np.ones(idx.size), rng)
    minus = (w < 0) & admissible
    if minus.any():
        idx = cols[minus]
        neg = sparsify(idx, -w[idx], m, np.ones(idx.size), rng)
    bias_val = w[bias_col] if bias_col is not None else 0.0
    return consolidate(pos, neg, bias_col, bias_val)


def entrywise_probabilities(w: DenseMatrix, scheme: str) -> np.ndarray:
    """Sampling distribution over matrix entries: |w|/l1, w^2/F^2, or their
    mean for the hybrid scheme."""
    a = w.data
    l1 = np.abs(a).sum()
    f2 = (a * a).sum()
    if l1 == 0.0:
        raise CorenetError("all-zero matrix")
    if scheme == "l1":
        return np.abs(a) / l1
    if scheme == "l2":
        return a * a / f2
    if scheme == "l1l2":
        return 0.5 * (a * a / f2 + np.abs(a) / l1)
    raise ValueError(f"unknown entrywise scheme {scheme!r}")


def entrywise_sparsify(w: DenseMatrix, n_samples: int, scheme: str, rng) -> SparseRowMatrix:
    """Sample n_samples entries i.i.d. from the scheme's distribution and
    reweight each kept entry by count * w_ij / (n_samples * p_ij)."""
    if n_samples < 1:
        raise ValueError("need at least one draw")
    p = entrywise_probabilities(w, scheme).ravel()
    support = p > 0
    idx_support = np.nonzero(support)[0]
    cum = np.cumsum(p[support])
    gen = rng.generator() if hasattr(rng, "generator") else rng
    u = gen.random(n_samples)
    pos, values = kernels.sample_row(cum, p[support], w.data.ravel()[support], u)
    flat_idx = idx_support[pos]
    # flat_idx is sorted, so per-row columns stay strictly increasing
    r_idx, c_idx = np.divmod(flat_idx, w.cols)
    indptr = np.zeros(w.rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(r_idx, minlength=w.rows), out=indptr[1:])
    return SparseRowMatrix._trusted(w.rows, w.cols, indptr,
                                    c_idx.astype(np.int64), values)


@dataclass(frozen=True)
class SvdNetwork:
    """Network with each weight matrix held as rank-r factors and applied as
    two mat-vecs. Singular values are absorbed into the left factors, which
    is also how size is counted."""

    u_scaled: tuple[np.ndarray, ...]  # per layer (rows, r), columns u_i * sigma_i
    v: tuple[np.ndarray, ...]  # per layer (cols, r)
    bias_embedded: bool

    @property
    def input_dim(self) -> int:
        return self.v[0].shape[0] - (1 if self.bias_embedded else 0)

    @property
    def output_dim(self) -> int:
        return self.u_scaled[-1].shape[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        a = np.asarray(x, dtype=np.float64)
        last = len(self.u_scaled) - 1
        for k, (us, v) in enumerate(zip(self.u_scaled, self.v)):
            a_aug = np.append(a, 1.0) if self.bias_embedded else a
            t = kernels.matvec_dense(np.ascontiguousarray(v.T), a_aug)
            z = kernels.matvec_dense(np.ascontiguousarray(us), t)
            a = z if k == last else relu(z)
        return a

    def size(self) -> int:
        total = 0
        for us, v in zip(self.u_scaled, self.v):
            total += int(np.count_nonzero(us)) + int(np.count_nonzero(v))
        return total


def svd_compress(net: Network, ranks: list[int]) -> tuple[SvdNetwork, int]:
    """Rank-r factorization of every layer; returns the factored network and
    its size sum(nnz(u_i) + nnz(v_i))."""
    if len(ranks) != len(net.weights):
        raise DimensionMismatch("one rank per weight layer")
    us_list, v_list = [], []
    for w, r in zip(net.weights, ranks):
        dense = w if isinstance(w, DenseMatrix) else w.to_dense()
        factors = truncated_svd(dense, r)
        us_list.append(factors.u * factors.sigma)
        v_list.append(factors.v)
    svd_net = SvdNetwork(tuple(us_list), tuple(v_list), net.bias_embedded)
    return svd_net, svd_net.size()


def svd_ranks_for_fraction(net: Network, fraction: float) -> list[int]:
    """Per-layer ranks whose factor storage roughly matches the budget."""
    ranks = []
    for w in net.weights:
        per_rank = w.rows + w.cols
        r = int(round(fraction * w.nnz() / per_rank))
        ranks.append(max(1, min(r, min(w.rows, w.cols))))
    return ranks


def entrywise_compress(net: Network, fraction: float, scheme: str, rng) -> Network:
    """Per-layer entrywise sampling at a retention budget. The draw count is
    inflated so the expected number of distinct sampled entries matches the
    budget (duplicate draws would otherwise undershoot it)."""
    from .compressor import draws_for_expected_distinct

    weights = []
    for w in net.weights:
        dense = w if isinstance(w, DenseMatrix) else w.to_dense()
        budget = int(np.ceil(fraction * dense.nnz()))
        p = entrywise_probabilities(dense, scheme).ravel()
        n_samples = draws_for_expected_distinct(p, budget)
        weights.append(entrywise_sparsify(dense, max(n_samples, 1), scheme, rng))
    return Network(tuple(weights), bias_embedded=net.bias_embedded)
