"""Pure-numpy reference kernels.

Accumulations run left-to-right (np.cumsum is sequential), so results are
reproducible across runs and invariant to removing terms that are exactly
zero. The compiled backend in _speedups.pyx mirrors the same operation
order; draw counting and mat-vec agree bit-for-bit between backends, the
sensitivity scans to a couple of ulps.
"""
import numpy as np


def matvec_dense(w, v):
    """Row-wise dense mat-vec, each row accumulated left to right."""
    rows = w.shape[0]
    if rows == 0:
        return np.zeros(0)
    prod = w * v[np.newaxis, :]
    if prod.shape[1] == 0:
        return np.zeros(rows)
    return np.cumsum(prod, axis=1)[:, -1]


def matvec_csr(indptr, indices, values, v, n_rows):
    """CSR mat-vec, each row accumulated in stored (column-sorted) order."""
    out = np.zeros(n_rows)
    for i in range(n_rows):
        lo, hi = indptr[i], indptr[i + 1]
        if hi > lo:
            prod = values[lo:hi] * v[indices[lo:hi]]
            out[i] = np.cumsum(prod)[-1]
    return out


def sample_counts(cum, u):
    """Aggregate draws into per-index counts.

    cum is the cumulative probability table (last entry ~1.0), u the uniform
    variates. Index of a draw is the first j with u < cum[j]; draws landing
    past the table (u >= cum[-1] by rounding) go to the last index.
    """
    k = cum.shape[0]
    idx = np.searchsorted(cum, u, side="right")
    np.minimum(idx, k - 1, out=idx)
    return np.bincount(idx, minlength=k).astype(np.int64)


def sample_row(cum, q, w, u):
    """Fused draw-count-reweight: positions with at least one draw and their
    reweighted values count * w / (m q)."""
    counts = sample_counts(cum, u)
    hit = counts > 0
    pos = np.nonzero(hit)[0].astype(np.int64)
    vals = counts[hit] * w[hit] / (u.shape[0] * q[hit])
    return pos, vals


def edge_sensitivities(w, a, sign, exclude):
    """Per-edge sensitivities of one neuron over a batch of activations.

    For the index class {j : sign*w[j] > 0, j != exclude} computes
    contributions p[x, j] = sign*w[j] * a[x, j], the per-point class sums
    den[x] (left-to-right), and s[j] = max over points with den > 0 of
    p[x, j] / den[x]. Returns (s, den) with s dense over all columns,
    zero outside the class.
    """
    n, c = a.shape
    s = np.zeros(c)
    den = np.zeros(n)
    cls = sign * w > 0
    if 0 <= exclude < c:
        cls = cls.copy()
        cls[exclude] = False
    if not cls.any():
        return s, den
    p = a[:, cls] * (sign * w[cls])[np.newaxis, :]
    den = np.cumsum(p, axis=1)[:, -1]
    active = den > 0
    if active.any():
        g = p[active] / den[active, np.newaxis]
        s[cls] = g.max(axis=0)
    return s, den
