# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; semantics match kernels._ref exactly (same accumulation
order, same draw-to-index rule)."""
import numpy as np

cimport numpy as cnp

cnp.import_array()


def matvec_dense(const double[:, ::1] w, const double[::1] v):
    cdef Py_ssize_t rows = w.shape[0]
    cdef Py_ssize_t cols = w.shape[1]
    out_arr = np.zeros(rows)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(rows):
        acc = 0.0
        for j in range(cols):
            acc = acc + w[i, j] * v[j]
        out[i] = acc
    return out_arr


def matvec_csr(const long long[::1] indptr, const long long[::1] indices,
               const double[::1] values, const double[::1] v, Py_ssize_t n_rows):
    out_arr = np.zeros(n_rows)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef long long p
    cdef double acc
    for i in range(n_rows):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc = acc + values[p] * v[indices[p]]
        out[i] = acc
    return out_arr


def sample_counts(const double[::1] cum, const double[::1] u):
    cdef Py_ssize_t k = cum.shape[0]
    cdef Py_ssize_t m = u.shape[0]
    out_arr = np.zeros(k, dtype=np.int64)
    cdef long long[::1] out = out_arr
    cdef Py_ssize_t t, lo, hi, mid
    cdef double x
    for t in range(m):
        x = u[t]
        # upper bound: first index with x < cum[index]
        lo = 0
        hi = k
        while lo < hi:
            mid = (lo + hi) >> 1
            if cum[mid] <= x:
                lo = mid + 1
            else:
                hi = mid
        if lo >= k:
            lo = k - 1
        out[lo] += 1
    return out_arr


def sample_row(const double[::1] cum, const double[::1] q, const double[::1] w,
               const double[::1] u):
    """Fused draw-count-reweight: positions with at least one draw and their
    reweighted values count * w / (m q)."""
    cdef Py_ssize_t k = cum.shape[0]
    cdef Py_ssize_t m = u.shape[0]
    counts_arr = np.zeros(k, dtype=np.int64)
    cdef long long[::1] counts = counts_arr
    cdef Py_ssize_t t, lo, hi, mid, n_hit, j
    cdef double x
    for t in range(m):
        x = u[t]
        lo = 0
        hi = k
        while lo < hi:
            mid = (lo + hi) >> 1
            if cum[mid] <= x:
                lo = mid + 1
            else:
                hi = mid
        if lo >= k:
            lo = k - 1
        counts[lo] += 1
    n_hit = 0
    for j in range(k):
        if counts[j] > 0:
            n_hit += 1
    pos_arr = np.empty(n_hit, dtype=np.int64)
    vals_arr = np.empty(n_hit)
    cdef long long[::1] pos = pos_arr
    cdef double[::1] vals = vals_arr
    cdef Py_ssize_t out = 0
    for j in range(k):
        if counts[j] > 0:
            pos[out] = j
            vals[out] = counts[j] * w[j] / (m * q[j])
            out += 1
    return pos_arr, vals_arr


def edge_sensitivities(const double[::1] w, const double[:, ::1] a, double sign,
                       Py_ssize_t exclude):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t c = a.shape[1]
    s_arr = np.zeros(c)
    den_arr = np.zeros(n)
    cdef double[::1] s = s_arr
    cdef double[::1] den = den_arr
    cdef Py_ssize_t x, j, t, k
    cdef double acc, g, inv
    # collect the sign class once; the per-point scans touch only members
    cls_arr = np.empty(c, dtype=np.int64)
    wcls_arr = np.empty(c)
    cdef long long[::1] cls = cls_arr
    cdef double[::1] wcls = wcls_arr
    k = 0
    for j in range(c):
        if j != exclude and sign * w[j] > 0.0:
            cls[k] = j
            wcls[k] = sign * w[j]
            k += 1
    for x in range(n):
        acc = 0.0
        for t in range(k):
            acc = acc + wcls[t] * a[x, cls[t]]
        den[x] = acc
        if acc > 0.0:
            inv = 1.0 / acc
            for t in range(k):
                j = cls[t]
                g = wcls[t] * a[x, j] * inv
                if g > s[j]:
                    s[j] = g
    return s_arr, den_arr
