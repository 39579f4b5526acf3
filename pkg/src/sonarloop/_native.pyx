# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled inner loop for cross-cloud feature similarity.

For per-point feature vectors a (n values) and b (m values) the score of one
(i, j) pair is ``1 - |b_j - a_i| / (max(|a_i|, |b_j|) + eps)``; the kernel
returns the plain sum over all n*m pairs.  Division is hoisted out of the
inner loop by precomputing 1/(|v| + eps) for both sides, and row sums are
accumulated into a long double so the result tracks an exactly-summed oracle
to well below 1e-12 relative error.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef double _pair_sum(const double* a, const double* b,
                      Py_ssize_t n, Py_ssize_t m,
                      double* absb, double* invb, double eps) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double ai, absa, inva, d
    cdef double row
    cdef long double total = 0.0
    for j in range(m):
        absb[j] = fabs(b[j])
        invb[j] = 1.0 / (absb[j] + eps)
    for i in range(n):
        ai = a[i]
        absa = fabs(ai)
        inva = 1.0 / (absa + eps)
        row = 0.0
        for j in range(m):
            d = fabs(b[j] - ai)
            row += 1.0 - d * (inva if absa >= absb[j] else invb[j])
        total += row
    return <double> total


def similarity_sum(const double[::1] a, const double[::1] b, double eps):
    """Sum of pairwise similarities between two 1-D feature maps."""
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0]
    if n == 0 or m == 0:
        raise ValueError("similarity_sum requires non-empty inputs")
    scratch = np.empty((2, m), dtype=np.float64)
    cdef double[:, ::1] sv = scratch
    cdef double out
    with nogil:
        out = _pair_sum(&a[0], &b[0], n, m, &sv[0, 0], &sv[1, 0], eps)
    return out


def cross_similarity_sums(const double[:, ::1] a, const double[:, ::1] b, double eps):
    """Row-wise similarity sums for stacked feature maps a (k, n), b (k, m)."""
    cdef Py_ssize_t k = a.shape[0], n = a.shape[1], m = b.shape[1]
    if a.shape[0] != b.shape[0]:
        raise ValueError("feature map stacks must have matching row counts")
    if n == 0 or m == 0:
        raise ValueError("cross_similarity_sums requires non-empty inputs")
    out = np.empty(k, dtype=np.float64)
    scratch = np.empty((2, m), dtype=np.float64)
    cdef double[::1] ov = out
    cdef double[:, ::1] sv = scratch
    cdef Py_ssize_t f
    with nogil:
        for f in range(k):
            ov[f] = _pair_sum(&a[f, 0], &b[f, 0], n, m,
                              &sv[0, 0], &sv[1, 0], eps)
    return out
