# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled CSR matvec kernel (the hot loop inside the iterative solvers)."""

from libc.stdint cimport int32_t, int64_t


def csr_matvec(const int64_t[::1] indptr, const int32_t[::1] indices,
               const double[::1] data, const double[::1] x,
               double[::1] out):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i
    cdef int64_t k, k0, k1
    cdef double acc
    for i in range(n):
        acc = 0.0
        k0 = indptr[i]
        k1 = indptr[i + 1]
        for k in range(k0, k1):
            acc += data[k] * x[indices[k]]
        out[i] = acc
