# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in :mod:`specrich._pykernels`.

Loops run without the GIL so callers can evaluate grids from several
threads.  Signatures and results match the numpy fallback.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, fabs, NAN

cnp.import_array()

cdef double[3] _JITTER = [1e-10, 1e-9, 1e-8]


def resample_weights(src_centers, tgt_centers, tgt_sigmas, double truncate):
    cdef const double[::1] src = np.ascontiguousarray(src_centers, dtype=np.float64)
    cdef const double[::1] tgt = np.ascontiguousarray(tgt_centers, dtype=np.float64)
    cdef const double[::1] sig = np.ascontiguousarray(tgt_sigmas, dtype=np.float64)
    cdef Py_ssize_t nt = tgt.shape[0], ns = src.shape[0], b, i
    out = np.zeros((nt, ns), dtype=np.float64)
    cdef double[:, ::1] w = out
    cdef double d, total
    with nogil:
        for b in range(nt):
            total = 0.0
            for i in range(ns):
                d = src[i] - tgt[b]
                if truncate >= 0 and fabs(d) > truncate * sig[b]:
                    continue
                w[b, i] = exp(-0.5 * (d / sig[b]) * (d / sig[b]))
                total += w[b, i]
            if total > 0:
                for i in range(ns):
                    w[b, i] /= total
    return out


cdef inline void _gram(const double[:, ::1] A, const double[:, ::1] B,
                       double sigma2, double length_scale,
                       double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, c, na = A.shape[0], nb = B.shape[0], k = A.shape[1]
    cdef double dot, sq, t, inv = 1.0 / (2.0 * length_scale * length_scale)
    for i in range(na):
        for j in range(nb):
            dot = 0.0
            sq = 0.0
            for c in range(k):
                dot += A[i, c] * B[j, c]
                t = A[i, c] - B[j, c]
                sq += t * t
            out[i, j] = dot + sigma2 + exp(-sq * inv)


def composite_gram(A, B, double sigma2, double length_scale):
    cdef const double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        _gram(a, b, sigma2, length_scale, o)
    return out


cdef int _cholesky(double[:, ::1] M, Py_ssize_t n) noexcept nogil:
    """In-place lower Cholesky; returns 0 on success, -1 if not positive definite."""
    cdef Py_ssize_t i, j, c
    cdef double s
    for j in range(n):
        s = M[j, j]
        for c in range(j):
            s -= M[j, c] * M[j, c]
        if not (s > 0.0):
            return -1
        M[j, j] = sqrt(s)
        for i in range(j + 1, n):
            s = M[i, j]
            for c in range(j):
                s -= M[i, c] * M[j, c]
            M[i, j] = s / M[j, j]
    return 0


cdef int _factor(const double[:, ::1] base, double noise, double[:, ::1] work,
                 Py_ssize_t n) noexcept nogil:
    """Factor base + noise*I into ``work``, retrying with escalating jitter."""
    cdef Py_ssize_t i, j, attempt
    cdef double trace = n * noise, jitter
    for i in range(n):
        trace += base[i, i]
    for attempt in range(4):
        jitter = 0.0 if attempt == 0 else _JITTER[attempt - 1] * trace / n
        for i in range(n):
            for j in range(i + 1):
                work[i, j] = base[i, j]
            work[i, i] += noise + jitter
        if _cholesky(work, n) == 0:
            return 0
    return -1


def kernel_grid_rmse(Z_train, y_train, Z_val, y_val, sigma2s, lengths, noises, bint center):
    cdef const double[:, ::1] zt = np.ascontiguousarray(Z_train, dtype=np.float64)
    cdef const double[:, ::1] zv = np.ascontiguousarray(Z_val, dtype=np.float64)
    cdef const double[::1] yt = np.ascontiguousarray(y_train, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y_val, dtype=np.float64)
    cdef const double[::1] s2 = np.ascontiguousarray(sigma2s, dtype=np.float64)
    cdef const double[::1] ls = np.ascontiguousarray(lengths, dtype=np.float64)
    cdef const double[::1] ns = np.ascontiguousarray(noises, dtype=np.float64)
    cdef Py_ssize_t n = zt.shape[0], m = zv.shape[0]
    cdef Py_ssize_t S = s2.shape[0], L = ls.shape[0], D = ns.shape[0]
    cdef Py_ssize_t a, b, d, i, j
    cdef double offset = 0.0, acc, err, sse

    out = np.empty((S, L, D), dtype=np.float64)
    cdef double[:, :, ::1] res = out
    base_arr = np.empty((n, n), dtype=np.float64)
    cross_arr = np.empty((m, n), dtype=np.float64)
    work_arr = np.empty((n, n), dtype=np.float64)
    yc_arr = np.empty(n, dtype=np.float64)
    alpha_arr = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] base = base_arr
    cdef double[:, ::1] cross = cross_arr
    cdef double[:, ::1] work = work_arr
    cdef double[::1] yc = yc_arr
    cdef double[::1] alpha = alpha_arr

    with nogil:
        if center:
            for i in range(n):
                offset += yt[i]
            offset /= n
        for i in range(n):
            yc[i] = yt[i] - offset
        for a in range(S):
            for b in range(L):
                _gram(zt, zt, s2[a], ls[b], base)
                _gram(zv, zt, s2[a], ls[b], cross)
                for d in range(D):
                    if _factor(base, ns[d], work, n) != 0:
                        res[a, b, d] = NAN
                        continue
                    # forward then backward substitution
                    for i in range(n):
                        acc = yc[i]
                        for j in range(i):
                            acc -= work[i, j] * alpha[j]
                        alpha[i] = acc / work[i, i]
                    for i in range(n - 1, -1, -1):
                        acc = alpha[i]
                        for j in range(i + 1, n):
                            acc -= work[j, i] * alpha[j]
                        alpha[i] = acc / work[i, i]
                    sse = 0.0
                    for i in range(m):
                        acc = offset
                        for j in range(n):
                            acc += cross[i, j] * alpha[j]
                        err = acc - yv[i]
                        sse += err * err
                    res[a, b, d] = sqrt(sse / m)
    return out
