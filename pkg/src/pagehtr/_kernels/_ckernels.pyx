# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: edit distance and convolution patch reshuffling."""

import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef fused real:
    float
    double


cdef Py_ssize_t _lev(const cnp.uint32_t* a, Py_ssize_t n, const cnp.uint32_t* b,
                     Py_ssize_t m, Py_ssize_t* row) noexcept nogil:
    cdef Py_ssize_t i, j, prev, cur, best
    for j in range(m + 1):
        row[j] = j
    for i in range(1, n + 1):
        prev = row[0]
        row[0] = i
        for j in range(1, m + 1):
            cur = row[j]
            best = prev + (a[i - 1] != b[j - 1])
            if cur + 1 < best:
                best = cur + 1
            if row[j - 1] + 1 < best:
                best = row[j - 1] + 1
            row[j] = best
            prev = cur
    return row[m]


def _codes(s):
    return np.frombuffer(s.encode("utf-32-le"), dtype=np.uint32)


def levenshtein(str a, str b):
    cdef const cnp.uint32_t[::1] ca, cb
    cdef Py_ssize_t* row
    cdef Py_ssize_t d
    if len(a) < len(b):
        a, b = b, a
    if len(b) == 0:
        return len(a)
    ca = _codes(a)
    cb = _codes(b)
    row = <Py_ssize_t*> malloc((cb.shape[0] + 1) * sizeof(Py_ssize_t))
    if row == NULL:
        raise MemoryError()
    try:
        d = _lev(&ca[0], ca.shape[0], &cb[0], cb.shape[0], row)
    finally:
        free(row)
    return d


def levenshtein_matrix(const cnp.uint32_t[:, ::1] a, const cnp.int64_t[::1] alen,
                       const cnp.uint32_t[:, ::1] b, const cnp.int64_t[::1] blen):
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j
    cdef Py_ssize_t width = b.shape[1]
    out = np.empty((n, m), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] o = out
    cdef Py_ssize_t* row = <Py_ssize_t*> malloc((width + 1) * sizeof(Py_ssize_t))
    if row == NULL:
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                for j in range(m):
                    o[i, j] = <cnp.int32_t> _lev(&a[i, 0], alen[i], &b[j, 0], blen[j], row)
    finally:
        free(row)
    return out


def im2col(const real[:, :, :, ::1] x, int kh, int kw, int stride):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t Ho = (H - kh) // stride + 1, Wo = (W - kw) // stride + 1
    cdef Py_ssize_t b, c, i, j, y, xx, k, l
    dtype = np.float32 if real is float else np.float64
    out = np.empty((B, C * kh * kw, Ho * Wo), dtype=dtype)
    cdef real[:, :, ::1] o = out
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        k = (c * kh + i) * kw + j
                        l = 0
                        for y in range(Ho):
                            for xx in range(Wo):
                                o[b, k, l] = x[b, c, y * stride + i, xx * stride + j]
                                l += 1
    return out


def col2im(const real[:, :, ::1] cols, Py_ssize_t C, Py_ssize_t H, Py_ssize_t W, int kh, int kw, int stride):
    cdef Py_ssize_t B = cols.shape[0]
    cdef Py_ssize_t Ho = (H - kh) // stride + 1, Wo = (W - kw) // stride + 1
    cdef Py_ssize_t b, c, i, j, y, xx, k, l
    dtype = np.float32 if real is float else np.float64
    out = np.zeros((B, C, H, W), dtype=dtype)
    cdef real[:, :, :, ::1] o = out
    with nogil:
        for b in range(B):
            for c in range(C):
                for i in range(kh):
                    for j in range(kw):
                        k = (c * kh + i) * kw + j
                        l = 0
                        for y in range(Ho):
                            for xx in range(Wo):
                                o[b, c, y * stride + i, xx * stride + j] += cols[b, k, l]
                                l += 1
    return out
