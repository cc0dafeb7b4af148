# cython: language_level=3
"""Compiled versions of the functions in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log
from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef uint64_t FNV_OFFSET_BASIS = 0xCBF29CE484222325ULL
cdef uint64_t FNV_PRIME = 0x100000001B3ULL


def fnv1a64(const unsigned char[:] data):
    cdef uint64_t h = FNV_OFFSET_BASIS
    cdef Py_ssize_t i
    for i in range(data.shape[0]):
        h = (h ^ data[i]) * FNV_PRIME
    return h


def hash_token_ngrams(tokens, int minn, int maxn, uint64_t buckets):
    cdef list raws = []
    cdef Py_ssize_t total = 0, m, n, cap, i, j, pos, k
    cdef bytes raw
    cdef const unsigned char* p
    cdef Py_ssize_t length
    for token in tokens:
        raw = ("<" + token + ">").encode("utf-8", "surrogatepass")
        raws.append(raw)
        p = raw
        length = len(raw)
        m = 0
        for i in range(length):
            if (p[i] & 0xC0) != 0x80:
                m += 1
        for n in range(minn, maxn + 1):
            if m - n + 1 > 0:
                total += m - n + 1
    out = np.empty(total, dtype=np.int64)
    cdef int64_t[::1] view = out
    cdef Py_ssize_t* starts
    cdef uint64_t h
    pos = 0
    for raw in raws:
        p = raw
        length = len(raw)
        starts = <Py_ssize_t*> malloc((length + 1) * sizeof(Py_ssize_t))
        if starts == NULL:
            raise MemoryError()
        m = 0
        for i in range(length):
            if (p[i] & 0xC0) != 0x80:
                starts[m] = i
                m += 1
        starts[m] = length
        for i in range(m):
            h = FNV_OFFSET_BASIS
            cap = maxn if maxn < m - i else m - i
            for n in range(1, cap + 1):
                for j in range(starts[i + n - 1], starts[i + n]):
                    h = (h ^ p[j]) * FNV_PRIME
                if n >= minn:
                    view[pos] = <int64_t>(h % buckets)
                    pos += 1
        free(starts)
    return out


def sgd_epoch(float[:, ::1] input_table, float[:, ::1] output_table,
              const int64_t[::1] ids, const int64_t[::1] offsets,
              const int64_t[::1] targets, const int64_t[::1] order,
              double lr0, int64_t t, int64_t total):
    cdef Py_ssize_t k = output_table.shape[0]
    cdef Py_ssize_t dim = output_table.shape[1]
    cdef double* hidden = <double*> malloc(dim * sizeof(double))
    cdef double* grad = <double*> malloc(dim * sizeof(double))
    cdef double* logits = <double*> malloc(k * sizeof(double))
    if hidden == NULL or grad == NULL or logits == NULL:
        free(hidden); free(grad); free(logits)
        raise MemoryError()
    cdef double loss_sum = 0.0, lr, zmax, zy, norm, scale, e
    cdef Py_ssize_t d, doc, lo, hi, n, q, r, c
    cdef int64_t row, y
    try:
        with nogil:
            for d in range(order.shape[0]):
                doc = order[d]
                lo = offsets[doc]
                hi = offsets[doc + 1]
                n = hi - lo
                lr = lr0 * (1.0 - <double>t / <double>total)
                for c in range(dim):
                    hidden[c] = 0.0
                for q in range(lo, hi):
                    row = ids[q]
                    for c in range(dim):
                        hidden[c] += input_table[row, c]
                for c in range(dim):
                    hidden[c] /= n
                zmax = -1e300
                for r in range(k):
                    e = 0.0
                    for c in range(dim):
                        e += output_table[r, c] * hidden[c]
                    logits[r] = e
                    if e > zmax:
                        zmax = e
                y = targets[doc]
                zy = logits[y] - zmax
                norm = 0.0
                for r in range(k):
                    logits[r] = exp(logits[r] - zmax)
                    norm += logits[r]
                loss_sum += log(norm) - zy
                for c in range(dim):
                    grad[c] = 0.0
                for r in range(k):
                    e = logits[r] / norm
                    if r == y:
                        e -= 1.0
                    logits[r] = e
                    for c in range(dim):
                        grad[c] += output_table[r, c] * e
                for r in range(k):
                    e = lr * logits[r]
                    for c in range(dim):
                        output_table[r, c] -= <float>(e * hidden[c])
                scale = lr / n
                for c in range(dim):
                    grad[c] = scale * grad[c]
                for q in range(lo, hi):
                    row = ids[q]
                    for c in range(dim):
                        input_table[row, c] -= <float>grad[c]
                t += 1
    finally:
        free(hidden)
        free(grad)
        free(logits)
    return loss_sum, t
