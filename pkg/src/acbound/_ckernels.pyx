# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels; see _kernels_py for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t

cnp.import_array()

cdef extern from *:
    int __builtin_popcountll(unsigned long long) nogil


def greedy_code(int b, int min_hamming):
    from acbound._kernels_py import ball_masks
    if min_hamming <= 1:
        return np.arange(2**b, dtype=np.uint64)
    cdef uint64_t[::1] masks = ball_masks(b, min_hamming - 1)
    cdef Py_ssize_t nmask = masks.shape[0]
    cdef uint64_t size = (<uint64_t>1) << b
    cdef cnp.uint8_t[::1] forbidden = np.zeros(size, dtype=np.uint8)
    out = np.empty(size, dtype=np.uint64)
    cdef uint64_t[::1] acc = out
    cdef uint64_t c
    cdef Py_ssize_t k, n = 0
    with nogil:
        for c in range(size):
            if not forbidden[c]:
                acc[n] = c
                n += 1
                for k in range(nmask):
                    forbidden[c ^ masks[k]] = 1
    return out[:n].copy()


def hamming_to_all(words, row):
    cdef uint64_t[:, ::1] W = np.ascontiguousarray(np.atleast_2d(words), dtype=np.uint64)
    cdef uint64_t[::1] r = np.ascontiguousarray(row, dtype=np.uint64).reshape(-1)
    out = np.empty(W.shape[0], dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef Py_ssize_t i, k, nw = W.shape[1]
    cdef int64_t d
    with nogil:
        for i in range(W.shape[0]):
            d = 0
            for k in range(nw):
                d += __builtin_popcountll(W[i, k] ^ r[k])
            o[i] = d
    return out


def min_pairwise_hamming(words):
    cdef uint64_t[:, ::1] W = np.ascontiguousarray(np.atleast_2d(words), dtype=np.uint64)
    cdef Py_ssize_t n = W.shape[0], nw = W.shape[1], i, j, k
    cdef int64_t d, best = -1
    if n < 2:
        return -1
    best = 64 * nw + 1
    with nogil:
        for i in range(n - 1):
            for j in range(i + 1, n):
                d = 0
                for k in range(nw):
                    d += __builtin_popcountll(W[i, k] ^ W[j, k])
                if d < best:
                    best = d
    return int(best)


def fano_min_worst(Q):
    cdef double[:, ::1] q = np.ascontiguousarray(Q, dtype=np.float64)
    cdef Py_ssize_t K = q.shape[0], s = q.shape[1]
    cdef int64_t total = (K + 1) ** s
    cdef int64_t code, rem, best_code = 0
    cdef Py_ssize_t i, j
    cdef int a
    cdef double worst, best = 2.0, v
    cdef double[::1] kept = np.zeros(K)
    with nogil:
        for code in range(total):
            for i in range(K):
                kept[i] = 0.0
            rem = code
            for j in range(s):
                a = <int>(rem % (K + 1)) - 1
                rem = rem // (K + 1)
                if a >= 0:
                    kept[a] += q[a, j]
            worst = -1.0
            for i in range(K):
                v = 1.0 - kept[i]
                if v > worst:
                    worst = v
            if worst < best:
                best = worst
                best_code = code
    assign = np.empty(s, dtype=np.int64)
    rem = best_code
    for j in range(s):
        assign[j] = rem % (K + 1) - 1
        rem //= K + 1
    return float(best), assign


def vote_counts(idx, y, Py_ssize_t nbins):
    cdef int64_t[::1] ix = np.ascontiguousarray(idx, dtype=np.int64)
    cdef int64_t[::1] yy = np.ascontiguousarray(y, dtype=np.int64)
    ones = np.zeros(nbins, dtype=np.int64)
    total = np.zeros(nbins, dtype=np.int64)
    cdef int64_t[::1] o = ones
    cdef int64_t[::1] t = total
    cdef Py_ssize_t i
    with nogil:
        for i in range(ix.shape[0]):
            o[ix[i]] += yy[i]
            t[ix[i]] += 1
    return ones, total


def viterbi_lex(cost, allowed):
    cdef int64_t[:, ::1] c = np.ascontiguousarray(cost, dtype=np.int64)
    cdef cnp.uint8_t[:, ::1] ok = np.ascontiguousarray(allowed, dtype=np.uint8)
    cdef Py_ssize_t g = c.shape[0], V = c.shape[1], i, v, u
    cdef int64_t big = 2**61, m, need
    togo_arr = np.empty((g, V), dtype=np.int64)
    cdef int64_t[:, ::1] togo = togo_arr
    path_arr = np.empty(g, dtype=np.int64)
    cdef int64_t[::1] path = path_arr
    with nogil:
        for v in range(V):
            togo[g - 1, v] = c[g - 1, v]
        for i in range(g - 2, -1, -1):
            for v in range(V):
                m = big
                for u in range(V):
                    if ok[v, u] and togo[i + 1, u] < m:
                        m = togo[i + 1, u]
                togo[i, v] = c[i, v] + m
        m = big
        for v in range(V):
            if togo[0, v] < m:
                m = togo[0, v]
                path[0] = v
        need = m - c[0, path[0]]
        for i in range(1, g):
            for u in range(V):
                if ok[path[i - 1], u] and togo[i, u] == need:
                    path[i] = u
                    break
            need -= c[i, path[i]]
    return path_arr, int(m)
