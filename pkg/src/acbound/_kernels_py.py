"""Pure-Python/numpy implementations of the hot kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature and bit-identical results; ``acbound.kernels`` picks one at import.
"""
from itertools import combinations

import numpy as np

_POP8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def _popcount_u64(x):
    x = np.ascontiguousarray(x, dtype=np.uint64)
    return _POP8[x.view(np.uint8)].reshape(x.shape + (8,)).sum(axis=-1, dtype=np.int64)


def ball_masks(b, radius):
    masks = [0]
    for r in range(1, radius + 1):
        for bits in combinations(range(b), r):
            m = 0
            for j in bits:
                m |= 1 << j
            masks.append(m)
    return np.array(masks, dtype=np.uint64)


def greedy_code(b, min_hamming):
    """Lexicographic greedy code over all 2**b words; returns accepted words in order."""
    if min_hamming <= 1:
        return np.arange(2**b, dtype=np.uint64)
    masks = ball_masks(b, min_hamming - 1).astype(np.int64)
    forbidden = np.zeros(2**b, dtype=bool)
    accepted = []
    for c in range(2**b):
        if not forbidden[c]:
            accepted.append(c)
            forbidden[c ^ masks] = True
    return np.array(accepted, dtype=np.uint64)


def hamming_to_all(words, row):
    words = np.atleast_2d(np.asarray(words, dtype=np.uint64))
    row = np.asarray(row, dtype=np.uint64).reshape(1, -1)
    return _popcount_u64(words ^ row).sum(axis=1)


def min_pairwise_hamming(words):
    words = np.atleast_2d(np.asarray(words, dtype=np.uint64))
    n = words.shape[0]
    if n < 2:
        return -1
    best = None
    for i in range(n - 1):
        d = int(_popcount_u64(words[i + 1:] ^ words[i]).sum(axis=1).min())
        if best is None or d < best:
            best = d
    return best


def fano_min_worst(Q):
    """Minimise max_i Q_i(complement of A_i) over all disjoint assignments.

    Each support point goes to one of the K sets or to none. Returns the
    minimal value and one minimising assignment (-1 = unassigned).
    """
    Q = np.asarray(Q, dtype=np.float64)
    K, s = Q.shape
    total = (K + 1) ** s
    codes = np.arange(total, dtype=np.int64)
    digits = np.empty((total, s), dtype=np.int64)
    for j in range(s):
        digits[:, j] = codes % (K + 1)
        codes //= K + 1
    assign = digits - 1
    kept = np.zeros((total, K))
    for i in range(K):
        kept[:, i] = ((assign == i) * Q[i]).sum(axis=1)
    worst = (1.0 - kept).max(axis=1)
    k = int(np.argmin(worst))
    return float(worst[k]), assign[k].copy()


def vote_counts(idx, y, nbins):
    idx = np.asarray(idx, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    ones = np.bincount(idx, weights=y, minlength=nbins).astype(np.int64)
    total = np.bincount(idx, minlength=nbins).astype(np.int64)
    return ones, total


def viterbi_lex(cost, allowed):
    """Lexicographically smallest sequence minimising sum(cost[i, v_i]) under allowed[v_i, v_{i+1}]."""
    cost = np.asarray(cost, dtype=np.int64)
    allowed = np.asarray(allowed, dtype=bool)
    g, V = cost.shape
    big = np.iinfo(np.int64).max // 4
    togo = np.empty((g, V), dtype=np.int64)
    togo[g - 1] = cost[g - 1]
    for i in range(g - 2, -1, -1):
        nxt = np.where(allowed, togo[i + 1][None, :], big).min(axis=1)
        togo[i] = cost[i] + nxt
    path = np.empty(g, dtype=np.int64)
    best = int(togo[0].min())
    path[0] = int(np.flatnonzero(togo[0] == best)[0])
    need = best - cost[0, path[0]]
    for i in range(1, g):
        ok = allowed[path[i - 1]] & (togo[i] == need)
        path[i] = int(np.flatnonzero(ok)[0])
        need -= cost[i, path[i]]
    return path, best
