"""Kernel backend selection.

The compiled Cython module is used when it was built; otherwise (or when
``ACBOUND_PURE_PYTHON=1``) the numpy fallback is used. Both produce identical
results.
"""
import os

from acbound import _kernels_py

if os.environ.get("ACBOUND_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from acbound import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

greedy_code = _impl.greedy_code
hamming_to_all = _impl.hamming_to_all
min_pairwise_hamming = _impl.min_pairwise_hamming
fano_min_worst = _impl.fano_min_worst
vote_counts = _impl.vote_counts
viterbi_lex = _impl.viterbi_lex


def available_backends():
    out = {"python": _kernels_py}
    try:
        from acbound import _ckernels

        out["cython"] = _ckernels
    except ImportError:
        pass
    return out
