"""Exponential accuracy-confidence bounds for classification under a margin condition."""
from acbound.core import (
    Box,
    Dataset,
    Distribution,
    MarginSpec,
    PredictionRule,
    Provenance,
    RegressionFn,
    bayes_rule,
    empirical_risk,
    excess_risk_quadrature,
    l1_disagreement,
)
from acbound.family import (
    BumpProfile,
    LowerBoundFamily,
    build_family,
    bump_eval,
    holder_q,
    verify_family,
    vg_greedy,
)
from acbound.kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Box", "BumpProfile", "Dataset", "Distribution", "LowerBoundFamily", "MarginSpec",
    "PredictionRule", "Provenance", "RegressionFn", "bayes_rule", "build_family", "bump_eval",
    "empirical_risk", "excess_risk_quadrature", "holder_q", "l1_disagreement", "verify_family",
    "vg_greedy", "__version__",
]
