"""Reconstruct a binary classifier from one-sided counterfactual queries.

Class prototypes are fitted as counterfactual-aware free-support Wasserstein
barycenters; a point is assigned to the nearer prototype.
"""

from .barycenter import PrototypeFitConfig, PrototypePair, fit_prototypes
from .oracle import LinearModel, Oracle, QueryResponse, train_logistic
from .ot_core import BACKEND, DiscreteDistribution, TransportPlan, solve_exact_transport, wasserstein2_sq
from .surrogate import PrototypeSurrogate, QueryDataset, fidelity, fit_baseline1, fit_prototype_surrogate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DiscreteDistribution",
    "LinearModel",
    "Oracle",
    "PrototypeFitConfig",
    "PrototypePair",
    "PrototypeSurrogate",
    "QueryDataset",
    "QueryResponse",
    "TransportPlan",
    "fidelity",
    "fit_baseline1",
    "fit_prototype_surrogate",
    "fit_prototypes",
    "solve_exact_transport",
    "train_logistic",
    "wasserstein2_sq",
]
