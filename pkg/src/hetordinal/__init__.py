"""Heterogeneous ordinal structure learning.

Monotone Gaussian score embedding of ordinal items, mixtures of
cluster-specific sparse linear-Gaussian DAGs fit by generalized EM,
cross-validated choice of the number of archetypes, and the benchmark
and stability tooling around them.
"""

__version__ = "0.1.0"

from .embedding import OrdinalDataset, ScoreEmbedding, TransformedMatrix, embed, fit_embedding, transform, normal_quantile
from .dag import ArchetypeDag, greedy_search, graph_bic, is_acyclic
from .mixture import MixtureConfig, MixtureModel, BaselineModel, fit, fit_single_graph, fit_mixture_only, predict_scores, effective_k
from .selection import SelectionPlan, SelectionReport, holdout_mse, select_k, run_pipeline

__all__ = [
    "OrdinalDataset", "ScoreEmbedding", "TransformedMatrix", "embed", "fit_embedding", "transform", "normal_quantile",
    "ArchetypeDag", "greedy_search", "graph_bic", "is_acyclic",
    "MixtureConfig", "MixtureModel", "BaselineModel", "fit", "fit_single_graph", "fit_mixture_only",
    "predict_scores", "effective_k",
    "SelectionPlan", "SelectionReport", "holdout_mse", "select_k", "run_pipeline",
]

from .metrics import ari, nmi, shd, edge_jaccard, align_clusters, assignment_agreement, profile_rmse
from .benchmark import TierSpec, default_tiers, generate, run_benchmark
from .stability import bootstrap_stability, alpha_sweep, item_set_sweep, n_min_sweep, weight_resample_refit

__all__ += [
    "ari", "nmi", "shd", "edge_jaccard", "align_clusters", "assignment_agreement", "profile_rmse",
    "TierSpec", "default_tiers", "generate", "run_benchmark",
    "bootstrap_stability", "alpha_sweep", "item_set_sweep", "n_min_sweep", "weight_resample_refit",
]
