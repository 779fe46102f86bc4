"""Discovery-to-confirmation orchestration.

Embed once on the full analytic sample, discover complexity with the
stick-breaking mixture, choose K by inner cross-validated holdout error on
the outer training split, then refit with exactly K* components. The four
comparison models are all trained on the outer training split and scored
on the outer test split.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .benchmark import split_indices
from .embedding import OrdinalDataset, ScoreEmbedding, fit_embedding, transform
from .errors import ConfigError, DataError, EmptyTestSet, SchemaMismatch
from .mixture import (BaselineModel, MixtureConfig, MixtureModel, effective_k, fit, fit_mixture_only,
                      fit_single_graph)

__all__ = [
    "SelectionPlan",
    "SelectionReport",
    "holdout_mse",
    "fold_indices",
    "select_k",
    "run_pipeline",
    "derive_seed",
    "MODEL_LABELS",
]

MODEL_LABELS = {
    "single_graph": "Single-Graph Baseline",
    "bnp": "BNP Discovery",
    "mixture_only": "Fixed-K Mixture Only",
    "fixed_k_dag": "Fixed-K Mixture + DAG",
}


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


@dataclass
class SelectionPlan:
    k_grid: tuple[int, ...] = (2, 3, 4, 5, 6)
    outer_test_fraction: float = 0.2
    inner_folds: int = 5
    seed: int = 0
    k_max: int = 10
    seed_from_discovery: bool = False

    def __post_init__(self):
        self.k_grid = tuple(int(k) for k in self.k_grid)
        if not self.k_grid:
            raise ConfigError("k_grid must be nonempty")
        if list(self.k_grid) != sorted(set(self.k_grid)) or self.k_grid[0] < 1:
            raise ConfigError("k_grid must be strictly ascending positive integers")
        if not 0 < self.outer_test_fraction < 1:
            raise ConfigError("outer_test_fraction must lie in (0, 1)")
        if self.inner_folds < 2:
            raise ConfigError("inner_folds must be at least 2")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SelectionReport:
    curve: dict[int, float]
    fold_mse: dict[int, list[float]]
    k_star: int
    k_bnp: int
    holdout: list[dict]
    confirmatory: MixtureModel
    models: dict = field(default_factory=dict)
    embedding: ScoreEmbedding | None = None
    train_index: np.ndarray | None = None
    test_index: np.ndarray | None = None
    plan: SelectionPlan | None = None

    def holdout_mse(self, model: str) -> float:
        return next(r["mse"] for r in self.holdout if r["model"] == model)

    def to_dict(self) -> dict:
        return {
            "plan": self.plan.to_dict() if self.plan else None,
            "k_grid": list(self.curve),
            "curve": [{"k": int(k), "mse": float(v)} for k, v in self.curve.items()],
            "fold_mse": {str(k): [float(x) for x in v] for k, v in self.fold_mse.items()},
            "k_star": int(self.k_star),
            "k_bnp": int(self.k_bnp),
            "holdout": self.holdout,
            "n_train": int(self.train_index.size) if self.train_index is not None else None,
            "n_test": int(self.test_index.size) if self.test_index is not None else None,
        }


def holdout_mse(model, X_test) -> float:
    """Mean squared reconstruction error over all test rows and items."""
    X_test = np.asarray(X_test, dtype=float)
    if X_test.ndim != 2:
        raise SchemaMismatch("X_test must be a 2-D matrix")
    if X_test.shape[0] == 0:
        raise EmptyTestSet("no test rows")
    pred = model.predict(X_test)
    return float(np.mean((X_test - pred) ** 2))


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle cut into contiguous, near-equal blocks."""
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(block) for block in np.array_split(perm, folds)]


def select_k(X_train, plan: SelectionPlan, config: MixtureConfig) -> tuple[int, dict[int, float], dict[int, list[float]]]:
    """Inner K-fold choice of the number of components.

    Returns
    -------
    k_star : int
        Grid value with the lowest mean validation error; ties go to the
        smaller K.
    curve : dict
        Mean validation error per K.
    fold_mse : dict
        Per-fold validation errors per K.
    """
    X_train = np.asarray(X_train, dtype=float)
    N = X_train.shape[0]
    if N < plan.inner_folds * max(plan.k_grid):
        raise DataError(f"{N} training rows cannot support {plan.inner_folds} folds at K={max(plan.k_grid)}")
    folds = fold_indices(N, plan.inner_folds, derive_seed(plan.seed, 1))
    curve: dict[int, float] = {}
    per_fold: dict[int, list[float]] = {}
    for K in plan.k_grid:
        errs = []
        for f, val in enumerate(folds):
            mask = np.ones(N, dtype=bool)
            mask[val] = False
            cfg = config.replace(k=K, bnp=False, seed=derive_seed(plan.seed, 2, K, f))
            model = fit(X_train[mask], cfg)
            errs.append(holdout_mse(model, X_train[val]))
        per_fold[K] = errs
        curve[K] = float(np.mean(errs))
    best = min(curve.values())
    k_star = min(k for k, v in curve.items() if v == best)
    return k_star, curve, per_fold


def _labels_from_discovery(bnp: MixtureModel, K: int, X: np.ndarray) -> np.ndarray:
    """Hard start for a K-component fit: the K heaviest discovered clusters."""
    mass = bnp.responsibilities.sum(axis=0)
    keep = np.argsort(-mass, kind="stable")[:K]
    r = bnp.predict_proba(X)[:, keep]
    return np.argmax(r, axis=1)


def run_pipeline(data: OrdinalDataset, plan: SelectionPlan | None = None,
                 config: MixtureConfig | None = None, progress=None) -> SelectionReport:
    """Embed, discover, select K*, confirm, and compare the four models on the outer holdout."""
    plan = plan or SelectionPlan()
    config = config or MixtureConfig()
    log = progress or (lambda msg: None)

    emb = fit_embedding(data)
    X = transform(data, emb).X
    train, test = split_indices(X.shape[0], plan.outer_test_fraction, derive_seed(plan.seed, 0))
    X_tr, X_te = X[train], X[test]
    names = data.item_names

    log("discovery")
    bnp_cfg = config.replace(k=plan.k_max, bnp=True, seed=derive_seed(plan.seed, 3))
    bnp_full = fit(X, bnp_cfg, item_names=names)
    k_bnp = effective_k(bnp_full)

    log("selection")
    k_star, curve, per_fold = select_k(X_tr, plan, config)

    log("comparison")
    models: dict = {}
    models["single_graph"] = fit_single_graph(X_tr, config.replace(k=1, seed=derive_seed(plan.seed, 4)),
                                              item_names=names)
    models["bnp"] = fit(X_tr, bnp_cfg, item_names=names)
    models["mixture_only"] = fit_mixture_only(X_tr, k_star, config.replace(seed=derive_seed(plan.seed, 5)),
                                              item_names=names)
    fixed_cfg = config.replace(k=k_star, bnp=False, seed=derive_seed(plan.seed, 6))
    init = _labels_from_discovery(models["bnp"], k_star, X_tr) if plan.seed_from_discovery else None
    models["fixed_k_dag"] = fit(X_tr, fixed_cfg, init_labels=init, item_names=names)

    holdout = []
    base = None
    for key in ("single_graph", "bnp", "mixture_only", "fixed_k_dag"):
        err = holdout_mse(models[key], X_te)
        if base is None:
            base = err
        holdout.append({"model": key, "label": MODEL_LABELS[key], "mse": err,
                        "delta_vs_baseline": None if key == "single_graph" else (err - base) / base})

    log("confirmation")
    init = _labels_from_discovery(bnp_full, k_star, X) if plan.seed_from_discovery else None
    confirm = fit(X, config.replace(k=k_star, bnp=False, seed=derive_seed(plan.seed, 7)),
                  init_labels=init, item_names=names)
    models["bnp_full"] = bnp_full
    return SelectionReport(curve, per_fold, k_star, k_bnp, holdout, confirm, models, emb, train, test, plan)
