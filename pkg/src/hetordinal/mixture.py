"""Mixtures of archetype DAGs fit by generalized EM, plus two baselines.

The E-step computes responsibilities from smoothed cluster weights and the
structural-equation densities; the M-step reruns greedy structure search
for every cluster, warm-started at its previous graph, under that
cluster's responsibilities. Clusters whose mass falls below ``n_min`` are
pruned for good.

Because each M-step search is warm-started and only accepts improving
moves, the penalized objective

    L(theta) + sum_k (alpha/K) log pi_k - (lambda/2) sum_k d_k log n_k

never decreases from one cycle to the next when the penalty of both the
old and the new graphs is evaluated at the current cluster masses. Each
trace record stores both sides of that comparison.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import dag as dagmod
from .dag import ArchetypeDag, WeightedMoments, greedy_search, log_density
from .errors import ConfigError, DataError, SchemaMismatch

__all__ = [
    "MixtureConfig",
    "IterationRecord",
    "MixtureModel",
    "BaselineModel",
    "stick_breaking_weights",
    "draw_stick_breaking",
    "e_step",
    "smooth_weights",
    "m_step",
    "fit",
    "effective_k",
    "fit_single_graph",
    "fit_mixture_only",
    "predict_scores",
    "initial_partition",
]


@dataclass
class MixtureConfig:
    """Settings shared by the mixture fits.

    ``k`` is the number of components for a fixed-K fit and the truncation
    level ``K_max`` when ``bnp`` is set.
    """

    k: int = 5
    bnp: bool = False
    alpha: float = 1.0
    max_iters: int = 100
    eps_loglik: float = 1.0
    eps_assign: float = 0.001
    max_parents: int = 2
    n_min: float = 120.0
    penalty: float = 1.0
    variance_floor: float = dagmod.VARIANCE_FLOOR
    seed: int = 0
    kmeans_restarts: int = 4

    def __post_init__(self):
        if int(self.k) < 1:
            raise ConfigError(f"k must be at least 1, got {self.k}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not (self.eps_loglik > 0 and self.eps_assign > 0):
            raise ConfigError("convergence thresholds must be positive")
        if int(self.max_iters) < 1:
            raise ConfigError("max_iters must be at least 1")
        if int(self.max_parents) < 1:
            raise ConfigError("max_parents must be at least 1")
        if self.n_min < 0:
            raise ConfigError("n_min must be nonnegative")
        self.k = int(self.k)
        self.max_iters = int(self.max_iters)
        self.max_parents = int(self.max_parents)
        self.seed = int(self.seed)

    def replace(self, **changes) -> "MixtureConfig":
        d = asdict(self)
        d.update(changes)
        return MixtureConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterationRecord:
    iteration: int
    loglik: float
    assign_change: float
    effective_k: int
    n_active: int
    penalized: float
    penalized_previous: float
    pruned: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def stick_breaking_weights(V, K_max: int | None = None) -> np.ndarray:
    """Truncated stick-breaking weights; the last component takes the remainder."""
    V = np.asarray(V, dtype=float).reshape(-1)
    if K_max is None:
        K_max = V.size
    if V.size < K_max - 1:
        raise ConfigError(f"need at least {K_max - 1} stick fractions, got {V.size}")
    pi = np.empty(K_max)
    rest = 1.0
    for k in range(K_max - 1):
        pi[k] = V[k] * rest
        rest *= 1.0 - V[k]
    pi[K_max - 1] = 1.0 - pi[:K_max - 1].sum()
    return pi


def draw_stick_breaking(rng: np.random.Generator, alpha: float, K_max: int) -> np.ndarray:
    return stick_breaking_weights(rng.beta(1.0, alpha, size=K_max), K_max)


def _log_joint(X: np.ndarray, dags: Sequence[ArchetypeDag | None], weights: np.ndarray) -> np.ndarray:
    N = X.shape[0]
    out = np.full((N, len(dags)), -np.inf)
    for k, g in enumerate(dags):
        if g is not None and weights[k] > 0:
            out[:, k] = math.log(weights[k]) + log_density(X, g)
    return out


def e_step(X, dags: Sequence[ArchetypeDag | None], weights) -> np.ndarray:
    """Posterior cluster probabilities, normalised in log space per row."""
    X = np.asarray(X, dtype=float)
    lj = _log_joint(X, dags, np.asarray(weights, dtype=float))
    return _normalise(lj)


def _normalise(lj: np.ndarray) -> np.ndarray:
    mx = lj.max(axis=1, keepdims=True)
    p = np.exp(lj - mx)
    return p / p.sum(axis=1, keepdims=True)


def smooth_weights(r, alpha: float, K: int | None = None, active=None) -> np.ndarray:
    """Dirichlet-smoothed cluster weights ``(n_k + alpha/K) / (N + alpha)``.

    Only ``active`` columns receive mass; ``K`` defaults to their number.
    """
    r = np.asarray(r, dtype=float)
    n_cols = r.shape[1] if r.ndim == 2 else int(K)
    if active is None:
        active = np.ones(n_cols, dtype=bool)
    active = np.asarray(active, dtype=bool)
    K_act = int(active.sum()) if K is None else int(K)
    N = r.shape[0] if r.ndim == 2 else 0
    n_k = r.sum(axis=0) if N else np.zeros(n_cols)
    w = np.where(active, (n_k + alpha / K_act) / (N + alpha), 0.0)
    return w / w.sum()


def _log_prior(weights: np.ndarray, alpha: float, active: np.ndarray) -> float:
    K = int(active.sum())
    return float((alpha / K) * np.log(weights[active]).sum())


def _penalty(dags, n_k: np.ndarray, active: np.ndarray, lam: float) -> float:
    return float(sum(dagmod.penalty_terms(dags[k], n_k[k], lam) for k in np.flatnonzero(active)))


def m_step(X, r, config: MixtureConfig, warm_start: Sequence[ArchetypeDag | None] | None = None,
           active=None) -> list[ArchetypeDag | None]:
    """Warm-started greedy structure search per active cluster."""
    X = np.asarray(X, dtype=float)
    r = np.asarray(r, dtype=float)
    K = r.shape[1]
    if active is None:
        active = r.sum(axis=0) >= max(config.n_min, _min_mass(X))
        if not active.any():
            active[np.argmax(r.sum(axis=0))] = True
    warm = list(warm_start) if warm_start is not None else [None] * K
    out: list[ArchetypeDag | None] = []
    for k in range(K):
        if not active[k]:
            out.append(None)
            continue
        g, _ = greedy_search(X, r[:, k], max_parents=config.max_parents, warm_start=warm[k],
                             penalty=config.penalty, variance_floor=config.variance_floor)
        out.append(g)
    return out


def _min_mass(X) -> float:
    # a cluster must hold enough mass to fit one regression per node
    return float(X.shape[1] + 1)


def effective_k(model_or_r, threshold: float = 0.05) -> int:
    """Number of clusters holding more than ``threshold`` of the total mass."""
    if hasattr(model_or_r, "responsibilities"):
        r = model_or_r.responsibilities
    else:
        r = np.asarray(model_or_r, dtype=float)
        if r.ndim == 1:
            # a weight vector
            return int(np.sum(r > threshold))
    N = r.shape[0]
    return int(np.sum(r.sum(axis=0) > threshold * N))


def initial_partition(X: np.ndarray, K: int, seed: int, restarts: int = 4) -> np.ndarray:
    """Seeded k-means hard partition into ``K`` groups."""
    from sklearn.cluster import KMeans

    if K == 1:
        return np.zeros(X.shape[0], dtype=np.int64)
    km = KMeans(n_clusters=K, n_init=restarts, random_state=seed)
    return km.fit_predict(X).astype(np.int64)


@dataclass
class MixtureModel:
    dags: list[ArchetypeDag | None]
    weights: np.ndarray
    responsibilities: np.ndarray
    trace: list[IterationRecord]
    config: MixtureConfig
    converged: bool
    item_names: tuple[str, ...] | None = None

    @property
    def K(self) -> int:
        return len(self.dags)

    @property
    def active(self) -> np.ndarray:
        return np.array([g is not None and w > 0 for g, w in zip(self.dags, self.weights)])

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.responsibilities, axis=1)

    @property
    def n_clusters(self) -> int:
        return int(self.active.sum())

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        J = next(g.n_nodes for g in self.dags if g is not None)
        if X.ndim != 2 or X.shape[1] != J:
            raise SchemaMismatch(f"expected {J} columns, got shape {X.shape}")
        return X

    def log_joint(self, X) -> np.ndarray:
        return _log_joint(self._check(X), self.dags, self.weights)

    def predict_proba(self, X) -> np.ndarray:
        return _normalise(self.log_joint(X))

    def predict_labels(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def loglik(self, X) -> float:
        return float(logsumexp(self.log_joint(X), axis=1).sum())

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        r = self.predict_proba(X)
        out = np.zeros_like(X)
        for k, g in enumerate(self.dags):
            if g is not None:
                out += r[:, [k]] * g.predict(X)
        return out

    def cluster_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)

    def graphs(self) -> dict[int, ArchetypeDag]:
        return {k: g for k, g in enumerate(self.dags) if g is not None}

    def to_dict(self) -> dict:
        names = self.item_names
        return {
            "kind": "mixture_of_dags",
            "config": self.config.to_dict(),
            "K": self.K,
            "weights": [float(w) for w in self.weights],
            "clusters": [
                None if g is None else g.to_dict(names) for g in self.dags
            ],
            "converged": self.converged,
            "trace": [rec.to_dict() for rec in self.trace],
            "assignments": [int(z) for z in self.labels],
        }


def fit(X, config: MixtureConfig, init_labels=None, item_names=None) -> MixtureModel:
    """Fit a fixed-K or truncated stick-breaking mixture of archetype DAGs.

    Parameters
    ----------
    X : array of shape (n_rows, n_items)
        Embedded scores.
    config : MixtureConfig
    init_labels : array of shape (n_rows,), optional
        Hard starting partition with ids in ``0..config.k-1``; seeded k-means
        otherwise.

    Returns
    -------
    MixtureModel
        Final responsibilities are recomputed from the final parameters.
        ``converged`` is False when ``max_iters`` was exhausted.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise DataError("X must be a finite 2-D matrix")
    N, J = X.shape
    K = config.k
    if N < K:
        raise DataError(f"need at least K={K} rows, got {N}")
    rng = np.random.default_rng(config.seed)
    floor = max(config.n_min, _min_mass(X))

    if init_labels is None:
        labels = initial_partition(X, K, config.seed, config.kmeans_restarts)
    else:
        labels = np.asarray(init_labels, dtype=np.int64)
        if labels.shape != (N,) or labels.min() < 0 or labels.max() >= K:
            raise DataError("init_labels must hold one id in 0..K-1 per row")
    sizes = np.bincount(labels, minlength=K).astype(float)
    active = sizes >= floor
    if not active.any():
        active[np.argmax(sizes)] = True
    if not active.all():
        # hand rows of undersized groups to the nearest surviving centroid
        cents = np.array([X[labels == k].mean(axis=0) if sizes[k] else np.full(J, np.inf)
                          for k in range(K)])
        orphan = ~active[labels]
        d2 = ((X[orphan, None, :] - cents[None, active, :]) ** 2).sum(axis=2)
        labels = labels.copy()
        labels[orphan] = np.flatnonzero(active)[np.argmin(d2, axis=1)]
    r = np.zeros((N, K))
    r[np.arange(N), labels] = 1.0

    dags = m_step(X, r, config, None, active)
    if config.bnp:
        sticks = np.sort(draw_stick_breaking(rng, config.alpha, K))[::-1]
        weights = np.zeros(K)
        act_idx = np.flatnonzero(active)
        by_size = act_idx[np.argsort(-r.sum(axis=0)[act_idx], kind="stable")]
        weights[by_size] = sticks[:by_size.size]
        weights /= weights.sum()
    else:
        weights = smooth_weights(r, config.alpha, active=active)

    def objective(dags_, weights_, n_k, active_):
        lj = _log_joint(X, dags_, weights_)
        L = float(logsumexp(lj, axis=1).sum())
        return L, L + _log_prior(weights_, config.alpha, active_) - _penalty(dags_, n_k, active_, config.penalty)

    prev_L, _ = objective(dags, weights, r.sum(axis=0), active)
    prev_z = labels
    trace: list[IterationRecord] = []
    converged = False
    for t in range(1, config.max_iters + 1):
        r = e_step(X, dags, weights)
        n_k = r.sum(axis=0)
        pruned = False
        small = active & (n_k < floor)
        if small.any():
            keep = active & ~small
            if not keep.any():
                keep = np.zeros(K, dtype=bool)
                keep[np.argmax(np.where(active, n_k, -np.inf))] = True
            if not np.array_equal(keep, active):
                active = keep
                for k in np.flatnonzero(~active):
                    dags[k] = None
                weights = np.where(active, weights, 0.0)
                weights /= weights.sum()
                r = e_step(X, dags, weights)
                n_k = r.sum(axis=0)
                pruned = True
        # previous parameters scored with the current masses
        prev_pen = prev_L + _log_prior(weights, config.alpha, active) - _penalty(dags, n_k, active, config.penalty)

        weights = smooth_weights(r, config.alpha, active=active)
        dags = m_step(X, r, config, dags, active)
        L, pen_obj = objective(dags, weights, n_k, active)

        z = np.argmax(r, axis=1)
        dz = float(np.mean(z != prev_z))
        rec = IterationRecord(t, L, dz, effective_k(r), int(active.sum()), pen_obj, prev_pen, pruned)
        trace.append(rec)
        done = abs(L - prev_L) < config.eps_loglik and dz < config.eps_assign
        prev_L, prev_z = L, z
        if done:
            converged = True
            break

    r = e_step(X, dags, weights)
    return MixtureModel(dags, weights, r, trace, config, converged,
                        tuple(item_names) if item_names is not None else None)


@dataclass
class BaselineModel:
    """Single shared graph, or a diagonal Gaussian mixture without graphs."""

    variant: str
    dag: ArchetypeDag | None = None
    means: np.ndarray | None = None
    variances: np.ndarray | None = None
    weights: np.ndarray | None = None
    trace: list = field(default_factory=list)
    converged: bool = True
    config: MixtureConfig | None = None
    responsibilities: np.ndarray | None = None
    item_names: tuple[str, ...] | None = None

    @property
    def K(self) -> int:
        return 1 if self.variant == "single_graph" else len(self.weights)

    @property
    def labels(self) -> np.ndarray:
        return np.argmax(self.responsibilities, axis=1)

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        J = self.dag.n_nodes if self.dag is not None else self.means.shape[1]
        if X.ndim != 2 or X.shape[1] != J:
            raise SchemaMismatch(f"expected {J} columns, got shape {X.shape}")
        return X

    def log_joint(self, X) -> np.ndarray:
        X = self._check(X)
        if self.variant == "single_graph":
            return log_density(X, self.dag)[:, None]
        return _diag_log_joint(X, self.means, self.variances, self.weights)

    def predict_proba(self, X) -> np.ndarray:
        return _normalise(self.log_joint(X))

    def predict_labels(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def loglik(self, X) -> float:
        return float(logsumexp(self.log_joint(X), axis=1).sum())

    def predict(self, X) -> np.ndarray:
        X = self._check(X)
        if self.variant == "single_graph":
            return self.dag.predict(X)
        return self.predict_proba(X) @ self.means

    def to_dict(self) -> dict:
        d = {"kind": self.variant, "converged": self.converged,
             "config": self.config.to_dict() if self.config else None}
        if self.variant == "single_graph":
            d["graph"] = self.dag.to_dict(self.item_names)
        else:
            d["weights"] = [float(w) for w in self.weights]
            d["means"] = self.means.tolist()
            d["variances"] = self.variances.tolist()
            d["trace"] = self.trace
        if self.responsibilities is not None:
            d["assignments"] = [int(z) for z in self.labels]
        return d


def _diag_log_joint(X, means, variances, weights) -> np.ndarray:
    out = np.empty((X.shape[0], len(weights)))
    for k in range(len(weights)):
        v = variances[k]
        out[:, k] = (math.log(weights[k])
                     - 0.5 * (X.shape[1] * math.log(2 * math.pi) + np.log(v).sum()
                              + (((X - means[k]) ** 2) / v).sum(axis=1)))
    return out


def fit_single_graph(X, config: MixtureConfig | None = None, item_names=None) -> BaselineModel:
    """One DAG over all rows: unit-weight greedy search."""
    config = config or MixtureConfig(k=1)
    X = np.asarray(X, dtype=float)
    g, trace = greedy_search(X, None, max_parents=config.max_parents, penalty=config.penalty,
                             variance_floor=config.variance_floor)
    model = BaselineModel("single_graph", dag=g, config=config,
                          responsibilities=np.ones((X.shape[0], 1)),
                          item_names=tuple(item_names) if item_names is not None else None)
    model.search_trace = trace
    return model


def fit_mixture_only(X, K: int, config: MixtureConfig | None = None, init_labels=None,
                     item_names=None) -> BaselineModel:
    """Diagonal-covariance Gaussian mixture with the same weight smoothing and stopping rule."""
    config = (config or MixtureConfig()).replace(k=K)
    X = np.asarray(X, dtype=float)
    N, J = X.shape
    labels = (initial_partition(X, K, config.seed, config.kmeans_restarts)
              if init_labels is None else np.asarray(init_labels, dtype=np.int64))
    r = np.zeros((N, K))
    r[np.arange(N), labels] = 1.0

    def m(r):
        n_k = r.sum(axis=0)
        w = smooth_weights(r, config.alpha)
        safe = np.maximum(n_k, 1e-300)[:, None]
        mu = (r.T @ X) / safe
        var = np.maximum((r.T @ (X ** 2)) / safe - mu ** 2, config.variance_floor)
        # empty components fall back to the pooled moments
        empty = n_k <= 0
        if empty.any():
            mu[empty] = X.mean(axis=0)
            var[empty] = np.maximum(X.var(axis=0), config.variance_floor)
        return w, mu, var

    w, mu, var = m(r)
    prev_L = float(logsumexp(_diag_log_joint(X, mu, var, w), axis=1).sum())
    prev_z = labels
    trace = []
    converged = False
    for t in range(1, config.max_iters + 1):
        r = _normalise(_diag_log_joint(X, mu, var, w))
        w, mu, var = m(r)
        lj = _diag_log_joint(X, mu, var, w)
        L = float(logsumexp(lj, axis=1).sum())
        z = np.argmax(r, axis=1)
        dz = float(np.mean(z != prev_z))
        trace.append({"iteration": t, "loglik": L, "assign_change": dz,
                      "log_prior": float((config.alpha / K) * np.log(w).sum())})
        done = abs(L - prev_L) < config.eps_loglik and dz < config.eps_assign
        prev_L, prev_z = L, z
        if done:
            converged = True
            break
    r = _normalise(_diag_log_joint(X, mu, var, w))
    return BaselineModel("mixture_only", means=mu, variances=var, weights=w, trace=trace,
                         converged=converged, config=config, responsibilities=r,
                         item_names=tuple(item_names) if item_names is not None else None)


def predict_scores(model, X) -> np.ndarray:
    """Responsibility-weighted reconstruction of every embedded score."""
    return model.predict(X)
