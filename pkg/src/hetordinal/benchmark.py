"""Tiered semi-synthetic benchmark.

Instances are drawn from the same latent family the model assumes: each
cluster is a linear-Gaussian SEM over ``n_items`` latent scores, clusters
share a base edge set and differ in a prescribed number of edges, their
mean profiles are pushed apart by ``separation`` latent standard
deviations, and every latent column is cut into ordinal categories by
fixed thresholds on the standardized mixture marginal.
"""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .dag import ArchetypeDag
from .embedding import OrdinalDataset, fit_embedding, normal_cdf, normal_quantile, transform
from .errors import InvalidSpec
from .metrics import align_clusters, ari, contingency, nmi, shd
from .mixture import MixtureConfig, fit, fit_mixture_only, fit_single_graph

__all__ = [
    "DEFAULT_MARGINALS",
    "TierSpec",
    "BenchmarkInstance",
    "thresholds_from_marginals",
    "generate",
    "default_tiers",
    "split_indices",
    "mean_aligned_shd",
    "run_benchmark",
    "BenchmarkReport",
    "MODEL_VARIANTS",
]

# Category probabilities per item used to place the default thresholds.
DEFAULT_MARGINALS: tuple[tuple[float, ...], ...] = (
    (0.10, 0.25, 0.35, 0.30),
    (0.08, 0.17, 0.30, 0.28, 0.17),
    (0.12, 0.38, 0.30, 0.20),
    (0.05, 0.15, 0.30, 0.25, 0.15, 0.10),
    (0.20, 0.35, 0.30, 0.15),
    (0.06, 0.14, 0.40, 0.25, 0.15),
    (0.15, 0.30, 0.35, 0.20),
    (0.10, 0.20, 0.30, 0.25, 0.15),
)

MODEL_VARIANTS = ("single_graph", "bnp", "mixture_only", "fixed_k_dag")


def thresholds_from_marginals(marginals: Sequence[Sequence[float]]) -> tuple[tuple[float, ...], ...]:
    out = []
    for probs in marginals:
        p = np.asarray(probs, dtype=float)
        if p.size < 2 or np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
            raise InvalidSpec(f"marginal {list(probs)} must be >= 2 positive probabilities summing to 1")
        cum = np.cumsum(p)[:-1]
        out.append(tuple(normal_quantile(c) for c in cum))
    return tuple(out)


@dataclass
class TierSpec:
    name: str
    separation: float
    n_diff_edges: int
    mixing_weights: tuple[float, ...] = (1 / 3, 1 / 3, 1 / 3)
    k_true: int = 3
    n_edges: int = 6
    weight_range: tuple[float, float] = (0.4, 0.9)
    noise_sd: float = 1.0
    n: int = 4800
    n_items: int = 8
    thresholds: tuple[tuple[float, ...], ...] = field(
        default_factory=lambda: thresholds_from_marginals(DEFAULT_MARGINALS))
    replications: int = 3
    max_parents: int = 2
    seed: int = 0

    def __post_init__(self):
        self.mixing_weights = tuple(float(w) for w in self.mixing_weights)
        self.thresholds = tuple(tuple(float(t) for t in th) for th in self.thresholds)
        self.weight_range = tuple(float(v) for v in self.weight_range)
        self.validate()

    def validate(self):
        if self.k_true < 2:
            raise InvalidSpec("k_true must be at least 2")
        if len(self.mixing_weights) != self.k_true:
            raise InvalidSpec("one mixing weight per true cluster required")
        if any(w <= 0 for w in self.mixing_weights) or abs(sum(self.mixing_weights) - 1.0) > 1e-9:
            raise InvalidSpec("mixing weights must be positive and sum to 1")
        if len(self.thresholds) != self.n_items:
            raise InvalidSpec("one threshold vector per item required")
        for th in self.thresholds:
            if len(th) < 1 or any(b <= a for a, b in zip(th, th[1:])):
                raise InvalidSpec("thresholds must be nonempty and strictly increasing per item")
        if self.separation < 0 or self.noise_sd <= 0 or self.n < self.k_true:
            raise InvalidSpec("separation >= 0, noise_sd > 0 and n >= k_true required")
        lo, hi = self.weight_range
        if not 0 <= lo <= hi:
            raise InvalidSpec("weight_range must satisfy 0 <= low <= high")
        n_pairs = self.n_items * (self.n_items - 1) // 2
        if self.n_edges + (self.n_diff_edges + 1) // 2 > n_pairs or self.n_diff_edges // 2 > self.n_edges:
            raise InvalidSpec("edge counts do not fit the item set")
        if self.replications < 1:
            raise InvalidSpec("replications must be at least 1")

    @property
    def category_counts(self) -> tuple[int, ...]:
        return tuple(len(th) + 1 for th in self.thresholds)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TierSpec":
        d = dict(d)
        for key in ("mixing_weights", "weight_range"):
            if key in d:
                d[key] = tuple(d[key])
        if "thresholds" in d:
            d["thresholds"] = tuple(tuple(t) for t in d["thresholds"])
        if "marginals" in d:
            d["thresholds"] = thresholds_from_marginals(d.pop("marginals"))
        return cls(**d)


def default_tiers(seed: int = 0) -> list[TierSpec]:
    """Easy, moderate, hard and stress tiers (K_true=3, 8 items, N=4800, 3 replicates)."""
    return [
        TierSpec("easy", separation=2.0, n_diff_edges=6, mixing_weights=(1 / 3, 1 / 3, 1 / 3), seed=seed),
        TierSpec("moderate", separation=1.0, n_diff_edges=4, mixing_weights=(0.4, 0.3, 0.3), seed=seed),
        TierSpec("hard", separation=0.5, n_diff_edges=2, mixing_weights=(0.6, 0.3, 0.1), seed=seed),
        TierSpec("stress", separation=0.1, n_diff_edges=0, mixing_weights=(0.7, 0.2, 0.1), seed=seed),
    ]


@dataclass
class BenchmarkInstance:
    data: OrdinalDataset
    labels: np.ndarray
    dags: list[ArchetypeDag]
    spec: TierSpec
    replicate: int
    latent: np.ndarray
    cluster_means: np.ndarray
    cluster_covs: np.ndarray

    def sidecar(self) -> dict:
        names = self.data.item_names
        return {
            "tier": self.spec.name,
            "replicate": self.replicate,
            "spec": self.spec.to_dict(),
            "labels": [int(z) for z in self.labels],
            "graphs": [g.to_dict(names) for g in self.dags],
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.data.item_names)
        w.writerows(self.data.values.tolist())
        return buf.getvalue()


def _rng_for(spec: TierSpec, replicate: int, *extra: int) -> np.random.Generator:
    ss = np.random.SeedSequence([spec.seed, zlib.crc32(spec.name.encode()), replicate, *extra])
    return np.random.default_rng(ss)


def _sample_edges(rng, allowed: list[tuple[int, int]], count: int, indeg: np.ndarray, cap: int,
                  exclude: set) -> list[tuple[int, int]]:
    picked = []
    for idx in rng.permutation(len(allowed)):
        if len(picked) == count:
            break
        m, j = allowed[idx]
        if (m, j) in exclude or indeg[j] >= cap:
            continue
        picked.append((m, j))
        indeg[j] += 1
    if len(picked) < count:
        raise InvalidSpec("could not place the requested number of edges under the parent cap")
    return picked


def _sem_moments(W: np.ndarray, c: np.ndarray, noise_var: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of x = c + x W + e with e ~ N(0, noise_var I)."""
    J = W.shape[0]
    A = np.linalg.inv(np.eye(J) - W)  # x = (c + e) A
    mean = c @ A
    cov = noise_var * A.T @ A
    return mean, cov


def generate(spec: TierSpec, replicate: int = 0) -> BenchmarkInstance:
    """Draw one benchmark instance; deterministic in (spec, replicate)."""
    spec.validate()
    rng = _rng_for(spec, replicate)
    J, K = spec.n_items, spec.k_true
    order = rng.permutation(J)
    pos = np.empty(J, dtype=int)
    pos[order] = np.arange(J)
    allowed = [(m, j) for m in range(J) for j in range(J) if pos[m] < pos[j]]
    lo, hi = spec.weight_range

    def draw_weight():
        return float(rng.choice([-1.0, 1.0]) * rng.uniform(lo, hi))

    base = _sample_edges(rng, allowed, spec.n_edges, np.zeros(J, dtype=int), spec.max_parents, set())
    base_w = {e: draw_weight() for e in base}
    n_remove = spec.n_diff_edges // 2
    n_add = spec.n_diff_edges - n_remove

    # distinct sign patterns for the mean shifts
    signs = []
    while len(signs) < K:
        s = rng.choice([-1.0, 1.0], size=J)
        if all(np.sum(s != t) >= max(1, J // 4) for t in signs):
            signs.append(s)

    noise_var = spec.noise_sd ** 2
    dags, means, covs = [], [], []
    for k in range(K):
        removed = set(base[i] for i in rng.choice(len(base), size=n_remove, replace=False)) if n_remove else set()
        edges = [e for e in base if e not in removed]
        indeg = np.zeros(J, dtype=int)
        for _, j in edges:
            indeg[j] += 1
        added = _sample_edges(rng, allowed, n_add, indeg, spec.max_parents, set(base))
        W = np.zeros((J, J))
        for e in edges:
            W[e] = base_w[e]
        for e in added:
            W[e] = draw_weight()
        _, cov0 = _sem_moments(W, np.zeros(J), noise_var)
        target_mean = spec.separation * signs[k] * np.sqrt(np.diag(cov0))
        c = target_mean @ (np.eye(J) - W)
        mean, cov = _sem_moments(W, c, noise_var)
        parents = tuple(tuple(int(m) for m in np.flatnonzero(W[:, j])) for j in range(J))
        dags.append(ArchetypeDag(parents, W, c, np.full(J, noise_var), spec.max_parents))
        means.append(mean)
        covs.append(cov)
    means = np.array(means)
    covs = np.array(covs)

    labels = rng.choice(K, size=spec.n, p=np.asarray(spec.mixing_weights))
    latent = np.empty((spec.n, J))
    for k in range(K):
        idx = np.flatnonzero(labels == k)
        e = rng.normal(scale=spec.noise_sd, size=(idx.size, J))
        A = np.linalg.inv(np.eye(J) - dags[k].weights)
        latent[idx] = (dags[k].intercepts + e) @ A

    # standardize with the exact mixture marginal, then cut
    w = np.asarray(spec.mixing_weights)
    mix_mean = w @ means
    mix_var = w @ (np.diagonal(covs, axis1=1, axis2=2) + means ** 2) - mix_mean ** 2
    z = (latent - mix_mean) / np.sqrt(mix_var)
    codes = np.empty((spec.n, J), dtype=np.int64)
    for j in range(J):
        codes[:, j] = 1 + np.searchsorted(np.asarray(spec.thresholds[j]), z[:, j], side="left")
    names = tuple(f"item_{j + 1}" for j in range(J))
    data = OrdinalDataset(codes, names, spec.category_counts)
    return BenchmarkInstance(data, labels, dags, spec, replicate, latent, means, covs)


def cell_probabilities(spec: TierSpec, inst: BenchmarkInstance) -> list[np.ndarray]:
    """Exact category probabilities implied by the mixture of cluster Gaussians."""
    w = np.asarray(spec.mixing_weights)
    means, covs = inst.cluster_means, inst.cluster_covs
    mix_mean = w @ means
    mix_sd = np.sqrt(w @ (np.diagonal(covs, axis1=1, axis2=2) + means ** 2) - mix_mean ** 2)
    out = []
    for j, th in enumerate(spec.thresholds):
        edges = np.concatenate(([-np.inf], mix_mean[j] + mix_sd[j] * np.asarray(th), [np.inf]))
        probs = np.zeros(len(th) + 1)
        for k in range(spec.k_true):
            sd = math.sqrt(covs[k, j, j])
            cdf = [0.0 if not np.isfinite(e) and e < 0 else 1.0 if not np.isfinite(e)
                   else normal_cdf((e - means[k, j]) / sd) for e in edges]
            probs += w[k] * np.diff(cdf)
        out.append(probs)
    return out


def split_indices(n: int, test_fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Seeded random train/test split of ``range(n)``; both parts sorted."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = max(1, int(round(test_fraction * n)))
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def _graph_for_true_cluster(pred_labels, true_labels, graphs: dict) -> dict:
    """Learned graph assigned to each true cluster.

    One-to-one maximum-overlap matching first; true clusters left over take
    the learned cluster they overlap most.
    """
    table, up, ut = contingency(pred_labels, true_labels)
    al = align_clusters(pred_labels, true_labels)
    chosen = {}
    for c, t in al.matched():
        chosen[t] = c
    for ti, t in enumerate(ut):
        t = t.item()
        if t not in chosen:
            chosen[t] = up[np.argmax(table[:, ti])].item()
    return {t: graphs.get(c) for t, c in chosen.items()}


def mean_aligned_shd(pred_labels, true_labels, graphs: dict, true_dags: Sequence[ArchetypeDag]) -> tuple[float, list[int]]:
    """Per-true-cluster SHD between the aligned learned graph and the truth, and its mean."""
    assigned = _graph_for_true_cluster(pred_labels, true_labels, graphs)
    per = []
    for t, g_true in enumerate(true_dags):
        g = assigned.get(t)
        per.append(shd(g.edges if g is not None else [], g_true.edges))
    return float(np.mean(per)), per


@dataclass
class BenchmarkReport:
    rows: list[dict]
    summary: list[dict]
    instances: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "summary": self.summary, "instances": self.instances}

    def long_rows(self) -> list[dict]:
        out = []
        for row in self.rows:
            for metric in ("mse", "ari", "nmi", "shd"):
                out.append({"tier": row["tier"], "replicate": row["replicate"], "model": row["model"],
                            "metric": metric, "value": row[metric]})
        return out

    def value(self, tier: str, model: str, metric: str) -> list[float]:
        return [r[metric] for r in self.rows if r["tier"] == tier and r["model"] == model]


def _fit_variant(variant: str, X_train: np.ndarray, K: int, config: MixtureConfig, k_max: int):
    if variant == "single_graph":
        m = fit_single_graph(X_train, config)
        return m, {0: m.dag}
    if variant == "mixture_only":
        return fit_mixture_only(X_train, K, config), {}
    if variant == "bnp":
        m = fit(X_train, config.replace(k=k_max, bnp=True))
        return m, m.graphs()
    if variant == "fixed_k_dag":
        m = fit(X_train, config.replace(k=K, bnp=False))
        return m, m.graphs()
    raise InvalidSpec(f"unknown model variant {variant!r}")


def evaluate_instance(inst: BenchmarkInstance, config: MixtureConfig, variants=MODEL_VARIANTS,
                      k_fixed: int | None = None, k_max: int = 10, test_fraction: float = 0.2) -> list[dict]:
    """Fit every variant on a train split of one instance and score it on the test split."""
    spec = inst.spec
    emb = fit_embedding(inst.data)
    X = transform(inst.data, emb).X
    seed = int(_rng_for(spec, inst.replicate, 1).integers(2 ** 31))
    train, test = split_indices(X.shape[0], test_fraction, seed)
    K = k_fixed or spec.k_true
    rows = []
    for vi, variant in enumerate(variants):
        cfg = config.replace(seed=int(_rng_for(spec, inst.replicate, 2, vi).integers(2 ** 31)))
        model, graphs = _fit_variant(variant, X[train], K, cfg, k_max)
        X_test = X[test]
        err = float(np.mean((X_test - model.predict(X_test)) ** 2))
        pred = model.predict_labels(X_test)
        truth = inst.labels[test]
        row = {"tier": spec.name, "replicate": inst.replicate, "model": variant,
               "mse": err, "ari": ari(pred, truth), "nmi": nmi(pred, truth)}
        if graphs:
            train_pred = model.predict_labels(X[train])
            row["shd"], row["shd_per_cluster"] = mean_aligned_shd(train_pred, inst.labels[train],
                                                                  graphs, inst.dags)
        else:
            row["shd"], row["shd_per_cluster"] = float("nan"), []
        row["n_clusters"] = int(len(np.unique(model.predict_labels(X))))
        rows.append(row)
    return rows


def _summarise(rows: list[dict]) -> list[dict]:
    out = []
    keys = sorted({(r["tier"], r["model"]) for r in rows}, key=lambda k: (
        [r["tier"] for r in rows].index(k[0]), MODEL_VARIANTS.index(k[1]) if k[1] in MODEL_VARIANTS else 99))
    for tier, model in keys:
        sel = [r for r in rows if r["tier"] == tier and r["model"] == model]
        entry = {"tier": tier, "model": model, "replicates": len(sel)}
        for metric in ("mse", "ari", "nmi", "shd"):
            vals = np.array([r[metric] for r in sel], dtype=float)
            if np.all(np.isnan(vals)):
                entry[f"{metric}_mean"] = entry[f"{metric}_sd"] = float("nan")
            else:
                entry[f"{metric}_mean"] = float(np.nanmean(vals))
                entry[f"{metric}_sd"] = float(np.nanstd(vals, ddof=1)) if np.sum(~np.isnan(vals)) > 1 else 0.0
        out.append(entry)
    return out


def run_benchmark(tiers: Sequence[TierSpec], config: MixtureConfig | None = None,
                  variants=MODEL_VARIANTS, k_max: int = 10, replicates: Sequence[int] | None = None,
                  progress=None) -> BenchmarkReport:
    """Generate every (tier, replicate) instance and score every model variant on it.

    Fixed-K variants use the tier's true K.
    """
    if not tiers:
        raise InvalidSpec("at least one tier is required")
    config = config or MixtureConfig()
    rows, instances = [], []
    for spec in tiers:
        reps = replicates if replicates is not None else range(spec.replications)
        for rep in reps:
            inst = generate(spec, rep)
            instances.append({"tier": spec.name, "replicate": rep, "fingerprint": inst.data.fingerprint()})
            new = evaluate_instance(inst, config, variants, k_max=k_max)
            rows.extend(new)
            if progress is not None:
                progress(spec.name, rep, new)
    return BenchmarkReport(rows, _summarise(rows), instances)


def save_instance(inst: BenchmarkInstance, directory, stem: str | None = None) -> list[str]:
    from pathlib import Path

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    stem = stem or f"{inst.spec.name}_rep{inst.replicate}"
    csv_path = directory / f"{stem}.csv"
    json_path = directory / f"{stem}.json"
    csv_path.write_text(inst.to_csv())
    json_path.write_text(json.dumps(inst.sidecar(), indent=2, sort_keys=True) + "\n")
    return [str(csv_path), str(json_path)]
