"""Bootstrap stability and sensitivity sweeps.

Every refit in this module starts from the ordinal codes: the score
embedding is re-estimated on the rows being fit, so resampling and item
changes propagate through the whole pipeline. Refits reuse ``config.seed``;
the variation between replicates comes only from the resampled rows or the
changed setting, which makes a sweep's reference setting reproduce the
reference model exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dag import ArchetypeDag
from .embedding import OrdinalDataset, fit_embedding, transform
from .errors import ConfigError, InvalidVariant
from .metrics import UNMATCHED, align_clusters, assignment_agreement, edge_jaccard, profile_rmse, shd
from .mixture import MixtureConfig, MixtureModel, effective_k, fit
from .selection import derive_seed, holdout_mse
from .benchmark import split_indices

__all__ = [
    "BootstrapReport",
    "SensitivityReport",
    "bootstrap_stability",
    "alpha_sweep",
    "item_set_sweep",
    "n_min_sweep",
    "weight_resample_refit",
    "compare_models",
    "ItemVariant",
    "BOOTSTRAP_MODES",
]

BOOTSTRAP_MODES = ("rediscover", "pinned")
SENSITIVITY_COLUMNS = ("axis", "setting", "mse", "effective_k", "k_bnp", "min_cluster",
                       "mean_shd", "mean_jaccard", "profile_rmse", "agreement")


def _stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {
        "mean": float(v.mean()),
        "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
        "min": float(v.min()),
        "max": float(v.max()),
    }


@dataclass
class BootstrapReport:
    B: int
    mode: str
    rows: list[dict]
    reference_k: int

    def __post_init__(self):
        if self.B < 1 or len(self.rows) != self.B:
            raise ConfigError("a bootstrap report needs B >= 1 rows")

    @property
    def agreements(self) -> np.ndarray:
        return np.array([r["agreement"] for r in self.rows])

    @property
    def summary(self) -> dict:
        s = _stats(self.agreements)
        s["mean_k"] = float(np.mean([r["effective_k"] for r in self.rows]))
        s["mean_max_responsibility"] = float(np.mean([r["mean_max_responsibility"] for r in self.rows]))
        return s

    def to_dict(self) -> dict:
        return {"B": self.B, "mode": self.mode, "reference_k": self.reference_k,
                "summary": self.summary, "replicates": self.rows}


@dataclass
class SensitivityReport:
    axis: str
    reference: str
    rows: list[dict]
    models: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.axis not in ("alpha", "item_set", "n_min", "weights"):
            raise ConfigError(f"unknown sensitivity axis {self.axis!r}")
        if not self.rows:
            raise ConfigError("a sensitivity report needs at least one setting")

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def row(self, setting: str) -> dict:
        return next(r for r in self.rows if r["setting"] == setting)

    def to_dict(self) -> dict:
        return {"axis": self.axis, "reference": self.reference, "settings": self.rows}


def _embed(data: OrdinalDataset) -> np.ndarray:
    return transform(data, fit_embedding(data)).X


def _named_edges(dag: ArchetypeDag, names: Sequence[str], keep: set[str]) -> set[tuple[str, str]]:
    return {(names[m], names[j]) for m, j in dag.edges if names[m] in keep and names[j] in keep}


def _code_profiles(values: np.ndarray, labels: np.ndarray, K: int) -> np.ndarray:
    out = np.full((K, values.shape[1]), np.nan)
    for k in np.unique(labels):
        out[k] = values[labels == k].mean(axis=0)
    return out


def compare_models(model: MixtureModel, labels, names: Sequence[str], values,
                   ref: MixtureModel, ref_labels, ref_names: Sequence[str], ref_values) -> dict:
    """Distance of a refit from the reference after maximum-overlap alignment.

    ``labels`` and ``ref_labels`` assign the same rows. Graph metrics are
    averaged over matched cluster pairs and use only items both models
    share; cluster profiles are raw ordinal-code means on those items.
    """
    shared = [n for n in ref_names if n in set(names)]
    keep = set(shared)
    al = align_clusters(labels, ref_labels)
    pairs = [(c, r) for c, r in al.matched()
             if model.dags[c] is not None and ref.dags[r] is not None]
    shds, jacs = [], []
    for c, r in pairs:
        e1 = _named_edges(model.dags[c], names, keep)
        e2 = _named_edges(ref.dags[r], ref_names, keep)
        shds.append(shd(e1, e2))
        jacs.append(edge_jaccard(e1, e2))
    cols = [list(names).index(n) for n in shared]
    ref_cols = [list(ref_names).index(n) for n in shared]
    p1 = _code_profiles(np.asarray(values)[:, cols], np.asarray(labels), model.K)
    p2 = _code_profiles(np.asarray(ref_values)[:, ref_cols], np.asarray(ref_labels), ref.K)
    return {
        "mean_shd": float(np.mean(shds)) if shds else float("nan"),
        "mean_jaccard": float(np.mean(jacs)) if jacs else float("nan"),
        "profile_rmse": profile_rmse(p1, p2, pairs) if pairs else float("nan"),
        "agreement": assignment_agreement(labels, ref_labels, al),
    }


def _min_cluster(labels) -> int:
    counts = np.bincount(np.asarray(labels))
    return int(counts[counts > 0].min())


# ----------------------------------------------------------------------------- bootstrap

def bootstrap_stability(data: OrdinalDataset, reference: MixtureModel, B: int = 20,
                        config: MixtureConfig | None = None, mode: str = "rediscover",
                        k_max: int = 10, seed: int = 0, resamples=None, progress=None) -> BootstrapReport:
    """Refit on ``B`` row resamples and score assignment agreement with ``reference``.

    Parameters
    ----------
    data : OrdinalDataset
        The sample the reference model was fit on.
    reference : MixtureModel
        Reference fit; its assignments on ``data`` are the target labels.
    B : int
        Number of resamples.
    config : MixtureConfig, optional
        Settings for every refit; defaults to the reference's config.
    mode : {"rediscover", "pinned"}
        ``"rediscover"`` runs stick-breaking discovery on each resample and
        refits with the discovered effective K; ``"pinned"`` refits with the
        reference's number of active clusters.
    resamples : sequence of index arrays, optional
        Explicit row draws replacing the seeded ones.

    Returns
    -------
    BootstrapReport
        Agreement is computed on the original rows, each assigned by the
        bootstrap model; rows in clusters left unmatched count as
        disagreement.
    """
    if mode not in BOOTSTRAP_MODES:
        raise ConfigError(f"mode must be one of {BOOTSTRAP_MODES}, got {mode!r}")
    if resamples is not None:
        resamples = [np.asarray(ix, dtype=np.int64) for ix in resamples]
        B = len(resamples)
    if B < 1:
        raise ConfigError("B must be at least 1")
    config = config or reference.config
    N = data.n_rows
    ref_labels = reference.labels
    if ref_labels.shape[0] != N:
        raise ConfigError("the reference model was not fit on these rows")
    k_ref = reference.n_clusters
    rows = []
    for b in range(B):
        if resamples is not None:
            idx = resamples[b]
        else:
            idx = np.random.default_rng(derive_seed(seed, 11, b)).integers(0, N, size=N)
        boot = data.take(idx)
        emb = fit_embedding(boot)
        Xb = transform(boot, emb).X
        if mode == "rediscover":
            disc = fit(Xb, config.replace(k=k_max, bnp=True))
            K = max(1, effective_k(disc))
        else:
            K = k_ref
        model = fit(Xb, config.replace(k=K, bnp=False))
        # original rows through the bootstrap embedding; categories absent from
        # the resample take their clamped neighbour score
        X_orig = transform(data, emb, strict=False).X
        proba = model.predict_proba(X_orig)
        labels = np.argmax(proba, axis=1)
        rows.append({
            "replicate": b,
            "k_fit": int(K),
            "agreement": assignment_agreement(labels, ref_labels),
            "effective_k": effective_k(proba),
            "mean_max_responsibility": float(proba.max(axis=1).mean()),
        })
        if progress is not None:
            progress(rows[-1])
    return BootstrapReport(B, mode, rows, k_ref)


# ----------------------------------------------------------------------------- sweeps

@dataclass
class _SettingFit:
    data: OrdinalDataset
    model: MixtureModel
    mse: float
    k_bnp: int | None


def _fit_setting(data: OrdinalDataset, config: MixtureConfig, k: int, seed: int,
                 test_fraction: float, k_max: int | None) -> _SettingFit:
    X = _embed(data)
    cfg = config.replace(k=k, bnp=False)
    train, test = split_indices(X.shape[0], test_fraction, derive_seed(seed, 0))
    mse = holdout_mse(fit(X[train], cfg), X[test])
    model = fit(X, cfg, item_names=data.item_names)
    k_bnp = None
    if k_max is not None:
        k_bnp = effective_k(fit(X, config.replace(k=k_max, bnp=True)))
    return _SettingFit(data, model, mse, k_bnp)


def _row(axis, setting, sf: _SettingFit, ref: _SettingFit) -> dict:
    cmp = compare_models(sf.model, sf.model.labels, sf.data.item_names, sf.data.values,
                         ref.model, ref.model.labels, ref.data.item_names, ref.data.values)
    return {"axis": axis, "setting": setting, "mse": sf.mse, "effective_k": effective_k(sf.model),
            "k_bnp": sf.k_bnp, "min_cluster": _min_cluster(sf.model.labels), **cmp}


def _fmt(v) -> str:
    return f"{v:g}" if isinstance(v, float) else str(v)


def alpha_sweep(data: OrdinalDataset, alphas: Sequence[float] = (0.5, 1.0, 2.0),
                config: MixtureConfig | None = None, k: int | None = None, seed: int = 0,
                test_fraction: float = 0.2, k_max: int = 10) -> SensitivityReport:
    """Rerun discovery and the confirmatory fit at each concentration value.

    The reference is ``config.alpha``. Each row reports the holdout MSE of
    the fixed-K fit, the stick-breaking effective K on the full sample, and
    distances of the confirmatory model from the reference one.
    """
    if len(alphas) == 0:
        raise ConfigError("alphas must be nonempty")
    config = config or MixtureConfig()
    k = k or config.k
    ref = _fit_setting(data, config, k, seed, test_fraction, k_max)
    rows, models = [], {}
    for a in alphas:
        a = float(a)
        sf = ref if a == config.alpha else _fit_setting(data, config.replace(alpha=a), k, seed,
                                                         test_fraction, k_max)
        rows.append(_row("alpha", _fmt(a), sf, ref))
        models[_fmt(a)] = sf.model
    return SensitivityReport("alpha", _fmt(float(config.alpha)), rows, models)


@dataclass(frozen=True)
class ItemVariant:
    """Items to add to or remove from the base set."""

    name: str
    add: tuple[str, ...] = ()
    remove: tuple[str, ...] = ()

    @classmethod
    def parse(cls, spec) -> "ItemVariant":
        """Accept an ``ItemVariant``, a mapping, or a string like ``"-q3,+q9"``."""
        if isinstance(spec, ItemVariant):
            return spec
        if isinstance(spec, dict):
            return cls(spec.get("name") or _variant_name(spec.get("add", ()), spec.get("remove", ())),
                       tuple(spec.get("add", ())), tuple(spec.get("remove", ())))
        if isinstance(spec, str):
            add, remove = [], []
            for tok in filter(None, (t.strip() for t in spec.split(","))):
                if tok[0] == "+":
                    add.append(tok[1:])
                elif tok[0] == "-":
                    remove.append(tok[1:])
                else:
                    raise InvalidVariant(f"item variant token {tok!r} must start with + or -")
            return cls(spec if spec else "base", tuple(add), tuple(remove))
        raise InvalidVariant(f"cannot interpret item variant {spec!r}")


def _variant_name(add, remove) -> str:
    parts = [f"-{n}" for n in remove] + [f"+{n}" for n in add]
    return ",".join(parts) or "base"


def _apply_variant(data: OrdinalDataset, base: Sequence[str], v: ItemVariant) -> list[str]:
    base_set = set(base)
    for n in v.remove:
        if n not in base_set:
            raise InvalidVariant(f"variant {v.name!r} removes {n!r}, which is not a base item")
    for n in v.add:
        if n not in data.item_names:
            raise InvalidVariant(f"variant {v.name!r} adds unknown item {n!r}")
        if n in base_set:
            raise InvalidVariant(f"variant {v.name!r} adds {n!r}, which is already a base item")
    items = [n for n in data.item_names if (n in base_set and n not in v.remove) or n in v.add]
    if len(items) < 3:
        raise InvalidVariant(f"variant {v.name!r} leaves {len(items)} items; at least 3 are required")
    return items


def item_set_sweep(data: OrdinalDataset, variants, config: MixtureConfig | None = None,
                   base_items: Sequence[str] | None = None, k: int | None = None, seed: int = 0,
                   test_fraction: float = 0.2) -> SensitivityReport:
    """Refit after adding or removing items.

    ``data`` holds every candidate column; ``base_items`` (default: all of
    them) defines the reference item set. Graph comparisons use only the
    items a variant shares with the reference.
    """
    config = config or MixtureConfig()
    k = k or config.k
    base = list(base_items) if base_items is not None else list(data.item_names)
    unknown = [n for n in base if n not in data.item_names]
    if unknown:
        raise InvalidVariant(f"base items not in the data: {unknown}")
    parsed = [ItemVariant.parse(v) for v in variants]
    item_lists = [_apply_variant(data, base, v) for v in parsed]  # validate before fitting
    ref_items = [n for n in data.item_names if n in set(base)]
    ref = _fit_setting(data.select_items(ref_items), config, k, seed, test_fraction, None)
    rows, models = [], {}
    for v, items in zip(parsed, item_lists):
        sf = ref if items == ref_items else _fit_setting(data.select_items(items), config, k, seed,
                                                         test_fraction, None)
        rows.append(_row("item_set", v.name, sf, ref))
        models[v.name] = sf.model
    return SensitivityReport("item_set", "base", rows, models)


def n_min_sweep(data: OrdinalDataset, thresholds: Sequence[float] = (120, 400, 500, 700),
                config: MixtureConfig | None = None, k: int | None = None, seed: int = 0,
                test_fraction: float = 0.2) -> SensitivityReport:
    """Refit under increasing minimum cluster masses; the reference is ``config.n_min``."""
    if len(thresholds) == 0:
        raise ConfigError("thresholds must be nonempty")
    if list(thresholds) != sorted(thresholds):
        raise ConfigError("thresholds must be ascending")
    config = config or MixtureConfig()
    k = k or config.k
    ref = _fit_setting(data, config, k, seed, test_fraction, None)
    rows, models = [], {}
    for t in thresholds:
        t = float(t)
        sf = ref if t == config.n_min else _fit_setting(data, config.replace(n_min=t), k, seed,
                                                         test_fraction, None)
        rows.append(_row("n_min", _fmt(t), sf, ref))
        models[_fmt(t)] = sf.model
    return SensitivityReport("n_min", _fmt(float(config.n_min)), rows, models)


def weight_resample_refit(data: OrdinalDataset, weights, R: int = 4, config: MixtureConfig | None = None,
                          k: int | None = None, seed: int = 0, resamples=None) -> SensitivityReport:
    """Refit on rows drawn with probability proportional to ``weights``.

    The reference is the unweighted fit on ``data``. Each replicate's model
    assigns the original rows, and the comparison uses those assignments.
    """
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != data.n_rows or not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise ConfigError("weights must be positive, finite and one per row")
    if resamples is not None:
        resamples = [np.asarray(ix, dtype=np.int64) for ix in resamples]
        R = len(resamples)
    if R < 1:
        raise ConfigError("R must be at least 1")
    config = config or MixtureConfig()
    k = k or config.k
    cfg = config.replace(k=k, bnp=False)
    ref_model = fit(_embed(data), cfg, item_names=data.item_names)
    p = w / w.sum()
    rows, models = [], {}
    for rep in range(R):
        if resamples is not None:
            idx = resamples[rep]
        else:
            idx = np.random.default_rng(derive_seed(seed, 13, rep)).choice(data.n_rows, size=data.n_rows, p=p)
        sub = data.take(idx)
        emb = fit_embedding(sub)
        model = fit(transform(sub, emb).X, cfg, item_names=data.item_names)
        labels = model.predict_labels(transform(data, emb, strict=False).X)
        cmp = compare_models(model, labels, data.item_names, data.values,
                             ref_model, ref_model.labels, data.item_names, data.values)
        rows.append({"axis": "weights", "setting": f"replicate_{rep}", "mse": float("nan"),
                     "effective_k": effective_k(model), "k_bnp": None,
                     "min_cluster": _min_cluster(model.labels), **cmp})
        models[f"replicate_{rep}"] = model
    return SensitivityReport("weights", "unweighted", rows, models)
