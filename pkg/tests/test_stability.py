import json

import numpy as np
import pytest

from hetordinal.embedding import fit_embedding, transform
from hetordinal.errors import ConfigError, InvalidVariant
from hetordinal.metrics import ari
from hetordinal.mixture import MixtureConfig, effective_k, fit, fit_single_graph
from hetordinal.selection import derive_seed, holdout_mse
from hetordinal.benchmark import split_indices
from hetordinal.stability import (ItemVariant, alpha_sweep, bootstrap_stability, compare_models,
                                  item_set_sweep, n_min_sweep, weight_resample_refit)

from conftest import tier_instance

CFG = MixtureConfig(k=3, seed=3)


def _X(data):
    return transform(data, fit_embedding(data)).X


@pytest.fixture(scope="module")
def easy():
    return tier_instance("easy", 0)


@pytest.fixture(scope="module")
def small(easy):
    return easy.data.take(np.arange(1200))


@pytest.fixture(scope="module")
def small_ref(small):
    return fit(_X(small), CFG, item_names=small.item_names)


class TestBootstrap:
    def test_identity_resample_pinned(self, small, small_ref):
        rep = bootstrap_stability(small, small_ref, config=CFG, mode="pinned",
                                  resamples=[np.arange(small.n_rows)])
        assert rep.B == 1 and rep.rows[0]["agreement"] == 1.0

    def test_identity_resample_rediscover(self, small):
        X = _X(small)
        k_hat = effective_k(fit(X, CFG.replace(k=10, bnp=True)))
        ref = fit(X, CFG.replace(k=k_hat), item_names=small.item_names)
        rep = bootstrap_stability(small, ref, config=CFG, resamples=[np.arange(small.n_rows)])
        assert rep.rows[0]["k_fit"] == k_hat and rep.rows[0]["agreement"] == 1.0

    def test_rows_and_summary(self, small, small_ref):
        rep = bootstrap_stability(small, small_ref, B=3, config=CFG, mode="pinned", seed=5)
        assert [r["replicate"] for r in rep.rows] == [0, 1, 2]
        ag = np.array([r["agreement"] for r in rep.rows])
        assert np.all((ag >= 0) & (ag <= 1))
        s = rep.summary
        assert s["mean"] == pytest.approx(ag.mean())
        assert s["min"] == ag.min() and s["max"] == ag.max()
        assert s["sd"] == pytest.approx(ag.std(ddof=1))
        assert s["mean_k"] == pytest.approx(np.mean([r["effective_k"] for r in rep.rows]))
        assert s["mean_max_responsibility"] == pytest.approx(
            np.mean([r["mean_max_responsibility"] for r in rep.rows]))
        json.dumps(rep.to_dict())

    def test_deterministic(self, small, small_ref):
        a = bootstrap_stability(small, small_ref, B=2, config=CFG, mode="pinned", seed=9)
        b = bootstrap_stability(small, small_ref, B=2, config=CFG, mode="pinned", seed=9)
        assert a.rows == b.rows

    def test_errors(self, small, small_ref):
        with pytest.raises(ConfigError):
            bootstrap_stability(small, small_ref, mode="bogus")
        with pytest.raises(ConfigError):
            bootstrap_stability(small, small_ref, B=0)
        with pytest.raises(ConfigError):
            bootstrap_stability(small.take(np.arange(100)), small_ref, B=1)


def test_compare_with_itself(small, small_ref):
    c = compare_models(small_ref, small_ref.labels, small.item_names, small.values,
                       small_ref, small_ref.labels, small.item_names, small.values)
    assert c["mean_shd"] == 0 and c["mean_jaccard"] == 1 and c["profile_rmse"] == 0
    assert c["agreement"] == 1


class TestSweeps:
    def test_alpha_reference_row(self, small):
        rep = alpha_sweep(small, (0.5, 1.0), CFG, k_max=6)
        row = rep.row("1")
        assert row["mean_shd"] == 0 and row["mean_jaccard"] == 1 and row["profile_rmse"] == 0
        assert rep.column("setting") == ["0.5", "1"]
        assert all(0 <= j <= 1 for j in rep.column("mean_jaccard"))
        json.dumps(rep.to_dict())

    def test_alpha_needs_values(self, small):
        with pytest.raises(ConfigError):
            alpha_sweep(small, (), CFG)

    def test_item_variants(self, small):
        rep = item_set_sweep(small, ["", "-item_8"], CFG)
        assert rep.row("base")["mean_shd"] == 0 and rep.row("base")["profile_rmse"] == 0
        row = rep.row("-item_8")
        assert rep.models["-item_8"].dags[0].n_nodes == 7
        assert 0 <= row["mean_jaccard"] <= 1

    def test_item_variant_added_back(self, small):
        rep = item_set_sweep(small, ["+item_8"], CFG, base_items=small.item_names[:7])
        assert rep.models["+item_8"].dags[0].n_nodes == 8

    @pytest.mark.parametrize("variant", ["-nope", "+item_1", "item_1", "-item_1,-item_2,-item_3,-item_4,-item_5,-item_6"])
    def test_invalid_variants(self, small, variant):
        with pytest.raises(InvalidVariant):
            item_set_sweep(small, [variant], CFG)

    def test_parse_forms(self):
        assert ItemVariant.parse("-a,+b") == ItemVariant("-a,+b", ("b",), ("a",))
        assert ItemVariant.parse({"remove": ["a"]}).name == "-a"
        assert ItemVariant.parse("").name == "base"

    def test_n_min_zero_matches_unconstrained(self, small):
        rep = n_min_sweep(small, (0,), CFG.replace(n_min=0))
        model = rep.models["0"]
        assert not any(t.pruned for t in model.trace)
        direct = fit(_X(small), CFG.replace(n_min=0))
        np.testing.assert_array_equal(model.labels, direct.labels)

    def test_n_min_above_n_collapses(self, small):
        n = small.n_rows
        rep = n_min_sweep(small, (120, n + 1), CFG)
        big = rep.row(f"{float(n + 1):g}")
        assert big["effective_k"] == 1
        X = _X(small)
        tr, te = split_indices(n, 0.2, derive_seed(0, 0))
        single = holdout_mse(fit_single_graph(X[tr], CFG.replace(k=1)), X[te])
        assert big["mse"] == pytest.approx(single, rel=0.02)

    def test_n_min_must_ascend(self, small):
        with pytest.raises(ConfigError):
            n_min_sweep(small, (400, 120), CFG)

    def test_weights_identity_self_comparison(self, small):
        rep = weight_resample_refit(small, np.ones(small.n_rows), config=CFG,
                                    resamples=[np.arange(small.n_rows)])
        row = rep.rows[0]
        assert row["profile_rmse"] == 0 and row["mean_jaccard"] == 1 and row["mean_shd"] == 0

    def test_weights_validated(self, small):
        with pytest.raises(ConfigError):
            weight_resample_refit(small, np.zeros(small.n_rows), config=CFG)
        with pytest.raises(ConfigError):
            weight_resample_refit(small, np.ones(3), config=CFG)


@pytest.mark.slow
class TestRecoverability:
    def test_alpha_mse_flat(self, easy):
        rep = alpha_sweep(easy.data, (0.5, 1.0, 2.0), CFG, k_max=10)
        mse = rep.column("mse")
        assert max(mse) - min(mse) <= 0.05

    def test_removing_non_hub_item(self, easy):
        degree = sum(d.adjacency().sum(axis=0) + d.adjacency().sum(axis=1) for d in easy.dags)
        drop = easy.data.item_names[int(np.argmin(degree))]
        rep = item_set_sweep(easy.data, ["", f"-{drop}"], CFG)
        base = ari(rep.models["base"].labels, easy.labels)
        reduced = ari(rep.models[f"-{drop}"].labels, easy.labels)
        assert base - reduced < 0.1

    def test_mild_weights_keep_k(self, easy):
        w = np.random.default_rng(1).uniform(0.5, 1.5, easy.data.n_rows)
        rep = weight_resample_refit(easy.data, w, R=4, config=CFG, seed=2)
        assert sum(r["effective_k"] == 3 for r in rep.rows) >= 3
