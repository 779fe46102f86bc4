import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from hetordinal.dag import (ArchetypeDag, NodeFit, graph_bic, greedy_search, is_acyclic, log_density,
                            log_density_row, node_bic, topological_order, weighted_node_fit)
from hetordinal.errors import DataError

from conftest import sem_sample


# ----------------------------------------------------------------------------- oracles

def all_dags(J):
    pairs = [(a, b) for a in range(J) for b in range(J) if a != b]
    out = []
    for mask in itertools.product((0, 1), repeat=len(pairs)):
        edges = [p for p, on in zip(pairs, mask) if on]
        A = np.zeros((J, J), dtype=int)
        for a, b in edges:
            A[a, b] = 1
        if is_acyclic(A):
            out.append(A)
    return out


def ols_bic(X, A):
    """Unit-weight BIC of structure ``A`` by explicit least squares per node."""
    n, J = X.shape
    total = 0.0
    for j in range(J):
        P = np.flatnonzero(A[:, j])
        D = np.column_stack([np.ones(n), X[:, P]])
        beta, *_ = np.linalg.lstsq(D, X[:, j], rcond=None)
        rss = float(((X[:, j] - D @ beta) ** 2).sum())
        total += n * math.log(max(rss, 1e-10 * n) / n) + (len(P) + 1) * math.log(n)
    return total


def random_three_node(rng, n=200):
    order = rng.permutation(3)
    B = np.zeros((3, 3))
    for a, b in itertools.combinations(range(3), 2):
        if rng.random() < 0.6:
            B[order[a], order[b]] = rng.uniform(-1, 1)
    return sem_sample(rng, order, B, np.zeros(3), np.ones(3), n)


DAGS3 = all_dags(3)


def test_there_are_25_dags_on_three_nodes():
    assert len(DAGS3) == 25


# ----------------------------------------------------------------------------- acyclicity

class TestAcyclic:
    def test_examples(self):
        assert is_acyclic([(), (), ()])
        assert is_acyclic([(), (0,), (1,)])
        assert not is_acyclic([(1,), (0,)])

    def test_adjacency_input(self):
        A = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0]])
        assert not is_acyclic(A)
        A[2, 0] = 0
        assert is_acyclic(A)

    def test_order_respects_edges(self):
        parents = [(2,), (0, 2), ()]
        order = topological_order(parents)
        pos = {v: i for i, v in enumerate(order)}
        for j, ps in enumerate(parents):
            assert all(pos[m] < pos[j] for m in ps)

    def test_cyclic_dag_rejected(self):
        with pytest.raises(DataError):
            ArchetypeDag([(1,), (0,)], np.zeros((2, 2)), np.zeros(2), np.ones(2))


# ----------------------------------------------------------------------------- node fits

class TestNodeFit:
    def test_intercept_only(self):
        X = np.array([[1.0], [2.0], [3.0]])
        fit = weighted_node_fit(X, 0, ())
        assert fit.coefficients[0] == pytest.approx(2.0)
        assert fit.rss == pytest.approx(2.0)
        assert fit.d == 1

    def test_exact_linear(self):
        x = np.array([0.0, 1.0, 2.0, 5.0])
        X = np.column_stack([x, 2 * x])
        fit = weighted_node_fit(X, 1, (0,))
        assert fit.coefficients[1] == pytest.approx(2.0)
        assert fit.rss == pytest.approx(0.0, abs=1e-12)

    def test_weights_equal_row_replication(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 3.0]])  # parent, child
        fit = weighted_node_fit(X, 1, (0,), r=np.array([1.0, 1.0, 2.0]))
        Xe = np.vstack([X, X[2]])
        D = np.column_stack([np.ones(4), Xe[:, 0]])
        beta = np.linalg.solve(D.T @ D, D.T @ Xe[:, 1])
        np.testing.assert_allclose(fit.coefficients, beta, atol=1e-12)
        assert fit.rss == pytest.approx(float(((Xe[:, 1] - D @ beta) ** 2).sum()), abs=1e-12)
        assert fit.n_eff == 4.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000))
    def test_integer_weights_match_expansion(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(25, 4))
        w = rng.integers(0, 4, size=25).astype(float)
        if w.sum() < 6:
            w[:6] += 1
        fit = weighted_node_fit(X, 3, (0, 2), r=w)
        Xe = np.repeat(X, w.astype(int), axis=0)
        D = np.column_stack([np.ones(len(Xe)), Xe[:, [0, 2]]])
        beta, *_ = np.linalg.lstsq(D, Xe[:, 3], rcond=None)
        np.testing.assert_allclose(fit.coefficients, beta, atol=1e-9)
        assert fit.rss == pytest.approx(float(((Xe[:, 3] - D @ beta) ** 2).sum()), rel=1e-9, abs=1e-9)

    def test_collinear_parents_do_not_fail(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=50)
        X = np.column_stack([x, x, 3 * x + rng.normal(size=50)])
        fit = weighted_node_fit(X, 2, (0, 1))
        assert np.all(np.isfinite(fit.coefficients))
        assert fit.coefficients[1] + fit.coefficients[2] == pytest.approx(3.0, abs=0.5)

    def test_self_parent_rejected(self):
        with pytest.raises(DataError):
            weighted_node_fit(np.zeros((3, 2)), 0, (0,))


class TestBic:
    def test_arithmetic(self):
        assert node_bic(NodeFit(0, (), np.zeros(1), 10.0, 10.0)) == pytest.approx(math.log(10))

    def test_unit_ratio_no_params(self):
        class F:
            rss, n_eff, d = math.e, math.e, 0

        assert node_bic(F()) == 0.0

    def test_perfect_fit_floored(self):
        v = node_bic(NodeFit(0, (1,), np.zeros(2), 0.0, 50.0))
        assert math.isfinite(v) and v < -1000

    def test_graph_decomposes(self, rng):
        X = rng.normal(size=(40, 2))
        total = graph_bic(X, [(), ()])
        parts = sum(node_bic(weighted_node_fit(X, j, ())) for j in range(2))
        assert total == pytest.approx(parts)

    def test_matches_ols_oracle(self, rng):
        X = random_three_node(rng)
        for A in DAGS3:
            assert graph_bic(X, A) == pytest.approx(ols_bic(X, A), rel=1e-10)

    def test_zero_weights_rejected(self):
        with pytest.raises(DataError):
            graph_bic(np.zeros((3, 2)), [(), ()], r=np.zeros(3))


# ----------------------------------------------------------------------------- search

class TestGreedySearch:
    def test_never_beats_exhaustive_and_usually_matches(self):
        rng = np.random.default_rng(2024)
        hits = 0
        for _ in range(60):
            X = random_three_node(rng)
            best = min(ols_bic(X, A) for A in DAGS3)
            dag, trace = greedy_search(X)
            got = ols_bic(X, dag.adjacency())
            assert got >= best - 1e-8
            hits += got <= best + 1e-8
        assert hits >= 0.9 * 60

    def test_independent_data(self, rng):
        X = rng.normal(size=(2000, 3))
        dag, _ = greedy_search(X)
        assert len(dag.edges) <= 1
        best = min(ols_bic(X, A) for A in DAGS3)
        assert ols_bic(X, dag.adjacency()) == pytest.approx(best)

    def test_single_dependency(self, rng):
        x1 = rng.normal(size=1000)
        X = np.column_stack([x1, 0.9 * x1 + 0.5 * rng.normal(size=1000), rng.normal(size=1000)])
        dag, _ = greedy_search(X)
        assert {tuple(sorted(e)) for e in dag.edges} == {(0, 1)}

    def test_warm_start_fixed_point(self, rng):
        X = random_three_node(rng, 500)
        dag, _ = greedy_search(X)
        again, trace = greedy_search(X, warm_start=dag)
        assert len(trace) == 0
        assert again.edges == dag.edges

    def test_trace_strictly_decreasing_and_acyclic(self, rng):
        order = rng.permutation(6)
        B = np.zeros((6, 6))
        for a, b in itertools.combinations(range(6), 2):
            if rng.random() < 0.4:
                B[order[a], order[b]] = rng.choice([-1, 1]) * rng.uniform(0.4, 0.9)
        X = sem_sample(rng, order, B, np.zeros(6), np.ones(6), 800)
        dag, trace = greedy_search(X, max_parents=2)
        prev = trace.initial_bic
        for step in trace.steps:
            assert step.bic_before == prev
            assert step.bic_after < step.bic_before
            prev = step.bic_after
        assert trace.final_bic == pytest.approx(graph_bic(X, dag))
        assert is_acyclic(dag.parents)
        assert max(len(p) for p in dag.parents) <= 2

    def test_parent_cap(self, rng):
        x = rng.normal(size=(500, 3))
        y = x.sum(axis=1) + 0.1 * rng.normal(size=500)
        dag, _ = greedy_search(np.column_stack([x, y]), max_parents=1)
        assert max(len(p) for p in dag.parents) <= 1

    def test_residual_variance_floor(self):
        x = np.linspace(0, 1, 30)
        dag, _ = greedy_search(np.column_stack([x, 2 * x]), variance_floor=1e-6)
        assert dag.residual_vars.min() >= 1e-6

    def test_weighted_search_ignores_zero_weight_rows(self, rng):
        X = random_three_node(rng, 300)
        junk = rng.normal(scale=5, size=(100, 3))
        r = np.concatenate([np.ones(300), np.zeros(100)])
        a, _ = greedy_search(np.vstack([X, junk]), r)
        b, _ = greedy_search(X)
        assert a.edges == b.edges
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-10)

    def test_deterministic(self, rng):
        X = random_three_node(rng)
        a, ta = greedy_search(X)
        b, tb = greedy_search(X)
        assert a.edges == b.edges and [s.to_dict() for s in ta.steps] == [s.to_dict() for s in tb.steps]


# ----------------------------------------------------------------------------- densities

class TestLogDensity:
    def test_standard_normal(self):
        g = ArchetypeDag.empty(2)
        assert log_density_row(np.zeros(2), g) == pytest.approx(-1.8378770664093453)
        assert log_density_row(np.array([1.0, 0.0]), g) == pytest.approx(-2.3378770664093453)

    def test_joint_gaussian_oracle(self, rng):
        # chain 0 -> 1 -> 2 plus 0 -> 2
        W = np.zeros((3, 3))
        W[0, 1], W[1, 2], W[0, 2] = 0.8, -0.6, 0.3
        b = np.array([0.5, -1.0, 2.0])
        v = np.array([1.0, 0.5, 2.0])
        g = ArchetypeDag([(), (0,), (0, 1)], W, b, v)
        # x = b + W^T x + e  =>  x = (I - W^T)^{-1} (b + e)
        M = np.linalg.inv(np.eye(3) - W.T)
        mean = M @ b
        cov = M @ np.diag(v) @ M.T
        X = rng.normal(size=(50, 3)) * 2
        np.testing.assert_allclose(log_density(X, g), multivariate_normal(mean, cov).logpdf(X), atol=1e-10)

    def test_serialisation_round_trip(self, rng):
        X = random_three_node(rng)
        dag, _ = greedy_search(X)
        back = ArchetypeDag.from_dict(dag.to_dict(["a", "b", "c"]))
        assert back.edges == dag.edges
        np.testing.assert_allclose(back.weights, dag.weights)
        np.testing.assert_allclose(log_density(X, back), log_density(X, dag))
