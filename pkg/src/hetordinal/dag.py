"""Sparse linear-Gaussian DAGs: weighted fitting, weighted BIC, greedy search.

Every node ``j`` of an archetype graph is a weighted least-squares
regression on its parents. Scores decompose over nodes,

    BIC_j = n log(RSS_j / n) + lambda * d_j log n,    n = sum_i r_i,

so a search step only rescores the one or two families it touches. All
family fits are computed from a single weighted, centred scatter matrix of
the data, which makes rescoring independent of the number of rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, SchemaMismatch

__all__ = [
    "ArchetypeDag",
    "NodeFit",
    "SearchStep",
    "WeightedMoments",
    "weighted_node_fit",
    "node_bic",
    "graph_bic",
    "greedy_search",
    "fit_structure",
    "is_acyclic",
    "log_density_row",
    "log_density",
    "RSS_FLOOR",
    "VARIANCE_FLOOR",
    "RIDGE_JITTER",
]

RSS_FLOOR = 1e-10  # relative to n_eff
VARIANCE_FLOOR = 1e-6
RIDGE_JITTER = 1e-8
_LOG2PI = math.log(2.0 * math.pi)


def _parents_of(structure, J=None) -> list[tuple[int, ...]]:
    """Normalise a structure to a list of sorted parent tuples.

    Accepts an :class:`ArchetypeDag`, a J x J adjacency matrix
    (``adj[m, j] != 0`` means ``m -> j``), or a sequence of parent sets.
    """
    if isinstance(structure, ArchetypeDag):
        return list(structure.parents)
    arr = structure if isinstance(structure, np.ndarray) else None
    if arr is not None and arr.ndim == 2:
        return [tuple(int(m) for m in np.flatnonzero(arr[:, j])) for j in range(arr.shape[1])]
    return [tuple(sorted(int(m) for m in ps)) for ps in structure]


def is_acyclic(structure) -> bool:
    """True iff the directed graph admits a topological order (Kahn's algorithm)."""
    parents = _parents_of(structure)
    J = len(parents)
    indeg = [len(ps) for ps in parents]
    children: list[list[int]] = [[] for _ in range(J)]
    for j, ps in enumerate(parents):
        for m in ps:
            if m == j:
                return False
            children[m].append(j)
    queue = [j for j in range(J) if indeg[j] == 0]
    seen = 0
    while queue:
        node = queue.pop()
        seen += 1
        for c in children[node]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    return seen == J


def topological_order(parents: Sequence[Sequence[int]]) -> list[int]:
    J = len(parents)
    indeg = [len(ps) for ps in parents]
    children: list[list[int]] = [[] for _ in range(J)]
    for j, ps in enumerate(parents):
        for m in ps:
            children[m].append(j)
    ready = sorted(j for j in range(J) if indeg[j] == 0)
    order = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        for c in children[node]:
            indeg[c] -= 1
            if indeg[c] == 0:
                ready.append(c)
        ready.sort()
    if len(order) != J:
        raise DataError("graph contains a cycle")
    return order


@dataclass
class ArchetypeDag:
    """One archetype's graph and its structural-equation parameters.

    ``weights[m, j]`` is the coefficient of parent ``m`` in the equation of
    node ``j``; it is zero for non-edges.
    """

    parents: tuple[tuple[int, ...], ...]
    weights: np.ndarray
    intercepts: np.ndarray
    residual_vars: np.ndarray
    max_parents: int | None = None

    def __post_init__(self):
        self.parents = tuple(tuple(sorted(int(m) for m in ps)) for ps in self.parents)
        J = len(self.parents)
        self.weights = np.asarray(self.weights, dtype=float).reshape(J, J)
        self.intercepts = np.asarray(self.intercepts, dtype=float).reshape(J)
        self.residual_vars = np.asarray(self.residual_vars, dtype=float).reshape(J)
        if not is_acyclic(self.parents):
            raise DataError("archetype graph must be acyclic")
        if self.max_parents is not None and any(len(ps) > self.max_parents for ps in self.parents):
            raise DataError(f"a node exceeds the parent cap of {self.max_parents}")
        if np.any(self.residual_vars <= 0):
            raise DataError("residual variances must be strictly positive")

    @property
    def n_nodes(self) -> int:
        return len(self.parents)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return sorted((m, j) for j, ps in enumerate(self.parents) for m in ps)

    @property
    def n_params(self) -> int:
        return sum(len(ps) + 1 for ps in self.parents)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n_nodes, self.n_nodes), dtype=int)
        for m, j in self.edges:
            A[m, j] = 1
        return A

    @classmethod
    def empty(cls, J: int) -> "ArchetypeDag":
        return cls(tuple(() for _ in range(J)), np.zeros((J, J)), np.zeros(J), np.ones(J))

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Per-node conditional means given the observed values of the parents."""
        X = np.asarray(X, dtype=float)
        return self.intercepts + X @ self.weights

    def to_dict(self, item_names: Sequence[str] | None = None) -> dict:
        names = list(item_names) if item_names is not None else [str(j) for j in range(self.n_nodes)]
        return {
            "nodes": names,
            "edges": [
                {"source": names[m], "target": names[j], "weight": float(self.weights[m, j])}
                for m, j in self.edges
            ],
            "intercepts": {names[j]: float(self.intercepts[j]) for j in range(self.n_nodes)},
            "residual_vars": {names[j]: float(self.residual_vars[j]) for j in range(self.n_nodes)},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchetypeDag":
        names = list(d["nodes"])
        index = {n: j for j, n in enumerate(names)}
        J = len(names)
        parents: list[list[int]] = [[] for _ in range(J)]
        W = np.zeros((J, J))
        for e in d["edges"]:
            m, j = index[e["source"]], index[e["target"]]
            parents[j].append(m)
            W[m, j] = e["weight"]
        return cls(tuple(tuple(p) for p in parents), W,
                   np.array([d["intercepts"][n] for n in names]),
                   np.array([d["residual_vars"][n] for n in names]))


@dataclass
class NodeFit:
    node: int
    parents: tuple[int, ...]
    coefficients: np.ndarray  # intercept first, then one per parent
    rss: float
    n_eff: float

    @property
    def d(self) -> int:
        return len(self.parents) + 1


class WeightedMoments:
    """Weighted mean and centred scatter matrix of ``X`` under row weights ``r``.

    Every family regression (node on parent set) is solved from these
    moments; the intercept is absorbed by centring.
    """

    def __init__(self, X: np.ndarray, r: np.ndarray | None = None):
        X = np.asarray(X, dtype=float)
        if r is None:
            r = np.ones(X.shape[0])
        r = np.asarray(r, dtype=float)
        if r.shape != (X.shape[0],):
            raise SchemaMismatch(f"weight vector of length {r.shape} for {X.shape[0]} rows")
        if np.any(r < 0):
            raise DataError("weights must be nonnegative")
        n = float(r.sum())
        if not n > 0:
            raise DataError("weights must have positive total mass")
        self.n_eff = n
        self.J = X.shape[1]
        self.mean = (r @ X) / n
        Xc = X - self.mean
        self.scatter = (Xc * r[:, None]).T @ Xc

    def solve(self, j: int, parents: Sequence[int]) -> tuple[np.ndarray, float]:
        """Return (coefficients incl. intercept, rss) for node ``j`` on ``parents``."""
        S = self.scatter
        syy = S[j, j]
        if not parents:
            return np.array([self.mean[j]]), max(float(syy), 0.0)
        P = list(parents)
        Spp = S[np.ix_(P, P)]
        spy = S[P, j]
        try:
            L = np.linalg.cholesky(Spp)
            if np.min(np.diag(L)) ** 2 < 1e-12 * max(1.0, float(np.max(np.diag(Spp)))):
                raise np.linalg.LinAlgError
            beta = np.linalg.solve(Spp, spy)
        except np.linalg.LinAlgError:
            beta = np.linalg.solve(Spp + RIDGE_JITTER * np.eye(len(P)), spy)
        rss = float(syy - 2.0 * beta @ spy + beta @ Spp @ beta)
        intercept = self.mean[j] - beta @ self.mean[P]
        return np.concatenate(([intercept], beta)), max(rss, 0.0)

    def node_fit(self, j: int, parents: Sequence[int]) -> NodeFit:
        coef, rss = self.solve(j, parents)
        return NodeFit(j, tuple(parents), coef, rss, self.n_eff)


def weighted_node_fit(X, j: int, parents: Iterable[int], r=None) -> NodeFit:
    """Responsibility-weighted least-squares fit of node ``j`` on ``parents``."""
    parents = tuple(sorted(int(m) for m in parents))
    if j in parents:
        raise DataError("a node cannot be its own parent")
    return WeightedMoments(X, r).node_fit(j, parents)


def node_bic(fit: NodeFit, penalty: float = 1.0) -> float:
    """Local weighted BIC ``n log(RSS/n) + penalty * d log n`` (lower is better)."""
    return _bic(fit.rss, fit.d, fit.n_eff, penalty)


def _bic(rss: float, d: int, n: float, penalty: float) -> float:
    if not n > 0:
        raise DataError("effective mass must be positive")
    rss = max(rss, RSS_FLOOR * n)
    return n * math.log(rss / n) + penalty * d * math.log(n)


def graph_bic(X, structure, r=None, penalty: float = 1.0) -> float:
    """Sum of node BICs of ``structure`` refit under weights ``r``."""
    parents = _parents_of(structure)
    if not is_acyclic(parents):
        raise DataError("structure must be acyclic")
    mom = WeightedMoments(X, r)
    return sum(node_bic(mom.node_fit(j, ps), penalty) for j, ps in enumerate(parents))


class FamilyScorer:
    """Caches node BICs keyed by (node, parent tuple) for one weight vector."""

    def __init__(self, moments: WeightedMoments, penalty: float = 1.0):
        self.moments = moments
        self.penalty = penalty
        self._cache: dict[tuple[int, tuple[int, ...]], float] = {}

    def __call__(self, j: int, parents: Sequence[int]) -> float:
        key = (j, tuple(sorted(parents)))
        val = self._cache.get(key)
        if val is None:
            _, rss = self.moments.solve(j, key[1])
            val = _bic(rss, len(key[1]) + 1, self.moments.n_eff, self.penalty)
            self._cache[key] = val
        return val


@dataclass
class SearchStep:
    kind: str  # "add" | "delete" | "reverse"
    edge: tuple[int, int]  # the edge as it stood before the step
    bic_before: float
    bic_after: float

    def to_dict(self) -> dict:
        return {"kind": self.kind, "edge": list(self.edge),
                "bic_before": self.bic_before, "bic_after": self.bic_after}


@dataclass
class SearchTrace:
    initial_bic: float
    steps: list[SearchStep] = field(default_factory=list)

    @property
    def final_bic(self) -> float:
        return self.steps[-1].bic_after if self.steps else self.initial_bic

    def __len__(self):
        return len(self.steps)


_KIND_RANK = {"add": 0, "delete": 1, "reverse": 2}


def _reachable(children: list[set[int]], src: int, dst: int, skip: tuple[int, int] | None = None) -> bool:
    """Is there a directed path src ~> dst (optionally ignoring one edge)?"""
    if src == dst:
        return True
    stack = [src]
    seen = {src}
    while stack:
        node = stack.pop()
        for c in children[node]:
            if skip is not None and (node, c) == skip:
                continue
            if c == dst:
                return True
            if c not in seen:
                seen.add(c)
                stack.append(c)
    return False


def _search(score: FamilyScorer, parents: list[set[int]], max_parents: int,
            max_steps: int = 10_000) -> SearchTrace:
    J = len(parents)
    children: list[set[int]] = [set() for _ in range(J)]
    for j, ps in enumerate(parents):
        for m in ps:
            children[m].add(j)
    local = [score(j, parents[j]) for j in range(J)]
    total = sum(local)
    trace = SearchTrace(initial_bic=total)
    tol = 1e-9

    for _ in range(max_steps):
        candidates = []  # (delta, kind, edge, new local scores)
        for j in range(J):
            for m in range(J):
                if m == j:
                    continue
                if m in parents[j]:
                    # delete m -> j
                    nj = score(j, parents[j] - {m})
                    candidates.append((nj - local[j], "delete", (m, j), ((j, nj),)))
                    # reverse m -> j into j -> m
                    if len(parents[m]) < max_parents and not _reachable(children, m, j, skip=(m, j)):
                        nj = score(j, parents[j] - {m})
                        nm = score(m, parents[m] | {j})
                        candidates.append((nj - local[j] + nm - local[m], "reverse", (m, j),
                                           ((j, nj), (m, nm))))
                elif j not in parents[m]:
                    # add m -> j
                    if len(parents[j]) < max_parents and not _reachable(children, j, m):
                        nj = score(j, parents[j] | {m})
                        candidates.append((nj - local[j], "add", (m, j), ((j, nj),)))
        if not candidates:
            break
        best = min(c[0] for c in candidates)
        if not best < -tol * max(1.0, abs(total)):
            break
        band = best + tol * max(1.0, abs(best))
        delta, kind, (m, j), updates = min(
            (c for c in candidates if c[0] <= band), key=lambda c: (_KIND_RANK[c[1]], c[2]))
        if kind == "add":
            parents[j].add(m)
            children[m].add(j)
        elif kind == "delete":
            parents[j].discard(m)
            children[m].discard(j)
        else:
            parents[j].discard(m)
            children[m].discard(j)
            parents[m].add(j)
            children[j].add(m)
        for node, val in updates:
            local[node] = val
        new_total = sum(local)
        trace.steps.append(SearchStep(kind, (m, j), total, new_total))
        total = new_total
    return trace


def fit_structure(moments: WeightedMoments, parents: Sequence[Sequence[int]],
                  max_parents: int | None = None,
                  variance_floor: float = VARIANCE_FLOOR) -> ArchetypeDag:
    """Refit every node of a fixed structure from weighted moments."""
    J = moments.J
    W = np.zeros((J, J))
    b0 = np.zeros(J)
    var = np.zeros(J)
    for j, ps in enumerate(parents):
        ps = tuple(sorted(ps))
        coef, rss = moments.solve(j, ps)
        b0[j] = coef[0]
        for m, b in zip(ps, coef[1:]):
            W[m, j] = b
        var[j] = max(rss / moments.n_eff, variance_floor)
    return ArchetypeDag(tuple(tuple(sorted(ps)) for ps in parents), W, b0, var, max_parents)


def greedy_search(X, r=None, max_parents: int = 2, warm_start=None, penalty: float = 1.0,
                  variance_floor: float = VARIANCE_FLOOR,
                  moments: WeightedMoments | None = None) -> tuple[ArchetypeDag, SearchTrace]:
    """Best-improvement hill climbing over add/delete/reverse moves.

    Parameters
    ----------
    X : array of shape (n_rows, n_nodes)
    r : array of shape (n_rows,), optional
        Nonnegative row weights; unit weights when omitted.
    max_parents : int
        Parent cap enforced on every move.
    warm_start : ArchetypeDag or structure, optional
        Starting graph; the empty graph when omitted.
    penalty : float
        Multiplier on the ``d log n`` complexity term.

    Returns
    -------
    dag : ArchetypeDag
        Local optimum with refreshed coefficients and residual variances.
    trace : SearchTrace
        Accepted moves with the graph BIC before and after each.

    Notes
    -----
    Moves whose improvements agree to within a relative 1e-9 are treated as
    tied and broken by kind (add, delete, reverse), then by (source, target).
    """
    if max_parents < 1:
        raise DataError("max_parents must be at least 1")
    mom = moments if moments is not None else WeightedMoments(X, r)
    J = mom.J
    if warm_start is None:
        parents = [set() for _ in range(J)]
    else:
        start = _parents_of(warm_start)
        if len(start) != J:
            raise SchemaMismatch(f"warm start has {len(start)} nodes, data has {J}")
        if not is_acyclic(start):
            raise DataError("warm start must be acyclic")
        parents = [set(ps) for ps in start]
    scorer = FamilyScorer(mom, penalty)
    trace = _search(scorer, parents, max_parents)
    cap = max(max_parents, max((len(p) for p in parents), default=0))
    dag = fit_structure(mom, [tuple(sorted(p)) for p in parents], cap, variance_floor)
    return dag, trace


def log_density(X, dag: ArchetypeDag) -> np.ndarray:
    """Row-wise joint Gaussian log-density under the structural equations."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    resid = X - dag.predict(X)
    var = dag.residual_vars
    return -0.5 * (X.shape[1] * _LOG2PI + np.sum(np.log(var)) + (resid ** 2 / var).sum(axis=1))


def log_density_row(x, dag: ArchetypeDag) -> float:
    return float(log_density(np.asarray(x, dtype=float)[None, :], dag)[0])


def penalty_terms(dag: ArchetypeDag, n_eff: float, penalty: float = 1.0) -> float:
    """Half the BIC complexity term of a graph, in log-likelihood units."""
    return 0.5 * penalty * dag.n_params * math.log(n_eff)
