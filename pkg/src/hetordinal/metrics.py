"""Partition and graph recovery metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import LengthMismatch, NoMatchedClusters, NodeSetMismatch

__all__ = [
    "Alignment",
    "canonical_labels",
    "contingency",
    "ari",
    "nmi",
    "shd",
    "edge_jaccard",
    "align_clusters",
    "assignment_agreement",
    "profile_rmse",
    "UNMATCHED",
]

UNMATCHED = -1


def canonical_labels(labels) -> np.ndarray:
    """Relabel to contiguous ids 0..k-1 in order of first appearance."""
    labels = np.asarray(labels)
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inv.reshape(-1)]


def _check_pair(a, b):
    a = np.asarray(a).reshape(-1)
    b = np.asarray(b).reshape(-1)
    if a.shape != b.shape:
        raise LengthMismatch(f"partitions have lengths {a.size} and {b.size}")
    return a, b


def contingency(a, b) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contingency table with the distinct labels of each partition."""
    a, b = _check_pair(a, b)
    ua, ia = np.unique(a, return_inverse=True)
    ub, ib = np.unique(b, return_inverse=True)
    table = np.zeros((ua.size, ub.size), dtype=np.int64)
    np.add.at(table, (ia.reshape(-1), ib.reshape(-1)), 1)
    return table, ua, ub


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1.0) / 2.0


def ari(a, b) -> float:
    """Adjusted Rand index (Hubert and Arabie)."""
    table, _, _ = contingency(a, b)
    n = table.sum()
    if n < 2:
        return 1.0
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    total = n * (n - 1) / 2.0
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        # both partitions trivial in the same way (all-singletons or one block)
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def _entropy(counts: np.ndarray, n: float) -> float:
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(a, b) -> float:
    """Mutual information normalised by the arithmetic mean of the entropies."""
    table, _, _ = contingency(a, b)
    n = float(table.sum())
    if n == 0:
        return 1.0
    ha = _entropy(table.sum(axis=1), n)
    hb = _entropy(table.sum(axis=0), n)
    if ha == 0.0 and hb == 0.0:
        return 1.0
    if ha == 0.0 or hb == 0.0:
        return 0.0
    rows = table.sum(axis=1, keepdims=True)
    cols = table.sum(axis=0, keepdims=True)
    nz = table > 0
    mi = float((table[nz] / n * np.log(table[nz] * n / (rows * cols)[nz])).sum())
    return float(min(max(mi / (0.5 * (ha + hb)), 0.0), 1.0))


def _edge_set(g) -> set[tuple[int, int]]:
    if hasattr(g, "edges") and not isinstance(g, (set, frozenset, list, tuple, np.ndarray)):
        g = g.edges
    if isinstance(g, np.ndarray):
        return {(int(m), int(j)) for m, j in zip(*np.nonzero(g))}
    return {(_py(m), _py(j)) for m, j in g}


def _py(v):
    return v.item() if isinstance(v, np.generic) else v


def _nodes_of(g):
    if hasattr(g, "n_nodes"):
        return g.n_nodes
    if isinstance(g, np.ndarray):
        return g.shape[0]
    return None


def _check_nodes(g1, g2, nodes):
    n1, n2 = _nodes_of(g1), _nodes_of(g2)
    if n1 is not None and n2 is not None and n1 != n2:
        raise NodeSetMismatch(f"graphs have {n1} and {n2} nodes")
    e1, e2 = _edge_set(g1), _edge_set(g2)
    if nodes is not None:
        nodes = set(nodes)
        for e in e1 | e2:
            if e[0] not in nodes or e[1] not in nodes:
                raise NodeSetMismatch(f"edge {e} references a node outside the shared node set")
    return e1, e2


def shd(g1, g2, nodes: Iterable | None = None) -> int:
    """Structural Hamming distance between two directed graphs.

    Counts node pairs whose edge status differs; a reversed edge counts once.
    Graphs may be edge collections, adjacency matrices or objects with an
    ``edges`` attribute.
    """
    e1, e2 = _check_nodes(g1, g2, nodes)
    pairs = {frozenset(e) for e in e1 | e2}
    dist = 0
    for pair in pairs:
        u, v = tuple(pair)
        s1 = ((u, v) in e1, (v, u) in e1)
        s2 = ((u, v) in e2, (v, u) in e2)
        if s1 != s2:
            dist += 1
    return dist


def edge_jaccard(g1, g2, nodes: Iterable | None = None) -> float:
    """Intersection over union of directed edge sets; 1 when both are empty."""
    e1, e2 = _check_nodes(g1, g2, nodes)
    union = e1 | e2
    if not union:
        return 1.0
    return len(e1 & e2) / len(union)


@dataclass(frozen=True)
class Alignment:
    """Map from candidate cluster ids to reference ids.

    Candidate clusters left without a partner map to ``UNMATCHED``.
    """

    mapping: dict
    overlap: int

    def apply(self, labels) -> np.ndarray:
        labels = np.asarray(labels)
        return np.array([self.mapping.get(l.item() if hasattr(l, "item") else l, UNMATCHED)
                         for l in labels], dtype=np.int64)

    def matched(self) -> list[tuple]:
        return sorted((c, r) for c, r in self.mapping.items() if r != UNMATCHED)


def align_clusters(cand, ref) -> Alignment:
    """Maximum-overlap one-to-one matching of candidate to reference clusters."""
    table, uc, ur = contingency(cand, ref)
    rows, cols = linear_sum_assignment(-table)
    mapping = {c.item(): UNMATCHED for c in uc}
    overlap = 0
    for i, k in zip(rows, cols):
        mapping[uc[i].item()] = ur[k].item()
        overlap += int(table[i, k])
    return Alignment(mapping, overlap)


def assignment_agreement(cand, ref, alignment: Alignment | None = None) -> float:
    """Fraction of rows whose aligned candidate label equals the reference label."""
    cand, ref = _check_pair(cand, ref)
    if cand.size == 0:
        return 1.0
    if alignment is None:
        alignment = align_clusters(cand, ref)
    return float(np.mean(alignment.apply(cand) == ref))


def profile_rmse(means1, means2, alignment: Alignment | Sequence[tuple[int, int]]) -> float:
    """RMS difference of cluster mean profiles over matched cluster pairs.

    ``alignment`` maps row indices of ``means1`` to row indices of ``means2``.
    """
    m1 = np.asarray(means1, dtype=float)
    m2 = np.asarray(means2, dtype=float)
    pairs = alignment.matched() if isinstance(alignment, Alignment) else list(alignment)
    pairs = [(c, r) for c, r in pairs if r != UNMATCHED]
    if not pairs:
        raise NoMatchedClusters("no matched cluster pairs to compare")
    if m1.shape[1] != m2.shape[1]:
        raise LengthMismatch("profile matrices have different item counts")
    diffs = np.array([m1[c] - m2[r] for c, r in pairs])
    return float(math.sqrt(np.mean(diffs ** 2)))
