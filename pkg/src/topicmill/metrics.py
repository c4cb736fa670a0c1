"""Ground-truth clustering agreement metrics: Purity, P1, ARI, NMI.

All metrics are computed from a single contingency table between the two
clusterings, so evaluation is O(K*C) rather than O(n^2). The test suite keeps
an independent brute-force pair-enumeration oracle to pin these down.

Conventions for degenerate inputs (where the textbook formulas are 0/0):
ARI and NMI are 1.0 when both clusterings induce the identical partition and
are otherwise 0.0 (NMI additionally returns 0.0 when exactly one side has
zero entropy).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Clustering, Document


class ClusteringMismatchError(ValueError):
    """The two clusterings do not cover the identical document-id set."""


class MissingGoldLabelError(ValueError):
    def __init__(self, doc_ids: list[str]):
        super().__init__(f"documents missing gold labels: {sorted(doc_ids)}")
        self.doc_ids = doc_ids


@dataclass(frozen=True)
class ContingencyTable:
    """Co-occurrence counts n[k][c] = |docs in cluster k of U and cluster c of V|."""

    counts: np.ndarray
    row_sums: np.ndarray
    col_sums: np.ndarray
    n: int


def contingency(u: Clustering, v: Clustering) -> ContingencyTable:
    u_ids = set(u.assignment)
    v_ids = set(v.assignment)
    if u_ids != v_ids:
        diff = sorted(u_ids.symmetric_difference(v_ids))
        raise ClusteringMismatchError(f"clusterings cover different documents: {diff}")
    counts = np.zeros((u.k, v.k), dtype=np.int64)
    for doc_id, uk in u.assignment.items():
        counts[uk, v.assignment[doc_id]] += 1
    return ContingencyTable(
        counts=counts,
        row_sums=counts.sum(axis=1),
        col_sums=counts.sum(axis=0),
        n=int(counts.sum()),
    )


def purity(u: Clustering, v: Clustering) -> float:
    """P(U,V) = (1/N) * sum_k max_c |C_Uk intersect T_Vc|."""
    table = contingency(u, v)
    if table.n < 1:
        raise ValueError("purity requires at least one document")
    return float(table.counts.max(axis=1).sum() / table.n)


def p1(u: Clustering, v: Clustering) -> float:
    """Harmonic mean of the two directed purities; symmetric in its arguments."""
    puv = purity(u, v)
    pvu = purity(v, u)
    if puv + pvu == 0.0:
        return 0.0
    return 2.0 * puv * pvu / (puv + pvu)


def _same_partition(u: Clustering, v: Clustering) -> bool:
    # identical up to cluster relabeling: the contingency table is a
    # permutation matrix over nonzero rows/cols
    table = contingency(u, v)
    nonzero_per_row = (table.counts > 0).sum(axis=1)
    nonzero_per_col = (table.counts > 0).sum(axis=0)
    return bool(
        np.all(nonzero_per_row[table.row_sums > 0] == 1)
        and np.all(nonzero_per_col[table.col_sums > 0] == 1)
    )


def _comb2(x: np.ndarray | int) -> np.ndarray | float:
    return x * (x - 1) / 2.0


def ari(u: Clustering, v: Clustering) -> float:
    """Adjusted Rand Index via the contingency-table pair-count form.

    index    = sum_kc C(n_kc, 2)
    expected = sum_k C(a_k, 2) * sum_c C(b_c, 2) / C(n, 2)
    max      = (sum_k C(a_k, 2) + sum_c C(b_c, 2)) / 2
    ari      = (index - expected) / (max - expected)
    """
    table = contingency(u, v)
    if table.n < 2:
        raise ValueError("ari requires at least two documents")
    index = float(_comb2(table.counts).sum())
    sum_a = float(_comb2(table.row_sums).sum())
    sum_b = float(_comb2(table.col_sums).sum())
    pairs = float(_comb2(table.n))
    expected = sum_a * sum_b / pairs
    max_index = 0.5 * (sum_a + sum_b)
    if math.isclose(max_index, expected, rel_tol=0.0, abs_tol=1e-12):
        # both clusterings trivial; the formula is 0/0 there
        return 1.0 if _same_partition(u, v) else 0.0
    return (index - expected) / (max_index - expected)


def _entropy(freqs: np.ndarray, n: int) -> float:
    p = freqs[freqs > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(u: Clustering, v: Clustering) -> float:
    """NMI(U,V) = 2*I(U,V) / (H_U + H_V), natural log, 0*log0 = 0."""
    table = contingency(u, v)
    if table.n < 1:
        raise ValueError("nmi requires at least one document")
    n = table.n
    h_u = _entropy(table.row_sums, n)
    h_v = _entropy(table.col_sums, n)
    if h_u == 0.0 and h_v == 0.0:
        return 1.0  # both single-cluster: identical trivial partitions
    if h_u == 0.0 or h_v == 0.0:
        return 0.0
    mi = 0.0
    nz = np.nonzero(table.counts)
    for k, c in zip(*nz):
        n_kc = table.counts[k, c]
        mi += (n_kc / n) * math.log(n_kc * n / (table.row_sums[k] * table.col_sums[c]))
    value = 2.0 * mi / (h_u + h_v)
    # clamp fp noise at the boundaries
    return float(min(1.0, max(0.0, value)))


def labels_to_clustering(docs: list[Document]) -> Clustering:
    """Map gold labels to cluster indices in first-appearance order."""
    missing = [d.id for d in docs if d.gold_label is None]
    if missing:
        raise MissingGoldLabelError(missing)
    index: dict[str, int] = {}
    assignment: dict[str, int] = {}
    for doc in docs:
        label = doc.gold_label
        if label not in index:
            index[label] = len(index)
        assignment[doc.id] = index[label]
    return Clustering(assignment=assignment, k=max(1, len(index)))
