"""Hard cluster assignment from G and clustering quality metrics."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError

__all__ = [
    "Partition",
    "MetricReport",
    "assign_clusters",
    "confusion_matrix",
    "accuracy",
    "matched_permutation",
    "matching_oracle",
    "nmi",
    "purity",
    "evaluate",
]

MAX_ORACLE_K = 6


@dataclass(frozen=True)
class Partition:
    """Cluster index per sample. ``flagged`` lists rows of G that were all zero."""

    labels: np.ndarray
    k: int
    flagged: tuple = ()

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.ndim != 1:
            raise InputError("labels must be a 1-D vector")
        if labels.size and (labels.min() < 0 or labels.max() >= self.k):
            raise InputError(f"labels must lie in [0, {self.k})")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)


@dataclass
class MetricReport:
    accuracy: float
    nmi: float
    purity: float
    matched_permutation: Dict[int, Optional[int]] = field(default_factory=dict)

    def as_dict(self):
        return {
            "accuracy": self.accuracy,
            "nmi": self.nmi,
            "purity": self.purity,
            "matched_permutation": {str(c): v for c, v in self.matched_permutation.items()},
        }


def assign_clusters(G) -> Partition:
    """Row-wise argmax of ``G``; ties go to the smallest column index.

    All-zero rows are assigned cluster 0 and listed in ``flagged``.
    """
    G = np.asarray(G, dtype=float)
    if G.ndim != 2:
        raise InputError(f"G must be 2-D, got shape {G.shape}")
    labels = np.argmax(G, axis=1)  # first maximum wins
    zero = np.flatnonzero(~np.any(G > 0, axis=1))
    labels[zero] = 0
    return Partition(labels, G.shape[1], tuple(int(i) for i in zero))


def _labels(x):
    if isinstance(x, Partition):
        return x.labels
    x = np.asarray(x)
    if x.ndim != 1:
        raise InputError("labels must be a 1-D vector")
    return x


def _pair(truth, pred):
    t, p = _labels(truth), _labels(pred)
    if len(t) != len(p):
        raise InputError(f"partitions differ in length: {len(t)} vs {len(p)}")
    if len(t) == 0:
        raise InputError("partitions are empty")
    return t, p


def confusion_matrix(truth, pred):
    """Counts with predicted clusters as rows and true classes as columns.

    Returns ``(M, clusters, classes)`` where the last two map row and
    column indices back to the original label values.
    """
    t, p = _pair(truth, pred)
    classes, ti = np.unique(t, return_inverse=True)
    clusters, pi = np.unique(p, return_inverse=True)
    M = np.zeros((len(clusters), len(classes)), dtype=np.int64)
    np.add.at(M, (pi, ti), 1)
    return M, clusters, classes


def _square(M):
    m = max(M.shape)
    S = np.zeros((m, m), dtype=M.dtype)
    S[:M.shape[0], :M.shape[1]] = M
    return S


def matched_permutation(truth, pred) -> Dict[int, Optional[int]]:
    """Optimal cluster -> class map used by :func:`accuracy`.

    Clusters left without a class when there are more clusters than
    classes map to ``None``.
    """
    M, clusters, classes = confusion_matrix(truth, pred)
    rows, cols = linear_sum_assignment(_square(M), maximize=True)
    out = {}
    for r, c in zip(rows, cols):
        if r < len(clusters):
            out[clusters[r].item()] = classes[c].item() if c < len(classes) else None
    return out


def accuracy(truth, pred) -> float:
    """Best fraction of samples correctly labelled under a one-to-one
    cluster-to-class mapping (Hungarian assignment on the confusion matrix)."""
    M, _, _ = confusion_matrix(truth, pred)
    S = _square(M)
    rows, cols = linear_sum_assignment(S, maximize=True)
    return float(S[rows, cols].sum() / M.sum())


def matching_oracle(truth, pred) -> float:
    """Accuracy by exhaustive search over all bijections (at most 6 labels)."""
    M, _, _ = confusion_matrix(truth, pred)
    S = _square(M)
    m = S.shape[0]
    if m > MAX_ORACLE_K:
        raise InputError(f"exhaustive matching supports at most {MAX_ORACLE_K} labels, got {m}")
    best = max(sum(S[i, perm[i]] for i in range(m)) for perm in itertools.permutations(range(m)))
    return float(best / M.sum())


def _entropy(counts):
    # sorted so equal count multisets give bit-identical entropies
    counts = np.sort(counts[counts > 0].astype(float))
    q = counts / counts.sum()
    return float(-np.sum(q * np.log(q)))


def nmi(truth, pred) -> float:
    """Mutual information normalised by ``max(H(truth), H(pred))``.

    When either partition has a single cluster the entropy vanishes; the
    score is then 1 if both partitions are single-cluster and 0 otherwise.
    Mutual information is taken as ``H(truth) + H(pred) - H(truth, pred)``,
    which makes partitions equal up to relabelling score exactly 1.
    """
    M, _, _ = confusion_matrix(truth, pred)
    h_pred = _entropy(M.sum(axis=1))
    h_true = _entropy(M.sum(axis=0))
    h = max(h_true, h_pred)
    if h == 0.0:
        return 1.0
    mi = h_true + h_pred - _entropy(M.ravel())
    return float(min(max(mi / h, 0.0), 1.0))


def purity(truth, pred) -> float:
    """Fraction of samples belonging to the majority class of their cluster."""
    M, _, _ = confusion_matrix(truth, pred)
    return float(M.max(axis=1).sum() / M.sum())


def evaluate(truth, pred) -> MetricReport:
    return MetricReport(
        accuracy=accuracy(truth, pred),
        nmi=nmi(truth, pred),
        purity=purity(truth, pred),
        matched_permutation=matched_permutation(truth, pred),
    )

