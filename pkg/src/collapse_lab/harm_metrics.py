"""Cosine statistics between blocks and representation-harm ratios.

Undefined entries (singleton diagonals, ratios with a vanishing denominator)
are ``nan``, never 0 or inf.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyBlockError

RATIO_EPS = 1e-12


def _unit(X) -> np.ndarray:
    X = np.asarray(getattr(X, "rows", X), dtype=float)
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def _labels(V, labels) -> np.ndarray:
    if labels is None:
        labels = getattr(V, "labels", None)
    if labels is None:
        raise ValueError("block labels are required")
    return np.asarray(labels, dtype=np.int64)


@dataclass
class CosineSummary:
    mean: np.ndarray
    std: np.ndarray
    counts: np.ndarray


@dataclass
class HarmReport:
    rh: np.ndarray
    d_under: np.ndarray
    d_bal: np.ndarray
    k: int

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.rh)


def cosine_summary(V, labels=None, n_blocks: Optional[int] = None) -> CosineSummary:
    """Mean/std of pairwise cosines for every block pair.

    Off-diagonal cells use all cross pairs; diagonal cells use unordered
    distinct pairs within the block and are ``nan`` for singleton blocks.
    """
    X = _unit(V)
    y = _labels(V, labels)
    K = n_blocks if n_blocks is not None else int(y.max()) + 1
    C = X @ X.T
    mean = np.full((K, K), np.nan)
    std = np.full((K, K), np.nan)
    counts = np.zeros((K, K), dtype=np.int64)
    idx = [np.flatnonzero(y == k) for k in range(K)]
    for a in range(K):
        for b in range(a, K):
            block = C[np.ix_(idx[a], idx[b])]
            if a == b:
                block = block[np.triu_indices(idx[a].size, k=1)]
            else:
                block = block.ravel()
            counts[a, b] = counts[b, a] = block.size
            if block.size:
                mean[a, b] = mean[b, a] = block.mean()
                std[a, b] = std[b, a] = block.std()
    return CosineSummary(mean, std, counts)


def _distance(Xa: np.ndarray, Xb: np.ndarray) -> float:
    if Xa.shape[0] == 0 or Xb.shape[0] == 0:
        raise EmptyBlockError("both blocks must be nonempty")
    # mean over all pairs of (1 - cos) equals 1 - <mean_a, mean_b> for unit rows
    return float(1.0 - Xa.mean(axis=0) @ Xb.mean(axis=0))


def mean_cosine_distance(V, l: int, m: int, labels=None) -> float:
    """Average of ``1 - cos`` over all ordered pairs from blocks ``l`` and ``m``.

    For ``l == m`` the ``i == j`` pairs are included (each contributes 0).
    """
    X = _unit(V)
    y = _labels(V, labels)
    return _distance(X[y == l], X[y == m])


def distance_matrix(V, labels=None, n_blocks: Optional[int] = None) -> np.ndarray:
    X = _unit(V)
    y = _labels(V, labels)
    K = n_blocks if n_blocks is not None else int(y.max()) + 1
    D = np.full((K, K), np.nan)
    means = [X[y == k].mean(axis=0) if np.any(y == k) else None for k in range(K)]
    for a in range(K):
        for b in range(K):
            if means[a] is not None and means[b] is not None:
                D[a, b] = 1.0 - means[a] @ means[b]
    return np.clip(D, 0.0, 2.0)


def rh_metric(V_under, V_bal, k: int, n_blocks: Optional[int] = None) -> HarmReport:
    """Ratio of block distances under the underrepresented and balanced runs."""
    y_u, y_b = _labels(V_under, None), _labels(V_bal, None)
    K = n_blocks if n_blocks is not None else int(max(y_u.max(), y_b.max())) + 1
    d_under = distance_matrix(V_under, n_blocks=K)
    d_bal = distance_matrix(V_bal, n_blocks=K)
    rh = np.full((K, K), np.nan)
    ok = d_bal > RATIO_EPS
    rh[ok] = d_under[ok] / d_bal[ok]
    return HarmReport(rh=rh, d_under=d_under, d_bal=d_bal, k=int(k))


def grouped_rh(V, class_of, group_of, l: int, m: int) -> float:
    """Cross-class same-group distance over within-class cross-group distance.

    The minority group of class ``l`` (by count; ties go to the smaller group
    value) is ``g``; the result is ``D(l_g, m_g) / D(l_g, l_g')``.  Returns
    ``nan`` when the ratio is undefined.
    """
    X = _unit(V)
    cls = np.asarray(class_of)
    grp = np.asarray(group_of)
    in_l = cls == l
    groups, counts = np.unique(grp[in_l], return_counts=True)
    if groups.size != 2:
        return float("nan")
    g = groups[np.argmin(counts)]
    g_other = groups[groups != g][0]
    lg = X[in_l & (grp == g)]
    mg = X[(cls == m) & (grp == g)]
    lo = X[in_l & (grp == g_other)]
    if mg.shape[0] == 0:
        raise EmptyBlockError(f"class {m} has no members of group {g}")
    denom = _distance(lg, lo)
    if denom <= RATIO_EPS:
        return float("nan")
    return _distance(lg, mg) / denom
