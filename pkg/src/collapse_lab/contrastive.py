"""Contrastive loss over free unit-norm node representations on a similarity graph.

For unit vectors ``v_i`` and a graph with edges ``e(i, j)`` and degrees ``d(i)``::

    L(V) = -(1/n) sum_i (1/d(i)) sum_j e(i,j) log[ exp(v_i.v_j/tau)
                                                   / ((1/n) sum_l exp(v_i.v_l/tau)) ]

The normalizing sum over ``l`` runs over all nodes, the node itself included.
The loss splits exactly into ``-linear_part + lse_part`` with::

    linear_part = (1/n) sum_i (1/d(i)) sum_j e(i,j) v_i.v_j / tau
    lse_part    = (1/n) sum_i log((1/n) sum_l exp(v_i.v_l / tau))

Nodes of degree zero have no defined term.  By default they raise
:class:`IsolatedNodeError`; with ``drop_isolated=True`` they are left out of
the outer sum (still normalized by the full ``n``) but stay in every
denominator.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np

from .errors import DimensionMismatchError, InvalidModelError, IsolatedNodeError
from .sbm import SbmGraph

DEFAULT_TAU = 0.5
UNIT_TOL = 1e-9


@dataclass
class RepMatrix:
    """``n`` unit-norm representations in ``R^d`` with their block labels."""

    rows: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=float)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.rows.ndim != 2:
            raise DimensionMismatchError("rows must be a 2-D array")
        if self.labels.shape != (self.rows.shape[0],):
            raise DimensionMismatchError("need exactly one label per row")
        norms = np.linalg.norm(self.rows, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise ValueError("every row must have unit norm (tolerance 1e-9)")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @classmethod
    def normalized(cls, rows, labels) -> "RepMatrix":
        rows = np.asarray(rows, dtype=float)
        return cls(rows / np.linalg.norm(rows, axis=1, keepdims=True), labels)

    def rotated(self, q: np.ndarray) -> "RepMatrix":
        return RepMatrix.normalized(self.rows @ q, self.labels)

    def block_means(self, n_blocks: Optional[int] = None) -> np.ndarray:
        K = n_blocks if n_blocks is not None else int(self.labels.max()) + 1
        counts = np.bincount(self.labels, minlength=K)
        sums = np.zeros((K, self.dim))
        np.add.at(sums, self.labels, self.rows)
        with np.errstate(invalid="ignore", divide="ignore"):
            return sums / counts[:, None]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "label"] + [f"v{j}" for j in range(self.dim)])
        for i, (lab, row) in enumerate(zip(self.labels, self.rows)):
            w.writerow([i, int(lab)] + [repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "RepMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        header = rows[0]
        if header[:2] != ["node", "label"]:
            raise ValueError("RepMatrix CSV must start with 'node,label,v0,...'")
        body = sorted(rows[1:], key=lambda r: int(r[0]))
        labels = [int(r[1]) for r in body]
        vecs = [[float(x) for x in r[2:]] for r in body]
        return cls(np.array(vecs, dtype=float).reshape(len(body), len(header) - 2), labels)

    def write_csv(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_csv())


class LossBreakdown(NamedTuple):
    total: float
    linear_part: float
    lse_part: float


class JensenCheck(NamedTuple):
    lhs: float
    rhs: float
    gap: float


def _rows(V) -> np.ndarray:
    return V.rows if isinstance(V, RepMatrix) else np.asarray(V, dtype=float)


def _check(V: np.ndarray, g: SbmGraph, tau: float, drop_isolated: bool) -> np.ndarray:
    """Validate inputs; return the boolean mask of nodes kept in the outer sum."""
    if V.ndim != 2 or V.shape[0] != g.n:
        raise DimensionMismatchError(
            f"representation has {V.shape[0] if V.ndim else 0} rows, graph has {g.n} nodes")
    if not tau > 0:
        raise ValueError("tau must be positive")
    active = g.degrees > 0
    if not drop_isolated and not active.all():
        bad = np.flatnonzero(~active)
        raise IsolatedNodeError(
            f"{bad.size} node(s) have degree 0 (first: {bad[0]}); pass drop_isolated=True to skip them")
    return active


def _row_weights(g: SbmGraph, active: np.ndarray) -> np.ndarray:
    """``W[i, j] = e(i, j) / d(i)`` for kept nodes, zero rows otherwise."""
    deg = g.degrees.astype(float)
    W = g.adjacency.astype(float)
    W[active] /= deg[active, None]
    W[~active] = 0.0
    return W


def _softmax_lse(S: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise log((1/n) sum exp) and softmax with the max-shift trick."""
    n = S.shape[1]
    m = S.max(axis=1, keepdims=True)
    E = np.exp(S - m)
    z = E.sum(axis=1, keepdims=True)
    lse = np.log(z[:, 0] / n) + m[:, 0]
    return lse, E / z


class _Evaluator:
    """Loss and gradient for a fixed graph; caches the degree-normalized weights.

    ``loss_and_grad`` is the hot path used by the optimizer.
    """

    def __init__(self, g: SbmGraph, tau: float, drop_isolated: bool = False):
        self.g = g
        self.tau = float(tau)
        self.active = _check(np.zeros((g.n, 1)), g, tau, drop_isolated)
        W = _row_weights(g, self.active)
        self.W = W
        self.Wsym = W + W.T
        self.mask = self.active.astype(float)

    def breakdown(self, V: np.ndarray) -> LossBreakdown:
        n = V.shape[0]
        S = (V @ V.T) / self.tau
        linear = float(np.sum(self.W * S)) / n
        lse, _ = _softmax_lse(S)
        lse_part = float(np.sum(lse[self.active])) / n
        return LossBreakdown(-linear + lse_part, linear, lse_part)

    def loss_and_grad(self, V: np.ndarray) -> tuple[float, np.ndarray]:
        n = V.shape[0]
        S = (V @ V.T) / self.tau
        lse, P = _softmax_lse(S)
        P *= self.mask[:, None]
        linear = float(np.sum(self.W * S)) / n
        total = -linear + float(np.sum(lse[self.active])) / n
        grad = ((P + P.T) - self.Wsym) @ V / (n * self.tau)
        return total, grad


def cl_loss(V, g: SbmGraph, tau: float = DEFAULT_TAU, drop_isolated: bool = False) -> LossBreakdown:
    """Evaluate the contrastive loss with its linear / log-sum-exp split."""
    V = _rows(V)
    _check(V, g, tau, drop_isolated)
    return _Evaluator(g, tau, drop_isolated).breakdown(V)


def cl_grad(V, g: SbmGraph, tau: float = DEFAULT_TAU, drop_isolated: bool = False) -> np.ndarray:
    """Euclidean gradient of :func:`cl_loss` ``.total`` with respect to every row.

    Rows are treated as unconstrained; no projection onto the sphere is applied.
    """
    V = _rows(V)
    _check(V, g, tau, drop_isolated)
    return _Evaluator(g, tau, drop_isolated).loss_and_grad(V)[1]


def _block_stats(V: np.ndarray, g: SbmGraph) -> tuple[np.ndarray, np.ndarray]:
    """Sample proportions and (unnormalized) block means of the rows."""
    counts = g.block_counts
    pi_hat = counts / g.n
    sums = np.zeros((g.n_blocks, V.shape[1]))
    np.add.at(sums, g.labels, V)
    h = np.zeros_like(sums)
    present = counts > 0
    h[present] = sums[present] / counts[present, None]
    return pi_hat, h


def _resolve_alpha(g: SbmGraph, alpha) -> np.ndarray:
    if alpha is None:
        if g.model is None:
            raise InvalidModelError("graph carries no BlockModel; pass alpha explicitly")
        alpha = g.model.alpha
    alpha = np.asarray(alpha, dtype=float)
    if alpha.shape != (g.n_blocks, g.n_blocks):
        raise DimensionMismatchError("alpha shape does not match the number of blocks")
    return alpha


def block_linear_part(V, g: SbmGraph, tau: float = DEFAULT_TAU, alpha=None) -> float:
    """Block-level linear term built from block means and sample proportions.

    ``(1/tau) sum_k pi_k [sum_k' pi_k' alpha_kk' h_k.h_k'] / [sum_k' pi_k' alpha_kk']``
    with ``pi`` the sample proportions and ``h`` the block means.
    """
    V = _rows(V)
    alpha = _resolve_alpha(g, alpha)
    pi_hat, h = _block_stats(V, g)
    conn = alpha @ pi_hat
    present = pi_hat > 0
    if np.any(conn[present] <= 0):
        raise InvalidModelError("a sampled block has zero expected connectivity")
    G = h @ h.T
    num = (pi_hat[None, :] * alpha * G).sum(axis=1)
    return float(np.sum(pi_hat[present] * num[present] / conn[present])) / tau


def block_lse_part(V, g: SbmGraph, tau: float = DEFAULT_TAU) -> float:
    """``sum_k pi_k log(sum_k' pi_k' exp(h_k.h_k'/tau))`` over block means."""
    V = _rows(V)
    pi_hat, h = _block_stats(V, g)
    present = pi_hat > 0
    S = (h[present] @ h[present].T) / tau
    w = pi_hat[present]
    m = S.max(axis=1, keepdims=True)
    lse = np.log(np.exp(S - m) @ w) + m[:, 0]
    return float(np.sum(w * lse))


def modified_loss(V, g: SbmGraph, tau: float = DEFAULT_TAU, alpha=None) -> float:
    """Loss with the linear part replaced by its block-level surrogate.

    ``alpha`` defaults to the connectivity of the model the graph was sampled from.
    The difference to :func:`cl_loss` vanishes as ``n`` grows.
    """
    V = _rows(V)
    _check(V, g, tau, drop_isolated=False)
    lse_part = _Evaluator(g, tau).breakdown(V).lse_part
    return -block_linear_part(V, g, tau, alpha) + lse_part


def jensen_bound_check(V, g: SbmGraph, tau: float = DEFAULT_TAU, alpha=None) -> JensenCheck:
    """Compare the modified loss with its block-level lower bound.

    ``gap = lhs - rhs`` is nonnegative, and zero exactly when every row equals
    its block mean.
    """
    V = _rows(V)
    lhs = modified_loss(V, g, tau, alpha)
    rhs = -block_linear_part(V, g, tau, alpha) + block_lse_part(V, g, tau)
    return JensenCheck(lhs, rhs, lhs - rhs)


def tangent_component(V: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Project each gradient row onto the tangent space of the sphere at ``V``."""
    V = _rows(V)
    return grad - np.sum(grad * V, axis=1, keepdims=True) * V
