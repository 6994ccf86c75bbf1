"""Stochastic block models: parameters, seeded samplers and (de)serialization.

Seed semantics (part of the interface): one integer seed feeds a single
``numpy.random.default_rng`` (PCG64) stream.  The i.i.d. sampler first draws
the ``n`` block labels with ``rng.choice(K, size=n, p=pi)``, then draws one
uniform ``u`` per unordered pair ``(i, j)``, ``i < j``, in lexicographic order
and keeps the edge iff ``u < alpha[y_i, y_j]``.  The fixed-count sampler
assigns labels deterministically (block 0 first, then block 1, ...) and uses
the whole stream for the pairs.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidModelError

_TOL = 1e-12


@dataclass(frozen=True)
class BlockModel:
    """SBM parameters: block probabilities ``pi`` and edge probabilities ``alpha``."""

    pi: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        alpha = np.asarray(self.alpha, dtype=float)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "alpha", alpha)
        if pi.ndim != 1 or pi.size == 0:
            raise InvalidModelError("pi must be a non-empty vector")
        if alpha.shape != (pi.size, pi.size):
            raise InvalidModelError(f"alpha must be {pi.size}x{pi.size}, got {alpha.shape}")
        if not (np.all(np.isfinite(pi)) and np.all(np.isfinite(alpha))):
            raise InvalidModelError("model parameters must be finite")
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > _TOL:
            raise InvalidModelError("pi must be nonnegative and sum to 1")
        if np.any(alpha < 0) or np.any(alpha > 1):
            raise InvalidModelError("alpha entries must lie in [0, 1]")
        if np.max(np.abs(alpha - alpha.T)) > _TOL:
            raise InvalidModelError("alpha must be symmetric")

    @property
    def n_blocks(self) -> int:
        return self.pi.size

    def connectivity(self, weights: Optional[np.ndarray] = None) -> np.ndarray:
        """Return ``sum_k' w_k' alpha[k, k']`` per block (``w`` defaults to ``pi``)."""
        w = self.pi if weights is None else np.asarray(weights, dtype=float)
        return self.alpha @ w

    def check_positive_connectivity(self) -> None:
        """Raise unless every block has ``sum_k' pi_k' alpha[k, k'] > 0``."""
        c = self.connectivity()
        bad = np.flatnonzero(c <= 0)
        if bad.size:
            raise InvalidModelError(
                f"blocks {bad.tolist()} have zero expected connectivity "
                "(sum_k' pi_k' alpha_kk' must be positive)")

    def to_dict(self) -> dict:
        return {"pi": self.pi.tolist(), "alpha": self.alpha.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BlockModel":
        return cls(pi=d["pi"], alpha=d["alpha"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "BlockModel":
        return cls.from_dict(json.loads(text))


def three_block_model(pi1: float = 1 / 3, cross: float = 0.3, within: float = 0.8) -> BlockModel:
    """Three blocks where only blocks 0 and 1 are connected to each other.

    The two majority blocks share the remaining mass: ``pi = (pi1, (1-pi1)/2, (1-pi1)/2)``.
    """
    alpha = np.array([[within, cross, 0.0],
                      [cross, within, 0.0],
                      [0.0, 0.0, within]])
    rest = (1.0 - pi1) / 2
    return BlockModel(pi=np.array([pi1, rest, 1.0 - pi1 - rest]), alpha=alpha)


@dataclass
class SbmGraph:
    """Sampled nodes with block labels and a symmetric 0/1 adjacency matrix."""

    labels: np.ndarray
    adjacency: np.ndarray
    n_blocks: int
    model: Optional[BlockModel] = field(default=None, compare=False)

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.adjacency = np.asarray(self.adjacency, dtype=np.uint8)
        n = self.labels.size
        if self.adjacency.shape != (n, n):
            raise ValueError(f"adjacency must be {n}x{n}")
        if np.any(self.adjacency != self.adjacency.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diagonal(self.adjacency)):
            raise ValueError("self-loops are not allowed")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_blocks):
            raise ValueError("labels out of range")

    @property
    def n(self) -> int:
        return self.labels.size

    @property
    def block_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_blocks)

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1, dtype=np.int64)

    def edge_list(self) -> np.ndarray:
        """Edges as an ``(m, 2)`` array of ``(i, j)`` with ``i < j``, lexicographic."""
        i, j = np.nonzero(np.triu(self.adjacency, 1))
        return np.column_stack([i, j]).astype(np.int64)

    def block_edge_frequency(self) -> tuple[np.ndarray, np.ndarray]:
        """Observed edges and possible pairs per block pair."""
        K = self.n_blocks
        onehot = np.eye(K, dtype=np.int64)[self.labels]
        edges = onehot.T @ self.adjacency.astype(np.int64) @ onehot
        counts = self.block_counts
        pairs = np.outer(counts, counts)
        np.fill_diagonal(pairs, counts * (counts - 1))
        return edges, pairs

    def to_dict(self) -> dict:
        return {"labels": self.labels.tolist(), "edges": self.edge_list().tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict, n_blocks: Optional[int] = None) -> "SbmGraph":
        labels = np.asarray(d["labels"], dtype=np.int64)
        n = labels.size
        adj = np.zeros((n, n), dtype=np.uint8)
        edges = np.asarray(d.get("edges", []), dtype=np.int64).reshape(-1, 2)
        adj[edges[:, 0], edges[:, 1]] = 1
        adj[edges[:, 1], edges[:, 0]] = 1
        K = n_blocks if n_blocks is not None else int(labels.max(initial=-1)) + 1
        return cls(labels=labels, adjacency=adj, n_blocks=K)

    @classmethod
    def from_json(cls, text: str, n_blocks: Optional[int] = None) -> "SbmGraph":
        return cls.from_dict(json.loads(text), n_blocks=n_blocks)

    def edges_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["src", "dst"])
        w.writerows(self.edge_list().tolist())
        return buf.getvalue()

    def write(self, path: Path | str) -> None:
        path = Path(path)
        if path.suffix == ".csv":
            path.write_text(self.edges_csv())
        else:
            path.write_text(self.to_json())


def read_edges_csv(text: str, labels: Sequence[int], n_blocks: Optional[int] = None) -> SbmGraph:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != ["src", "dst"]:
        raise ValueError("edge CSV must start with header 'src,dst'")
    edges = [[int(a), int(b)] for a, b in rows[1:]]
    return SbmGraph.from_dict({"labels": list(labels), "edges": edges}, n_blocks=n_blocks)


def _sample_edges(labels: np.ndarray, alpha: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = labels.size
    adj = np.zeros((n, n), dtype=np.uint8)
    # one row of the upper triangle at a time: same stream order as a single
    # draw over all pairs, without materializing n^2/2 uniforms
    for i in range(n - 1):
        u = rng.random(n - 1 - i)
        js = np.flatnonzero(u < alpha[labels[i], labels[i + 1:]]) + i + 1
        adj[i, js] = 1
        adj[js, i] = 1
    return adj


def sample_labels(model: BlockModel, n: int, seed) -> np.ndarray:
    """The label stream of :func:`sample_sbm` alone (same seed, same labels)."""
    rng = np.random.default_rng(seed)
    return rng.choice(model.n_blocks, size=int(n), p=model.pi)


def sample_sbm(model: BlockModel, n: int, seed: int) -> SbmGraph:
    """Draw ``n`` i.i.d. categorical(pi) labels, then Bernoulli edges per pair."""
    if not isinstance(model, BlockModel):
        raise InvalidModelError("model must be a BlockModel")
    if int(n) != n or n < 2:
        raise ValueError(f"n must be an integer >= 2, got {n}")
    rng = np.random.default_rng(seed)
    labels = rng.choice(model.n_blocks, size=int(n), p=model.pi)
    adj = _sample_edges(labels, model.alpha, rng)
    return SbmGraph(labels=labels, adjacency=adj, n_blocks=model.n_blocks, model=model)


def sample_sbm_fixed_counts(model: BlockModel, counts: Sequence[int], seed: int) -> SbmGraph:
    """Sample a graph with exactly ``counts[k]`` nodes in block ``k``.

    Only ``model.alpha`` is used; ``pi`` is ignored since the counts fix the
    block sizes.
    """
    if not isinstance(model, BlockModel):
        raise InvalidModelError("model must be a BlockModel")
    counts = np.asarray(counts)
    if counts.shape != (model.n_blocks,):
        raise ValueError(f"need {model.n_blocks} counts, got {counts.shape}")
    if np.any(counts < 1) or np.any(counts != np.round(counts)):
        raise ValueError("every block count must be a positive integer")
    labels = np.repeat(np.arange(model.n_blocks), counts.astype(np.int64))
    rng = np.random.default_rng(seed)
    adj = _sample_edges(labels, model.alpha, rng)
    return SbmGraph(labels=labels, adjacency=adj, n_blocks=model.n_blocks, model=model)
