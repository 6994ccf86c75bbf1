"""Projected gradient descent on the unit sphere.

Two problems are solved here: the full n-node contrastive problem and the
reduced K-point problem over one shared vector per block,

    f(h) = - sum_k pi_k [sum_k' pi_k' alpha_kk' h_k.h_k' / tau] / [sum_k' pi_k' alpha_kk']
           + sum_k pi_k log(sum_k' pi_k' exp(h_k.h_k' / tau)),

whose minimizer is the large-n limit of the full problem's block representations.

Both use ``x <- normalize(x - lr_t * step_scale * grad)`` with
``lr_t = base_lr * t**(-exponent)``.  With ``per_node_step=True`` (default)
``step_scale`` is ``n`` for the full problem and ``1 / pi_k`` for block ``k`` in
the reduced one.  That undoes the ``1/n`` (resp. ``pi_k``) weight each
variable carries in its objective, so every row moves on the same per-node
scale and the fixed schedule converges for tiny blocks.  Set it to ``False``
for the plain Euclidean step.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .contrastive import DEFAULT_TAU, RepMatrix, _Evaluator, tangent_component
from .errors import InvalidModelError, NonFiniteError
from .sbm import BlockModel, SbmGraph

DEFAULT_DIM = 8
DEFAULT_RESTARTS = 16


@dataclass(frozen=True)
class Schedule:
    base_lr: float = 0.1
    exponent: float = 0.2
    steps: int = 30000
    per_node_step: bool = True
    early_stop: Optional[float] = None

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ValueError("base_lr must be positive")
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")

    def lr(self, t: int) -> float:
        return self.base_lr * t ** (-self.exponent)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConvergenceRecord:
    final_loss: float
    tangent_grad_norm: float
    steps: int
    seed: int
    tau: float
    d: int

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class BlockEmbedding:
    """One unit vector per block and the objective value it attains."""

    vectors: np.ndarray
    achieved_objective: float

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("block vectors must have unit norm")

    def gram(self) -> np.ndarray:
        return self.vectors @ self.vectors.T

    def cosine(self, a: int, b: int) -> float:
        return float(self.vectors[a] @ self.vectors[b])


def _normalize(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def random_sphere(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    """Uniform points on the sphere (normalized standard Gaussians)."""
    return _normalize(rng.standard_normal(shape))


def solve_full(g: SbmGraph, d: int = DEFAULT_DIM, tau: float = DEFAULT_TAU,
               sched: Schedule = Schedule(), seed: int = 0,
               drop_isolated: bool = False,
               init: Optional[np.ndarray] = None) -> tuple[RepMatrix, ConvergenceRecord]:
    """Minimize the contrastive loss over ``n`` points on ``S^{d-1}``."""
    if d < 2:
        raise ValueError("d must be at least 2")
    ev = _Evaluator(g, tau, drop_isolated)
    rng = np.random.default_rng(seed)
    V = random_sphere(rng, (g.n, d)) if init is None else _normalize(np.array(init, dtype=float))
    scale = float(g.n) if sched.per_node_step else 1.0
    steps_done = 0
    for t in range(1, sched.steps + 1):
        loss, grad = ev.loss_and_grad(V)
        if not np.isfinite(loss):
            raise NonFiniteError(f"loss is {loss} at step {t}")
        if sched.early_stop is not None:
            if np.linalg.norm(tangent_component(V, grad)) < sched.early_stop:
                break
        V = _normalize(V - sched.lr(t) * scale * grad)
        steps_done = t
    loss, grad = ev.loss_and_grad(V)
    if not np.isfinite(loss):
        raise NonFiniteError(f"final loss is {loss}")
    record = ConvergenceRecord(
        final_loss=float(loss),
        tangent_grad_norm=float(np.linalg.norm(tangent_component(V, grad))),
        steps=steps_done, seed=int(seed), tau=float(tau), d=int(d))
    return RepMatrix(V, g.labels), record


def _reduced_terms(pi: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    conn = alpha @ pi
    if np.any(conn <= 0):
        raise InvalidModelError("every block needs sum_k' pi_k' alpha_kk' > 0")
    return pi[:, None] * pi[None, :] * alpha / conn[:, None]


def _reduced_batch(H: np.ndarray, pi: np.ndarray, B: np.ndarray, tau: float):
    """Objective and gradient for a stack of configurations ``H`` of shape (R, K, d)."""
    G = np.einsum("rkd,rld->rkl", H, H) / tau
    linear = np.einsum("kl,rkl->r", B, G)
    m = G.max(axis=2, keepdims=True)
    E = np.exp(G - m) * pi
    z = E.sum(axis=2, keepdims=True)
    lse = (np.log(z[..., 0]) + m[..., 0]) @ pi
    M = pi[:, None] * (E / z)
    coef = M + np.swapaxes(M, 1, 2) - (B + B.T)
    grad = np.einsum("rkl,rld->rkd", coef, H) / tau
    return lse - linear, grad


def reduced_objective(h, model: BlockModel, tau: float = DEFAULT_TAU) -> float:
    """Value of the reduced K-point objective at block vectors ``h``."""
    H = h.vectors if isinstance(h, BlockEmbedding) else np.asarray(h, dtype=float)
    if H.shape[0] != model.n_blocks:
        raise ValueError("need one vector per block")
    B = _reduced_terms(model.pi, model.alpha)
    value, _ = _reduced_batch(H[None], model.pi, B, tau)
    return float(value[0])


def reduced_gradient(h, model: BlockModel, tau: float = DEFAULT_TAU) -> np.ndarray:
    H = h.vectors if isinstance(h, BlockEmbedding) else np.asarray(h, dtype=float)
    B = _reduced_terms(model.pi, model.alpha)
    return _reduced_batch(H[None], model.pi, B, tau)[1][0]


def solve_reduced(model: BlockModel, d: int = DEFAULT_DIM, tau: float = DEFAULT_TAU,
                  sched: Schedule = Schedule(), restarts: int = DEFAULT_RESTARTS,
                  seed: int = 0) -> BlockEmbedding:
    """Minimize the reduced objective from ``restarts`` random starts; keep the best.

    Restarts are advanced together as one batch; each one's trajectory depends
    only on its own initialization, so the result is deterministic in ``seed``.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    model.check_positive_connectivity()
    pi = model.pi
    if np.any(pi <= 0):
        raise InvalidModelError("every block needs pi_k > 0")
    B = _reduced_terms(pi, model.alpha)
    rng = np.random.default_rng(seed)
    H = random_sphere(rng, (restarts, model.n_blocks, d))
    scale = (1.0 / pi)[None, :, None] if sched.per_node_step else 1.0
    for t in range(1, sched.steps + 1):
        value, grad = _reduced_batch(H, pi, B, tau)
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"reduced objective is not finite at step {t}")
        if sched.early_stop is not None:
            tg = grad - np.sum(grad * H, axis=2, keepdims=True) * H
            if np.max(np.linalg.norm(tg, axis=(1, 2))) < sched.early_stop:
                break
        H = _normalize(H - sched.lr(t) * scale * grad)
    value, _ = _reduced_batch(H, pi, B, tau)
    best = int(np.argmin(value))
    return BlockEmbedding(H[best], float(value[best]))


def brute_force_reduced(model: BlockModel, tau: float = DEFAULT_TAU, grid: int = 2000) -> BlockEmbedding:
    """Exhaustive angle search for ``K <= 3`` blocks in the plane.

    The first vector is pinned at angle 0; the others range over
    ``2*pi*j/grid``, ``j = 0..grid-1``.
    """
    K = model.n_blocks
    if K > 3:
        raise ValueError("brute force supports at most 3 blocks")
    if grid < 1:
        raise ValueError("grid must be >= 1")
    B = _reduced_terms(model.pi, model.alpha)
    angles = 2 * np.pi * np.arange(grid) / grid
    if K == 1:
        H = np.array([[1.0, 0.0]])
        return BlockEmbedding(H, reduced_objective(H, model, tau))
    best_val, best_H = np.inf, None
    # K == 3: sweep the second angle one value at a time to bound memory
    outer = angles if K == 3 else np.array([np.nan])
    for theta2 in outer:
        if K == 2:
            thetas = np.column_stack([np.zeros(grid), angles])
        else:
            thetas = np.column_stack([np.zeros(grid), np.full(grid, theta2), angles])
        H = np.stack([np.cos(thetas), np.sin(thetas)], axis=2)
        vals, _ = _reduced_batch(H, model.pi, B, tau)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_H = float(vals[i]), H[i]
    return BlockEmbedding(best_H, best_val)
