"""Linear probes, conditional confusion matrices and the mediation decomposition.

Three probes are compared for a treated block ``k``:

* ``y00`` - balanced-graph representations, balanced head data;
* ``y01`` - underrepresented-graph representations, class-rebalanced head data;
* ``y11`` - underrepresented-graph representations, naturally imbalanced head data.

With ``C_ab[k, l] = P(y_ab = l | y = k)`` on held-out nodes::

    TE   = C_11 - C_00
    NIE  = C_01 - C_00
    rNDE = NIE - TE          (so that TE = -rNDE + NIE)

Representations only exist for the nodes of the graph they were optimized
on, so each arm splits its own graph's nodes 75/25 (stratified by block) into
head-training and evaluation sets.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .contrastive import DEFAULT_TAU, RepMatrix
from .errors import MissingClassError, NonFiniteError
from .sbm import BlockModel, sample_sbm_fixed_counts
from .sphere_opt import DEFAULT_DIM, Schedule, solve_full


@dataclass(frozen=True)
class HeadConfig:
    lr: float = 0.1
    epochs: int = 2000
    l2: float = 1e-4


@dataclass
class LinearHead:
    weights: np.ndarray
    bias: np.ndarray
    final_loss: float
    epochs: int

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def scores(self, X) -> np.ndarray:
        X = np.asarray(getattr(X, "rows", X), dtype=float)
        return X @ self.weights.T + self.bias

    def predict(self, X) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. ties go to the lowest class index
        return np.argmax(self.scores(X), axis=1)


def head_loss_and_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray,
                       w: np.ndarray, l2: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Weighted mean cross-entropy plus ``l2/2 * ||W||^2`` and its gradient.

    ``Y`` is one-hot ``(n, K)``; ``w`` are per-sample weights.
    """
    Z = X @ W.T + b
    Z -= Z.max(axis=1, keepdims=True)
    logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
    wn = w / w.sum()
    loss = -float(np.sum(wn * np.sum(Y * logp, axis=1))) + 0.5 * l2 * float(np.sum(W * W))
    R = (np.exp(logp) - Y) * wn[:, None]
    return loss, R.T @ X + l2 * W, R.sum(axis=0)


def balancing_weights(labels, n_classes: Optional[int] = None) -> np.ndarray:
    """Weights ``n / (K * n_y)`` giving every present class equal total weight."""
    y = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(y, minlength=n_classes or 0)
    present = int(np.count_nonzero(counts))
    return y.size / (present * counts[y].astype(float))


def train_head(X, labels, weights=None, hyper: HeadConfig = HeadConfig(),
               n_classes: Optional[int] = None) -> LinearHead:
    """Full-batch gradient descent on weighted multinomial cross-entropy."""
    X = np.asarray(getattr(X, "rows", X), dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    K = n_classes if n_classes is not None else int(y.max()) + 1
    w = np.ones(y.size) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("sample weights must be positive")
    missing = np.setdiff1d(np.arange(K), y)
    if missing.size:
        raise MissingClassError(f"classes {missing.tolist()} have no training samples")
    Y = np.eye(K)[y]
    W = np.zeros((K, X.shape[1]))
    b = np.zeros(K)
    loss = np.nan
    for _ in range(hyper.epochs):
        loss, gW, gb = head_loss_and_grad(W, b, X, Y, w, hyper.l2)
        if not np.isfinite(loss):
            raise NonFiniteError("head training diverged")
        W -= hyper.lr * gW
        b -= hyper.lr * gb
    loss = head_loss_and_grad(W, b, X, Y, w, hyper.l2)[0]
    return LinearHead(W, b, float(loss), hyper.epochs)


def confusion_from_predictions(pred, labels, n_classes: int) -> np.ndarray:
    """Row-stochastic ``P(pred = l | label = k)``; rows of absent classes are ``nan``."""
    pred = np.asarray(pred, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    counts = np.zeros((n_classes, n_classes))
    np.add.at(counts, (y, pred), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        return counts / totals


def conditional_confusion(head: LinearHead, X, labels) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64)
    K = head.n_classes
    missing = np.setdiff1d(np.arange(K), y)
    if missing.size:
        raise MissingClassError(f"classes {missing.tolist()} absent from the evaluation set")
    return confusion_from_predictions(head.predict(X), y, K)


def gah(pred, labels, group, group_a=1, n_classes: Optional[int] = None) -> np.ndarray:
    """Group-conditional confusion difference ``C_A - C_B`` (rows without both groups are ``nan``)."""
    pred = np.asarray(pred, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    is_a = np.asarray(group) == group_a
    K = n_classes if n_classes is not None else int(max(y.max(), pred.max())) + 1
    ca = confusion_from_predictions(pred[is_a], y[is_a], K)
    cb = confusion_from_predictions(pred[~is_a], y[~is_a], K)
    return ca - cb


@dataclass
class MediationConfig:
    """Pipeline settings; every block has ``block_size`` nodes in the balanced graph."""

    block_size: int = 640
    d: int = DEFAULT_DIM
    tau: float = 1.1
    schedule: Schedule = field(default_factory=lambda: Schedule(steps=1000))
    head: HeadConfig = HeadConfig()
    train_fraction: float = 0.75
    min_eval_treated: int = 5
    drop_isolated: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SeedEffects:
    seed: int
    te: np.ndarray
    nie: np.ndarray
    rnde: np.ndarray
    confusions: dict


@dataclass
class MediationReport:
    te: np.ndarray
    nie: np.ndarray
    rnde: np.ndarray
    identity_residual: float
    k: int
    per_seed: list = field(default_factory=list)


def stratified_split(labels, fraction: float, seed) -> np.ndarray:
    """Boolean training mask taking ``round(fraction * n_k)`` random nodes of every block."""
    y = np.asarray(labels, dtype=np.int64)
    rng = np.random.default_rng(seed)
    mask = np.zeros(y.size, dtype=bool)
    for k in np.unique(y):
        idx = np.flatnonzero(y == k)
        rng.shuffle(idx)
        mask[idx[:int(round(fraction * idx.size))]] = True
    return mask


def arm_counts(n_blocks: int, block_size: int, k: int, under_factor: float) -> list[int]:
    counts = [block_size] * n_blocks
    counts[k] = max(1, int(round(block_size * under_factor)))
    return counts


def derived_seeds(seed: int, n: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(int(seed)).generate_state(n)]


def _arm(model: BlockModel, counts, cfg: MediationConfig, seeds: list[int]):
    graph_seed, init_seed, split_seed = seeds
    g = sample_sbm_fixed_counts(model, counts, graph_seed)
    V, _ = solve_full(g, cfg.d, cfg.tau, cfg.schedule, init_seed, drop_isolated=cfg.drop_isolated)
    train = stratified_split(g.labels, cfg.train_fraction, split_seed)
    return V, train


def mediation_single_seed(model: BlockModel, k: int, under_factor: float,
                          cfg: MediationConfig, seed: int) -> SeedEffects:
    if not 0 < under_factor <= 1:
        raise ValueError("under_factor must lie in (0, 1]")
    K = model.n_blocks
    seeds = derived_seeds(seed, 3)
    V_bal, tr_bal = _arm(model, arm_counts(K, cfg.block_size, k, 1.0), cfg, seeds)
    if under_factor == 1:
        V_und, tr_und = V_bal, tr_bal
    else:
        V_und, tr_und = _arm(model, arm_counts(K, cfg.block_size, k, under_factor), cfg, seeds)
    for name, V, tr in (("balanced", V_bal, tr_bal), ("underrepresented", V_und, tr_und)):
        n_eval = int(np.sum((V.labels == k) & ~tr))
        if n_eval < cfg.min_eval_treated:
            raise ValueError(
                f"{name} arm has {n_eval} held-out nodes of block {k}; need {cfg.min_eval_treated}")

    X, y = V_bal.rows, V_bal.labels
    head00 = train_head(X[tr_bal], y[tr_bal], balancing_weights(y[tr_bal], K), cfg.head, K)
    Xu, yu = V_und.rows, V_und.labels
    head01 = train_head(Xu[tr_und], yu[tr_und], balancing_weights(yu[tr_und], K), cfg.head, K)
    head11 = train_head(Xu[tr_und], yu[tr_und], None, cfg.head, K)

    c00 = conditional_confusion(head00, X[~tr_bal], y[~tr_bal])
    c01 = conditional_confusion(head01, Xu[~tr_und], yu[~tr_und])
    c11 = conditional_confusion(head11, Xu[~tr_und], yu[~tr_und])
    te = c11 - c00
    nie = c01 - c00
    return SeedEffects(int(seed), te, nie, nie - te, {"y00": c00, "y01": c01, "y11": c11})


def mediation_analysis(model: BlockModel, k: int, under_factor: float,
                       cfg: MediationConfig = MediationConfig(),
                       seeds: Sequence[int] = range(10), runner=map) -> MediationReport:
    """Run the three-probe pipeline for every seed and average the effect matrices.

    ``runner`` is a ``map``-like callable, e.g. an executor's ``map`` for
    concurrent seeds.
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    per_seed = list(runner(_SeedJob(model, k, under_factor, cfg), seeds))
    te = np.mean([s.te for s in per_seed], axis=0)
    nie = np.mean([s.nie for s in per_seed], axis=0)
    rnde = np.mean([s.rnde for s in per_seed], axis=0)
    residual = max(
        float(np.max(np.abs(e.te - (-e.rnde + e.nie)))) for e in per_seed)
    residual = max(residual, float(np.max(np.abs(te - (-rnde + nie)))))
    return MediationReport(te, nie, rnde, residual, int(k), per_seed)


@dataclass
class _SeedJob:
    model: BlockModel
    k: int
    under_factor: float
    cfg: MediationConfig

    def __call__(self, seed: int) -> SeedEffects:
        return mediation_single_seed(self.model, self.k, self.under_factor, self.cfg, seed)
