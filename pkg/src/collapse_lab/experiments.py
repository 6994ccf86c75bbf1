"""Scenario runners behind the command line: block-model sweeps and a check battery.

Every runner takes a :class:`ScenarioConfig`, writes ``config.json`` plus its
result files into ``cfg.out_dir`` and returns the in-memory results.  Blocks
are 0-indexed throughout; block 0 is the one that gets underrepresented.

Per-cell seeds are ``SeedSequence([base_seed, cell_index]).generate_state(1)[0]``
so a cell's result does not depend on which worker ran it or in what order.
"""
from __future__ import annotations

import csv
import io
import json
import os
import warnings
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import contrastive
from .contrastive import RepMatrix, cl_loss, jensen_bound_check, modified_loss
from .errors import ConfigError, InvalidModelError
from .harm_metrics import cosine_summary, rh_metric
from .mediation import HeadConfig, MediationConfig, mediation_analysis
from .sbm import BlockModel, sample_sbm, sample_sbm_fixed_counts
from .sphere_opt import Schedule, brute_force_reduced, solve_full, solve_reduced

SEED_ENV = "COLLAPSE_LAB_SEED"
COMMANDS = ("fig3", "fig4", "mediate", "verify")


@dataclass
class ScenarioConfig:
    """Everything a run needs; ``config.json`` written next to the results reloads it exactly.

    The block model is ``alpha`` when given, otherwise the three-block layout
    where only blocks 0 and 1 are cross-connected (``within`` on the diagonal,
    ``cross`` between 0 and 1).  ``pi`` is only used by sampling-based checks;
    the sweeps fix block sizes through ``counts``.
    """

    command: str = "fig3"
    within: float = 0.8
    cross: float = 0.3
    alpha: Optional[list] = None
    pi: Optional[list] = None
    counts: list = field(default_factory=lambda: [64, 64, 64])
    k: int = 0
    tau: float = 1.1
    d: int = 8
    schedule: dict = field(default_factory=lambda: asdict(Schedule()))
    base_seed: int = 0
    n_seeds: int = 10
    under_factors: list = field(default_factory=lambda: [1.0, 2.0 ** -2, 2.0 ** -4])
    pi1_grid: list = field(default_factory=lambda: [2.0 ** -j for j in range(1, 11)])
    alpha_grid: list = field(default_factory=lambda: [0.1, 0.4])
    restarts: int = 16
    head: dict = field(default_factory=lambda: asdict(HeadConfig()))
    drop_isolated: bool = True
    train_fraction: float = 0.75
    verify_n: int = 300
    verify_seeds: int = 3
    verify_n_grid: list = field(default_factory=lambda: [64, 256, 1024])
    out_dir: str = "results"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}; expected one of {COMMANDS}")
        if not self.tau > 0:
            raise ConfigError("tau must be positive")
        if self.d < 2:
            raise ConfigError("d must be at least 2")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be >= 1")
        if any(not 0 < f <= 1 for f in self.under_factors):
            raise ConfigError("under_factors must lie in (0, 1]")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if any(not 0 < p < 1 for p in self.pi1_grid):
            raise ConfigError("pi1_grid values must lie in (0, 1)")
        try:
            self.make_schedule()
            model = self.model()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if not 0 <= self.k < model.n_blocks:
            raise ConfigError(f"k={self.k} is not a block index")
        if len(self.counts) != model.n_blocks or min(self.counts) < 1:
            raise ConfigError("counts needs one positive entry per block")

    def model(self, cross: Optional[float] = None, pi: Optional[list] = None) -> BlockModel:
        if self.alpha is not None and cross is None:
            alpha = np.asarray(self.alpha, dtype=float)
        else:
            c = self.cross if cross is None else cross
            w = self.within
            alpha = np.array([[w, c, 0.0], [c, w, 0.0], [0.0, 0.0, w]])
        K = alpha.shape[0]
        if pi is None:
            pi = self.pi if self.pi is not None else np.full(K, 1.0 / K)
        return BlockModel(pi, alpha)

    def make_schedule(self) -> Schedule:
        return Schedule(**self.schedule)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path, command: Optional[str] = None) -> "ScenarioConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if command is not None:
            if data.get("command", command) != command:
                raise ConfigError(f"config is for {data['command']!r}, not {command!r}")
            base = asdict(default_config(command))
            base.update(data)
            data = base
        return cls.from_dict(data)


def default_config(command: str, **overrides) -> ScenarioConfig:
    """Per-command defaults.

    The sweeps keep the standard 30000-step schedule; the check battery uses
    5000 steps, by which its full solves have converged.  The mediation scenario
    uses a sparser graph (within 0.8 and cross 0.4, both scaled by 1/4) so
    the minority block's representations overlap with its neighbour's instead
    of settling on a separate point; see the README.
    """
    base = dict(command=command)
    if command == "mediate":
        base.update(within=0.2, cross=0.1, counts=[640, 640, 640],
                    under_factors=[2.0 ** -4], schedule=asdict(Schedule(steps=1000)),
                    train_fraction=0.5)
    elif command == "verify":
        base.update(schedule=asdict(Schedule(steps=5000)))
    base.update(overrides)
    return ScenarioConfig(**base)


def apply_seed_env(cfg: ScenarioConfig, environ=os.environ) -> ScenarioConfig:
    value = environ.get(SEED_ENV)
    if value is None or value == "":
        return cfg
    try:
        seed = int(value)
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {value!r}") from exc
    data = asdict(cfg)
    data["base_seed"] = seed
    return ScenarioConfig(**data)


def cell_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1)[0])


# ---------------------------------------------------------------- output helpers

def _fmt(x) -> str:
    x = float(x)
    return "nan" if np.isnan(x) else repr(x)


def matrix_csv(M: np.ndarray, row_labels=None, col_labels=None) -> str:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    rows = row_labels if row_labels is not None else range(M.shape[0])
    cols = col_labels if col_labels is not None else range(M.shape[1])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([""] + [str(c) for c in cols])
    for r, line in zip(rows, M):
        w.writerow([str(r)] + [_fmt(x) for x in line])
    return buf.getvalue()


def table_csv(header: list, rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _nanmean(x: np.ndarray) -> np.ndarray:
    """Mean over the first axis ignoring nan; all-nan cells stay nan quietly."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(x, axis=0)


def _prepare(cfg: ScenarioConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(cfg.to_json())
    return out


def _run_map(fn, items, jobs: int):
    if jobs <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- fig3

def factor_counts(counts, k: int, factor: float) -> list[int]:
    out = [int(c) for c in counts]
    out[k] = max(1, int(round(out[k] * factor)))
    return out


@dataclass
class _Fig3Job:
    cfg: ScenarioConfig

    def __call__(self, replicate: int) -> list:
        cfg = self.cfg
        seed = cell_seed(cfg.base_seed, replicate)
        model = cfg.model()
        reps = []
        for factor in cfg.under_factors:
            g = sample_sbm_fixed_counts(model, factor_counts(cfg.counts, cfg.k, factor), seed)
            V, _ = solve_full(g, cfg.d, cfg.tau, cfg.make_schedule(), seed,
                              drop_isolated=cfg.drop_isolated)
            reps.append(V)
        return reps


@dataclass
class Fig3Result:
    factors: list
    cos_mean: np.ndarray
    cos_std: np.ndarray
    rh: np.ndarray
    seeds: list


def run_fig3(cfg: ScenarioConfig, jobs: int = 1, plot_data: bool = False) -> Fig3Result:
    """Full-problem solves at shrinking minority counts, summarized per replicate.

    Arrays are indexed ``[replicate, factor, block, block]``.  RH compares
    every factor against the first one (the balanced arm by default).
    """
    out = _prepare(cfg)
    K = cfg.model().n_blocks
    per_rep = _run_map(_Fig3Job(cfg), range(cfg.n_seeds), jobs)
    R, F = cfg.n_seeds, len(cfg.under_factors)
    cos_mean = np.full((R, F, K, K), np.nan)
    cos_std = np.full((R, F, K, K), np.nan)
    rh = np.full((R, F, K, K), np.nan)
    for r, reps in enumerate(per_rep):
        for f, V in enumerate(reps):
            s = cosine_summary(V, n_blocks=K)
            cos_mean[r, f], cos_std[r, f] = s.mean, s.std
            rh[r, f] = rh_metric(V, reps[0], cfg.k, n_blocks=K).rh
    seeds = [cell_seed(cfg.base_seed, r) for r in range(R)]

    meta = {"factors": cfg.under_factors, "seeds": seeds, "k": cfg.k, "tau": cfg.tau,
            "d": cfg.d, "files": {}}
    for f, factor in enumerate(cfg.under_factors):
        tag = f"f{f}"
        files = {"cos_mean": f"cos_mean_{tag}.csv", "cos_std": f"cos_std_{tag}.csv",
                 "rh": f"rh_{tag}.csv"}
        (out / files["cos_mean"]).write_text(matrix_csv(_nanmean(cos_mean[:, f])))
        (out / files["cos_std"]).write_text(matrix_csv(_nanmean(cos_std[:, f])))
        (out / files["rh"]).write_text(matrix_csv(_nanmean(rh[:, f])))
        meta["files"][str(factor)] = files
    (out / "rh.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if plot_data:
        rows = []
        for r in range(R):
            for f, factor in enumerate(cfg.under_factors):
                for a in range(K):
                    for b in range(K):
                        rows.append([seeds[r], factor, a, b, float(cos_mean[r, f, a, b]),
                                     float(cos_std[r, f, a, b]), float(rh[r, f, a, b])])
        (out / "fig3_tidy.csv").write_text(
            table_csv(["seed", "factor", "block_a", "block_b", "cos_mean", "cos_std", "rh"], rows))
    return Fig3Result(list(cfg.under_factors), cos_mean, cos_std, rh, seeds)


# ---------------------------------------------------------------- fig4

@dataclass
class _Fig4Job:
    cfg: ScenarioConfig

    def __call__(self, cell: tuple) -> dict:
        index, pi1, cross = cell
        cfg = self.cfg
        rest = (1.0 - pi1) / 2
        try:
            model = cfg.model(cross=cross, pi=[pi1, rest, 1.0 - pi1 - rest])
            emb = solve_reduced(model, cfg.d, cfg.tau, cfg.make_schedule(), cfg.restarts,
                                cell_seed(cfg.base_seed, index))
        except InvalidModelError as exc:
            return {"pi1": pi1, "alpha": cross, "skipped": str(exc)}
        return {"pi1": pi1, "alpha": cross, "cos12": emb.cosine(0, 1),
                "cos23": emb.cosine(1, 2), "objective": emb.achieved_objective}


@dataclass
class Fig4Result:
    pi1_grid: list
    alpha_grid: list
    cos12: np.ndarray
    cos23: np.ndarray
    skipped: list


def run_fig4(cfg: ScenarioConfig, jobs: int = 1, plot_data: bool = False) -> Fig4Result:
    """Reduced-problem sweep over minority share and cross-connectivity.

    Curves are ``[pi1 index, alpha index]``; cells violating the positivity
    requirement are skipped, left ``nan`` and listed in ``fig4.json``.
    """
    out = _prepare(cfg)
    cells = [(i * len(cfg.alpha_grid) + j, p, a)
             for i, p in enumerate(cfg.pi1_grid) for j, a in enumerate(cfg.alpha_grid)]
    results = _run_map(_Fig4Job(cfg), cells, jobs)
    P, A = len(cfg.pi1_grid), len(cfg.alpha_grid)
    cos12 = np.full((P, A), np.nan)
    cos23 = np.full((P, A), np.nan)
    skipped = []
    for (index, _, _), res in zip(cells, results):
        i, j = divmod(index, A)
        if "skipped" in res:
            skipped.append(res)
            continue
        cos12[i, j], cos23[i, j] = res["cos12"], res["cos23"]
    (out / "cos12.csv").write_text(matrix_csv(cos12, cfg.pi1_grid, cfg.alpha_grid))
    (out / "cos23.csv").write_text(matrix_csv(cos23, cfg.pi1_grid, cfg.alpha_grid))
    meta = {"rows": "pi1", "columns": "alpha", "skipped": skipped,
            "objective": [r.get("objective") for r in results]}
    (out / "fig4.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if plot_data:
        rows = [[r["pi1"], r["alpha"], float(r.get("cos12", np.nan)), float(r.get("cos23", np.nan))]
                for r in results]
        (out / "fig4_tidy.csv").write_text(table_csv(["pi1", "alpha", "cos12", "cos23"], rows))
    return Fig4Result(list(cfg.pi1_grid), list(cfg.alpha_grid), cos12, cos23, skipped)


# ---------------------------------------------------------------- mediate

def mediation_config(cfg: ScenarioConfig) -> MediationConfig:
    if len(set(cfg.counts)) != 1:
        raise ConfigError("mediation needs equal balanced counts")
    return MediationConfig(block_size=int(cfg.counts[0]), d=cfg.d, tau=cfg.tau,
                           schedule=cfg.make_schedule(), head=HeadConfig(**cfg.head),
                           train_fraction=cfg.train_fraction, drop_isolated=cfg.drop_isolated)


ARM_DEFINITIONS = {
    "y00": "balanced graph representations, head trained with class-balancing weights",
    "y01": "underrepresented graph representations, head trained with class-balancing weights",
    "y11": "underrepresented graph representations, head trained unweighted",
    "split": "each arm's own nodes split per block into head-training and held-out sets",
}


def run_mediate(cfg: ScenarioConfig, jobs: int = 1, plot_data: bool = False) -> dict:
    """Mediation decomposition for every factor in ``under_factors``.

    Writes ``te.csv``, ``nie.csv``, ``rnde.csv`` and ``per_seed.csv`` (with the
    identity residual of every entry) per factor, plus ``meta.json``.  With
    several factors each one gets its own ``f<index>/`` subdirectory.
    """
    out = _prepare(cfg)
    mcfg = mediation_config(cfg)
    model = cfg.model()
    seeds = [cell_seed(cfg.base_seed, r) for r in range(cfg.n_seeds)]
    reports = {}
    meta = {"k": cfg.k, "seeds": seeds, "tau": cfg.tau, "d": cfg.d, "head": cfg.head,
            "arms": ARM_DEFINITIONS, "mediation": json.loads(json.dumps(mcfg.to_dict())),
            "factors": {}}
    tidy = []
    for f, factor in enumerate(cfg.under_factors):
        if jobs > 1:
            from concurrent.futures import ProcessPoolExecutor
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                rep = mediation_analysis(model, cfg.k, factor, mcfg, seeds, runner=pool.map)
        else:
            rep = mediation_analysis(model, cfg.k, factor, mcfg, seeds)
        reports[factor] = rep
        target = out if len(cfg.under_factors) == 1 else out / f"f{f}"
        target.mkdir(exist_ok=True)
        for name in ("te", "nie", "rnde"):
            (target / f"{name}.csv").write_text(matrix_csv(getattr(rep, name)))
        rows = []
        K = rep.te.shape[0]
        for e in rep.per_seed:
            resid = np.abs(e.te - (-e.rnde + e.nie))
            for a in range(K):
                for b in range(K):
                    rows.append([e.seed, a, b, float(e.te[a, b]), float(e.nie[a, b]),
                                 float(e.rnde[a, b]), float(resid[a, b])])
                    tidy.append([factor] + rows[-1])
        (target / "per_seed.csv").write_text(
            table_csv(["seed", "row", "col", "te", "nie", "rnde", "identity_residual"], rows))
        meta["factors"][str(factor)] = {"dir": str(target.relative_to(out)),
                                        "identity_residual": rep.identity_residual}
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    if plot_data:
        (out / "mediate_tidy.csv").write_text(table_csv(
            ["factor", "seed", "row", "col", "te", "nie", "rnde", "identity_residual"], tidy))
    return reports


# ---------------------------------------------------------------- verify

def naive_loss(V: np.ndarray, adjacency: np.ndarray, tau: float) -> float:
    """Direct double sum of the log-ratio form of the loss (slow, for checking)."""
    n = V.shape[0]
    S = V @ V.T / tau
    deg = adjacency.sum(axis=1)
    total = 0.0
    for i in range(n):
        log_norm = np.log(np.mean(np.exp(S[i])))
        for j in range(n):
            if adjacency[i, j]:
                total += (S[i, j] - log_norm) / deg[i]
    return -total / n


def _random_instance(rng, n_range=(6, 20), d_range=(2, 6), K_range=(1, 4)):
    n = int(rng.integers(*n_range))
    d = int(rng.integers(*d_range))
    K = int(rng.integers(*K_range))
    A = rng.uniform(0.3, 1.0, (K, K))
    model = BlockModel(np.full(K, 1.0 / K), (A + A.T) / 2)
    # keep drawing until no node is isolated
    for _ in range(100):
        g = sample_sbm(model, n, int(rng.integers(2 ** 31)))
        if np.all(g.degrees > 0):
            break
    V = rng.standard_normal((n, d))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    tau = float(rng.uniform(0.2, 2.0))
    return g, V, tau


def check_decomposition(rng, instances: int = 100, tol: float = 1e-10) -> dict:
    worst = 0.0
    for _ in range(instances):
        g, V, tau = _random_instance(rng)
        b = cl_loss(V, g, tau)
        worst = max(worst, abs(naive_loss(V, g.adjacency, tau) - (-b.linear_part + b.lse_part)),
                    abs(b.total - (-b.linear_part + b.lse_part)))
    return {"passed": worst <= tol, "max_abs_error": worst, "tolerance": tol}


def finite_difference_grad(fn, V: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    G = np.zeros_like(V)
    for idx in np.ndindex(*V.shape):
        E = np.zeros_like(V)
        E[idx] = eps
        G[idx] = (fn(V + E) - fn(V - E)) / (2 * eps)
    return G


def check_gradient(rng, grad_fn: Callable = None, instances: int = 20, tol: float = 1e-4) -> dict:
    grad_fn = grad_fn or contrastive.cl_grad
    worst = 0.0
    for _ in range(instances):
        g, V, tau = _random_instance(rng, n_range=(4, 21), d_range=(2, 6))
        analytic = grad_fn(V, g, tau)
        numeric = finite_difference_grad(lambda X: cl_loss(X, g, tau).total, V)
        rel = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(rel))
    return {"passed": worst <= tol, "max_relative_error": worst, "tolerance": tol}


def collapsed_reps(rng, g, d: int) -> np.ndarray:
    H = rng.standard_normal((g.n_blocks, d))
    H /= np.linalg.norm(H, axis=1, keepdims=True)
    return H[g.labels]


def check_jensen(rng, random_instances: int = 1000, collapsed_instances: int = 100,
                 lower_tol: float = 1e-10, equality_tol: float = 1e-8) -> tuple[dict, dict]:
    min_gap, max_eq_gap = np.inf, 0.0
    for _ in range(random_instances):
        g, V, tau = _random_instance(rng)
        min_gap = min(min_gap, jensen_bound_check(V, g, tau).gap)
    for _ in range(collapsed_instances):
        g, V, tau = _random_instance(rng)
        V = collapsed_reps(rng, g, V.shape[1])
        max_eq_gap = max(max_eq_gap, abs(jensen_bound_check(V, g, tau).gap))
    lower = {"passed": min_gap >= -lower_tol, "min_gap": float(min_gap), "tolerance": lower_tol}
    equal = {"passed": max_eq_gap <= equality_tol, "max_gap": float(max_eq_gap),
             "tolerance": equality_tol}
    return lower, equal


def block_mean_gram(V: RepMatrix, n_blocks: int) -> np.ndarray:
    h = V.block_means(n_blocks)
    return h @ h.T


def check_full_vs_reduced(cfg: ScenarioConfig, tol: float = 0.05) -> dict:
    """Block-mean Gram of full solves at equal block sizes vs the reduced optimum."""
    model = cfg.model()
    K = model.n_blocks
    sched = cfg.make_schedule()
    reduced = solve_reduced(model, cfg.d, cfg.tau, sched, cfg.restarts, cfg.base_seed).gram()
    counts = [cfg.verify_n // K] * K
    errors = []
    for r in range(cfg.verify_seeds):
        seed = cell_seed(cfg.base_seed, r)
        g = sample_sbm_fixed_counts(model, counts, seed)
        V, _ = solve_full(g, cfg.d, cfg.tau, sched, seed, drop_isolated=cfg.drop_isolated)
        errors.append(float(np.max(np.abs(block_mean_gram(V, K) - reduced))))
    return {"passed": max(errors) <= tol, "max_abs_error_per_seed": errors, "tolerance": tol}


def random_block_model(rng, K: int) -> BlockModel:
    A = rng.uniform(0.05, 1.0, (K, K))
    pi = rng.dirichlet(np.full(K, 2.0))
    pi = np.maximum(pi, 0.05)
    return BlockModel(pi / pi.sum(), (A + A.T) / 2)


def check_brute_force(rng, cfg: ScenarioConfig, models: int = 10, tol: float = 0.02,
                      grid: int = 2000) -> dict:
    errors = []
    for i in range(models):
        K = 2 + i % 2
        model = random_block_model(rng, K)
        tau = float(rng.uniform(0.3, 2.0))
        found = solve_reduced(model, 2, tau, cfg.make_schedule(), cfg.restarts,
                              int(rng.integers(2 ** 31)))
        brute = brute_force_reduced(model, tau, grid)
        errors.append(float(np.max(np.abs(found.gram() - brute.gram()))))
    return {"passed": max(errors) <= tol, "max_abs_error_per_model": errors, "tolerance": tol}


def check_modified_loss_trend(rng, cfg: ScenarioConfig, repeats: int = 5) -> dict:
    """Median ``|loss - modified loss|`` over repeats must shrink along the n grid."""
    model = cfg.model()
    medians = []
    for n in cfg.verify_n_grid:
        diffs = []
        for _ in range(repeats):
            g = sample_sbm(model, n, int(rng.integers(2 ** 31)))
            if np.any(g.degrees == 0):
                continue
            H = rng.standard_normal((model.n_blocks, cfg.d))
            V = H[g.labels] + 0.5 * rng.standard_normal((n, cfg.d))
            V /= np.linalg.norm(V, axis=1, keepdims=True)
            diffs.append(abs(cl_loss(V, g, cfg.tau).total - modified_loss(V, g, cfg.tau)))
        medians.append(float(np.median(diffs)) if diffs else float("nan"))
    passed = bool(np.all(np.diff(medians) < 0))
    return {"passed": passed, "n_grid": list(cfg.verify_n_grid), "median_abs_diff": medians}


def run_verify(cfg: ScenarioConfig, grad_fn: Optional[Callable] = None,
               checks: Optional[list] = None) -> dict:
    """Run the property battery and write ``report.json``.

    ``grad_fn`` replaces the analytic gradient under test (a fault-injection
    hook); ``checks`` restricts the battery to the named checks.
    """
    out = _prepare(cfg)
    rng = np.random.default_rng(cfg.base_seed)
    wanted = set(checks) if checks is not None else None

    def want(name):
        return wanted is None or name in wanted

    results = {}
    if want("decomposition"):
        results["decomposition"] = check_decomposition(rng)
    if want("gradient"):
        results["gradient"] = check_gradient(rng, grad_fn)
    if want("jensen_lower_bound") or want("jensen_equality"):
        lower, equal = check_jensen(rng)
        if want("jensen_lower_bound"):
            results["jensen_lower_bound"] = lower
        if want("jensen_equality"):
            results["jensen_equality"] = equal
    if want("full_vs_reduced"):
        results["full_vs_reduced"] = check_full_vs_reduced(cfg)
    if want("brute_force"):
        results["brute_force"] = check_brute_force(rng, cfg)
    if want("modified_loss_trend"):
        results["modified_loss_trend"] = check_modified_loss_trend(rng, cfg)
    for r in results.values():
        r["passed"] = bool(r["passed"])
    report = {"passed": all(r["passed"] for r in results.values()), "checks": results}
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report
