"""Acceptance gate: one test per criterion (criterion 7 has two clauses).

Each test records a PASS/FAIL line that is repeated in the terminal summary.
The reproduction checks (criteria 4-8) take tens of minutes on one core.
"""
import numpy as np
import pytest

from collapse_lab.experiments import (check_brute_force, check_decomposition,
                                      check_full_vs_reduced, check_gradient, check_jensen,
                                      default_config, run_fig3, run_fig4, run_mediate)
from collapse_lab.mediation import gah


def test_criterion_1_exact_identities(record_criterion):
    rng = np.random.default_rng(101)
    decomposition = check_decomposition(rng, instances=100, tol=1e-10)

    worst_gah = 0.0
    for _ in range(100):
        K = int(rng.integers(2, 5))
        n = int(rng.integers(10, 60))
        y = np.concatenate([np.arange(K), np.arange(K), rng.integers(0, K, n)])
        group = np.concatenate([np.zeros(K), np.ones(K), rng.integers(0, 2, n)])
        pred = rng.integers(0, K, y.size)
        worst_gah = max(worst_gah, float(np.max(np.abs(gah(pred, y, group, n_classes=K).sum(axis=1)))))

    # the mediation identity is checked on the full run in criterion 8; here on a quick one
    from collapse_lab.mediation import HeadConfig, MediationConfig, mediation_analysis
    from collapse_lab.sbm import three_block_model
    from collapse_lab.sphere_opt import Schedule
    cfg = MediationConfig(block_size=16, d=4, schedule=Schedule(steps=100),
                          head=HeadConfig(epochs=100), min_eval_treated=2)
    residual = mediation_analysis(three_block_model(), 0, 0.5, cfg, seeds=[0, 1]).identity_residual

    ok = decomposition["passed"] and worst_gah <= 1e-12 and residual <= 1e-12
    record_criterion(1, ok, f"decomposition max err {decomposition['max_abs_error']:.2e}, "
                            f"GAH row-sum max {worst_gah:.2e}, TE identity residual {residual:.2e}")
    assert ok


def test_criterion_2_gradient(record_criterion):
    res = check_gradient(np.random.default_rng(202), instances=20, tol=1e-4)
    record_criterion(2, res["passed"], f"max relative error {res['max_relative_error']:.2e} (tol 1e-4)")
    assert res["passed"]


def test_criterion_3_jensen(record_criterion):
    lower, equal = check_jensen(np.random.default_rng(303), random_instances=1000,
                                collapsed_instances=100)
    ok = lower["passed"] and equal["passed"]
    record_criterion(3, ok, f"min gap {lower['min_gap']:.2e} (>= -1e-10), "
                            f"collapsed max gap {equal['max_gap']:.2e} (<= 1e-8)")
    assert ok


@pytest.mark.slow
def test_criterion_4_full_vs_reduced(record_criterion):
    cfg = default_config("verify", verify_n=300, verify_seeds=3)
    res = check_full_vs_reduced(cfg, tol=0.05)
    errs = ", ".join(f"{e:.3f}" for e in res["max_abs_error_per_seed"])
    record_criterion(4, res["passed"], f"max Gram deviation per seed [{errs}] (tol 0.05)")
    assert res["passed"]


@pytest.mark.slow
def test_criterion_5_brute_force(record_criterion):
    cfg = default_config("verify")
    res = check_brute_force(np.random.default_rng(505), cfg, models=10, tol=0.02)
    record_criterion(5, res["passed"],
                     f"worst Gram deviation {max(res['max_abs_error_per_model']):.4f} (tol 0.02)")
    assert res["passed"]


@pytest.mark.slow
def test_criterion_6_fig3_trends(record_criterion, tmp_path):
    cfg = default_config("fig3", n_seeds=10, out_dir=str(tmp_path))
    res = run_fig3(cfg)
    cross12 = res.cos_mean[:, :, 0, 1]
    cross23 = res.cos_mean[:, :, 1, 2]
    rh12 = res.rh[:, 1:, 0, 1]
    up = int(np.sum(np.all(np.diff(cross12, axis=1) > 0, axis=1)))
    down = int(np.sum(np.all(np.diff(cross23, axis=1) < 0, axis=1)))
    harm = int(np.sum(np.all(rh12 < 1, axis=1) & (rh12[:, 1] < rh12[:, 0])))
    ok = up >= 8 and down >= 8 and harm >= 8
    means = cross12.mean(axis=0)
    record_criterion(6, ok, f"cos(0,1) rising {up}/10 (means {np.round(means, 2).tolist()}), "
                            f"cos(1,2) falling {down}/10, RH<1 and falling {harm}/10 "
                            f"(mean RH {np.round(rh12.mean(axis=0), 2).tolist()})")
    assert ok


@pytest.fixture(scope="module")
def fig4_result(tmp_path_factory):
    cfg = default_config("fig4", out_dir=str(tmp_path_factory.mktemp("fig4")))
    return run_fig4(cfg)


@pytest.mark.slow
def test_criterion_7_fig4_strong_cross_link(record_criterion, fig4_result):
    res = fig4_result
    j = res.alpha_grid.index(0.4)
    small = np.array(res.pi1_grid) <= 2.0 ** -8
    cos12, cos23 = res.cos12[small, j], res.cos23[small, j]
    column = res.cos12[:, j]
    monotone = bool(np.all(np.diff(column) >= -0.02))
    ok = bool(np.all(cos12 >= 0.99) and np.all(cos23 <= -0.99) and monotone)
    record_criterion(7, ok, f"alpha=0.4: min cos(0,1) {cos12.min():.4f} (>= 0.99), "
                            f"max cos(1,2) {cos23.max():.4f} (<= -0.99), monotone {monotone}")
    assert ok


@pytest.mark.slow
def test_criterion_7_fig4_weak_cross_link(record_criterion, fig4_result):
    res = fig4_result
    j = res.alpha_grid.index(0.1)
    small = np.array(res.pi1_grid) <= 2.0 ** -8
    cos12 = res.cos12[small, j]
    ok = bool(np.all(cos12 < 0))
    record_criterion(7, ok, f"alpha=0.1: cos(0,1) at pi1<=2^-8 = "
                            f"{np.round(cos12, 4).tolist()} (need < 0)")
    assert ok


@pytest.mark.slow
def test_criterion_8_mediation_signs(record_criterion, tmp_path):
    cfg = default_config("mediate", n_seeds=10, out_dir=str(tmp_path))
    rep = run_mediate(cfg)[2.0 ** -4]
    te = np.array([e.te[0, 1] for e in rep.per_seed])
    nie = np.array([e.nie[0, 1] for e in rep.per_seed])
    both = int(np.sum((te > 0) & (nie > 0)))
    ok = both >= 8 and rep.identity_residual <= 1e-12
    record_criterion(8, ok, f"TE(0,1)>0 and NIE(0,1)>0 in {both}/10 seeds "
                            f"(TE {np.round(te, 2).tolist()}, NIE {np.round(nie, 2).tolist()}), "
                            f"identity residual {rep.identity_residual:.1e}")
    assert ok
