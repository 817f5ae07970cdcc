"""End-to-end acceptance checks for the toolkit's headline guarantees.

Each test prints exactly one bracketed PASS/FAIL line with the measured
numbers (written through the capture so it shows up in a plain pytest
run), then asserts. The expensive fixtures, one calibrated snapshot per
environment plus one full 120-cell sweep, are session-scoped and shared
across tests.
"""

import time

import numpy as np
import pytest

from compound_uq.analysis import degradation, superadditive_rate
from compound_uq.belief import coupling_family, exact_mi, random_belief, verify_bound
from compound_uq.config import config_from_dict
from compound_uq.ensemble import acc_feature
from compound_uq.kappa import Regime, classify_regime, sigma_s, sigma_theta
from compound_uq.perturb import ConditionSpec
from compound_uq.policy import PolicySettings
from compound_uq.rollout import (
    build_eval_rows,
    calibrate,
    model_mse_on,
    run_condition,
    run_sweep,
)

EXACT = 1e-12
BOUND_TOL = 1e-9


def _report(capsys, num, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {num:2d}] {'PASS' if ok else 'FAIL'} {detail}")


def _task_only(cfg):
    return PolicySettings(
        alpha_max=0.0,
        lambda_risk=cfg.policy.lambda_risk,
        delta_max=cfg.policy.delta_max,
        n_candidates=cfg.policy.n_candidates,
    )


@pytest.fixture(scope="session")
def driftbot():
    cfg = config_from_dict(
        {
            "env_id": "DriftBot",
            "horizon": 220,
            "onset_t": 50,
            "ensemble": {"t_pre": 300, "m_members": 5},
        }
    )
    return cfg, calibrate(cfg)


@pytest.fixture(scope="session")
def driftbot_sweep(driftbot):
    cfg, snap = driftbot
    t0 = time.perf_counter()
    outcome = run_sweep(cfg, snap)
    return outcome, time.perf_counter() - t0


@pytest.fixture(scope="session")
def oscillator():
    cfg = config_from_dict(
        {
            "env_id": "MassSpring1D",
            "horizon": 220,
            "onset_t": 50,
            "grid": {
                "po_levels": [0.0, 0.5],
                "delay_levels": [0, 1],
                "shift_levels": [None, ["stiffness", 3.0]],
                "seeds": list(range(10)),
            },
            "ensemble": {"t_pre": 300, "m_members": 5},
            "thresholds": {"tau_low": 0.2, "tau_high": 0.5},
        }
    )
    return cfg, calibrate(cfg)


def test_deficit_formula_hand_values(capsys):
    s_struct = sigma_s(0.5, 1, c_tau=0.3)
    mu0, sig0 = 0.02, 0.005
    s_theta = sigma_theta(mu0 + 5.0 * sig0, mu0, sig0)
    ramp = [np.full(4, float(t * t)) for t in (5, 6, 7)]
    acc = acc_feature(ramp)
    errs = (
        abs(s_struct - 0.95),
        abs(s_theta - 1.0),
        float(np.abs(acc - 2.0).max()),
    )
    ok = max(errs) <= EXACT
    _report(
        capsys,
        1,
        ok,
        f"sigma_s(0.5,1,0.3)={s_struct!r}, sigma_theta(mu0+5sigma0)={s_theta!r}, "
        f"quadratic-ramp acc err={errs[2]:.1e} (tol {EXACT:g})",
    )
    assert ok


def test_information_bound_on_random_beliefs(capsys):
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    violations = 0
    worst_slack_dev = 0.0
    for _ in range(10_000):
        n_s = int(rng.integers(2, 9))
        n_theta = int(rng.integers(2, 9))
        check = verify_bound(random_belief(rng, n_s, n_theta))
        if check.mi > check.bound + BOUND_TOL:
            violations += 1
        worst_slack_dev = max(worst_slack_dev, abs(check.slack - check.h_joint))
    elapsed = time.perf_counter() - t0
    ok = violations == 0 and worst_slack_dev <= BOUND_TOL and elapsed < 10.0
    _report(
        capsys,
        2,
        ok,
        f"10000 beliefs: violations={violations}, max |slack - H_joint|={worst_slack_dev:.2e}, "
        f"{elapsed:.1f}s (budget 10s)",
    )
    assert ok


def test_coupling_monotonicity(capsys):
    lams = np.linspace(0.0, 1.0, 101)
    inversions = 0
    for n in (2, 4, 8):
        mis = [exact_mi(coupling_family(float(lam), n)) for lam in lams]
        inversions += sum(1 for a, b in zip(mis, mis[1:]) if b < a - EXACT)
    ok = inversions == 0
    _report(capsys, 3, ok, f"mutual information across 101-point grids (n=2,4,8): inversions={inversions}")
    assert ok


def test_kappa_ordering_across_stressor_counts(driftbot, driftbot_sweep, capsys):
    cfg, _ = driftbot
    outcome, elapsed = driftbot_sweep
    k = outcome.kappa_by_label
    ordered = k["C1"] < k["C2"] < k["C3"] < k["C4"]
    ok = ordered and len(cfg.grid.seeds) >= 10 and elapsed < 120.0
    _report(
        capsys,
        4,
        ok,
        f"seed-averaged post-onset kappa {k['C1']:.4f} < {k['C2']:.4f} < {k['C3']:.4f} < {k['C4']:.4f} "
        f"({len(cfg.grid.seeds)} seeds, sweep {elapsed:.1f}s, budget 120s)",
    )
    assert ok


def test_delay_detectability_on_oscillator(oscillator, capsys):
    cfg, snap = oscillator
    bar = snap.mu0 + 2.0 * snap.sigma0
    policy = _task_only(cfg)
    hits = 0
    for seed in range(10):
        res = run_condition(
            cfg,
            snap,
            ConditionSpec(delay_steps=1, onset_t=cfg.onset_t),
            seed=seed,
            policy_settings=policy,
            adaptive_enabled=False,
            collect_steps=False,
        )
        hits += res.post_onset_mse_mean > bar
    ok = hits >= 9
    _report(
        capsys,
        5,
        ok,
        f"1-step delay drives post-onset model error above mu0+2sigma0={bar:.2e} in {hits}/10 seeds (need >=9)",
    )
    assert ok


def test_threshold_placement_classifies_regimes(driftbot, driftbot_sweep, capsys):
    cfg, snap = driftbot
    outcome, _ = driftbot_sweep
    k = outcome.kappa_by_label
    benign = (Regime.LOW, Regime.TRANSITION)
    r1 = classify_regime(k["C1"], snap.thresholds)
    r2 = classify_regime(k["C2"], snap.thresholds)
    ok = r1 in benign and r2 in benign and k["C4"] > k["C3"] and len(cfg.grid.seeds) >= 10
    _report(
        capsys,
        6,
        ok,
        f"C1 -> {r1.value}, C2 -> {r2.value} (neither HighDeficit); "
        f"C4 mean {k['C4']:.4f} > C3 mean {k['C3']:.4f}",
    )
    assert ok


def test_synergy_rate_recovery_and_worked_example(capsys):
    rng = np.random.default_rng(7)
    records = []
    for i in range(120):
        if i < 30:
            s = float(rng.normal(0.4, 0.05))
            records.append(degradation(f"p{i}", 1.0, 0.9, 0.9, 0.8 - s))
        else:
            records.append(degradation(f"a{i}", 1.0, 0.9, 0.9, 0.8))
    report = superadditive_rate(records)
    worked = degradation("worked", 1.0, 0.81, 0.73, 0.23)
    worked_errs = (
        abs(worked.delta_po - 0.19),
        abs(worked.delta_theta - 0.27),
        abs(worked.delta_compound - 0.77),
        abs(worked.synergy_frac - 0.31),
    )
    ok = (
        report.rate == 0.25
        and report.n_superadditive == 30
        and report.p_value is not None
        and report.p_value < 1e-3
        and max(worked_errs) <= EXACT
    )
    _report(
        capsys,
        7,
        ok,
        f"planted rate recovered {report.n_superadditive}/120={report.rate!r}, t-test p={report.p_value:.2e}; "
        f"worked-example deltas (0.19, 0.27, 0.77) -> synergy 0.31, max err={max(worked_errs):.1e}",
    )
    assert ok


def test_risk_budget_compliance_in_sweep(driftbot_sweep, capsys):
    outcome, _ = driftbot_sweep
    per_cell = [s["violations"] for s in outcome.cell_summaries]
    ok = outcome.total_violations == 0 and all(v == 0 for v in per_cell)
    _report(
        capsys,
        8,
        ok,
        f"selected-action risk within delta(kappa) whenever a compliant candidate exists: "
        f"{outcome.total_violations} violations across {len(per_cell)} episodes",
    )
    assert ok


def test_probing_speeds_dynamics_identification(driftbot, capsys):
    _, snap = driftbot
    cfg = config_from_dict(
        {
            "env_id": "DriftBot",
            "horizon": 150,
            "onset_t": 50,
            "ensemble": {"t_pre": 300, "m_members": 5},
        }
    )
    cond = ConditionSpec(shift=("gain_left", 0.5), onset_t=cfg.onset_t)
    task_policy = _task_only(cfg)
    wins = 0
    for seed in range(10):
        x_eval, y_eval = build_eval_rows(
            "DriftBot", {"gain_left": 0.5}, seed=seed, n_rows=400, horizon=220
        )
        probe = run_condition(cfg, snap, cond, seed=seed, adaptive_enabled=True, collect_steps=False)
        task = run_condition(
            cfg, snap, cond, seed=seed, policy_settings=task_policy, adaptive_enabled=True, collect_steps=False
        )
        wins += model_mse_on(probe.adaptive_ensemble, x_eval, y_eval) < model_mse_on(
            task.adaptive_ensemble, x_eval, y_eval
        )
    ok = wins >= 8
    _report(
        capsys,
        9,
        ok,
        f"after 100 post-onset steps under a gain fault, probing beats the pure task policy on "
        f"shifted-dynamics error in {wins}/10 seeds (need >=8)",
    )
    assert ok


def test_sweep_byte_determinism(driftbot, tmp_path_factory, capsys):
    _, snap = driftbot
    cfg = config_from_dict(
        {
            "env_id": "DriftBot",
            "horizon": 220,
            "onset_t": 50,
            "grid": {"po_levels": [0.0, 0.5], "delay_levels": [0, 1], "shift_levels": [None], "seeds": [0]},
            "ensemble": {"t_pre": 300, "m_members": 5},
        }
    )
    dir_a = tmp_path_factory.mktemp("det_a")
    dir_b = tmp_path_factory.mktemp("det_b")
    run_sweep(cfg, snap, out_dir=str(dir_a), resume=False)
    run_sweep(cfg, snap, out_dir=str(dir_b), resume=False)
    names_a = sorted(p.name for p in dir_a.iterdir())
    names_b = sorted(p.name for p in dir_b.iterdir())
    identical = names_a == names_b and all(
        (dir_a / name).read_bytes() == (dir_b / name).read_bytes() for name in names_a
    )
    ok = identical and len(names_a) == 8  # 4 traces + 4 reports
    _report(
        capsys,
        10,
        ok,
        f"4-cell sweep run twice: {len(names_a)} output files byte-identical={identical}",
    )
    assert ok
