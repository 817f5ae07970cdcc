"""Policy tests: schedules, candidate generation, budgeted selection."""

import numpy as np
import pytest

from compound_uq.errors import InputError
from compound_uq.kappa import Thresholds
from compound_uq.policy import (
    PolicySettings,
    alpha_schedule,
    candidate_actions,
    composite_value,
    delta_budget,
    dis_score,
    select_action,
    task_affinity,
)

from helpers import constant_ensemble

THR = Thresholds(tau_low=0.2, tau_high=0.5)


def test_alpha_schedule_linear_ramp():
    # kappa=0.35 sits halfway between the thresholds.
    assert abs(alpha_schedule(0.35, THR, 1.0) - 0.5) < 1e-12
    assert alpha_schedule(0.1, THR, 1.0) == 0.0
    assert alpha_schedule(0.2, THR, 1.0) == 0.0
    assert alpha_schedule(0.5, THR, 1.0) == 1.0
    assert alpha_schedule(2.0, THR, 200.0) == 200.0
    with pytest.raises(InputError):
        alpha_schedule(-0.1, THR, 1.0)
    with pytest.raises(InputError):
        alpha_schedule(float("nan"), THR, 1.0)


def test_delta_budget_tightens_with_kappa():
    assert abs(delta_budget(0.35, THR, 2.0) - 1.0) < 1e-12
    assert delta_budget(0.1, THR, 2.0) == 2.0
    assert delta_budget(0.5, THR, 2.0) == 0.0
    assert delta_budget(3.0, THR, 2.0) == 0.0


def test_dis_score_matches_disagreement_identity():
    d = np.array([0.1, 0.2])
    e = np.array([0.6, 0.8])  # ||e||^2 = 1
    ens = constant_ensemble([d, d + e], in_dim=5)
    scores = dis_score(ens, np.zeros((3, 5)))
    np.testing.assert_allclose(scores, np.full(3, 0.25), rtol=0, atol=1e-12)


def test_composite_value_arithmetic():
    v = composite_value(np.array([1.0]), np.array([2.0]), np.array([0.5]), alpha=1.0, lambda_risk=2.0)
    assert abs(v[0] - 2.0) < 1e-12
    with pytest.raises(InputError):
        composite_value(np.zeros(2), np.zeros(3), np.zeros(2), alpha=1.0, lambda_risk=1.0)


def test_candidate_actions_layout():
    settings = PolicySettings(n_candidates=8)
    task = np.array([0.3, -0.7])
    rng = np.random.default_rng(0)
    cands = candidate_actions(task, rng, settings)
    assert cands.shape == (8, 2)
    np.testing.assert_array_equal(cands[0], task)
    np.testing.assert_array_equal(cands[1], np.zeros(2))
    assert np.all(np.abs(cands[2:]) <= 1.0)


def test_candidate_spread_grades_exploration():
    settings = PolicySettings(n_candidates=8)
    task = np.array([0.3, -0.7])
    local = candidate_actions(task, np.random.default_rng(1), settings, spread=0.0)
    # Zero spread collapses every explorer onto the task action.
    np.testing.assert_allclose(local[2:], np.tile(task, (6, 1)), atol=1e-12)

    half = candidate_actions(task, np.random.default_rng(1), settings, spread=0.5)
    full = candidate_actions(task, np.random.default_rng(1), settings, spread=1.0)
    # Interpolation identity: half-spread rows are midway between.
    np.testing.assert_allclose(half[2:], 0.5 * task + 0.5 * full[2:], atol=1e-12)

    with pytest.raises(InputError):
        candidate_actions(task, np.random.default_rng(0), settings, spread=1.2)


def test_candidate_rng_stream_independent_of_spread():
    # The uniform draws happen unconditionally, so downstream consumers of
    # the same generator see identical streams regardless of spread.
    settings = PolicySettings(n_candidates=8)
    task = np.zeros(2)
    rng_a = np.random.default_rng(5)
    rng_b = np.random.default_rng(5)
    candidate_actions(task, rng_a, settings, spread=0.0)
    candidate_actions(task, rng_b, settings, spread=1.0)
    assert rng_a.uniform() == rng_b.uniform()


def test_task_affinity_negative_squared_distance():
    task = np.array([0.5, 0.0])
    cands = np.array([[0.5, 0.0], [0.0, 0.0], [1.0, 1.0]])
    aff = task_affinity(cands, task)
    np.testing.assert_allclose(aff, [0.0, -0.25, -1.25], rtol=0, atol=1e-12)


def select(risks, info, kappa_value, settings=None, r_task=None):
    n = len(risks)
    cands = np.linspace(-1.0, 1.0, n)[:, None]
    return select_action(
        cands,
        np.zeros(n) if r_task is None else np.asarray(r_task, dtype=float),
        np.asarray(info, dtype=float),
        np.asarray(risks, dtype=float),
        kappa_value,
        THR,
        settings or PolicySettings(alpha_max=10.0, lambda_risk=1.0, delta_max=0.5, n_candidates=4),
    )


def test_low_deficit_ties_break_to_task_action():
    # alpha = 0 makes all-zero scores tie; lowest index (the task action)
    # must win so the plain controller passes through unchanged.
    choice = select([0.0, 0.0, 0.0], [0.0, 0.5, 0.9], kappa_value=0.05)
    assert choice.index == 0
    assert choice.alpha == 0.0
    assert choice.any_compliant


def test_high_deficit_prefers_disagreement():
    # Above tau_high with equal (zero) risk, the info term dominates.
    choice = select([0.0, 0.0], [0.1, 0.9], kappa_value=0.9)
    assert choice.index == 1
    assert choice.info_gain == 0.9
    assert choice.delta == 0.0


def test_budget_excludes_risky_candidates():
    # kappa=0.35 halves the budget to 0.25; the better-scoring candidate
    # at risk 0.3 is out of budget, so the compliant one wins.
    choice = select([0.3, 0.1], [0.9, 0.1], kappa_value=0.35)
    assert choice.index == 1
    assert choice.predicted_risk == 0.1
    assert choice.any_compliant


def test_forced_choice_when_nothing_complies():
    choice = select([0.9, 0.6, 0.8], [0.0, 0.0, 0.0], kappa_value=0.9)
    assert not choice.any_compliant
    assert choice.index == 1  # minimum predicted risk
    assert choice.predicted_risk == 0.6


def test_select_action_validation():
    with pytest.raises(InputError):
        select([0.1, 0.2, 0.3], [0.0, 0.0], kappa_value=0.1)
    with pytest.raises(InputError):
        select([float("inf"), 0.0], [0.0, 0.0], kappa_value=0.1)


def test_policy_settings_validation():
    with pytest.raises(InputError):
        PolicySettings(alpha_max=-1.0)
    with pytest.raises(InputError):
        PolicySettings(n_candidates=1)
    with pytest.raises(InputError):
        PolicySettings(delta_max=-0.5)
