"""Regime-adaptive action selection under a risk budget.

The policy layer is deliberately pure: it sees candidate actions and
numbers derived from the agent-side model (task affinity, ensemble
disagreement, predicted risk) and returns a choice. It never imports or
touches environments, so privileged simulator state cannot leak in.

Scheduling: as kappa rises from tau_low to tau_high, the exploration
weight alpha ramps linearly from 0 to alpha_max while the per-step risk
budget delta shrinks linearly from delta_max to 0. Below tau_low the
agent is a plain task policy with a full budget; above tau_high it probes
as hard as the (now zero) budget allows. Probing is therefore paid for by
caution, which is the point: information is bought while the blast radius
is clamped down.

Selection maximizes the composite value

    v(c) = r_task(c) + alpha * info_gain(c) - lambda * risk(c)

over candidates whose predicted risk fits the budget. Ties take the
lowest candidate index; when no candidate is compliant the least risky
one is taken and the choice is flagged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ensemble import Ensemble
from .errors import InputError
from .kappa import Thresholds

N_CANDIDATES = 32


@dataclass(frozen=True)
class PolicySettings:
    """Weights and budgets for the composite objective."""

    alpha_max: float = 200.0
    lambda_risk: float = 1.0
    delta_max: float = 0.5
    n_candidates: int = N_CANDIDATES

    def __post_init__(self):
        if self.alpha_max < 0 or self.lambda_risk < 0 or self.delta_max < 0:
            raise InputError("alpha_max, lambda_risk, delta_max must be nonnegative")
        if self.n_candidates < 2:
            raise InputError("need at least 2 candidates (task action and one alternative)")


@dataclass(frozen=True)
class ActionChoice:
    """Outcome of one selection step, kept for trace telemetry."""

    index: int
    action: np.ndarray
    composite: float
    r_task: float
    info_gain: float
    predicted_risk: float
    alpha: float
    delta: float
    any_compliant: bool


def _ramp(kappa_value: float, thresholds: Thresholds) -> float:
    span = thresholds.tau_high - thresholds.tau_low
    return float(np.clip((kappa_value - thresholds.tau_low) / span, 0.0, 1.0))


def alpha_schedule(kappa_value: float, thresholds: Thresholds, alpha_max: float) -> float:
    """Exploration weight: 0 below tau_low, alpha_max at or above tau_high."""
    if not math.isfinite(kappa_value) or kappa_value < 0:
        raise InputError(f"kappa must be finite and nonnegative, got {kappa_value}")
    return alpha_max * _ramp(kappa_value, thresholds)


def delta_budget(kappa_value: float, thresholds: Thresholds, delta_max: float) -> float:
    """Risk budget: delta_max below tau_low, 0 at or above tau_high."""
    if not math.isfinite(kappa_value) or kappa_value < 0:
        raise InputError(f"kappa must be finite and nonnegative, got {kappa_value}")
    return delta_max * (1.0 - _ramp(kappa_value, thresholds))


def dis_score(ensemble: Ensemble, candidate_inputs: np.ndarray) -> np.ndarray:
    """Information-gain surrogate: ensemble disagreement per candidate.

    Disagreement is the trace of the across-member population covariance
    of predicted deltas. With two members predicting d and d + e it equals
    ||e||^2 / 4.
    """
    x = np.atleast_2d(np.asarray(candidate_inputs, dtype=float))
    return ensemble.disagreement(x)


def composite_value(r_task, info_gain, risk, alpha: float, lambda_risk: float) -> np.ndarray:
    """Task value plus weighted information bonus minus weighted risk."""
    r = np.asarray(r_task, dtype=float)
    g = np.asarray(info_gain, dtype=float)
    k = np.asarray(risk, dtype=float)
    if not (r.shape == g.shape == k.shape):
        raise InputError(f"component shapes differ: {r.shape}, {g.shape}, {k.shape}")
    return r + alpha * g - lambda_risk * k


def candidate_actions(
    task_action: np.ndarray,
    rng: np.random.Generator,
    settings: PolicySettings,
    spread: float = 1.0,
) -> np.ndarray:
    """Candidate set: the task action, the zero action, then explorers.

    Index 0 is always the task action so that alpha = 0 reproduces the
    plain task policy through lowest-index tie-breaking. Explorer rows
    interpolate between the task action (spread 0) and independent
    uniform draws over the full action box (spread 1). Grading the spread
    by the deficit ramp keeps mild-deficit probing local, which stops the
    probe-error feedback loop from igniting off a transient: far-field
    candidates are exactly where the model is worst, so offering them at
    low deficit would let one noisy step lock the agent into probing.

    The uniform draws are taken unconditionally so the RNG stream does not
    depend on spread.
    """
    if not (0.0 <= spread <= 1.0) or not math.isfinite(spread):
        raise InputError(f"spread must be in [0, 1], got {spread}")
    a = np.asarray(task_action, dtype=float).ravel()
    n = settings.n_candidates
    out = np.empty((n, a.shape[0]))
    out[0] = a
    out[1] = 0.0
    if n > 2:
        draws = rng.uniform(-1.0, 1.0, size=(n - 2, a.shape[0]))
        out[2:] = (1.0 - spread) * a[None, :] + spread * draws
    return out


def task_affinity(candidates: np.ndarray, task_action: np.ndarray) -> np.ndarray:
    """Task reward surrogate: negative squared distance to the task action."""
    diff = np.atleast_2d(candidates) - np.asarray(task_action, dtype=float)[None, :]
    return -(diff ** 2).sum(axis=1)


def select_action(
    candidates: np.ndarray,
    r_task: np.ndarray,
    info_gain: np.ndarray,
    predicted_risk: np.ndarray,
    kappa_value: float,
    thresholds: Thresholds,
    settings: PolicySettings,
) -> ActionChoice:
    """Pick the budget-compliant candidate with the best composite value.

    Candidates with predicted risk within the current budget are ranked by
    composite value (first index wins ties). If none comply, the minimum
    predicted-risk candidate is chosen and ``any_compliant`` is False so
    callers can count forced violations.
    """
    cand = np.atleast_2d(np.asarray(candidates, dtype=float))
    r = np.asarray(r_task, dtype=float).ravel()
    g = np.asarray(info_gain, dtype=float).ravel()
    risk = np.asarray(predicted_risk, dtype=float).ravel()
    n = cand.shape[0]
    if not (r.shape[0] == g.shape[0] == risk.shape[0] == n) or n == 0:
        raise InputError("candidates and per-candidate scores must have equal nonzero length")
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(g)) and np.all(np.isfinite(risk))):
        raise InputError("candidate scores must be finite")

    alpha = alpha_schedule(kappa_value, thresholds, settings.alpha_max)
    delta = delta_budget(kappa_value, thresholds, settings.delta_max)
    values = composite_value(r, g, risk, alpha, settings.lambda_risk)

    compliant = risk <= delta
    if compliant.any():
        masked = np.where(compliant, values, -np.inf)
        idx = int(np.argmax(masked))
        any_compliant = True
    else:
        idx = int(np.argmin(risk))
        any_compliant = False

    return ActionChoice(
        index=idx,
        action=cand[idx].copy(),
        composite=float(values[idx]),
        r_task=float(r[idx]),
        info_gain=float(g[idx]),
        predicted_risk=float(risk[idx]),
        alpha=float(alpha),
        delta=float(delta),
        any_compliant=any_compliant,
    )
