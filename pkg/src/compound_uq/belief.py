"""Exact mutual information on finite joint beliefs.

This is the ground-truth side of the proxy argument: on a finite grid
over (state, dynamics) the mutual information I(s; theta) and the
entropies are computable by direct summation, so the additive upper bound

    I(s; theta) <= H(s) + H(theta)

can be checked exactly rather than argued. The slack of that bound is the
joint entropy H(s, theta), which the checker reports so tests can pin the
identity down numerically.

``coupling_family`` interpolates between an independent uniform joint
(lambda = 0, zero information) and a perfectly coupled diagonal
(lambda = 1, information log n). Information grows monotonically along
the path, mirroring how the deployed proxy is supposed to respond as
state and dynamics uncertainty become entangled.

All entropies are natural-log (nats) with the 0 log 0 = 0 convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

PROB_TOL = 1e-9


@dataclass(frozen=True)
class DiscreteJointBelief:
    """Joint probability table over (state cell, dynamics cell)."""

    table: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.table, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InputError(f"belief table must be 2-D and nonempty, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise InputError("belief table entries must be finite and nonnegative")
        total = float(arr.sum())
        if abs(total - 1.0) > PROB_TOL:
            raise InputError(f"belief table must sum to 1 within {PROB_TOL}, got {total!r}")
        object.__setattr__(self, "table", arr)

    @property
    def n_s(self) -> int:
        return self.table.shape[0]

    @property
    def n_theta(self) -> int:
        return self.table.shape[1]

    def marginal_s(self) -> np.ndarray:
        return self.table.sum(axis=1)

    def marginal_theta(self) -> np.ndarray:
        return self.table.sum(axis=0)


def _entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float).ravel()
    nz = p[p > 0.0]
    return float(-(nz * np.log(nz)).sum())


def exact_mi(belief: DiscreteJointBelief) -> float:
    """I(s; theta) by direct summation over the joint table.

    Computed from the definition (sum of p log p / (p_s p_theta)), not via
    the entropy identity, so the identity stays an independent check.
    """
    p = belief.table
    ps = belief.marginal_s()
    pt = belief.marginal_theta()
    denom = np.outer(ps, pt)
    mask = p > 0.0
    terms = p[mask] * np.log(p[mask] / denom[mask])
    return float(terms.sum())


def marginal_entropies(belief: DiscreteJointBelief) -> tuple[float, float]:
    """(H(s), H(theta)) in nats."""
    return _entropy(belief.marginal_s()), _entropy(belief.marginal_theta())


def joint_entropy(belief: DiscreteJointBelief) -> float:
    return _entropy(belief.table)


@dataclass(frozen=True)
class BoundCheck:
    mi: float
    h_s: float
    h_theta: float
    h_joint: float
    bound: float
    slack: float
    holds: bool


def verify_bound(belief: DiscreteJointBelief, tol: float = PROB_TOL) -> BoundCheck:
    """Check I(s; theta) <= H(s) + H(theta) and report the slack.

    The slack equals the joint entropy exactly (chain rule), so the check
    doubles as a numerical identity test.
    """
    mi = exact_mi(belief)
    h_s, h_theta = marginal_entropies(belief)
    bound = h_s + h_theta
    slack = bound - mi
    return BoundCheck(
        mi=mi,
        h_s=h_s,
        h_theta=h_theta,
        h_joint=joint_entropy(belief),
        bound=bound,
        slack=slack,
        holds=bool(mi <= bound + tol),
    )


def coupling_family(lam: float, n: int) -> DiscreteJointBelief:
    """Interpolate from independent uniform to a perfectly coupled diagonal.

    table = (1 - lambda) * uniform(n x n) + lambda * diag(1/n). Mutual
    information rises monotonically from 0 at lambda = 0 to log n at
    lambda = 1.
    """
    if not (0.0 <= lam <= 1.0) or not math.isfinite(lam):
        raise InputError(f"lambda must be in [0, 1], got {lam}")
    if n < 2:
        raise InputError(f"coupling family needs n >= 2, got {n}")
    table = np.full((n, n), (1.0 - lam) / (n * n))
    table[np.diag_indices(n)] += lam / n
    return DiscreteJointBelief(table=table)


def random_belief(rng: np.random.Generator, n_s: int, n_theta: int) -> DiscreteJointBelief:
    """Uniform-over-the-simplex random belief (flat Dirichlet), seeded."""
    if n_s < 1 or n_theta < 1:
        raise InputError("belief grid must have at least one cell per axis")
    flat = rng.dirichlet(np.ones(n_s * n_theta))
    return DiscreteJointBelief(table=flat.reshape(n_s, n_theta))
