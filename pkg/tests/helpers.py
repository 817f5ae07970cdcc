"""Shared builders for hand-crafted fixtures used across test modules."""

import numpy as np

from compound_uq.ensemble import Ensemble, ReplayBuffer
from compound_uq.envs import Transition


def make_transition(obs, delta, action=None, t=0):
    obs = np.asarray(obs, dtype=float)
    delta = np.asarray(delta, dtype=float)
    action = np.zeros(1) if action is None else np.asarray(action, dtype=float)
    return Transition(
        obs=obs, action=action, next_obs=obs + delta, delta=delta, reward=0.0, risk=0.0, t=t
    )


def constant_ensemble(member_outputs, in_dim, frozen=False):
    """Ensemble whose members always predict fixed vectors.

    All weights are zero and the normalizers are identity, so the output
    biases pass straight through. Built via the documented serialization
    format rather than by poking private state.
    """
    outputs = np.asarray(member_outputs, dtype=float)
    m, out_dim = outputs.shape
    hidden = 1
    return Ensemble.from_dict(
        {
            "m_members": m,
            "in_dim": in_dim,
            "hidden_width": hidden,
            "out_dim": out_dim,
            "seed": 0,
            "frozen": bool(frozen),
            "settings": {
                "hidden_width": hidden,
                "epochs": 1,
                "learning_rate": 0.01,
                "batch_size": 8,
            },
            "w1": [0.0] * (m * in_dim * hidden),
            "b1": [0.0] * (m * hidden),
            "w2": [0.0] * (m * hidden * out_dim),
            "b2": [float(v) for v in outputs.ravel()],
            "x_mean": [0.0] * in_dim,
            "x_std": [1.0] * in_dim,
            "y_mean": [0.0] * out_dim,
            "y_std": [1.0] * out_dim,
        }
    )


def linear_system_buffer(n_steps=160, seed=0):
    """Synthetic episode where delta is a fixed linear map of (obs, action)."""
    rng = np.random.default_rng(seed)
    w_obs = np.array([[0.05, -0.02], [0.03, 0.04]])
    w_act = np.array([[0.2], [-0.1]])
    buf = ReplayBuffer()
    buf.begin_episode()
    obs = np.array([0.5, -0.3])
    for t in range(n_steps):
        action = rng.uniform(-1.0, 1.0, size=1)
        delta = obs @ w_obs.T + (w_act @ action)
        buf.add(make_transition(obs, delta, action=action, t=t))
        obs = obs + delta
    return buf
