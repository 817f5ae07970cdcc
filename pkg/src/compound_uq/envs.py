"""Deterministic, seedable desk-scale environments.

Two environments are provided:

``DriftBot``
    A differential-drive robot navigating a bounded arena toward a fixed
    goal. Hidden per-wheel gains make a weak wheel show up as heading
    drift, so a pose error and a gain fault produce the same evidence
    until the agent acts to separate them.

``MassSpring1D``
    A one-dimensional mass on a spring driven by a bounded force. Every
    quantity is hand-checkable, which makes it the sanity environment.

Observation layouts are fixed and index-addressable (see ``OBS_NAMES`` and
``MASK_PRIORITY`` on each class) so that masking specs stay stable.

All randomness comes from a per-episode ``numpy`` generator seeded at
construction; identical ``(env_id, seed, params, actions)`` reproduce
traces bit for bit. Noise draws happen unconditionally each step so that
parameter shifts never desynchronise the stream.

``true_dynamics()`` is the evaluator-only channel: it reports the exact
parameters in effect and must never be routed into a policy. The policy
layer has no access path to environment instances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, LifecycleError, ParameterError

# Type aliases used across modules; observations and actions are plain
# float64 vectors.
ObservationVec = np.ndarray
ActionVec = np.ndarray
DynamicsParams = dict[str, float]

DT = 0.05
HORIZON = 1000


@dataclass(frozen=True)
class Transition:
    """One (observation, action, next observation) record.

    ``delta`` is stored, not recomputed, and always equals
    ``next_obs - obs`` exactly for the vectors recorded here.
    """

    obs: ObservationVec
    action: ActionVec
    next_obs: ObservationVec
    delta: ObservationVec
    reward: float
    risk: float
    t: int


@dataclass
class EpisodeTrace:
    """Ordered transitions of one episode plus bookkeeping."""

    transitions: list[Transition] = field(default_factory=list)
    terminal: bool = False
    condition_label: str = "C1"

    def episode_return(self) -> float:
        return float(sum(tr.reward for tr in self.transitions))

    def to_jsonl_lines(self):
        import json

        for tr in self.transitions:
            yield json.dumps(transition_to_dict(tr), sort_keys=True)

    @classmethod
    def from_jsonl_lines(cls, lines, terminal: bool = True, condition_label: str = "C1") -> "EpisodeTrace":
        import json

        transitions = [transition_from_dict(json.loads(line)) for line in lines if line.strip()]
        return cls(transitions=transitions, terminal=terminal, condition_label=condition_label)


def transition_to_dict(tr: Transition) -> dict:
    return {
        "t": tr.t,
        "obs": [float(v) for v in tr.obs],
        "action": [float(v) for v in tr.action],
        "next_obs": [float(v) for v in tr.next_obs],
        "delta": [float(v) for v in tr.delta],
        "reward": float(tr.reward),
        "risk": float(tr.risk),
    }


def transition_from_dict(d: dict) -> Transition:
    return Transition(
        obs=np.asarray(d["obs"], dtype=float),
        action=np.asarray(d["action"], dtype=float),
        next_obs=np.asarray(d["next_obs"], dtype=float),
        delta=np.asarray(d["delta"], dtype=float),
        reward=float(d["reward"]),
        risk=float(d["risk"]),
        t=int(d["t"]),
    )


def _validate_action(action: ActionVec, dim: int) -> np.ndarray:
    arr = np.asarray(action, dtype=float).ravel()
    if arr.shape != (dim,):
        raise InputError(f"action must have shape ({dim},), got {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(np.abs(arr) > 1.0):
        raise InputError(f"action entries must be finite and in [-1, 1], got {arr.tolist()}")
    return arr


class _BaseEnv:
    """Shared parameter handling, stepping discipline, and bookkeeping."""

    OBS_NAMES: tuple[str, ...] = ()
    MASK_PRIORITY: tuple[int, ...] = ()
    PARAM_BOUNDS: dict[str, tuple[float, float]] = {}
    ACTION_DIM: int = 1

    def __init__(self, seed: int, params: DynamicsParams | None = None, horizon: int = HORIZON):
        self.seed = int(seed)
        self.horizon = int(horizon)
        merged = dict(self.default_params())
        if params:
            unknown = set(params) - set(self.PARAM_BOUNDS)
            if unknown:
                raise ParameterError(f"unknown dynamics parameters: {sorted(unknown)}")
            merged.update({k: float(v) for k, v in params.items()})
        for name, value in merged.items():
            self._check_bound(name, value)
        self._params = merged
        self.rng = np.random.default_rng(np.random.SeedSequence(entropy=[self.seed, 0]))
        self.t = 0
        self.terminal = False

    @classmethod
    def default_params(cls) -> DynamicsParams:
        raise NotImplementedError

    @property
    def d_total(self) -> int:
        return len(self.OBS_NAMES)

    def _check_bound(self, name: str, value: float) -> None:
        if name not in self.PARAM_BOUNDS:
            raise ParameterError(f"unknown dynamics parameter {name!r}")
        lo, hi = self.PARAM_BOUNDS[name]
        if not (lo <= value <= hi) or not math.isfinite(value):
            raise ParameterError(f"parameter {name}={value} outside bounds [{lo}, {hi}]")

    def set_param(self, name: str, value: float) -> None:
        """Change one dynamics parameter in place (used by shift schedules)."""
        self._check_bound(name, float(value))
        self._params[name] = float(value)

    def true_dynamics(self) -> DynamicsParams:
        """Evaluator-only channel: exact parameters in effect right now.

        Policies must never see this; only evaluation and analysis code may
        call it.
        """
        return dict(self._params)

    def _pre_step(self, action: ActionVec) -> np.ndarray:
        if self.terminal:
            raise LifecycleError("step() called after the episode terminated")
        return _validate_action(action, self.ACTION_DIM)

    def _post_step(self) -> None:
        self.t += 1
        if self.t >= self.horizon:
            self.terminal = True


class DriftBot(_BaseEnv):
    """Differential-drive robot with hidden per-wheel gains.

    Kinematics (Euler step at ``DT``)::

        v = V_MAX * (g_left * u_left + g_right * u_right) / 2
        w = (g_right * u_right - g_left * u_left) * V_MAX / WHEEL_BASE

    where ``u_i = a_i + noise_scale * eps_i`` adds seeded per-wheel noise to
    the commanded wheel inputs. Reward is progress toward the goal minus a
    small control cost; risk is proximity to the arena boundary (zero in
    the interior, 1.0 at the wall, growing beyond).

    Observation layout (``d_total = 8``)::

        0 x          robot x position
        1 y          robot y position
        2 heading_sin  sin of heading
        3 heading_cos  cos of heading
        4 speed      realized forward speed (previous step)
        5 turn_rate  realized angular rate (previous step)
        6 goal_dx    goal x offset (goal_x - x)
        7 goal_dy    goal y offset (goal_y - y)

    ``MASK_PRIORITY`` orders dimensions from first-masked to last-masked as
    the masked fraction rises: heading first, then velocities, then pose.
    """

    OBS_NAMES = ("x", "y", "heading_sin", "heading_cos", "speed", "turn_rate", "goal_dx", "goal_dy")
    MASK_PRIORITY = (2, 3, 4, 5, 1, 7, 0, 6)
    PARAM_BOUNDS = {
        "gain_left": (0.0, 1.0),
        "gain_right": (0.0, 1.0),
        "noise_scale": (0.0, 0.5),
    }
    ACTION_DIM = 2

    V_MAX = 1.0
    WHEEL_BASE = 0.4
    GOAL = (3.0, 0.0)
    ARENA_HALF = 4.0
    RISK_ZONE = 1.0
    CONTROL_COST = 0.001

    def __init__(self, seed: int, params: DynamicsParams | None = None, horizon: int = HORIZON):
        super().__init__(seed, params, horizon)
        self.x = 0.0
        self.y = 0.0
        self.heading = 0.0
        self.speed = 0.0
        self.turn_rate = 0.0

    @classmethod
    def default_params(cls) -> DynamicsParams:
        return {"gain_left": 1.0, "gain_right": 1.0, "noise_scale": 0.02}

    def reset(self) -> ObservationVec:
        self.x = 0.0
        self.y = 0.0
        self.heading = 0.0
        self.speed = 0.0
        self.turn_rate = 0.0
        self.t = 0
        self.terminal = False
        self.rng = np.random.default_rng(np.random.SeedSequence(entropy=[self.seed, 0]))
        return self.observe()

    def observe(self) -> ObservationVec:
        gx, gy = self.GOAL
        return np.array(
            [
                self.x,
                self.y,
                math.sin(self.heading),
                math.cos(self.heading),
                self.speed,
                self.turn_rate,
                gx - self.x,
                gy - self.y,
            ],
            dtype=float,
        )

    def _distance_to_goal(self) -> float:
        gx, gy = self.GOAL
        return math.hypot(gx - self.x, gy - self.y)

    def _risk(self) -> float:
        inner = self.ARENA_HALF - self.RISK_ZONE
        rx = max(0.0, abs(self.x) - inner) / self.RISK_ZONE
        ry = max(0.0, abs(self.y) - inner) / self.RISK_ZONE
        return rx + ry

    @classmethod
    def risk_from_obs(cls, obs: ObservationVec) -> float:
        """Boundary-proximity risk recomputed from an observation vector.

        Uses the pose dims only; with those dims masked to zero the
        estimate degrades to zero, which is exactly the blindness masking
        is meant to model.
        """
        inner = cls.ARENA_HALF - cls.RISK_ZONE
        rx = max(0.0, abs(float(obs[0])) - inner) / cls.RISK_ZONE
        ry = max(0.0, abs(float(obs[1])) - inner) / cls.RISK_ZONE
        return rx + ry

    def step(self, action: ActionVec) -> Transition:
        act = self._pre_step(action)
        obs_before = self.observe()
        dist_before = self._distance_to_goal()

        eps = self.rng.normal(size=2)
        p = self._params
        u_left = act[0] + p["noise_scale"] * eps[0]
        u_right = act[1] + p["noise_scale"] * eps[1]
        wl = p["gain_left"] * u_left
        wr = p["gain_right"] * u_right
        v = self.V_MAX * (wl + wr) / 2.0
        w = (wr - wl) * self.V_MAX / self.WHEEL_BASE

        self.x += v * math.cos(self.heading) * DT
        self.y += v * math.sin(self.heading) * DT
        self.heading = _wrap_angle(self.heading + w * DT)
        self.speed = v
        self.turn_rate = w

        reward = (dist_before - self._distance_to_goal()) - self.CONTROL_COST * float(act[0] ** 2 + act[1] ** 2)
        risk = self._risk()
        next_obs = self.observe()
        tr = Transition(
            obs=obs_before,
            action=act,
            next_obs=next_obs,
            delta=next_obs - obs_before,
            reward=float(reward),
            risk=float(risk),
            t=self.t,
        )
        self._post_step()
        return tr


class MassSpring1D(_BaseEnv):
    """Mass on a spring driven by a bounded force, semi-implicit Euler.

    Dynamics::

        v' = v + DT * (-stiffness * x + u + noise) / mass
        x' = x + DT * v'

    with ``u = action * F_MAX`` and seeded force noise of standard
    deviation ``FORCE_NOISE_STD``. Reward is ``-|x'|``; risk is the
    overshoot beyond the safe band ``|x| <= X_LIMIT`` (zero inside it).

    Observation layout (``d_total = 2``): ``0 position, 1 velocity``.
    Velocity is masked before position as the masked fraction rises.
    """

    OBS_NAMES = ("position", "velocity")
    MASK_PRIORITY = (1, 0)
    PARAM_BOUNDS = {
        "mass": (0.1, 10.0),
        "stiffness": (0.1, 10.0),
    }
    ACTION_DIM = 1

    F_MAX = 1.0
    X_LIMIT = 1.5
    FORCE_NOISE_STD = 0.01

    def __init__(self, seed: int, params: DynamicsParams | None = None, horizon: int = HORIZON):
        super().__init__(seed, params, horizon)
        self.x = 0.0
        self.v = 0.0
        self.reset()

    @classmethod
    def default_params(cls) -> DynamicsParams:
        return {"mass": 1.0, "stiffness": 1.0}

    def reset(self) -> ObservationVec:
        self.t = 0
        self.terminal = False
        self.rng = np.random.default_rng(np.random.SeedSequence(entropy=[self.seed, 0]))
        sign = 1.0 if self.rng.random() < 0.5 else -1.0
        self.x = sign * self.rng.uniform(0.5, 1.5)
        self.v = 0.0
        return self.observe()

    def observe(self) -> ObservationVec:
        return np.array([self.x, self.v], dtype=float)

    @classmethod
    def risk_from_obs(cls, obs: ObservationVec) -> float:
        return max(0.0, abs(float(obs[0])) - cls.X_LIMIT)

    def step(self, action: ActionVec) -> Transition:
        act = self._pre_step(action)
        obs_before = self.observe()

        noise = self.rng.normal() * self.FORCE_NOISE_STD
        u = float(act[0]) * self.F_MAX
        p = self._params
        self.v = self.v + DT * (-p["stiffness"] * self.x + u + noise) / p["mass"]
        self.x = self.x + DT * self.v

        reward = -abs(self.x)
        risk = max(0.0, abs(self.x) - self.X_LIMIT)
        next_obs = self.observe()
        tr = Transition(
            obs=obs_before,
            action=act,
            next_obs=next_obs,
            delta=next_obs - obs_before,
            reward=float(reward),
            risk=float(risk),
            t=self.t,
        )
        self._post_step()
        return tr


def _wrap_angle(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


ENV_CLASSES: dict[str, type[_BaseEnv]] = {
    "DriftBot": DriftBot,
    "MassSpring1D": MassSpring1D,
}


def make_env(env_id: str, seed: int, params: DynamicsParams | None = None, horizon: int = HORIZON) -> _BaseEnv:
    """Instantiate an environment by id; raises ``InputError`` for unknown ids."""
    if env_id not in ENV_CLASSES:
        raise InputError(f"unknown env_id {env_id!r}; choose from {sorted(ENV_CLASSES)}")
    env = ENV_CLASSES[env_id](seed=seed, params=params, horizon=horizon)
    env.reset()
    return env
