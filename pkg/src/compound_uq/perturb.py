"""Observability and dynamics perturbations layered onto environments.

Three stressors, each independently switchable and all activating at a
shared onset step:

- observation masking: a fixed fraction of observation dims, chosen by the
  environment's documented ``MASK_PRIORITY``, is zeroed;
- action delay: commanded actions reach the plant ``delay_steps`` steps
  late, through a queue pre-filled with zero actions at onset;
- parameter shift: one dynamics parameter jumps to a new value at onset.

Composition order when several are active in one step: the shift is
applied to the plant first, then the commanded action passes through the
delay queue, then the resulting observation is masked. Each stressor is
inactive for ``t < onset_t`` and active from ``t = onset_t`` onward, so
"post-onset" always means steps with ``t >= onset_t``.

``condition_matrix`` expands level lists into the full cross product of
condition cells. The default grid is the 3 x 2 x 2 factorial over masking
fraction {0, 0.25, 0.5}, delay {0, 1} steps, and left-gain shift
{off, 0.5}, replicated over 10 seeds: 120 cells. Cells are labeled C1 (no
stressor), C2 (exactly one), C3 (two), or C4 (all three).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .envs import ENV_CLASSES, ActionVec, ObservationVec
from .errors import SpecError

ONSET_T = 50

DEFAULT_PO_LEVELS: tuple[float, ...] = (0.0, 0.25, 0.5)
DEFAULT_DELAY_LEVELS: tuple[int, ...] = (0, 1)
DEFAULT_SHIFT_LEVELS: tuple[tuple[str, float] | None, ...] = (None, ("gain_left", 0.5))
DEFAULT_SEEDS: tuple[int, ...] = tuple(range(10))


def mask_dims_for_fraction(env_cls, fraction: float) -> tuple[int, ...]:
    """Resolve a masking fraction to concrete observation dims.

    The count is round-half-up of ``fraction * d_total``; dims are taken
    from the front of the environment's ``MASK_PRIORITY``. The realized
    fraction ``len(dims) / d_total`` is what downstream deficit formulas
    should use, since it is what the agent actually loses.
    """
    if not (0.0 <= fraction <= 1.0) or not math.isfinite(fraction):
        raise SpecError(f"mask fraction must be in [0, 1], got {fraction}")
    d = len(env_cls.OBS_NAMES)
    k = int(math.floor(fraction * d + 0.5))
    return tuple(env_cls.MASK_PRIORITY[:k])


@dataclass(frozen=True)
class MaskSpec:
    """Dims to zero out, active from ``onset_t`` onward."""

    dims: tuple[int, ...]
    onset_t: int = ONSET_T

    def realized_fraction(self, d_total: int) -> float:
        return len(self.dims) / float(d_total)


def apply_mask(obs: ObservationVec, spec: MaskSpec | None, t: int) -> ObservationVec:
    """Return a copy of ``obs`` with masked dims zeroed when active.

    Always copies, so callers may mutate the result without aliasing the
    environment's buffers.
    """
    out = np.array(obs, dtype=float, copy=True)
    if spec is None or t < spec.onset_t or not spec.dims:
        return out
    if max(spec.dims) >= out.shape[0] or min(spec.dims) < 0:
        raise SpecError(f"mask dims {spec.dims} out of range for obs of size {out.shape[0]}")
    out[list(spec.dims)] = 0.0
    return out


class ActionDelayer:
    """FIFO queue inserting ``delay_steps`` of latency from onset onward.

    Before onset the commanded action passes straight through. At onset
    the queue is pre-filled with ``delay_steps`` zero actions; from then
    on each commanded action is enqueued and the oldest entry is
    executed. With delay 1 the post-onset commanded sequence (a0, a1, a2)
    therefore executes as (0, a0, a1).
    """

    def __init__(self, delay_steps: int, action_dim: int, onset_t: int = ONSET_T):
        if delay_steps < 0 or int(delay_steps) != delay_steps:
            raise SpecError(f"delay_steps must be a nonnegative integer, got {delay_steps}")
        self.delay_steps = int(delay_steps)
        self.action_dim = int(action_dim)
        self.onset_t = int(onset_t)
        self._queue: list[np.ndarray] | None = None

    def submit(self, action: ActionVec, t: int) -> ActionVec:
        act = np.asarray(action, dtype=float)
        if self.delay_steps == 0 or t < self.onset_t:
            return act
        if self._queue is None:
            self._queue = [np.zeros(self.action_dim) for _ in range(self.delay_steps)]
        self._queue.append(act)
        return self._queue.pop(0)


@dataclass(frozen=True)
class ShiftSpec:
    """One dynamics parameter jumping to ``value`` at ``onset_t``."""

    param: str
    value: float
    onset_t: int = ONSET_T


def apply_shift(env, spec: ShiftSpec | None, t: int) -> bool:
    """Apply the shift to ``env`` at its first active step.

    Returns True on the step the parameter actually changes, False
    otherwise; safe to call every step.
    """
    if spec is None or t < spec.onset_t:
        return False
    current = env.true_dynamics().get(spec.param)
    if current == spec.value:
        return False
    env.set_param(spec.param, spec.value)
    return True


@dataclass(frozen=True)
class ConditionSpec:
    """One experimental condition: which stressors are on and how hard.

    Environment-agnostic; masking dims are resolved against a concrete
    environment class via ``mask_spec``.
    """

    po_fraction: float = 0.0
    delay_steps: int = 0
    shift: tuple[str, float] | None = None
    onset_t: int = ONSET_T

    def __post_init__(self):
        if not (0.0 <= self.po_fraction <= 1.0):
            raise SpecError(f"po_fraction must be in [0, 1], got {self.po_fraction}")
        if self.delay_steps < 0 or int(self.delay_steps) != self.delay_steps:
            raise SpecError(f"delay_steps must be a nonnegative integer, got {self.delay_steps}")
        if self.onset_t < 0:
            raise SpecError(f"onset_t must be nonnegative, got {self.onset_t}")
        if self.shift is not None:
            param, value = self.shift
            if not isinstance(param, str) or not math.isfinite(float(value)):
                raise SpecError(f"shift must be (param_name, finite value), got {self.shift}")

    @property
    def n_active(self) -> int:
        return int(self.po_fraction > 0) + int(self.delay_steps > 0) + int(self.shift is not None)

    @property
    def label(self) -> str:
        return ("C1", "C2", "C3", "C4")[self.n_active]

    def mask_spec(self, env_cls) -> MaskSpec | None:
        dims = mask_dims_for_fraction(env_cls, self.po_fraction)
        if not dims:
            return None
        return MaskSpec(dims=dims, onset_t=self.onset_t)

    def shift_spec(self) -> ShiftSpec | None:
        if self.shift is None:
            return None
        return ShiftSpec(param=self.shift[0], value=float(self.shift[1]), onset_t=self.onset_t)

    def delayer(self, action_dim: int) -> ActionDelayer:
        return ActionDelayer(self.delay_steps, action_dim, onset_t=self.onset_t)

    def cell_id(self, seed: int) -> str:
        shift_tag = "none" if self.shift is None else f"{self.shift[0]}={self.shift[1]:g}"
        return f"po{self.po_fraction:g}_delay{self.delay_steps}_shift-{shift_tag}_seed{seed}"

    def to_dict(self) -> dict:
        return {
            "po_fraction": float(self.po_fraction),
            "delay_steps": int(self.delay_steps),
            "shift": None if self.shift is None else [self.shift[0], float(self.shift[1])],
            "onset_t": int(self.onset_t),
            "label": self.label,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConditionSpec":
        shift = d.get("shift")
        return cls(
            po_fraction=float(d.get("po_fraction", 0.0)),
            delay_steps=int(d.get("delay_steps", 0)),
            shift=None if shift is None else (str(shift[0]), float(shift[1])),
            onset_t=int(d.get("onset_t", ONSET_T)),
        )


def condition_matrix(
    po_levels,
    delay_levels,
    shift_levels,
    seeds,
    onset_t: int = ONSET_T,
) -> list[tuple[ConditionSpec, int]]:
    """Cross product of stressor levels and seeds, in documented order.

    Iteration order is (po, delay, shift, seed) with the seed axis
    innermost, so cell lists and output filenames are stable across runs.
    """
    for name, levels in (("po_levels", po_levels), ("delay_levels", delay_levels), ("shift_levels", shift_levels), ("seeds", seeds)):
        if len(list(levels)) == 0:
            raise SpecError(f"{name} must be nonempty")
    cells: list[tuple[ConditionSpec, int]] = []
    for po, delay, shift, seed in itertools.product(po_levels, delay_levels, shift_levels, seeds):
        spec = ConditionSpec(po_fraction=float(po), delay_steps=int(delay), shift=shift, onset_t=onset_t)
        cells.append((spec, int(seed)))
    return cells


def default_condition_matrix(onset_t: int = ONSET_T) -> list[tuple[ConditionSpec, int]]:
    """The documented 120-cell default grid (3 x 2 x 2 levels x 10 seeds)."""
    return condition_matrix(
        DEFAULT_PO_LEVELS, DEFAULT_DELAY_LEVELS, DEFAULT_SHIFT_LEVELS, DEFAULT_SEEDS, onset_t=onset_t
    )


def validate_shift_for_env(env_id: str, shift: tuple[str, float] | None) -> None:
    """Fail fast if a shift names a parameter the environment lacks."""
    if shift is None:
        return
    env_cls = ENV_CLASSES.get(env_id)
    if env_cls is None:
        raise SpecError(f"unknown env_id {env_id!r}")
    param, value = shift
    if param not in env_cls.PARAM_BOUNDS:
        raise SpecError(f"env {env_id} has no dynamics parameter {param!r}")
    lo, hi = env_cls.PARAM_BOUNDS[param]
    if not (lo <= float(value) <= hi):
        raise SpecError(f"shift target {param}={value} outside bounds [{lo}, {hi}]")
