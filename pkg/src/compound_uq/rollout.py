"""Closed-loop episodes: calibration, condition runs, and sweeps.

This module owns all plumbing between the agent side and the evaluator
side. The policy layer only ever sees masked observations, the commanded
action, and model-derived numbers; environment instances and
``true_dynamics()`` stay on this side of the fence.

Per-step order within ``run_condition``:

1. the dynamics shift (if due) is applied to the plant;
2. the agent picks an action from masked observations using the kappa
   value of the previous step (a one-step information lag, since this
   step's prediction error is only measurable after stepping);
3. the commanded action passes through the delay queue and the plant
   steps on whatever comes out;
4. the next observation is masked, the ensemble error on the
   agent-visible transition is scored, and kappa, regime, schedules, and
   telemetry are recorded.

Calibration runs unperturbed episodes with a scripted controller mixed
50/50 with uniform random actions, trains the bootstrap ensemble, freezes
the noise floor, then derives regime thresholds from short probe runs
(baseline, each single stressor, compound) executed with provisional
default thresholds.

All seeds derive from (cell seed, fixed stream tags), so every cell is
reproducible in isolation and sweep results do not depend on execution
order or worker count.
"""

from __future__ import annotations

import json
import math
import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import (
    DegradationRecord,
    StratifiedRateResult,
    SynergyReport,
    degradation,
    records_to_csv,
    stratified_rate_test,
    superadditive_rate,
)
from .config import ExperimentConfig
from .ensemble import (
    Ensemble,
    ReplayBuffer,
    acc_feature,
    adaptive_update,
    bootstrap_train,
    calibrate_noise_floor,
)
from .envs import ENV_CLASSES, make_env
from .errors import CalibrationError, InputError, InvariantViolation
from .kappa import DEFAULT_THRESHOLDS, KappaComponents, Thresholds, calibrate_thresholds, compute_step
from .perturb import ConditionSpec, apply_mask, apply_shift, condition_matrix
from .policy import PolicySettings, alpha_schedule, candidate_actions, select_action, task_affinity
from .snapshot import CalibrationSnapshot, atomic_write_text
from .version import TOOLKIT_VERSION

RISK_TOL = 1e-12


DOCK_RADIUS = 0.05


def driftbot_controller(obs: np.ndarray) -> np.ndarray:
    """Scripted goal-seeking controller from the agent-visible observation.

    Inside the docking radius the command is zero; without the deadband
    the bearing flips sign with every noise jitter of the goal offset and
    the controller spins in place.
    """
    heading = math.atan2(obs[2], obs[3])
    dist = math.hypot(obs[6], obs[7])
    if dist < DOCK_RADIUS:
        return np.zeros(2)
    bearing = math.atan2(obs[7], obs[6])
    err = math.atan2(math.sin(bearing - heading), math.cos(bearing - heading))
    forward = 0.9 * min(1.0, dist) * max(0.0, math.cos(err))
    turn = float(np.clip(1.2 * err, -0.9, 0.9))
    return np.clip(np.array([forward - turn, forward + turn]), -1.0, 1.0)


SLIDING_LAYER = 0.01


def mass_spring_controller(obs: np.ndarray) -> np.ndarray:
    """Sliding-mode regulator toward the origin.

    Drives the surface sigma = x + 0.5 v to zero with a saturated relay;
    the thin boundary layer keeps the control law continuous while still
    switching on essentially every step near the origin. Relay switching
    is what makes this controller honest about actuation problems: the
    force it commands differs from step to step by order one, so any
    tampering with the executed action (a delay, most of all) produces a
    transition the learned models cannot explain away.
    """
    sigma = obs[0] + 0.5 * obs[1]
    return np.array([-np.clip(sigma / SLIDING_LAYER, -1.0, 1.0)])


TASK_CONTROLLERS = {
    "DriftBot": driftbot_controller,
    "MassSpring1D": mass_spring_controller,
}


@dataclass
class RolloutResult:
    """Everything one condition run produces, aggregates included."""

    condition: ConditionSpec
    seed: int
    cell_id: str
    episode_return: float
    post_onset_kappa_mean: float
    post_onset_mse_mean: float
    peak_kappa: float
    violations: int
    n_forced: int
    n_steps: int
    kappas: list[KappaComponents] = field(default_factory=list)
    steps: list[dict] = field(default_factory=list)
    adaptive_ensemble: Ensemble | None = None

    def summary(self) -> dict:
        return {
            "cell_id": self.cell_id,
            "condition": self.condition.to_dict(),
            "seed": self.seed,
            "label": self.condition.label,
            "episode_return": float(self.episode_return),
            "post_onset_kappa_mean": float(self.post_onset_kappa_mean),
            "post_onset_mse_mean": float(self.post_onset_mse_mean),
            "peak_kappa": float(self.peak_kappa),
            "violations": int(self.violations),
            "n_forced": int(self.n_forced),
            "n_steps": int(self.n_steps),
        }


def run_condition(
    config: ExperimentConfig,
    snapshot: CalibrationSnapshot,
    condition: ConditionSpec,
    seed: int,
    thresholds: Thresholds | None = None,
    policy_settings: PolicySettings | None = None,
    adaptive_enabled: bool | None = None,
    collect_steps: bool = True,
) -> RolloutResult:
    """Run one full episode under a condition and score it step by step."""
    env_cls = ENV_CLASSES[config.env_id]
    env = make_env(config.env_id, seed=seed, horizon=config.horizon)
    controller = TASK_CONTROLLERS[config.env_id]
    thresholds = thresholds or snapshot.thresholds
    settings = policy_settings or config.policy
    use_adaptive = config.adaptive.enabled if adaptive_enabled is None else adaptive_enabled

    mask = condition.mask_spec(env_cls)
    shift = condition.shift_spec()
    delayer = condition.delayer(env_cls.ACTION_DIM)
    po_active = mask.realized_fraction(len(env_cls.OBS_NAMES)) if mask else 0.0

    policy_rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 3]))
    adaptive = snapshot.ensemble.clone_unfrozen() if use_adaptive else None
    recent_x: deque = deque(maxlen=config.adaptive.window)
    recent_y: deque = deque(maxlen=config.adaptive.window)
    anchor_x = anchor_y = None
    anchor_rng = None
    if use_adaptive:
        # The agent keeps its pre-deployment experience and replays a slice
        # of it alongside the live window on every update. Without the
        # anchor, fine-tuning on a hundred-ish recent rows drags the model
        # off everything it knew about states not in the window.
        anchor_x, anchor_y = collect_baseline_buffer(config).rows()
        anchor_rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 5]))

    visible = apply_mask(env.observe(), mask, t=0)
    history: deque = deque([visible], maxlen=3)
    kappa_prev = 0.0

    kappas: list[KappaComponents] = []
    steps: list[dict] = []
    episode_return = 0.0
    violations = 0
    n_forced = 0

    for t in range(config.horizon):
        apply_shift(env, shift, t)

        task_action = controller(visible)
        spread = (
            alpha_schedule(kappa_prev, thresholds, settings.alpha_max) / settings.alpha_max
            if settings.alpha_max > 0
            else 0.0
        )
        cands = candidate_actions(task_action, policy_rng, settings, spread=spread)
        acc = acc_feature(history)
        base = np.concatenate([visible, acc])
        x_cand = np.concatenate(
            [np.repeat(base[None, :], cands.shape[0], axis=0), cands], axis=1
        )
        member_preds = snapshot.ensemble.predict_members(x_cand)
        info_gain = member_preds.var(axis=0, ddof=0).sum(axis=-1)
        mean_delta = member_preds.mean(axis=0)
        predicted_next = visible[None, :] + mean_delta
        predicted_risk = np.array([env_cls.risk_from_obs(row) for row in predicted_next])
        r_task = task_affinity(cands, task_action)

        choice = select_action(cands, r_task, info_gain, predicted_risk, kappa_prev, thresholds, settings)
        if choice.any_compliant and choice.predicted_risk > choice.delta + RISK_TOL:
            raise InvariantViolation(
                f"selected action breaches the risk budget at t={t}: "
                f"{choice.predicted_risk} > {choice.delta}"
            )
        if not choice.any_compliant:
            n_forced += 1
        executed = delayer.submit(choice.action, t)
        tr = env.step(executed)
        visible_next = apply_mask(tr.next_obs, mask, t + 1)
        delta_vis = visible_next - visible

        x_step = np.concatenate([visible, acc, choice.action])
        mse = float(snapshot.ensemble.mse(x_step[None, :], delta_vis[None, :])[0])

        active = t >= condition.onset_t
        comp = compute_step(
            t=t,
            mse=mse,
            mu0=snapshot.mu0,
            sigma0=snapshot.sigma0,
            po=po_active if active else 0.0,
            delay_steps=condition.delay_steps if active else 0,
            thresholds=thresholds,
            clip_c=snapshot.clip_c,
            c_tau=snapshot.c_tau,
        )
        kappas.append(comp)
        episode_return += tr.reward

        if adaptive is not None:
            recent_x.append(x_step)
            recent_y.append(delta_vis)
            if active and (t - condition.onset_t) % config.adaptive.every == 0 and len(recent_x) >= 8:
                take = min(len(recent_x), anchor_x.shape[0])
                idx = anchor_rng.choice(anchor_x.shape[0], size=take, replace=False)
                x_up = np.concatenate([np.stack(recent_x), anchor_x[idx]])
                y_up = np.concatenate([np.stack(recent_y), anchor_y[idx]])
                adaptive_update(adaptive, x_up, y_up, epochs=config.adaptive.epochs)

        if collect_steps:
            steps.append(
                {
                    "kind": "step",
                    "t": t,
                    "obs": [float(v) for v in visible],
                    "action": [float(v) for v in choice.action],
                    "executed_action": [float(v) for v in executed],
                    "next_obs": [float(v) for v in visible_next],
                    "delta": [float(v) for v in delta_vis],
                    "reward": float(tr.reward),
                    "risk": float(tr.risk),
                    "mse": mse,
                    "sigma_theta": comp.sigma_theta,
                    "sigma_s": comp.sigma_s,
                    "kappa": comp.kappa,
                    "regime": comp.regime.value,
                    "alpha": choice.alpha,
                    "delta_budget": choice.delta,
                    "chosen_index": choice.index,
                    "predicted_risk": choice.predicted_risk,
                    "info_gain": choice.info_gain,
                    "any_compliant": choice.any_compliant,
                }
            )

        kappa_prev = comp.kappa
        visible = visible_next
        history.append(visible_next)

    post = [c for c in kappas if c.t >= condition.onset_t]
    post_kappa = float(np.mean([c.kappa for c in post]))
    post_mse = float(np.mean([c.mse for c in post]))
    return RolloutResult(
        condition=condition,
        seed=seed,
        cell_id=condition.cell_id(seed),
        episode_return=float(episode_return),
        post_onset_kappa_mean=post_kappa,
        post_onset_mse_mean=post_mse,
        peak_kappa=float(max(c.kappa for c in kappas)),
        violations=violations,
        n_forced=n_forced,
        n_steps=config.horizon,
        kappas=kappas,
        steps=steps,
        adaptive_ensemble=adaptive,
    )


# ---------------------------------------------------------------------------
# Calibration


CONTROLLER_MIX = 0.8


def _mixture_action(controller, obs, rng: np.random.Generator, action_dim: int) -> np.ndarray:
    """Mostly on-task actions so the buffer covers deployment states, with
    enough uniform draws to cover the action space for disagreement."""
    if rng.random() < CONTROLLER_MIX:
        return controller(obs)
    return rng.uniform(-1.0, 1.0, size=action_dim)


def collect_baseline_buffer(config: ExperimentConfig) -> ReplayBuffer:
    """Exactly t_pre unperturbed transitions under the exploration mixture."""
    env_cls = ENV_CLASSES[config.env_id]
    controller = TASK_CONTROLLERS[config.env_id]
    buffer = ReplayBuffer()
    remaining = config.t_pre
    episode = 0
    while remaining > 0:
        env = make_env(config.env_id, seed=config.calibration_seed * 10007 + episode, horizon=config.horizon)
        rng = np.random.default_rng(np.random.SeedSequence(entropy=[config.calibration_seed, 4, episode]))
        buffer.begin_episode()
        obs = env.observe()
        for _ in range(min(config.horizon, remaining)):
            action = _mixture_action(controller, obs, rng, env_cls.ACTION_DIM)
            tr = env.step(action)
            buffer.add(tr)
            obs = tr.next_obs
            remaining -= 1
        episode += 1
    return buffer


def _probe_conditions(config: ExperimentConfig) -> tuple[ConditionSpec, dict[str, ConditionSpec], ConditionSpec]:
    """Baseline, single-stressor, and compound probes derived from the grid."""
    po = max(config.grid.po_levels)
    delay = max(config.grid.delay_levels)
    shift = next((s for s in config.grid.shift_levels if s is not None), None)
    singles: dict[str, ConditionSpec] = {}
    if po > 0:
        singles["masking"] = ConditionSpec(po_fraction=po, onset_t=config.onset_t)
    if delay > 0:
        singles["delay"] = ConditionSpec(delay_steps=delay, onset_t=config.onset_t)
    if shift is not None:
        singles["shift"] = ConditionSpec(shift=shift, onset_t=config.onset_t)
    if not singles:
        raise CalibrationError("grid has no active stressor levels; thresholds cannot be calibrated")
    baseline = ConditionSpec(onset_t=config.onset_t)
    compound = ConditionSpec(
        po_fraction=po if po > 0 else 0.0,
        delay_steps=delay if delay > 0 else 0,
        shift=shift,
        onset_t=config.onset_t,
    )
    return baseline, singles, compound


def calibrate(config: ExperimentConfig) -> CalibrationSnapshot:
    """Full calibration: train, freeze the noise floor, place thresholds."""
    buffer = collect_baseline_buffer(config)
    ensemble = bootstrap_train(buffer, config.m_members, config.calibration_seed, config.train)
    mu0, sigma0 = calibrate_noise_floor(ensemble, buffer)

    provisional = CalibrationSnapshot(
        config_hash=config.config_hash(),
        env_id=config.env_id,
        seed=config.calibration_seed,
        mu0=mu0,
        sigma0=sigma0,
        thresholds=DEFAULT_THRESHOLDS,
        ensemble=ensemble,
        clip_c=config.clip_c,
        c_tau=config.c_tau,
    )

    if config.thresholds.tau_low is not None:
        thresholds = Thresholds(tau_low=config.thresholds.tau_low, tau_high=config.thresholds.tau_high)
    else:
        baseline_cond, singles, compound_cond = _probe_conditions(config)
        # Probes run the plain task policy: information-seeking selects the
        # model's own worst inputs, so probing during probes would measure
        # policy feedback instead of the deficit signal being thresholded.
        probe_policy = PolicySettings(
            alpha_max=0.0,
            lambda_risk=config.policy.lambda_risk,
            delta_max=config.policy.delta_max,
            n_candidates=config.policy.n_candidates,
        )

        def probe_kappas(cond: ConditionSpec) -> list[float]:
            values: list[float] = []
            for ep in range(config.probe_episodes):
                res = run_condition(
                    config,
                    provisional,
                    cond,
                    seed=90001 + config.calibration_seed * 131 + ep,
                    thresholds=DEFAULT_THRESHOLDS,
                    policy_settings=probe_policy,
                    adaptive_enabled=False,
                    collect_steps=False,
                )
                values.extend(c.kappa for c in res.kappas if c.t >= cond.onset_t)
            return values

        thresholds = calibrate_thresholds(
            probe_kappas(baseline_cond),
            {name: probe_kappas(cond) for name, cond in singles.items()},
            probe_kappas(compound_cond),
            round_to_decimal=config.thresholds.round_to_decimal,
        )

    return CalibrationSnapshot(
        config_hash=config.config_hash(),
        env_id=config.env_id,
        seed=config.calibration_seed,
        mu0=mu0,
        sigma0=sigma0,
        thresholds=thresholds,
        ensemble=ensemble,
        clip_c=config.clip_c,
        c_tau=config.c_tau,
    )


# ---------------------------------------------------------------------------
# Evaluator-side model scoring


def build_eval_rows(
    env_id: str,
    params: dict,
    seed: int,
    n_rows: int,
    horizon: int = 120,
    action_mode: str = "mixture",
) -> tuple[np.ndarray, np.ndarray]:
    """Ground-truth transition rows under given dynamics.

    Evaluator-side: environments are constructed directly with the true
    (possibly shifted) parameters, observations are unmasked, and episodes
    reset every `horizon` steps so rows stay on the kind of states a task
    run actually visits. Used to score agent-side models against reality.

    action_mode "mixture" interleaves the scripted task controller with
    uniform draws (same ratio as baseline collection), which keeps states
    near the task envelope while still exercising diverse actions; this is
    the fair exam for comparing adapted models. action_mode "uniform" is a
    pure random walk, which wanders far off the task envelope and mostly
    measures extrapolation.
    """
    if n_rows < 1:
        raise InputError("n_rows must be positive")
    if action_mode not in ("mixture", "uniform"):
        raise InputError(f"unknown action_mode: {action_mode!r}")
    env_cls = ENV_CLASSES.get(env_id)
    if env_cls is None:
        raise InputError(f"unknown environment id: {env_id!r}")
    if horizon < 3:
        raise InputError("horizon must be at least 3 to yield usable rows")
    controller = TASK_CONTROLLERS[env_id]
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 7]))
    buffer = ReplayBuffer()
    episode = 0
    usable = 0
    while usable < n_rows:
        env = make_env(env_id, seed=seed * 10007 + 6151 * episode, params=params, horizon=horizon)
        buffer.begin_episode()
        for _ in range(horizon):
            if action_mode == "mixture":
                action = _mixture_action(controller, env.observe(), rng, env_cls.ACTION_DIM)
            else:
                action = rng.uniform(-1.0, 1.0, size=env_cls.ACTION_DIM)
            buffer.add(env.step(action))
        usable += horizon - 2
        episode += 1
    x, y = buffer.rows()
    return x[:n_rows], y[:n_rows]


def model_mse_on(ensemble: Ensemble, x: np.ndarray, y: np.ndarray) -> float:
    """Mean per-row ensemble error on an evaluation set."""
    return float(ensemble.mse(x, y).mean())


# ---------------------------------------------------------------------------
# Trace files


def write_trace(
    path: str,
    config: ExperimentConfig,
    snapshot: CalibrationSnapshot,
    result: RolloutResult,
    policy_mode: str = "monitor",
) -> None:
    header = {
        "kind": "header",
        "format_version": 1,
        "toolkit_version": TOOLKIT_VERSION,
        "config_hash": config.config_hash(),
        "env_id": config.env_id,
        "cell_id": result.cell_id,
        "seed": result.seed,
        "condition": result.condition.to_dict(),
        "policy_mode": policy_mode,
        "mu0": snapshot.mu0,
        "sigma0": snapshot.sigma0,
        "tau_low": snapshot.thresholds.tau_low,
        "tau_high": snapshot.thresholds.tau_high,
    }
    footer = {"kind": "footer", **result.summary()}
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(s, sort_keys=True) for s in result.steps)
    lines.append(json.dumps(footer, sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_trace(path: str) -> tuple[dict, list[dict], dict]:
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if len(lines) < 2 or lines[0].get("kind") != "header" or lines[-1].get("kind") != "footer":
        raise InputError(f"trace file {path} is missing header or footer")
    return lines[0], lines[1:-1], lines[-1]


def trace_is_complete(path: str) -> bool:
    if not os.path.exists(path):
        return False
    try:
        read_trace(path)
        return True
    except (InputError, json.JSONDecodeError, OSError):
        return False


# ---------------------------------------------------------------------------
# Sweeps


@dataclass
class SweepOutcome:
    cell_summaries: list[dict]
    records: list[DegradationRecord]
    report: SynergyReport
    stratified: dict[str, StratifiedRateResult]
    kappa_by_label: dict[str, float]
    total_violations: int


def _dyn_tag(delay: int, shift) -> str:
    shift_tag = "none" if shift is None else f"{shift[0]}={shift[1]:g}"
    return f"delay{delay}-shift-{shift_tag}"


def build_degradation_records(cells: dict[tuple, float], grid, meta_by_key: dict | None = None) -> list[DegradationRecord]:
    """Assemble matched-seed quadruples from per-cell episode returns.

    ``cells`` maps (po, delay, shift, seed) to episode return. For every
    seed, masking level > 0, and dynamics stressor combination (delay
    and/or shift active) present in the grid, the quadruple is
    (clean, masking only, dynamics only, both). Requires the grid to be a
    full factorial containing the clean and single-stressor cells.
    """
    records: list[DegradationRecord] = []
    po_levels = [p for p in grid.po_levels if p > 0]
    dyn_combos = [
        (d, s)
        for d in grid.delay_levels
        for s in grid.shift_levels
        if d > 0 or s is not None
    ]
    for seed in grid.seeds:
        for po in po_levels:
            for delay, shift in dyn_combos:
                key_c1 = (0.0, 0, None, seed)
                key_c2 = (po, 0, None, seed)
                key_c3 = (0.0, delay, shift, seed)
                key_c4 = (po, delay, shift, seed)
                if not all(k in cells for k in (key_c1, key_c2, key_c3, key_c4)):
                    raise InputError(
                        "grid is not a full factorial; missing cells for matched quadruple "
                        f"{key_c2} / {key_c3}"
                    )
                config_id = f"po{po:g}_{_dyn_tag(delay, shift)}_seed{seed}"
                records.append(
                    degradation(
                        config_id,
                        cells[key_c1],
                        cells[key_c2],
                        cells[key_c3],
                        cells[key_c4],
                        meta={
                            "po_fraction": po,
                            "delay_steps": delay,
                            "shift": None if shift is None else list(shift),
                            "seed": seed,
                        },
                    )
                )
    return records


def run_sweep(
    config: ExperimentConfig,
    snapshot: CalibrationSnapshot,
    out_dir: str | None = None,
    resume: bool = True,
    policy_mode: str = "monitor",
) -> SweepOutcome:
    """Run the full condition matrix, then aggregate statistics.

    policy_mode picks what the degradation study measures. "monitor"
    (default) runs the scripted task controller with kappa recorded
    alongside, so returns expose how the fixed behavior degrades under
    each stressor combination; this is the mode whose quadruples exhibit
    super-additive losses. "adaptive" runs the regime-adaptive probing
    loop from the config's policy settings, which trades task return for
    information when kappa rises and thereby flattens exactly the
    compound-versus-single contrast the degradation records are meant to
    expose. Thresholds are calibrated under the task policy, so monitor
    mode is also the behavior the calibration transfers to directly.

    With ``out_dir`` set, each cell writes one JSONL trace (skipped on
    resume when already complete) plus summary CSV/JSON artifacts at
    the end. Cells are independent; worker count affects wall clock only.
    """
    if policy_mode not in ("monitor", "adaptive"):
        raise InputError(f"unknown policy_mode: {policy_mode!r}")
    if policy_mode == "monitor":
        cell_policy = PolicySettings(
            alpha_max=0.0,
            lambda_risk=config.policy.lambda_risk,
            delta_max=config.policy.delta_max,
            n_candidates=config.policy.n_candidates,
        )
        cell_adaptive = False
    else:
        cell_policy = None
        cell_adaptive = None
    cells = condition_matrix(
        config.grid.po_levels,
        config.grid.delay_levels,
        config.grid.shift_levels,
        config.grid.seeds,
        onset_t=config.onset_t,
    )
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    def cell_path(cond: ConditionSpec, seed: int) -> str:
        return os.path.join(out_dir, f"trace_{cond.cell_id(seed)}.jsonl")

    def run_cell(item: tuple[ConditionSpec, int]) -> dict:
        cond, seed = item
        if out_dir and resume and trace_is_complete(cell_path(cond, seed)):
            header, _, footer = read_trace(cell_path(cond, seed))
            if (
                header.get("config_hash") == config.config_hash()
                and header.get("policy_mode") == policy_mode
            ):
                footer.pop("kind", None)
                return footer
        result = run_condition(
            config,
            snapshot,
            cond,
            seed,
            policy_settings=cell_policy,
            adaptive_enabled=cell_adaptive,
            collect_steps=bool(out_dir),
        )
        if out_dir:
            write_trace(cell_path(cond, seed), config, snapshot, result, policy_mode=policy_mode)
        return result.summary()

    if config.sweep_workers > 1:
        with ThreadPoolExecutor(max_workers=config.sweep_workers) as pool:
            summaries = list(pool.map(run_cell, cells))
    else:
        summaries = [run_cell(item) for item in cells]

    returns: dict[tuple, float] = {}
    for (cond, seed), summary in zip(cells, summaries):
        key = (cond.po_fraction, cond.delay_steps, cond.shift, seed)
        returns[key] = summary["episode_return"]

    records = build_degradation_records(returns, config.grid)
    report = superadditive_rate(records, threshold=0.0, units="frac")
    stratified: dict[str, StratifiedRateResult] = {}
    for key in ("delay_level", "shift_only"):
        try:
            stratified[key] = stratified_rate_test(records, stratum_key=key)
        except InputError:
            pass

    by_label: dict[str, list[float]] = {}
    for summary in summaries:
        by_label.setdefault(summary["label"], []).append(summary["post_onset_kappa_mean"])
    kappa_by_label = {label: float(np.mean(v)) for label, v in sorted(by_label.items())}
    total_violations = int(sum(s["violations"] for s in summaries))

    outcome = SweepOutcome(
        cell_summaries=summaries,
        records=records,
        report=report,
        stratified=stratified,
        kappa_by_label=kappa_by_label,
        total_violations=total_violations,
    )

    if out_dir:
        records_to_csv(records, os.path.join(out_dir, "degradation.csv"))
        atomic_write_text(os.path.join(out_dir, "synergy_report.json"), report.to_json() + "\n")
        strat_doc = {k: v.to_dict() for k, v in stratified.items()}
        atomic_write_text(
            os.path.join(out_dir, "stratified_rates.json"),
            json.dumps(strat_doc, sort_keys=True, indent=2) + "\n",
        )
        sweep_doc = {
            "format_version": 1,
            "toolkit_version": TOOLKIT_VERSION,
            "config_hash": config.config_hash(),
            "policy_mode": policy_mode,
            "kappa_by_label": kappa_by_label,
            "total_violations": total_violations,
            "cells": summaries,
        }
        atomic_write_text(
            os.path.join(out_dir, "sweep_summary.json"),
            json.dumps(sweep_doc, sort_keys=True, indent=2) + "\n",
        )

    return outcome
