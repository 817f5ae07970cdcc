"""Compound uncertainty toolkit.

Online estimation of a compound uncertainty coefficient from bootstrapped
dynamics-ensemble error and observability metadata, a regime-adaptive
information-seeking policy under a tightening risk budget, and
super-additivity analysis of stressor combinations on two small,
fully seeded environments.
"""

from .analysis import (
    DegradationRecord,
    KappaTraceStats,
    StratifiedRateResult,
    SynergyReport,
    degradation,
    epistemic_gap,
    kappa_trace_stats,
    stratified_rate_test,
    superadditive_rate,
)
from .belief import (
    BoundCheck,
    DiscreteJointBelief,
    coupling_family,
    exact_mi,
    joint_entropy,
    marginal_entropies,
    random_belief,
    verify_bound,
)
from .config import ExperimentConfig, GridSpec, config_from_dict, load_config
from .ensemble import (
    Ensemble,
    ReplayBuffer,
    TrainSettings,
    acc_feature,
    adaptive_update,
    bootstrap_train,
    calibrate_noise_floor,
)
from .envs import DriftBot, EpisodeTrace, MassSpring1D, Transition, make_env
from .errors import (
    CalibrationError,
    CompoundUQError,
    InputError,
    InvariantViolation,
    LifecycleError,
    ParameterError,
    SpecError,
)
from .kappa import (
    KappaComponents,
    Regime,
    Thresholds,
    calibrate_thresholds,
    classify_regime,
    compute_step,
    kappa,
    sigma_s,
    sigma_theta,
)
from .perturb import (
    ActionDelayer,
    ConditionSpec,
    MaskSpec,
    ShiftSpec,
    apply_mask,
    apply_shift,
    condition_matrix,
    default_condition_matrix,
    mask_dims_for_fraction,
)
from .policy import (
    ActionChoice,
    PolicySettings,
    alpha_schedule,
    candidate_actions,
    composite_value,
    delta_budget,
    dis_score,
    select_action,
    task_affinity,
)
from .rollout import (
    RolloutResult,
    SweepOutcome,
    build_eval_rows,
    calibrate,
    model_mse_on,
    run_condition,
    run_sweep,
)
from .snapshot import CalibrationSnapshot
from .version import TOOLKIT_VERSION

__version__ = TOOLKIT_VERSION
