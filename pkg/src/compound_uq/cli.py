"""Command-line front-end: calibrate, run, sweep, analyze, oracle-check.

Exit codes: 0 success, 1 usage or input error, 2 calibration error,
3 invariant violation (including a failed bound check in oracle-check).

Every artifact embeds the config hash, seed, and toolkit version, and no
output contains wall-clock information, so reruns with an identical
config are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .analysis import stratified_rate_test, superadditive_rate
from .belief import coupling_family, exact_mi, random_belief, verify_bound
from .config import ExperimentConfig, load_config
from .envs import ENV_CLASSES
from .errors import (
    CalibrationError,
    CompoundUQError,
    InputError,
    InvariantViolation,
    LifecycleError,
)
from .perturb import ConditionSpec
from .policy import PolicySettings
from .rollout import build_degradation_records, calibrate, read_trace, run_condition, run_sweep, write_trace
from .snapshot import CalibrationSnapshot, atomic_write_text
from .version import TOOLKIT_VERSION

USAGE_EXIT = 1
CALIBRATION_EXIT = 2
INVARIANT_EXIT = 3


class UsageExit(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageExit(f"{self.prog}: error: {message}", USAGE_EXIT)


def _load_cfg(path: str | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return load_config(path)


def _snapshot_path(cfg: ExperimentConfig, override: str | None) -> str:
    return override or os.path.join(cfg.output_dir, "calibration.json")


def cmd_calibrate(args) -> int:
    cfg = _load_cfg(args.config)
    snapshot = calibrate(cfg)
    out = _snapshot_path(cfg, args.out)
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    snapshot.save(out)
    print(
        f"calibrated {cfg.env_id}: mu0={snapshot.mu0!r} sigma0={snapshot.sigma0!r} "
        f"tau_low={snapshot.thresholds.tau_low!r} tau_high={snapshot.thresholds.tau_high!r}"
    )
    print(f"wrote {out}")
    return 0


def _parse_shift(text: str | None):
    if text is None or text == "none":
        return None
    if "=" not in text:
        raise InputError(f"shift must look like param=value, got {text!r}")
    param, _, value = text.partition("=")
    try:
        return (param, float(value))
    except ValueError:
        raise InputError(f"shift value must be numeric, got {text!r}")


def cmd_run(args) -> int:
    cfg = _load_cfg(args.config)
    snapshot = CalibrationSnapshot.load(_snapshot_path(cfg, args.snapshot))
    condition = ConditionSpec(
        po_fraction=args.po,
        delay_steps=args.delay,
        shift=_parse_shift(args.shift),
        onset_t=cfg.onset_t,
    )
    if args.policy_mode == "monitor":
        policy = PolicySettings(
            alpha_max=0.0,
            lambda_risk=cfg.policy.lambda_risk,
            delta_max=cfg.policy.delta_max,
            n_candidates=cfg.policy.n_candidates,
        )
        result = run_condition(
            cfg, snapshot, condition, seed=args.seed, policy_settings=policy, adaptive_enabled=False
        )
    else:
        result = run_condition(cfg, snapshot, condition, seed=args.seed)
    out = args.out or os.path.join(cfg.output_dir, f"trace_{result.cell_id}.jsonl")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    write_trace(out, cfg, snapshot, result, policy_mode=args.policy_mode)
    s = result.summary()
    print(
        f"{result.cell_id} [{s['label']}]: return={s['episode_return']!r} "
        f"post_onset_kappa_mean={s['post_onset_kappa_mean']!r} violations={s['violations']}"
    )
    print(f"wrote {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _load_cfg(args.config)
    if args.workers is not None:
        from dataclasses import replace

        cfg = replace(cfg, sweep_workers=args.workers)
    snapshot = CalibrationSnapshot.load(_snapshot_path(cfg, args.snapshot))
    out_dir = args.out_dir or os.path.join(cfg.output_dir, "sweep")
    outcome = run_sweep(
        cfg, snapshot, out_dir=out_dir, resume=not args.no_resume, policy_mode=args.policy_mode
    )
    print(f"cells={len(outcome.cell_summaries)} records={len(outcome.records)}")
    print(f"kappa_by_label={json.dumps(outcome.kappa_by_label, sort_keys=True)}")
    print(
        f"superadditive: {outcome.report.n_superadditive}/{outcome.report.n_configs} "
        f"rate={outcome.report.rate!r}"
    )
    print(f"total_violations={outcome.total_violations}")
    print(f"wrote {out_dir}")
    return 0


def cmd_analyze(args) -> int:
    cfg = _load_cfg(args.config)
    trace_dir = args.trace_dir
    returns: dict[tuple, float] = {}
    for name in sorted(os.listdir(trace_dir)):
        if not (name.startswith("trace_") and name.endswith(".jsonl")):
            continue
        header, _, footer = read_trace(os.path.join(trace_dir, name))
        cond = header["condition"]
        shift = cond.get("shift")
        key = (
            float(cond["po_fraction"]),
            int(cond["delay_steps"]),
            None if shift is None else (str(shift[0]), float(shift[1])),
            int(header["seed"]),
        )
        returns[key] = float(footer["episode_return"])
    if not returns:
        raise InputError(f"no trace files found in {trace_dir}")
    records = build_degradation_records(returns, cfg.grid)
    report = superadditive_rate(records, threshold=args.threshold, units=args.units)
    out = args.out or os.path.join(trace_dir, "synergy_report.json")
    atomic_write_text(out, report.to_json() + "\n")
    print(f"records={len(records)} rate={report.rate!r} mean_synergy={report.mean_synergy!r}")
    try:
        strat = stratified_rate_test(records, stratum_key=args.stratum_key, threshold=args.threshold, units=args.units)
        print(f"stratified[{args.stratum_key}]: chi2={strat.chi2!r} df={strat.df} p={strat.p_value!r}")
    except InputError as e:
        print(f"stratified test skipped: {e}")
    print(f"wrote {out}")
    return 0


def cmd_oracle_check(args) -> int:
    if args.n_samples < 1:
        raise InputError(f"n_samples must be >= 1, got {args.n_samples}")
    rng = np.random.default_rng(args.seed)
    rows = []
    n_bad = 0
    for i in range(args.n_samples):
        n_s = int(rng.integers(2, 9))
        n_theta = int(rng.integers(2, 9))
        check = verify_bound(random_belief(rng, n_s, n_theta))
        ok = check.holds and abs(check.slack - check.h_joint) <= 1e-9
        n_bad += 0 if ok else 1
        rows.append((i, n_s, n_theta, check.mi, check.bound, check.slack, ok))

    inversions = 0
    lams = np.linspace(0.0, 1.0, args.grid_points)
    for n in (2, 4, 8):
        mis = [exact_mi(coupling_family(float(l), n)) for l in lams]
        inversions += sum(1 for a, b in zip(mis, mis[1:]) if b < a - 1e-12)

    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sample", "n_s", "n_theta", "mi", "bound", "slack", "holds"])
            writer.writerows(rows)
        print(f"wrote {args.out}")
    print(f"samples={args.n_samples} violations={n_bad} coupling_inversions={inversions}")
    if n_bad or inversions:
        raise InvariantViolation(
            f"bound violations={n_bad}, coupling inversions={inversions}"
        )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="compound-uq", description="Compound uncertainty toolkit batch runner")
    parser.add_argument("--version", action="version", version=TOOLKIT_VERSION)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="train the ensemble, freeze the noise floor, place thresholds")
    p.add_argument("--config", help="JSON config path (defaults apply when omitted)")
    p.add_argument("--out", help="snapshot output path (default <output_dir>/calibration.json)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("run", help="run one condition episode against a snapshot")
    p.add_argument("--config", help="JSON config path")
    p.add_argument("--snapshot", help="snapshot path (default <output_dir>/calibration.json)")
    p.add_argument("--po", type=float, default=0.0, help="masked observation fraction")
    p.add_argument("--delay", type=int, default=0, help="action delay steps")
    p.add_argument("--shift", help="dynamics shift as param=value (or 'none')")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--policy-mode",
        choices=("monitor", "adaptive"),
        default="monitor",
        help="monitor: scripted task policy, frozen models; adaptive: probing policy with online updates",
    )
    p.add_argument("--out", help="trace output path")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run the full condition matrix and aggregate statistics")
    p.add_argument("--config", help="JSON config path")
    p.add_argument("--snapshot", help="snapshot path")
    p.add_argument("--out-dir", help="directory for traces and reports")
    p.add_argument("--workers", type=int, help="override sweep worker count")
    p.add_argument("--no-resume", action="store_true", help="rerun cells even when traces exist")
    p.add_argument(
        "--policy-mode",
        choices=("monitor", "adaptive"),
        default="monitor",
        help="monitor: scripted task policy, frozen models; adaptive: probing policy with online updates",
    )
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="recompute synergy statistics from an existing trace directory")
    p.add_argument("--config", help="JSON config path (grid must match the traces)")
    p.add_argument("--trace-dir", required=True)
    p.add_argument("--units", choices=("frac", "units"), default="frac")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--stratum-key", choices=("delay_level", "shift_only"), default="delay_level")
    p.add_argument("--out", help="synergy report output path")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("oracle-check", help="verify the information bound on random beliefs")
    p.add_argument("--n-samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-points", type=int, default=101)
    p.add_argument("--out", help="CSV output path")
    p.set_defaults(func=cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageExit as e:
        print(str(e), file=sys.stderr)
        return e.code
    except CalibrationError as e:
        print(f"calibration error: {e}", file=sys.stderr)
        return CALIBRATION_EXIT
    except (InvariantViolation, LifecycleError) as e:
        print(f"invariant violation: {e}", file=sys.stderr)
        return INVARIANT_EXIT
    except CompoundUQError as e:
        print(f"error: {e}", file=sys.stderr)
        return USAGE_EXIT


if __name__ == "__main__":
    sys.exit(main())
