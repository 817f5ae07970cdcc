"""Super-additivity statistics over matched-seed condition sweeps.

A degradation record compares four episode returns from the same seed:
clean (C1), masking only (C2), dynamics stressor only (C3), and both
(C4). Fractional losses are taken against the matched C1 return, and the
synergy is how much the compound loss exceeds the sum of the single
losses. Positive synergy in raw return units means the combination cost
more than its parts, which is the failure mode this toolkit exists to
flag.

Statistics are deliberately plain and hand-auditable: the flagged-synergy
t statistic and the rate-homogeneity chi-square are computed from their
textbook formulas, with only the distribution tail probabilities taken
from scipy. No statistic here uses internal randomness; identical records
give identical reports.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as _scipy_stats

from .errors import InputError

SCHEMA_VERSION = 1
COLLAPSE_FRACTION = 0.25


@dataclass(frozen=True)
class DegradationRecord:
    """Matched-seed returns and derived losses for one configuration.

    ``return_c2`` is the masking-only arm and ``return_c3`` the dynamics
    stressor arm. When the baseline return is (numerically) zero the
    fractional deltas are undefined; such records carry NaN deltas, are
    marked degenerate, and can never be flagged in fractional units.
    """

    config_id: str
    return_c1: float
    return_c2: float
    return_c3: float
    return_c4: float
    delta_po: float
    delta_theta: float
    delta_compound: float
    synergy_frac: float
    synergy_units: float
    baseline_degenerate: bool = False
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config_id": self.config_id,
            "return_c1": self.return_c1,
            "return_c2": self.return_c2,
            "return_c3": self.return_c3,
            "return_c4": self.return_c4,
            "delta_po": self.delta_po,
            "delta_theta": self.delta_theta,
            "delta_compound": self.delta_compound,
            "synergy_frac": self.synergy_frac,
            "synergy_units": self.synergy_units,
            "baseline_degenerate": self.baseline_degenerate,
            "meta": dict(self.meta),
        }


BASELINE_EPS = 1e-12


def degradation(
    config_id: str,
    return_c1: float,
    return_c2: float,
    return_c3: float,
    return_c4: float,
    meta: dict | None = None,
) -> DegradationRecord:
    """Fractional losses versus the matched clean return, plus synergy.

    delta_x = (R_C1 - R_Cx) / |R_C1|; synergy_frac = delta_compound -
    (delta_po + delta_theta). synergy_units is the same quantity in raw
    return units, R_C2 + R_C3 - R_C1 - R_C4, which stays defined even for
    a zero baseline.
    """
    for name, v in (("return_c1", return_c1), ("return_c2", return_c2), ("return_c3", return_c3), ("return_c4", return_c4)):
        if not math.isfinite(v):
            raise InputError(f"{name} must be finite, got {v}")
    synergy_units = (return_c2 + return_c3) - (return_c1 + return_c4)
    degenerate = abs(return_c1) < BASELINE_EPS
    if degenerate:
        d_po = d_theta = d_comp = s_frac = float("nan")
    else:
        scale = abs(return_c1)
        d_po = (return_c1 - return_c2) / scale
        d_theta = (return_c1 - return_c3) / scale
        d_comp = (return_c1 - return_c4) / scale
        s_frac = d_comp - (d_po + d_theta)
    return DegradationRecord(
        config_id=config_id,
        return_c1=float(return_c1),
        return_c2=float(return_c2),
        return_c3=float(return_c3),
        return_c4=float(return_c4),
        delta_po=d_po,
        delta_theta=d_theta,
        delta_compound=d_comp,
        synergy_frac=s_frac,
        synergy_units=float(synergy_units),
        baseline_degenerate=degenerate,
        meta=dict(meta or {}),
    )


@dataclass(frozen=True)
class SynergyReport:
    """Rate and significance summary over a batch of records."""

    n_configs: int
    n_superadditive: int
    rate: float
    units: str
    threshold: float
    mean_synergy: float | None
    t_stat: float | None
    p_value: float | None
    ci_low: float | None
    ci_high: float | None
    n_degenerate: int
    per_stratum_rates: dict | None = None
    notes: str = ""

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n_configs": self.n_configs,
            "n_superadditive": self.n_superadditive,
            "rate": self.rate,
            "units": self.units,
            "threshold": self.threshold,
            "mean_synergy": self.mean_synergy,
            "t_stat": self.t_stat,
            "p_value": self.p_value,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "n_degenerate": self.n_degenerate,
            "per_stratum_rates": self.per_stratum_rates,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _synergy_of(record: DegradationRecord, units: str) -> float:
    if units == "frac":
        return record.synergy_frac
    if units == "units":
        return record.synergy_units
    raise InputError(f"units must be 'frac' or 'units', got {units!r}")


def superadditive_rate(records, threshold: float = 0.0, units: str = "frac") -> SynergyReport:
    """Flag records whose synergy exceeds ``threshold`` and test the mean.

    The denominator is all records. Degenerate-baseline records cannot be
    flagged in fractional units (their synergy is NaN, and NaN never
    exceeds a threshold) but still count toward the denominator; their
    count is reported. The one-sample t statistic tests the flagged
    synergies against zero mean with a two-sided p-value and a 95%
    confidence interval; fewer than two flagged records leave the test
    fields empty.
    """
    recs = list(records)
    if not recs:
        raise InputError("superadditive_rate needs at least one record")
    synergies = np.array([_synergy_of(r, units) for r in recs], dtype=float)
    flagged = synergies > threshold
    flagged = np.where(np.isnan(synergies), False, flagged)
    n = len(recs)
    n_flag = int(flagged.sum())
    n_degenerate = sum(1 for r in recs if r.baseline_degenerate)

    mean_s = t_stat = p_value = ci_low = ci_high = None
    notes = ""
    if n_flag == 0:
        notes = "no records exceeded the synergy threshold"
    else:
        vals = synergies[flagged]
        mean_s = float(vals.mean())
        if n_flag >= 2:
            sd = float(vals.std(ddof=1))
            if sd > 0:
                se = sd / math.sqrt(n_flag)
                t_stat = mean_s / se
                df = n_flag - 1
                p_value = float(2.0 * _scipy_stats.t.sf(abs(t_stat), df))
                t_crit = float(_scipy_stats.t.ppf(0.975, df))
                ci_low = mean_s - t_crit * se
                ci_high = mean_s + t_crit * se
            else:
                notes = "flagged synergies are constant; t statistic undefined"
        else:
            notes = "only one flagged record; t statistic needs at least two"

    return SynergyReport(
        n_configs=n,
        n_superadditive=n_flag,
        rate=n_flag / n,
        units=units,
        threshold=float(threshold),
        mean_synergy=mean_s,
        t_stat=None if t_stat is None else float(t_stat),
        p_value=p_value,
        ci_low=ci_low,
        ci_high=ci_high,
        n_degenerate=n_degenerate,
        notes=notes,
    )


@dataclass(frozen=True)
class StratifiedRateResult:
    stratum_key: str
    strata: dict
    chi2: float
    df: int
    p_value: float

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "stratum_key": self.stratum_key,
            "strata": self.strata,
            "chi2": self.chi2,
            "df": self.df,
            "p_value": self.p_value,
        }


def _stratum_of(record: DegradationRecord, stratum_key: str) -> str | None:
    if stratum_key == "delay_level":
        return f"delay={record.meta.get('delay_steps', 0)}"
    if stratum_key == "shift_only":
        delay = int(record.meta.get("delay_steps", 0) or 0)
        shift = record.meta.get("shift")
        if delay > 0:
            return "delayed"
        if shift is not None:
            return "static_shift"
        return None
    raise InputError(f"stratum_key must be 'delay_level' or 'shift_only', got {stratum_key!r}")


def stratified_rate_test(
    records,
    stratum_key: str = "delay_level",
    threshold: float = 0.0,
    units: str = "frac",
) -> StratifiedRateResult:
    """Compare super-additivity rates across strata with a chi-square test.

    Builds the strata x {flagged, not flagged} contingency table and
    computes the Pearson homogeneity statistic without continuity
    correction, df = n_strata - 1. Records that do not belong to any
    stratum under the chosen key (for ``shift_only``: cells with no
    dynamics stressor at all) are excluded. A table with zero or all
    flagged has identical rates and reports chi2 = 0, p = 1.
    """
    recs = list(records)
    groups: dict[str, list[DegradationRecord]] = {}
    for r in recs:
        stratum = _stratum_of(r, stratum_key)
        if stratum is not None:
            groups.setdefault(stratum, []).append(r)
    if len(groups) < 2:
        raise InputError(f"stratified test needs at least 2 nonempty strata, got {len(groups)}")

    strata_summary: dict[str, dict] = {}
    flagged_counts, totals = [], []
    for name in sorted(groups):
        rs = groups[name]
        syn = np.array([_synergy_of(r, units) for r in rs], dtype=float)
        flags = np.where(np.isnan(syn), False, syn > threshold)
        n_flag = int(flags.sum())
        strata_summary[name] = {"n": len(rs), "n_superadditive": n_flag, "rate": n_flag / len(rs)}
        flagged_counts.append(n_flag)
        totals.append(len(rs))

    flagged_counts = np.array(flagged_counts, dtype=float)
    totals = np.array(totals, dtype=float)
    grand_flag = flagged_counts.sum()
    grand_n = totals.sum()
    df = len(totals) - 1
    if grand_flag == 0 or grand_flag == grand_n:
        chi2, p = 0.0, 1.0
    else:
        p_hat = grand_flag / grand_n
        expected_yes = totals * p_hat
        expected_no = totals * (1.0 - p_hat)
        observed_no = totals - flagged_counts
        chi2 = float(((flagged_counts - expected_yes) ** 2 / expected_yes).sum() + ((observed_no - expected_no) ** 2 / expected_no).sum())
        p = float(_scipy_stats.chi2.sf(chi2, df))
    return StratifiedRateResult(stratum_key=stratum_key, strata=strata_summary, chi2=chi2, df=df, p_value=p)


@dataclass(frozen=True)
class KappaTraceStats:
    post_onset_mean: float
    peak: float
    peak_t: int
    spike_lead_times: tuple[int, ...]


def kappa_trace_stats(
    trace,
    onset_t: int,
    task_signal=None,
    tau_high: float | None = None,
    collapse_fraction: float = COLLAPSE_FRACTION,
) -> KappaTraceStats:
    """Summarize a per-step kappa trace around a stressor onset.

    ``trace`` may hold per-step kappa floats or records with a ``kappa``
    attribute, indexed by step. Returns the post-onset mean (steps with
    t >= onset, matching when stressors engage), the global peak and its
    step, and, when a task signal and tau_high are supplied, the lead
    time from the nearest preceding kappa spike above tau_high to each
    collapse event. A collapse event starts where the task signal first
    drops below ``collapse_fraction`` times its pre-onset mean; detection
    assumes a predominantly positive signal. Events with no preceding
    spike contribute no lead time.
    """
    values = np.array([getattr(k, "kappa", k) for k in trace], dtype=float)
    if values.shape[0] <= onset_t:
        raise InputError(f"trace of length {values.shape[0]} does not reach onset {onset_t}")
    post = values[onset_t:]
    peak_t = int(np.argmax(values))
    leads: list[int] = []
    if task_signal is not None and tau_high is not None:
        sig = np.asarray(task_signal, dtype=float)
        if sig.shape[0] != values.shape[0]:
            raise InputError("task_signal must align with the kappa trace")
        if onset_t < 1:
            raise InputError("collapse detection needs a pre-onset baseline window")
        pre_mean = float(sig[:onset_t].mean())
        collapse_level = collapse_fraction * pre_mean
        collapsed = sig < collapse_level
        spike_ts = np.flatnonzero(values > tau_high)
        in_event = False
        for t, is_c in enumerate(collapsed):
            if is_c and not in_event:
                in_event = True
                earlier = spike_ts[spike_ts <= t]
                if earlier.size:
                    leads.append(int(t - earlier[-1]))
            elif not is_c:
                in_event = False
    return KappaTraceStats(
        post_onset_mean=float(post.mean()),
        peak=float(values.max()),
        peak_t=peak_t,
        spike_lead_times=tuple(leads),
    )


def epistemic_gap(adaptive_theta_mse: float, frozen_theta_mse: float) -> float:
    """Current-model prediction error on ground-truth-dynamics transitions.

    The gap is the adaptive (currently deployed) model's error; the frozen
    model's error on the same transitions is taken as reference context
    for reports. Both must be nonnegative. An adaptive model that has
    fully tracked the shift scores 0 regardless of how wrong the frozen
    model remains.
    """
    for name, v in (("adaptive_theta_mse", adaptive_theta_mse), ("frozen_theta_mse", frozen_theta_mse)):
        if not math.isfinite(v) or v < 0:
            raise InputError(f"{name} must be finite and nonnegative, got {v}")
    return float(adaptive_theta_mse)


DEGRADATION_CSV_FIELDS = (
    "config_id",
    "return_c1",
    "return_c2",
    "return_c3",
    "return_c4",
    "delta_po",
    "delta_theta",
    "delta_compound",
    "synergy_frac",
    "synergy_units",
    "baseline_degenerate",
)


def records_to_csv(records, path) -> None:
    """Write degradation records as CSV with a fixed, versioned column set."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=DEGRADATION_CSV_FIELDS)
        writer.writeheader()
        for r in records:
            row = {k: r.to_dict()[k] for k in DEGRADATION_CSV_FIELDS}
            writer.writerow(row)
