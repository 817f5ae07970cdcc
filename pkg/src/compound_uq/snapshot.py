"""Calibration snapshots: frozen ensemble, noise floor, thresholds.

A snapshot is the single artifact a run needs besides its config: the
frozen ensemble weights, the noise floor (mu0, sigma0), the calibrated
regime thresholds, and reproducibility metadata (config hash, seed,
toolkit version, weights hash).

Serialization is canonical JSON (sorted keys, shortest round-trip float
repr), so equal calibrations produce byte-identical files, and loading a
snapshot reconstructs kappa values bit for bit. Writes go through a
temp-file rename so a crash can never leave a half-written snapshot
behind.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .ensemble import Ensemble
from .errors import InputError
from .kappa import Thresholds
from .version import TOOLKIT_VERSION

SNAPSHOT_FORMAT_VERSION = 1


def atomic_write_text(path: str, text: str) -> None:
    """Write via temp file + rename so readers never see partial content."""
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


@dataclass(frozen=True)
class CalibrationSnapshot:
    config_hash: str
    env_id: str
    seed: int
    mu0: float
    sigma0: float
    thresholds: Thresholds
    ensemble: Ensemble
    clip_c: float
    c_tau: float

    def to_dict(self) -> dict:
        return {
            "format_version": SNAPSHOT_FORMAT_VERSION,
            "toolkit_version": TOOLKIT_VERSION,
            "config_hash": self.config_hash,
            "env_id": self.env_id,
            "seed": self.seed,
            "mu0": float(self.mu0),
            "sigma0": float(self.sigma0),
            "tau_low": float(self.thresholds.tau_low),
            "tau_high": float(self.thresholds.tau_high),
            "clip_c": float(self.clip_c),
            "c_tau": float(self.c_tau),
            "weights_hash": self.ensemble.weights_hash(),
            "ensemble": self.ensemble.to_dict(),
        }

    def save(self, path: str) -> None:
        atomic_write_text(path, json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "CalibrationSnapshot":
        if d.get("format_version") != SNAPSHOT_FORMAT_VERSION:
            raise InputError(f"unsupported snapshot format_version {d.get('format_version')!r}")
        ens = Ensemble.from_dict(d["ensemble"])
        stored_hash = d.get("weights_hash")
        if stored_hash and ens.weights_hash() != stored_hash:
            raise InputError("snapshot weights hash mismatch; file corrupted or edited")
        if not ens.frozen:
            raise InputError("snapshot must contain a frozen ensemble")
        return cls(
            config_hash=str(d["config_hash"]),
            env_id=str(d["env_id"]),
            seed=int(d["seed"]),
            mu0=float(d["mu0"]),
            sigma0=float(d["sigma0"]),
            thresholds=Thresholds(tau_low=float(d["tau_low"]), tau_high=float(d["tau_high"])),
            ensemble=ens,
            clip_c=float(d["clip_c"]),
            c_tau=float(d["c_tau"]),
        )

    @classmethod
    def load(cls, path: str) -> "CalibrationSnapshot":
        try:
            with open(path) as fh:
                d = json.load(fh)
        except FileNotFoundError:
            raise InputError(f"snapshot file not found: {path}")
        except json.JSONDecodeError as e:
            raise InputError(f"snapshot file {path} is not valid JSON: {e}")
        return cls.from_dict(d)
