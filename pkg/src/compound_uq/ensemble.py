"""Bootstrapped ensemble of one-step dynamics models.

Each member is a small two-layer ReLU network trained by minibatch SGD on
its own bootstrap resample of the calibration buffer, so members disagree
more where data is scarce. The model maps

    [observation ; acc ; action]  ->  next_observation - observation

where ``acc`` is the second-order finite difference of the observation
history. That feature is what makes action delays visible: a delayed
actuation shows up as an acceleration the commanded action cannot explain,
flipping the sign of the expected ``acc`` response around command
reversals.

Calibration fixes a noise floor (mean and population standard deviation of
the per-transition ensemble error on unperturbed data) and freezes the
ensemble; frozen weights are hashable so any later mutation is detectable.
``clone_unfrozen`` yields a warm-started copy that may keep learning
online via ``adaptive_update``.

Inputs and targets are z-scored with statistics from the training buffer,
shared by all members; predictions are reported in raw units.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .envs import Transition
from .errors import CalibrationError, InputError, LifecycleError

MIN_CALIBRATION_ROWS = 50
STD_FLOOR = 1e-6
SIGMA0_FLOOR = 1e-8


@dataclass(frozen=True)
class TrainSettings:
    """Optimizer and architecture knobs for ensemble training."""

    hidden_width: int = 64
    epochs: int = 150
    learning_rate: float = 0.005
    batch_size: int = 32


def acc_feature(obs_history) -> np.ndarray:
    """Second-order finite difference of the last three observations.

    acc_t = o_t - 2 o_{t-1} + o_{t-2}; zeros when fewer than three
    observations exist. For a per-dim quadratic ramp o_t = c t^2 this
    returns exactly 2c in every dim.
    """
    hist = list(obs_history)
    if not hist:
        raise InputError("obs_history must contain at least the current observation")
    cur = np.asarray(hist[-1], dtype=float)
    if len(hist) < 3:
        return np.zeros_like(cur)
    prev1 = np.asarray(hist[-2], dtype=float)
    prev2 = np.asarray(hist[-3], dtype=float)
    return cur - 2.0 * prev1 + prev2


class ReplayBuffer:
    """Per-episode transition storage yielding training rows with acc.

    Rows need two in-episode predecessors for the acc feature, so the
    first two transitions of every episode are kept for context but never
    become training targets.
    """

    def __init__(self):
        self._episodes: list[list[Transition]] = []

    def begin_episode(self) -> None:
        self._episodes.append([])

    def add(self, tr: Transition) -> None:
        if not self._episodes:
            self._episodes.append([])
        self._episodes[-1].append(tr)

    def add_episode(self, transitions) -> None:
        self._episodes.append(list(transitions))

    def __len__(self) -> int:
        return sum(len(ep) for ep in self._episodes)

    def n_rows(self) -> int:
        return sum(max(0, len(ep) - 2) for ep in self._episodes)

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Stack (input, target) training rows across episodes."""
        xs, ys = [], []
        for ep in self._episodes:
            for i in range(2, len(ep)):
                acc = ep[i].obs - 2.0 * ep[i - 1].obs + ep[i - 2].obs
                xs.append(np.concatenate([ep[i].obs, acc, ep[i].action]))
                ys.append(ep[i].delta)
        if not xs:
            return np.zeros((0, 0)), np.zeros((0, 0))
        return np.stack(xs), np.stack(ys)


@dataclass
class _Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, arr: np.ndarray) -> "_Normalizer":
        mean = arr.mean(axis=0)
        std = arr.std(axis=0)
        std = np.where(std < STD_FLOOR, 1.0, std)
        return cls(mean=mean, std=std)

    def encode(self, arr: np.ndarray) -> np.ndarray:
        return (arr - self.mean) / self.std

    def decode(self, arr: np.ndarray) -> np.ndarray:
        return arr * self.std + self.mean


@dataclass
class Ensemble:
    """M two-layer networks with shared normalizers and stacked weights."""

    w1: np.ndarray  # (M, in_dim, hidden)
    b1: np.ndarray  # (M, hidden)
    w2: np.ndarray  # (M, hidden, out_dim)
    b2: np.ndarray  # (M, out_dim)
    x_norm: _Normalizer
    y_norm: _Normalizer
    settings: TrainSettings
    seed: int
    frozen: bool = False
    _adapt_rng: np.random.Generator | None = field(default=None, repr=False)

    @property
    def m_members(self) -> int:
        return self.w1.shape[0]

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[2]

    def predict_members(self, x: np.ndarray) -> np.ndarray:
        """Per-member delta predictions, raw units; shape (M, B, out_dim)."""
        xb = np.atleast_2d(np.asarray(x, dtype=float))
        if xb.shape[1] != self.in_dim:
            raise InputError(f"input dim {xb.shape[1]} != expected {self.in_dim}")
        xn = self.x_norm.encode(xb)
        h = np.maximum(0.0, np.einsum("bi,mih->mbh", xn, self.w1) + self.b1[:, None, :])
        yn = np.einsum("mbh,mho->mbo", h, self.w2) + self.b2[:, None, :]
        return self.y_norm.decode(yn)

    def predict_mean(self, x: np.ndarray) -> np.ndarray:
        return self.predict_members(x).mean(axis=0)

    def disagreement(self, x: np.ndarray) -> np.ndarray:
        """Trace of the across-member population covariance of predictions."""
        preds = self.predict_members(x)
        return preds.var(axis=0, ddof=0).sum(axis=-1)

    def mse(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Per-row ensemble error: mean over members of the squared norm.

        The squared norm sums over output dims (no per-dim averaging), so
        values scale with observation dimensionality; the noise floor is
        calibrated on the same scale.
        """
        preds = self.predict_members(x)
        yb = np.atleast_2d(np.asarray(y, dtype=float))
        return ((preds - yb[None, :, :]) ** 2).sum(axis=-1).mean(axis=0)

    def weights_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.w1, self.b1, self.w2, self.b2, self.x_norm.mean, self.x_norm.std, self.y_norm.mean, self.y_norm.std):
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
        return h.hexdigest()

    def freeze(self) -> None:
        self.frozen = True

    def clone_unfrozen(self) -> "Ensemble":
        """Warm-started trainable copy; the original stays untouched."""
        clone = Ensemble(
            w1=self.w1.copy(),
            b1=self.b1.copy(),
            w2=self.w2.copy(),
            b2=self.b2.copy(),
            x_norm=_Normalizer(self.x_norm.mean.copy(), self.x_norm.std.copy()),
            y_norm=_Normalizer(self.y_norm.mean.copy(), self.y_norm.std.copy()),
            settings=self.settings,
            seed=self.seed,
            frozen=False,
        )
        clone._adapt_rng = np.random.default_rng(np.random.SeedSequence(entropy=[self.seed, 1]))
        return clone

    def to_dict(self) -> dict:
        def enc(arr):
            return [float(v) for v in np.asarray(arr, dtype=float).ravel()]

        return {
            "m_members": self.m_members,
            "in_dim": self.in_dim,
            "hidden_width": self.settings.hidden_width,
            "out_dim": self.out_dim,
            "seed": self.seed,
            "frozen": self.frozen,
            "settings": {
                "hidden_width": self.settings.hidden_width,
                "epochs": self.settings.epochs,
                "learning_rate": self.settings.learning_rate,
                "batch_size": self.settings.batch_size,
            },
            "w1": enc(self.w1),
            "b1": enc(self.b1),
            "w2": enc(self.w2),
            "b2": enc(self.b2),
            "x_mean": enc(self.x_norm.mean),
            "x_std": enc(self.x_norm.std),
            "y_mean": enc(self.y_norm.mean),
            "y_std": enc(self.y_norm.std),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Ensemble":
        m, i, h, o = d["m_members"], d["in_dim"], d["hidden_width"], d["out_dim"]

        def dec(key, shape):
            return np.asarray(d[key], dtype=float).reshape(shape)

        s = d["settings"]
        return cls(
            w1=dec("w1", (m, i, h)),
            b1=dec("b1", (m, h)),
            w2=dec("w2", (m, h, o)),
            b2=dec("b2", (m, o)),
            x_norm=_Normalizer(dec("x_mean", (i,)), dec("x_std", (i,))),
            y_norm=_Normalizer(dec("y_mean", (o,)), dec("y_std", (o,))),
            settings=TrainSettings(
                hidden_width=int(s["hidden_width"]),
                epochs=int(s["epochs"]),
                learning_rate=float(s["learning_rate"]),
                batch_size=int(s["batch_size"]),
            ),
            seed=int(d["seed"]),
            frozen=bool(d["frozen"]),
        )


MOMENTUM = 0.9
GRAD_NORM_CAP = 10.0


def _sgd_epochs(w1, b1, w2, b2, xn, yn, rng, epochs: int, lr: float, batch_size: int) -> None:
    """In-place minibatch SGD with classical momentum on one member.

    The global gradient norm is capped so that a batch of far
    out-of-distribution rows (as seen during online adaptation right
    after a dynamics shift) cannot blow the weights up.
    """
    n = xn.shape[0]
    vel = [np.zeros_like(a) for a in (w1, b1, w2, b2)]
    for _ in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start : start + batch_size]
            xb, yb = xn[idx], yn[idx]
            z1 = xb @ w1 + b1
            h = np.maximum(0.0, z1)
            pred = h @ w2 + b2
            grad_out = 2.0 * (pred - yb) / xb.shape[0]
            gw2 = h.T @ grad_out
            gb2 = grad_out.sum(axis=0)
            gh = (grad_out @ w2.T) * (z1 > 0.0)
            gw1 = xb.T @ gh
            gb1 = gh.sum(axis=0)
            grads = (gw1, gb1, gw2, gb2)
            gnorm = np.sqrt(sum(float((g * g).sum()) for g in grads))
            scale = min(1.0, GRAD_NORM_CAP / gnorm) if gnorm > 0 else 1.0
            for v, p, g in zip(vel, (w1, b1, w2, b2), grads):
                v *= MOMENTUM
                v -= (lr * scale) * g
                p += v


def bootstrap_train(buffer: ReplayBuffer, m_members: int, seed: int, settings: TrainSettings | None = None) -> Ensemble:
    """Train M members, each on its own with-replacement resample.

    Member m draws its resample, its weight init, and its minibatch order
    from an independent seeded stream, so ensembles are reproducible and
    members stay decorrelated.
    """
    settings = settings or TrainSettings()
    if m_members < 2:
        raise InputError(f"need at least 2 members for disagreement, got {m_members}")
    x, y = buffer.rows()
    n = x.shape[0]
    if n < MIN_CALIBRATION_ROWS:
        raise CalibrationError(
            f"calibration buffer has {n} usable rows; need at least {MIN_CALIBRATION_ROWS}"
        )
    x_norm = _Normalizer.fit(x)
    y_norm = _Normalizer.fit(y)
    xn_full = x_norm.encode(x)
    yn_full = y_norm.encode(y)

    in_dim, out_dim, hidden = x.shape[1], y.shape[1], settings.hidden_width
    w1 = np.zeros((m_members, in_dim, hidden))
    b1 = np.zeros((m_members, hidden))
    w2 = np.zeros((m_members, hidden, out_dim))
    b2 = np.zeros((m_members, out_dim))

    for m in range(m_members):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=[seed, 0, m]))
        w1[m] = rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(in_dim, hidden))
        w2[m] = rng.normal(0.0, np.sqrt(2.0 / hidden), size=(hidden, out_dim))
        resample = rng.integers(0, n, size=n)
        _sgd_epochs(
            w1[m], b1[m], w2[m], b2[m],
            xn_full[resample], yn_full[resample],
            rng, settings.epochs, settings.learning_rate, settings.batch_size,
        )

    return Ensemble(w1=w1, b1=b1, w2=w2, b2=b2, x_norm=x_norm, y_norm=y_norm, settings=settings, seed=seed)


def calibrate_noise_floor(ensemble: Ensemble, buffer: ReplayBuffer) -> tuple[float, float]:
    """Baseline error statistics on unperturbed data; freezes the ensemble.

    Returns (mu0, sigma0): mean and population standard deviation of the
    per-transition ensemble error. sigma0 is floored at a tiny epsilon so
    downstream z-scores stay finite. Freezing afterwards is deliberate:
    the floor is only meaningful for exactly these weights.
    """
    x, y = buffer.rows()
    if x.shape[0] < MIN_CALIBRATION_ROWS:
        raise CalibrationError(
            f"noise-floor buffer has {x.shape[0]} usable rows; need at least {MIN_CALIBRATION_ROWS}"
        )
    per_row = ensemble.mse(x, y)
    mu0 = float(per_row.mean())
    sigma0 = float(max(per_row.std(ddof=0), SIGMA0_FLOOR))
    ensemble.freeze()
    return mu0, sigma0


def adaptive_update(ensemble: Ensemble, x: np.ndarray, y: np.ndarray, epochs: int = 1) -> None:
    """A few in-place SGD epochs on fresh rows; refuses frozen ensembles."""
    if ensemble.frozen:
        raise LifecycleError("adaptive_update on a frozen ensemble; use clone_unfrozen() first")
    xb = np.atleast_2d(np.asarray(x, dtype=float))
    yb = np.atleast_2d(np.asarray(y, dtype=float))
    if xb.shape[0] == 0:
        return
    if xb.shape[1] != ensemble.in_dim or yb.shape[1] != ensemble.out_dim:
        raise InputError("adaptive_update rows do not match ensemble dimensions")
    if ensemble._adapt_rng is None:
        ensemble._adapt_rng = np.random.default_rng(np.random.SeedSequence(entropy=[ensemble.seed, 1]))
    xn = ensemble.x_norm.encode(xb)
    yn = ensemble.y_norm.encode(yb)
    s = ensemble.settings
    for m in range(ensemble.m_members):
        _sgd_epochs(
            ensemble.w1[m], ensemble.b1[m], ensemble.w2[m], ensemble.b2[m],
            xn, yn, ensemble._adapt_rng, epochs, s.learning_rate, s.batch_size,
        )
