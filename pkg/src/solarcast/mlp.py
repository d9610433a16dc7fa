"""One-hidden-layer CSI forecaster per pixel, trained by Levenberg-Marquardt.

Network: ``y = sum_h w2[h] * tanh(w1[h] . x + b1[h]) + b2`` (linear output).
Parameters are flattened as ``w1`` (row-major, H x In), ``b1``, ``w2``, ``b2``.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from threadpoolctl import threadpool_limits

from .grid import Kind, PixelSeries

log = logging.getLogger(__name__)

LAMBDA_MAX = 1e10
GRAD_TOL = 1e-10


class InsufficientDataError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class PixelMlp:
    in_count: int
    hidden_count: int
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float
    rng_seed: int = 0

    def __post_init__(self):
        self.w1 = np.asarray(self.w1, dtype=np.float64).reshape(self.hidden_count, self.in_count)
        self.b1 = np.asarray(self.b1, dtype=np.float64).reshape(self.hidden_count)
        self.w2 = np.asarray(self.w2, dtype=np.float64).reshape(self.hidden_count)
        self.b2 = float(self.b2)

    @property
    def n_params(self) -> int:
        return self.hidden_count * (self.in_count + 2) + 1

    @classmethod
    def initial(cls, in_count: int = 7, hidden_count: int = 7, seed: int = 0) -> "PixelMlp":
        """Weights uniform in [-0.5, 0.5] from a generator seeded with ``seed``."""
        rng = np.random.default_rng(seed)
        p = rng.uniform(-0.5, 0.5, hidden_count * (in_count + 2) + 1)
        return cls.from_params(p, in_count, hidden_count, seed)

    @classmethod
    def from_params(cls, p: np.ndarray, in_count: int, hidden_count: int, seed: int = 0) -> "PixelMlp":
        p = np.asarray(p, dtype=np.float64)
        a = hidden_count * in_count
        return cls(in_count, hidden_count, p[:a], p[a:a + hidden_count],
                   p[a + hidden_count:a + 2 * hidden_count], p[-1], seed)

    def params(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1, self.w2, [self.b2]])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.params())))

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Raw network output (predicted CSI) for rows of lagged CSI, newest first."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.tanh(x @ self.w1.T + self.b1) @ self.w2 + self.b2

    def jacobian(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(outputs, d outputs / d params) for input rows ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        o = np.tanh(x @ self.w1.T + self.b1)
        y = o @ self.w2 + self.b2
        n, h, k = x.shape[0], self.hidden_count, self.in_count
        d_hidden = (1.0 - o * o) * self.w2  # n x H
        jac = np.empty((n, self.n_params))
        jac[:, :h * k] = (d_hidden[:, :, None] * x[:, None, :]).reshape(n, h * k)
        jac[:, h * k:h * k + h] = d_hidden
        jac[:, h * k + h:h * k + 2 * h] = o
        jac[:, -1] = 1.0
        return y, jac

    def same_weights(self, other: "PixelMlp") -> bool:
        return (self.in_count, self.hidden_count) == (other.in_count, other.hidden_count) \
            and np.array_equal(self.params(), other.params())


@dataclass(frozen=True)
class TrainConfig:
    train_fraction: float = 0.8
    val_fraction: float = 0.2
    test_fraction: float = 0.0
    max_fail: int = 3
    max_epochs: int = 1000
    lm_lambda0: float = 1e-3
    lm_lambda_up: float = 10.0
    lm_lambda_down: float = 10.0
    in_count: int = 7
    hidden_count: int = 7

    def __post_init__(self):
        total = self.train_fraction + self.val_fraction + self.test_fraction
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {total}")
        if self.max_fail < 1:
            raise ValueError("max_fail must be >= 1")
        if self.in_count < 1 or self.hidden_count < 1:
            raise ValueError("in_count and hidden_count must be >= 1")


@dataclass
class TrainReport:
    train_mse: float
    val_mse: float
    epochs: int
    best_epoch: int
    stop_reason: str
    n_train: int
    n_val: int
    val_history: List[float] = field(default_factory=list)


@dataclass
class TrainingSet:
    inputs: np.ndarray
    targets: np.ndarray
    target_times: np.ndarray
    input_start_times: np.ndarray

    def __len__(self):
        return self.targets.size


def build_training_set(series, in_count: int) -> TrainingSet:
    """Sliding windows: row k = (x[t], x[t-1], ..., x[t-In+1]), target x[t+1].

    Windows touching a missing sample are dropped; chronological order kept.
    """
    if isinstance(series, PixelSeries):
        values, ts = series.values, series.timestamps
    else:
        values = np.asarray(series, dtype=np.float64)
        ts = np.arange(values.size, dtype=np.int64)
    if values.size <= in_count:
        raise InsufficientDataError(f"series length {values.size} <= In={in_count}")
    if np.count_nonzero(~np.isnan(values)) < in_count + 2:
        raise InsufficientDataError(f"fewer than In+2={in_count + 2} valid samples")
    win = np.lib.stride_tricks.sliding_window_view(values, in_count + 1)
    ok = ~np.isnan(win).any(axis=1)
    win = win[ok]
    starts = np.nonzero(ok)[0]
    inputs = win[:, in_count - 1::-1].copy()
    targets = win[:, in_count].copy()
    return TrainingSet(inputs, targets, ts[starts + in_count], ts[starts])


def lm_solve(jac: np.ndarray, resid: np.ndarray, lam: float) -> np.ndarray:
    """Damped Gauss-Newton increment (J'J + lam I)^-1 J'e."""
    jtj = jac.T @ jac
    jtj[np.diag_indices_from(jtj)] += lam
    return np.linalg.solve(jtj, jac.T @ resid)


@dataclass
class LmStep:
    net: PixelMlp
    lam: float
    mse: float
    accepted: bool


def lm_step(net: PixelMlp, x: np.ndarray, y: np.ndarray, lam: float,
            lam_up: float = 10.0, lam_down: float = 10.0, lam_max: float = LAMBDA_MAX,
            linearization: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> LmStep:
    """One LM epoch: retry with growing damping until the batch MSE drops.

    Residuals are ``e = output - target`` and ``J = de/dw``; the candidate is
    ``w - (J'J + lam I)^-1 J'e``. If damping exceeds ``lam_max`` the step is
    rejected; with a non-finite current loss that is a divergence.
    ``linearization`` may pass a precomputed ``net.jacobian(x)``.
    """
    out, jac = net.jacobian(x) if linearization is None else linearization
    e = out - y
    mse = float(np.mean(e * e))
    w = net.params()
    while lam <= lam_max:
        try:
            delta = lm_solve(jac, e, lam)
        except np.linalg.LinAlgError:
            delta = None
        if delta is not None and np.all(np.isfinite(delta)):
            cand = PixelMlp.from_params(w - delta, net.in_count, net.hidden_count, net.rng_seed)
            r = cand.predict(x) - y
            cand_mse = float(np.mean(r * r))
            if np.isfinite(cand_mse) and cand_mse < mse:
                return LmStep(cand, lam / lam_down, cand_mse, True)
        lam *= lam_up
    if not np.isfinite(mse):
        raise TrainingDiverged(f"loss is {mse} and damping exceeded {lam_max:g}")
    return LmStep(net, lam, mse, False)


def split_chronological(ts: TrainingSet, cfg: TrainConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Index arrays (train, val). Validation rows whose input window reaches back
    into the training period are purged so no timestamp is shared."""
    n = len(ts)
    n_train = int(round(cfg.train_fraction * n))
    n_train = min(max(n_train, 1), n - 1)
    n_val_end = n_train + int(round(cfg.val_fraction * n))
    n_val_end = min(max(n_val_end, n_train + 1), n)
    last_train_time = ts.target_times[n_train - 1]
    val = np.arange(n_train, n_val_end)
    val = val[ts.input_start_times[val] > last_train_time]
    return np.arange(n_train), val


def train(series, cfg: TrainConfig = TrainConfig(), seed: int = 0,
          init: Optional[PixelMlp] = None) -> Tuple[PixelMlp, TrainReport]:
    """Fit one pixel's network with LM and validation early stopping.

    Stops after ``cfg.max_fail`` consecutive epochs without a new best
    validation MSE, at ``cfg.max_epochs``, when the gradient norm falls below
    1e-10, or when damping saturates ("lambda_max"). Returns the best
    validation-epoch weights.
    """
    if isinstance(series, PixelSeries) and series.kind != Kind.CLEAR_SKY_INDEX:
        raise ValueError(f"training expects a clear-sky-index series, got {series.kind.name}")
    data = build_training_set(series, cfg.in_count)
    if len(data) < 2:
        raise InsufficientDataError(f"only {len(data)} complete windows")
    tr, va = split_chronological(data, cfg)
    if va.size == 0:
        raise InsufficientDataError("no validation windows after the chronological split")
    xt, yt = data.inputs[tr], data.targets[tr]
    xv, yv = data.inputs[va], data.targets[va]

    net = init if init is not None else PixelMlp.initial(cfg.in_count, cfg.hidden_count, seed)

    def val_mse(m: PixelMlp) -> float:
        r = m.predict(xv) - yv
        return float(np.mean(r * r))

    with threadpool_limits(limits=1):
        best, best_val, best_epoch = net, val_mse(net), 0
        history = [best_val]
        lam = cfg.lm_lambda0
        fails = 0
        reason = "max_epochs"
        epoch = 0
        while epoch < cfg.max_epochs:
            out, jac = net.jacobian(xt)
            grad = jac.T @ (out - yt)
            if not np.all(np.isfinite(grad)):
                raise TrainingDiverged("non-finite gradient")
            if float(np.linalg.norm(grad)) < GRAD_TOL:
                reason = "min_grad"
                break
            step = lm_step(net, xt, yt, lam, cfg.lm_lambda_up, cfg.lm_lambda_down,
                           linearization=(out, jac))
            if not step.accepted:
                reason = "lambda_max"
                break
            epoch += 1
            net, lam = step.net, step.lam
            v = val_mse(net)
            history.append(v)
            if v < best_val:
                best, best_val, best_epoch, fails = net, v, epoch, 0
            else:
                fails += 1
                if fails >= cfg.max_fail:
                    reason = "max_fail"
                    break
        r = best.predict(xt) - yt
        report = TrainReport(float(np.mean(r * r)), best_val, epoch, best_epoch, reason,
                             int(tr.size), int(va.size), history)
    best.rng_seed = seed
    return best, report


def pixel_seed(global_seed: int, pixel_index: int) -> int:
    return (int(global_seed) ^ int(pixel_index)) & 0xFFFFFFFFFFFFFFFF


# -- model bundle ---------------------------------------------------------------

BUNDLE_MAGIC = "SSIMLP1"


@dataclass
class ModelBundle:
    """Per-pixel networks on a grid; ``models[k]`` is pixel k in row-major order
    (None where training was impossible)."""

    height: int
    width: int
    in_count: int
    hidden_count: int
    seed: int
    train_start: int
    train_end: int
    models: List[Optional[PixelMlp]]

    def stacked(self) -> Dict[str, np.ndarray]:
        """Weights as arrays with a leading pixel axis; untrained pixels are NaN."""
        p = self.hidden_count * (self.in_count + 2) + 1
        flat = np.full((len(self.models), p), np.nan)
        for k, m in enumerate(self.models):
            if m is not None:
                flat[k] = m.params()
        h, n = self.hidden_count, self.in_count
        return {
            "w1": flat[:, :h * n].reshape(-1, h, n),
            "b1": flat[:, h * n:h * n + h],
            "w2": flat[:, h * n + h:h * n + 2 * h],
            "b2": flat[:, -1],
        }


def write_bundle(bundle: ModelBundle, path) -> None:
    header = [
        BUNDLE_MAGIC,
        f"height={bundle.height}",
        f"width={bundle.width}",
        f"in_count={bundle.in_count}",
        f"hidden_count={bundle.hidden_count}",
        f"seed={bundle.seed}",
        f"train_start={bundle.train_start}",
        f"train_end={bundle.train_end}",
        "end_header",
    ]
    p = bundle.hidden_count * (bundle.in_count + 2) + 1
    buf = io.BytesIO()
    buf.write(("\n".join(header) + "\n").encode("ascii"))
    for m in bundle.models:
        # block: trained flag, per-pixel seed (u64 bits), then the flattened parameters
        if m is None:
            block = np.full(p + 2, np.nan)
            block[0] = 0.0
        else:
            seed_bits = np.array([m.rng_seed], dtype=np.uint64).view(np.float64)
            block = np.concatenate([[1.0], seed_bits, m.params()])
        buf.write(block.astype("<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_bundle(path) -> ModelBundle:
    data = Path(path).read_bytes()
    marker = b"end_header\n"
    end = data.find(marker)
    if not data.startswith(BUNDLE_MAGIC.encode()) or end < 0:
        raise ValueError(f"{path}: not a model bundle")
    meta = {}
    for line in data[:end].decode("ascii").splitlines()[1:]:
        k, v = line.split("=", 1)
        meta[k] = int(v)
    h, w = meta["height"], meta["width"]
    n_in, n_hid = meta["in_count"], meta["hidden_count"]
    p = n_hid * (n_in + 2) + 1
    raw = np.frombuffer(data, dtype="<f8", offset=end + len(marker))
    if raw.size != h * w * (p + 2):
        raise ValueError(f"{path}: expected {h * w} weight blocks of {p + 2} values, got {raw.size} values")
    blocks = raw.reshape(h * w, p + 2)
    models: List[Optional[PixelMlp]] = []
    for b in blocks:
        if b[0] == 1.0:
            seed = int(b[1:2].view(np.uint64)[0])
            models.append(PixelMlp.from_params(b[2:], n_in, n_hid, seed))
        else:
            models.append(None)
    return ModelBundle(h, w, n_in, n_hid, meta["seed"], meta["train_start"], meta["train_end"], models)
