"""Desk-scale training loop for comparing losses on small regressors.

Models are plain numpy: a linear map or a one-hidden-layer tanh MLP, with
hand-written backward passes. A run is deterministic given its seed.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import calibration
from .calibration import CalibrationLine
from .errors import DegenerateBatch, DimensionMismatch, InvalidSpec
from .gradients import loss_gradient, project, _dl_dS_residual
from .loss import LossParams, normalization_factor, normalized_correlation
from .scorestats import _lp, normalize

log = logging.getLogger(__name__)

LOSS_KINDS = ("norm_in_norm", "variant", "combined", "mae", "mse")
NORM_KINDS = ("norm_in_norm", "variant", "combined")
OPTIMIZERS = ("sgd", "adam")
MODEL_KINDS = ("linear", "mlp1")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


# --------------------------------------------------------------------------- models


@dataclass
class ToyModel:
    kind: str
    dim: int
    params: np.ndarray
    hidden: int = 16

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise InvalidSpec(f"unknown model kind {self.kind!r}")
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (param_count(self.kind, self.dim, self.hidden),):
            raise DimensionMismatch(
                f"{self.kind} with d={self.dim}, h={self.hidden} needs "
                f"{param_count(self.kind, self.dim, self.hidden)} parameters, got {self.params.size}"
            )

    def unpack(self, theta=None):
        theta = self.params if theta is None else theta
        d, h = self.dim, self.hidden
        if self.kind == "linear":
            return theta[:d], theta[d]
        W1 = theta[: d * h].reshape(d, h)
        b1 = theta[d * h : d * h + h]
        w2 = theta[d * h + h : d * h + 2 * h]
        return W1, b1, w2, theta[-1]


def param_count(kind, dim, hidden=16):
    if kind == "linear":
        return dim + 1
    return dim * hidden + 2 * hidden + 1


def init_model(kind, dim, rng, hidden=16):
    """Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] per layer."""
    if kind == "linear":
        bound = 1.0 / math.sqrt(dim)
        theta = rng.uniform(-bound, bound, dim + 1)
    elif kind == "mlp1":
        b_in = 1.0 / math.sqrt(dim)
        b_out = 1.0 / math.sqrt(hidden)
        theta = np.concatenate([
            rng.uniform(-b_in, b_in, dim * hidden + hidden),
            rng.uniform(-b_out, b_out, hidden + 1),
        ])
    else:
        raise InvalidSpec(f"unknown model kind {kind!r}")
    return ToyModel(kind=kind, dim=dim, params=theta, hidden=hidden)


def _check_features(model, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.dim:
        raise DimensionMismatch(f"model expects (N, {model.dim}) features, got {X.shape}")
    return X


def _forward(model, X, theta):
    if model.kind == "linear":
        w, w0 = model.unpack(theta)
        return X @ w + w0, None
    W1, b1, w2, b2 = model.unpack(theta)
    A = np.tanh(X @ W1 + b1)
    return A @ w2 + b2, A


def _backward(model, X, theta, cache, g):
    if model.kind == "linear":
        return np.concatenate([X.T @ g, [g.sum()]])
    _, _, w2, _ = model.unpack(theta)
    A = cache
    dZ = np.outer(g, w2) * (1.0 - A * A)
    return np.concatenate([(X.T @ dZ).ravel(), dZ.sum(axis=0), A.T @ g, [g.sum()]])


def model_forward(model, features):
    X = _check_features(model, features)
    return _forward(model, X, model.params)[0]


def model_backward(model, features, dl_dpred):
    """Gradient of an objective w.r.t. the flat parameter vector, given its
    gradient w.r.t. the predictions."""
    X = _check_features(model, features)
    g = np.asarray(dl_dpred, dtype=np.float64)
    if g.shape != (X.shape[0],):
        raise DimensionMismatch(f"need {X.shape[0]} prediction gradients, got shape {g.shape}")
    _, cache = _forward(model, X, model.params)
    return _backward(model, X, model.params, cache, g)


# ----------------------------------------------------------------------- optimizers


@dataclass
class OptimizerState:
    kind: str
    t: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None


def optimizer_step(state, params, grads, lr):
    """One SGD or Adam update. Returns (new_params, new_state); inputs are not mutated."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise DimensionMismatch(f"params {params.shape} vs grads {grads.shape}")
    if state.kind == "sgd":
        return params - lr * grads, replace(state, t=state.t + 1)
    if state.kind != "adam":
        raise InvalidSpec(f"unknown optimizer {state.kind!r}")
    t = state.t + 1
    m = np.zeros_like(params) if state.m is None else state.m
    v = np.zeros_like(params) if state.v is None else state.v
    m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * grads
    v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * grads * grads
    m_hat = m / (1 - ADAM_BETA1 ** t)
    v_hat = v / (1 - ADAM_BETA2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return new, OptimizerState(kind="adam", t=t, m=m, v=v)


# -------------------------------------------------------------------------- config


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "norm_in_norm"
    loss_params: LossParams = LossParams()
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    lr_decay: Optional[tuple] = None  # (factor, every_k_epochs); None -> (0.1, ceil(epochs/3))
    batch_size: int = 16
    epochs: int = 30
    seed: int = 0
    model_kind: str = "mlp1"
    hidden: int = 16
    check_gradients: bool = True

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise InvalidSpec(f"loss_kind must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidSpec(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.model_kind not in MODEL_KINDS:
            raise InvalidSpec(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if self.batch_size < 2:
            raise InvalidSpec("batch_size must be >= 2")
        if self.epochs < 0:
            raise InvalidSpec("epochs must be >= 0")
        if not self.learning_rate > 0:
            raise InvalidSpec("learning_rate must be positive")

    def decay(self):
        if self.lr_decay is not None:
            return self.lr_decay
        return 0.1, max(1, math.ceil(self.epochs / 3))

    def lr_at(self, epoch):
        """Learning rate for 1-based ``epoch``."""
        factor, every = self.decay()
        return self.learning_rate * factor ** ((epoch - 1) // every)


# ---------------------------------------------------------------------------- data


@dataclass
class Dataset:
    features: np.ndarray
    mos: np.ndarray
    split: np.ndarray  # strings: train / val / test

    def part(self, name):
        idx = np.flatnonzero(self.split == name)
        return self.features[idx], self.mos[idx]


# ------------------------------------------------------------------------ logging


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    plcc: float
    srocc: float
    rmse: float
    b_hat: float


@dataclass
class DivergenceEvent:
    epoch: int
    step: int
    reason: str


@dataclass
class ConvergenceLog:
    config: TrainConfig
    records: list = field(default_factory=list)
    calibration: Optional[CalibrationLine] = None
    best_epoch: Optional[int] = None
    best_params: Optional[np.ndarray] = None
    initial_params: Optional[np.ndarray] = None
    degenerate_batches: int = 0
    divergence: Optional[DivergenceEvent] = None
    test_metrics: Optional[dict] = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def diverged(self):
        return self.divergence is not None

    def series(self, metric):
        return [getattr(r, metric) for r in self.records]


# ------------------------------------------------------------------------- objective


def objective(kind, pred, label, params):
    """(value, d value / d pred, b_hat) for one batch.

    b_hat is the centered L^q norm of the predictions; baselines report it too as a
    diagnostic. Raises DegenerateBatch for the batch-normalized kinds.
    """
    if kind in ("mae", "mse"):
        d = pred - label
        b_hat = _lp(pred - pred.mean(), params.q)
        if kind == "mae":
            return float(np.mean(np.abs(d))), np.sign(d) / d.size, b_hat
        return float(np.dot(d, d) / d.size), 2.0 * d / d.size, b_hat
    p, q = params.p, params.q
    sp = normalize(pred, q, params.tol)
    sl = normalize(label, q, params.tol)
    c = normalization_factor(pred.size, p, q)
    s_hat, s = sp.values, sl.values
    value = 0.0
    g = np.zeros(pred.size)
    if kind in ("norm_in_norm", "combined"):
        r = s_hat - s
        value += float(np.sum(np.abs(r) ** p)) / c
        g += _dl_dS_residual(r, p, c)
    if kind in ("variant", "combined"):
        w = 1.0 if kind == "variant" else params.variant_weight
        rho = normalized_correlation(s_hat, s)
        r = rho * s_hat - s
        value += w * float(np.sum(np.abs(r) ** p)) / c
        g += w * rho * _dl_dS_residual(r, p, c)
    return value, project(g, sp, q), sp.stats.centered_norm


# ------------------------------------------------------------------------- training


def _evaluate(model, theta, X_train, y_train, X_eval, y_eval):
    """Fit LSR on the training predictions, then score calibrated eval predictions."""
    train_pred = _forward(model, X_train, theta)[0]
    line = calibration.lsr_fit(train_pred, y_train)
    raw = _forward(model, X_eval, theta)[0]
    cal = calibration.apply_calibration(line, raw)
    plcc = calibration.plcc(cal, y_eval)
    raw_plcc = calibration.plcc(raw, y_eval)
    return line, {
        "plcc": plcc,
        "srocc": calibration.srocc(cal, y_eval),
        "rmse": calibration.rmse(cal, y_eval),
    }, abs(raw_plcc - math.copysign(1.0, line.k1) * plcc)


def composed_gradient_error(model, X, y, params=LossParams(p=2, q=2), h=1e-6):
    """Norm-wise relative error between model_backward(loss_gradient) and central
    differences of the full objective on the parameters."""
    theta = model.params
    pred = _forward(model, X, theta)[0]
    analytic = model_backward(model, X, loss_gradient(pred, y, params))
    numeric = np.empty_like(theta)

    def f(t):
        return objective("norm_in_norm", _forward(model, X, t)[0], y, params)[0]

    for k in range(theta.size):
        step = h * max(1.0, abs(theta[k]))
        tp = theta.copy()
        tm = theta.copy()
        tp[k] += step
        tm[k] -= step
        numeric[k] = (f(tp) - f(tm)) / (tp[k] - tm[k])
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-300)
    return float(np.linalg.norm(analytic - numeric) / den)


def train(dataset, config):
    """Shuffled mini-batch training with per-epoch LSR calibration and validation.

    Keeps the parameters with the best validation SROCC. Non-finite losses stop
    the run and are recorded in ``log.divergence`` rather than raised.
    """
    X_train, y_train = dataset.part("train")
    X_val, y_val = dataset.part("val")
    if len(y_train) == 0 or len(y_val) == 0:
        raise InvalidSpec("train and val splits must be non-empty")
    if config.batch_size > len(y_train):
        raise InvalidSpec(f"batch_size {config.batch_size} exceeds train size {len(y_train)}")

    rng = np.random.default_rng(config.seed)
    model = init_model(config.model_kind, X_train.shape[1], rng, config.hidden)
    theta = model.params.copy()
    state = OptimizerState(kind=config.optimizer)
    run_log = ConvergenceLog(config=config, initial_params=theta.copy(), best_params=theta.copy())
    kind, params = config.loss_kind, config.loss_params
    norm_kind = kind in NORM_KINDS
    n_train = len(y_train)

    if config.check_gradients and config.epochs > 0:
        m = min(n_train, max(config.batch_size, 8))
        try:
            err = composed_gradient_error(model, X_train[:m], y_train[:m])
            run_log.diagnostics["composed_gradient_rel_error"] = err
            if err > 1e-6:
                log.warning("composed gradient check: relative error %.3e", err)
        except DegenerateBatch:
            pass

    best_srocc = -math.inf
    step = 0
    scale_diff = 0.0
    plcc_gap = 0.0
    for epoch in range(1, config.epochs + 1):
        lr = config.lr_at(epoch)
        order = rng.permutation(n_train)
        losses = []
        b_hats = []
        for start in range(0, n_train, config.batch_size):
            idx = order[start : start + config.batch_size]
            if idx.size < 2:
                continue
            Xb, yb = X_train[idx], y_train[idx]
            pred, cache = _forward(model, Xb, theta)
            if not np.all(np.isfinite(pred)):
                run_log.divergence = DivergenceEvent(epoch, step, "non-finite predictions")
                break
            try:
                value, g, b_hat = objective(kind, pred, yb, params)
            except DegenerateBatch:
                run_log.degenerate_batches += 1
                continue
            if not math.isfinite(value) or not np.all(np.isfinite(g)):
                run_log.divergence = DivergenceEvent(epoch, step, "non-finite loss")
                break
            if norm_kind and epoch == 1:
                scaled = objective(kind, pred, yb * 100.0, params)[0]
                scale_diff = max(scale_diff, abs(scaled - value))
            losses.append(value)
            b_hats.append(b_hat)
            grad = _backward(model, Xb, theta, cache, g)
            theta, state = optimizer_step(state, theta, grad, lr)
            step += 1
        if run_log.divergence is not None:
            break
        if not np.all(np.isfinite(theta)):
            run_log.divergence = DivergenceEvent(epoch, step, "non-finite parameters")
            break
        try:
            _, metrics, gap = _evaluate(model, theta, X_train, y_train, X_val, y_val)
        except DegenerateBatch:
            run_log.divergence = DivergenceEvent(epoch, step, "constant predictions on the training set")
            break
        plcc_gap = max(plcc_gap, gap)
        run_log.records.append(EpochRecord(
            epoch=epoch,
            loss=float(np.mean(losses)) if losses else math.nan,
            plcc=metrics["plcc"],
            srocc=metrics["srocc"],
            rmse=metrics["rmse"],
            b_hat=float(np.mean(b_hats)) if b_hats else math.nan,
        ))
        log.debug("epoch %d loss %.5f plcc %.4f srocc %.4f", epoch, run_log.records[-1].loss,
                  metrics["plcc"], metrics["srocc"])
        if metrics["srocc"] > best_srocc:
            best_srocc = metrics["srocc"]
            run_log.best_epoch = epoch
            run_log.best_params = theta.copy()

    if norm_kind and config.epochs > 0:
        run_log.diagnostics["label_scale_max_abs_diff"] = scale_diff
    run_log.diagnostics["raw_vs_calibrated_plcc_max_gap"] = plcc_gap

    final = run_log.best_params
    X_test, y_test = dataset.part("test")
    try:
        line = calibration.lsr_fit(_forward(model, X_train, final)[0], y_train)
        run_log.calibration = line
        if len(y_test) >= 2:
            _, metrics, _ = _evaluate(model, final, X_train, y_train, X_test, y_test)
            run_log.test_metrics = metrics
    except DegenerateBatch:
        pass
    return run_log


def trained_model(run_log, dim):
    """Rebuild the best model from a log."""
    cfg = run_log.config
    return ToyModel(kind=cfg.model_kind, dim=dim, params=run_log.best_params.copy(), hidden=cfg.hidden)


def epochs_to_threshold(records, metric, threshold):
    """First 1-based epoch whose metric reaches the threshold (>= for correlations,
    <= for RMSE); None if never."""
    if isinstance(records, ConvergenceLog):
        values = records.series(metric)
    else:
        values = [getattr(r, metric) if isinstance(r, EpochRecord) else r for r in records]
    if not values:
        raise ValueError("empty log")
    for i, v in enumerate(values, start=1):
        if metric == "rmse":
            if v <= threshold:
                return i
        elif v >= threshold:
            return i
    return None
