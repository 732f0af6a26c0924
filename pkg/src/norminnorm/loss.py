"""Forward evaluation of the Norm-in-Norm loss, its variant, and MAE/MSE baselines."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidBatchSize, InvalidExponent, LengthMismatch
from .scorestats import DEFAULT_TOL, NormalizedBatch, as_batch, normalize


@dataclass(frozen=True)
class LossParams:
    p: float = 1.0
    q: float = 2.0
    tol: float = DEFAULT_TOL
    variant_weight: float = 0.1

    def __post_init__(self):
        if not (self.p >= 1 and self.q >= 1):
            raise InvalidExponent(f"need p >= 1 and q >= 1, got p={self.p}, q={self.q}")
        if not self.tol > 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if not self.variant_weight >= 0:
            raise ValueError(f"variant_weight must be nonnegative, got {self.variant_weight}")


@dataclass(frozen=True)
class LossOutput:
    value: float
    c: float
    pred_normalized: NormalizedBatch
    label_normalized: NormalizedBatch
    rho_hat: Optional[float] = None


def normalization_factor(N, p, q):
    """Largest possible value of sum |S_hat - S|^p over unit-L^q-norm pairs."""
    if int(N) != N or N < 2:
        raise InvalidBatchSize(f"N must be an integer >= 2, got {N}")
    if not (p >= 1 and q >= 1):
        raise InvalidExponent(f"need p >= 1 and q >= 1, got p={p}, q={q}")
    if p < q:
        return 2.0 ** p * float(N) ** (1.0 - p / q)
    return 2.0 ** p


def _pair(pred, label):
    x = as_batch(pred, "pred")
    y = as_batch(label, "label")
    if x.shape != y.shape:
        raise LengthMismatch(f"pred has {x.size} entries, label has {y.size}")
    return x, y


def _power_sum(r, p):
    a = np.abs(r)
    if p == 1:
        return float(a.sum())
    if p == 2:
        return float(np.dot(a, a))
    return float(np.sum(a ** p))


def normalized_correlation(s_hat, s):
    """Pearson correlation of two already-centered vectors."""
    return float(np.dot(s_hat, s) / np.sqrt(np.dot(s_hat, s_hat) * np.dot(s, s)))


def norm_in_norm(pred, label, params=LossParams()):
    x, y = _pair(pred, label)
    sp = normalize(x, params.q, params.tol)
    sl = normalize(y, params.q, params.tol)
    c = normalization_factor(x.size, params.p, params.q)
    value = _power_sum(sp.values - sl.values, params.p) / c
    return LossOutput(value=value, c=c, pred_normalized=sp, label_normalized=sl)


def variant_loss(pred, label, params=LossParams(), rho=None):
    """Loss after rescaling the normalized predictions by their correlation with the labels.

    ``rho`` overrides the computed correlation; the gradient module uses this to
    evaluate the forward with the correlation held fixed.
    """
    x, y = _pair(pred, label)
    sp = normalize(x, params.q, params.tol)
    sl = normalize(y, params.q, params.tol)
    c = normalization_factor(x.size, params.p, params.q)
    rho_hat = normalized_correlation(sp.values, sl.values) if rho is None else float(rho)
    value = _power_sum(rho_hat * sp.values - sl.values, params.p) / c
    return LossOutput(value=value, c=c, pred_normalized=sp, label_normalized=sl, rho_hat=rho_hat)


def combined_loss(pred, label, params=LossParams()):
    base = norm_in_norm(pred, label, params).value
    if params.variant_weight == 0:
        return base
    return base + params.variant_weight * variant_loss(pred, label, params).value


def _residuals(pred, label):
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(label, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"pred has shape {x.shape}, label has shape {y.shape}")
    return x - y


def mae(pred, label):
    return float(np.mean(np.abs(_residuals(pred, label))))


def mse(pred, label):
    d = _residuals(pred, label)
    return float(np.dot(d, d) / d.size)
