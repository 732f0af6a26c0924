"""Least-squares linear calibration and the PLCC / SROCC / RMSE criteria."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateBatch, InvalidExponent, LengthMismatch
from .scorestats import DEFAULT_TOL, as_batch


@dataclass(frozen=True)
class CalibrationLine:
    k1: float
    k2: float

    def __call__(self, pred):
        return apply_calibration(self, pred)


def _pair(x, y):
    x = as_batch(x, "x")
    y = as_batch(y, "y")
    if x.shape != y.shape:
        raise LengthMismatch(f"x has {x.size} entries, y has {y.size}")
    return x, y


def lsr_fit(pred, label, tol=DEFAULT_TOL):
    """Closed-form minimizer of sum (k1 * pred + k2 - label)^2."""
    x, y = _pair(pred, label)
    a_hat, a = x.mean(), y.mean()
    dx = x - a_hat
    sxx = float(np.dot(dx, dx))
    if math.sqrt(sxx) <= tol:
        raise DegenerateBatch("constant predictions: calibration slope undefined")
    k1 = float(np.dot(dx, y - a)) / sxx
    return CalibrationLine(k1=k1, k2=float(a - k1 * a_hat))


def apply_calibration(line, pred):
    return line.k1 * np.asarray(pred, dtype=np.float64) + line.k2


def plcc(x, y, tol=DEFAULT_TOL):
    x, y = _pair(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    nx = math.sqrt(float(np.dot(dx, dx)))
    ny = math.sqrt(float(np.dot(dy, dy)))
    if nx <= tol or ny <= tol:
        raise DegenerateBatch("correlation undefined for a constant input")
    r = float(np.dot(dx, dy)) / (nx * ny)
    return min(1.0, max(-1.0, r))


def srocc(x, y):
    """Pearson correlation of average (fractional) ranks."""
    x, y = _pair(x, y)
    rx = rankdata(x, method="average")
    ry = rankdata(y, method="average")
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        raise DegenerateBatch("all ranks tied")
    return plcc(rx, ry, tol=0.0)


def rmse(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise LengthMismatch(f"x has shape {x.shape}, y has shape {y.shape}")
    d = x - y
    return math.sqrt(float(np.dot(d, d)) / d.size)


def rmse_from_variant(b, l_prime, N, p=2, q=2):
    """RMSE of the LSR-calibrated predictions recovered from the p = q = 2 variant loss.

    ``b`` is the centered L2 norm of the labels.
    """
    if p != 2 or q != 2:
        raise InvalidExponent(f"the RMSE relation holds only for p = q = 2, got p={p}, q={q}")
    return math.sqrt(max(0.0, 4.0 * b * b * l_prime / N))
