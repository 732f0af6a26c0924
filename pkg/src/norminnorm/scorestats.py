"""Batch statistics, L^q normalization and L^p norm utilities."""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBatch, InvalidBatchSize, InvalidExponent, NonFiniteInput

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class BatchStats:
    mean: float
    centered_norm: float
    q: float


@dataclass(frozen=True)
class NormalizedBatch:
    values: np.ndarray
    stats: BatchStats


def as_batch(scores, name="scores"):
    """Coerce to a 1-D float64 array and enforce the score-batch invariants."""
    x = np.asarray(scores, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidBatchSize(f"{name} must be one-dimensional, got shape {x.shape}")
    if x.size < 2:
        raise InvalidBatchSize(f"{name} needs at least 2 entries, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput(f"{name} contains NaN or Inf")
    return x


def _check_exponent(value, name, minimum=1.0):
    if not np.isfinite(value) or value < minimum:
        raise InvalidExponent(f"{name} must be >= {minimum}, got {value}")


def lp_norm(vec, p):
    """(sum |x_i|^p)^(1/p) for p >= 1."""
    _check_exponent(p, "p")
    x = np.asarray(vec, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("vector contains NaN or Inf")
    return _lp(x, p)


def _lp(x, p):
    # No validation; callers guarantee p > 0 and finite x.
    a = np.abs(x)
    if p == 1:
        return float(a.sum())
    if p == 2:
        ss = float(np.dot(a, a))
        if 1e-280 < ss < 1e280:
            return float(np.sqrt(ss))
    # Rescale by the max entry so squaring cannot underflow or overflow.
    m = a.max() if a.size else 0.0
    if m == 0.0:
        return 0.0
    return float(m * np.sum((a / m) ** p) ** (1.0 / p))


def batch_stats(scores, q):
    """Mean and L^q norm of the centered scores."""
    _check_exponent(q, "q")
    x = as_batch(scores)
    mean = float(x.mean())
    return BatchStats(mean=mean, centered_norm=_lp(x - mean, q), q=float(q))


def normalize(scores, q, tol=DEFAULT_TOL):
    """Center by the mean and divide by the centered L^q norm.

    Raises DegenerateBatch when the centered norm is at or below ``tol``.
    """
    _check_exponent(q, "q")
    x = as_batch(scores)
    mean = float(x.mean())
    centered = x - mean
    norm = _lp(centered, q)
    if norm <= tol:
        raise DegenerateBatch(f"centered norm {norm:.3e} <= tol {tol:.3e}")
    return NormalizedBatch(values=centered / norm, stats=BatchStats(mean, norm, float(q)))


@dataclass(frozen=True)
class NormInequality:
    holds: bool
    lower_slack: float
    upper_slack: float


def norm_inequality_holds(vec, p1, p2):
    """Check ||x||_p2 <= ||x||_p1 <= N^(1/p1 - 1/p2) ||x||_p2.

    Slacks are ``||x||_p1 - ||x||_p2`` and ``N^(1/p1-1/p2)||x||_p2 - ||x||_p1``;
    both are nonnegative when the inequality holds.
    """
    if not p1 > 0:
        raise InvalidExponent(f"p1 must be positive, got {p1}")
    if p2 < p1:
        raise InvalidExponent(f"need p1 <= p2, got p1={p1}, p2={p2}")
    x = np.asarray(vec, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise NonFiniteInput("vector contains NaN or Inf")
    n1 = _lp(x, p1)
    n2 = _lp(x, p2)
    upper = x.size ** (1.0 / p1 - 1.0 / p2) * n2
    lower_slack = n1 - n2
    upper_slack = upper - n1
    tol = 1e-12 * n2
    return NormInequality(
        holds=bool(lower_slack >= -tol and upper_slack >= -tol),
        lower_slack=float(lower_slack),
        upper_slack=float(upper_slack),
    )
