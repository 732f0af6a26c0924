"""Analytic gradients of the Norm-in-Norm loss w.r.t. the predictions, plus a
central finite-difference oracle for checking them."""

from dataclasses import dataclass

import mpmath
import numpy as np

from .loss import LossParams, _pair, norm_in_norm, normalization_factor, normalized_correlation, variant_loss
from .scorestats import NormalizedBatch, normalize

KINK_BAND = 1e-4
FD_STEP = 1e-6
ORACLE_DIGITS = 40


@dataclass(frozen=True)
class RTerms:
    R: np.ndarray
    mu_R: float


def r_terms(normalized_pred: NormalizedBatch, q) -> RTerms:
    """R_j = |S_j|^(q-1) sign(S_j), with sign(0) = 0, and its mean."""
    s = normalized_pred.values
    if q == 2:
        R = s.copy()
    elif q == 1:
        R = np.sign(s)
    else:
        R = np.abs(s) ** (q - 1) * np.sign(s)
    return RTerms(R=R, mu_R=float(R.mean()))


def _dl_dS_residual(r, p, c):
    if p == 2:
        return (2.0 / c) * r
    if p == 1:
        return np.sign(r) / c
    return (p / c) * np.abs(r) ** (p - 1) * np.sign(r)


def dl_dS(normalized_pred: NormalizedBatch, normalized_label: NormalizedBatch, p, c):
    """Gradient of the loss w.r.t. the normalized predictions."""
    return _dl_dS_residual(normalized_pred.values - normalized_label.values, p, c)


def project(g, normalized_pred: NormalizedBatch, q):
    """Pull a gradient w.r.t. the normalized predictions back to the raw predictions.

    Vectorized form: (1/b) {g - mean(g) 1 - R <g,S> + mu_R <g,S> 1}.
    """
    s = normalized_pred.values
    rt = r_terms(normalized_pred, q)
    # <R, S> = ||S||_q^q = 1 in exact arithmetic; dividing by the computed value
    # makes g = k R project to exactly zero (flat regions when p = q = 1).
    gs = float(np.dot(g, s)) / float(np.dot(rt.R, s))
    out = (g - g.mean()) - (rt.R - rt.mu_R) * gs
    return out / normalized_pred.stats.centered_norm


def normalization_jacobian(normalized_pred: NormalizedBatch, q):
    """J[i, j] = d S_i / d Q_j, built entry by entry."""
    s = normalized_pred.values
    rt = r_terms(normalized_pred, q)
    n = s.size
    J = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            J[i, j] = (i == j) - 1.0 / n - s[i] * rt.R[j] + s[i] * rt.mu_R
    return J / normalized_pred.stats.centered_norm


def loss_gradient(pred, label, params=LossParams()):
    x, y = _pair(pred, label)
    sp = normalize(x, params.q, params.tol)
    sl = normalize(y, params.q, params.tol)
    c = normalization_factor(x.size, params.p, params.q)
    return project(dl_dS(sp, sl, params.p, c), sp, params.q)


def loss_gradient_per_entry(pred, label, params=LossParams()):
    """Same gradient as loss_gradient, via an explicit Jacobian-transpose product."""
    x, y = _pair(pred, label)
    sp = normalize(x, params.q, params.tol)
    sl = normalize(y, params.q, params.tol)
    c = normalization_factor(x.size, params.p, params.q)
    g = dl_dS(sp, sl, params.p, c)
    J = normalization_jacobian(sp, params.q)
    n = x.size
    return np.array([sum(g[i] * J[i, j] for i in range(n)) for j in range(n)])


def variant_gradient(pred, label, params=LossParams()):
    """Gradient of the variant loss with the correlation factor held constant."""
    x, y = _pair(pred, label)
    sp = normalize(x, params.q, params.tol)
    sl = normalize(y, params.q, params.tol)
    c = normalization_factor(x.size, params.p, params.q)
    rho = normalized_correlation(sp.values, sl.values)
    g = rho * _dl_dS_residual(rho * sp.values - sl.values, params.p, c)
    return project(g, sp, params.q)


def combined_gradient(pred, label, params=LossParams()):
    g = loss_gradient(pred, label, params)
    if params.variant_weight == 0:
        return g
    return g + params.variant_weight * variant_gradient(pred, label, params)


def finite_diff_gradient(pred, label, params=LossParams(), h=FD_STEP, loss_fn=None,
                         precision=None, rho=None):
    """Central differences with per-coordinate step h * max(1, |x_j|).

    With ``precision=None`` the loss module is evaluated in float64;
    ``loss_fn(pred, label, params) -> float`` may replace the default
    Norm-in-Norm objective. With an integer ``precision`` (decimal digits)
    the forward is re-evaluated by ``mp_loss`` instead, which removes the
    ~1e-10 absolute round-off floor of float64 differencing; ``rho`` then
    selects the variant objective with that fixed correlation.
    """
    x, y = _pair(pred, label)
    if not h > 0:
        raise ValueError(f"h must be positive, got {h}")
    if precision is not None:
        return _mp_finite_diff(x, y, params, h, precision, rho)
    if loss_fn is None:
        loss_fn = lambda a, b, prm: norm_in_norm(a, b, prm).value
    out = np.empty_like(x)
    for j in range(x.size):
        step = h * max(1.0, abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        # divide by the representable step, not the nominal one
        out[j] = (loss_fn(xp, y, params) - loss_fn(xm, y, params)) / (xp[j] - xm[j])
    return out


def mp_loss(x, y, p, q, rho=None):
    """Norm-in-Norm value (or, with ``rho``, the variant with that fixed
    correlation) evaluated on mpmath numbers at the current working precision.
    ``rho="auto"`` uses the correlation of the inputs."""
    n = len(x)

    def norm(v):
        a = mpmath.mpf(0)
        for t in v:
            a += abs(t) ** q
        return mpmath.sqrt(a) if q == 2 else a ** (mpmath.mpf(1) / q)

    def unit(v):
        m = mpmath.fsum(v) / n
        cen = [t - m for t in v]
        b = norm(cen)
        return [t / b for t in cen]

    s_hat = unit(x)
    s = unit(y)
    if rho == "auto":
        rho = mpmath.fdot(s_hat, s) / mpmath.sqrt(mpmath.fdot(s_hat, s_hat) * mpmath.fdot(s, s))
    if rho is not None:
        s_hat = [mpmath.mpf(rho) * t for t in s_hat]
    c = mpmath.mpf(normalization_factor(n, p, q))
    return mpmath.fsum(abs(a - b) ** p for a, b in zip(s_hat, s)) / c


def _mp_finite_diff(x, y, params, h, digits, rho):
    out = np.empty_like(x)
    with mpmath.workdps(digits):
        xs = [mpmath.mpf(float(t)) for t in x]
        ys = [mpmath.mpf(float(t)) for t in y]
        for j in range(x.size):
            step = mpmath.mpf(h * max(1.0, abs(x[j])))
            xp = list(xs)
            xm = list(xs)
            xp[j] += step
            xm[j] -= step
            diff = mp_loss(xp, ys, params.p, params.q, rho) - mp_loss(xm, ys, params.p, params.q, rho)
            out[j] = float(diff / (2 * step))
    return out


def frozen_variant_fn(pred, label, params):
    """Variant forward with the correlation frozen at its value for (pred, label)."""
    rho = variant_loss(pred, label, params).rho_hat
    return lambda a, b, prm: variant_loss(a, b, prm, rho=rho).value


def kink_mask(pred, label, params=LossParams(), band=KINK_BAND, rho=1.0):
    """True for coordinates sitting within ``band`` of a non-differentiable point.

    ``rho`` scales the normalized predictions in the residual, as in the variant loss.
    """
    x, y = _pair(pred, label)
    sp = normalize(x, params.q, params.tol).values
    sl = normalize(y, params.q, params.tol).values
    mask = np.zeros(x.size, dtype=bool)
    if params.p == 1:
        mask |= np.abs(rho * sp - sl) < band
    if params.q == 1:
        mask |= np.abs(sp) < band
    return mask


def relative_errors(analytic, numeric):
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-12)
    return np.abs(a - n) / denom


def gradient_check(pred, label, params=LossParams(), h=FD_STEP, precision=ORACLE_DIGITS):
    """Max relative error between loss_gradient and central differences,
    skipping coordinates at kinks. ``precision=None`` uses float64 differencing."""
    analytic = loss_gradient(pred, label, params)
    numeric = finite_diff_gradient(pred, label, params, h, precision=precision)
    keep = ~kink_mask(pred, label, params)
    if not keep.any():
        return 0.0
    return float(relative_errors(analytic[keep], numeric[keep]).max())


def variant_gradient_check(pred, label, params=LossParams(), h=FD_STEP, precision=ORACLE_DIGITS):
    """Same as gradient_check for the variant loss with its correlation frozen."""
    analytic = variant_gradient(pred, label, params)
    rho = variant_loss(pred, label, params).rho_hat
    if precision is None:
        numeric = finite_diff_gradient(pred, label, params, h, loss_fn=frozen_variant_fn(pred, label, params))
    else:
        numeric = finite_diff_gradient(pred, label, params, h, precision=precision, rho=rho)
    keep = ~kink_mask(pred, label, params, rho=rho)
    if not keep.any():
        return 0.0
    return float(relative_errors(analytic[keep], numeric[keep]).max())
