"""Gradient-magnitude and Hessian-quadratic-form identities for q = 2.

Every quantity is computed two ways: directly from the gradient (or an
explicitly materialized Hessian) and from the closed-form scalar expansion.
Dense N x N matrices are built here only; training never forms them.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidExponent
from .gradients import dl_dS, loss_gradient
from .loss import LossParams, _pair, norm_in_norm, normalization_factor
from .scorestats import normalize


class _Undefined:
    """Ratio of two exact zeros (perfect fit: no gradient at all)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNDEFINED"

    def __bool__(self):
        return False


UNDEFINED = _Undefined()

# below this squared norm a gradient is rounding noise from an exact fit
_ZERO_GRAD_SQ = 1e-28


@dataclass(frozen=True)
class SmoothnessReport:
    b_hat: float
    rho: float
    lipschitz_lhs: Optional[float] = None
    lipschitz_rhs_terms: Optional[tuple] = None
    beta_lhs: Optional[float] = None
    beta_rhs: Optional[float] = None

    @property
    def lipschitz_rhs(self):
        g2, mean_term, corr_term = self.lipschitz_rhs_terms
        return (g2 - mean_term - corr_term) / self.b_hat ** 2


def _require_q2(q):
    if q != 2:
        raise InvalidExponent(f"smoothness identities need q = 2, got q={q}")


def _setup(pred, label, p):
    x, y = _pair(pred, label)
    params = LossParams(p=p, q=2)
    sp = normalize(x, 2, params.tol)
    sl = normalize(y, 2, params.tol)
    c = normalization_factor(x.size, p, 2)
    g = dl_dS(sp, sl, p, c)
    return x, y, params, sp, sl, c, g


def projection_matrix(s_hat):
    """K = I - (1/N) 11^T - S S^T for a unit-norm, zero-mean S."""
    s = np.asarray(s_hat, dtype=np.float64)
    n = s.size
    return np.eye(n) - np.full((n, n), 1.0 / n) - np.outer(s, s)


def loss_hessian_wrt_normalized(s_hat, s, p, c):
    """H = d^2 l / dS_hat^2 = diag(p(p-1)/c |S_hat - S|^(p-2))."""
    if not p > 1:
        raise InvalidExponent(f"Hessian w.r.t. normalized scores needs p > 1, got {p}")
    r = np.abs(np.asarray(s_hat) - np.asarray(s))
    if p == 2:
        d = np.full(r.size, 2.0 / c)
    else:
        d = p * (p - 1) / c * r ** (p - 2)
    return np.diag(d)


def hessian_wrt_predictions(s_hat, g, H, b_hat):
    """H_n = (1/b^2) (K H K - <g,S> K - S g^T K - K g S^T)."""
    K = projection_matrix(s_hat)
    gs = float(np.dot(g, s_hat))
    Kg = K @ g
    return (K @ H @ K - gs * K - np.outer(s_hat, Kg) - np.outer(Kg, s_hat)) / b_hat ** 2


def lipschitz_identity(pred, label, p=2, q=2):
    """Squared gradient norm, directly and via (1/b^2){|g|^2 - <1,g>^2/N - <g,S>^2}."""
    _require_q2(q)
    x, y, params, sp, sl, c, g = _setup(pred, label, p)
    g_n = loss_gradient(x, y, params)
    n = x.size
    b = sp.stats.centered_norm
    terms = (float(np.dot(g, g)), float(g.sum()) ** 2 / n, float(np.dot(g, sp.values)) ** 2)
    return SmoothnessReport(
        b_hat=b,
        rho=float(np.dot(sp.values, sl.values)),
        lipschitz_lhs=float(np.dot(g_n, g_n)),
        lipschitz_rhs_terms=terms,
    )


def beta_identity(pred, label, p=2, q=2):
    """g_n^T H_n g_n from the explicit Hessian versus its closed-form p = q = 2 expansion."""
    _require_q2(q)
    if p != 2:
        raise InvalidExponent(f"closed-form expansion needs p = 2, got {p}")
    x, y, params, sp, sl, c, g = _setup(pred, label, 2)
    s_hat, s = sp.values, sl.values
    b = sp.stats.centered_norm
    H = loss_hessian_wrt_normalized(s_hat, s, 2, c)
    H_n = hessian_wrt_predictions(s_hat, g, H, b)
    g_n = loss_gradient(x, y, params)
    lhs = float(g_n @ H_n @ g_n)

    rhs = (float(g @ H @ g) - reduction_term(g, s_hat, s, c)) / b ** 4
    return SmoothnessReport(b_hat=b, rho=float(np.dot(s, s_hat)), beta_lhs=lhs, beta_rhs=rhs)


def reduction_term(g, s_hat, s, c):
    """(2/c)(1-<S,S_hat>)[(4/c^2)(1-<S,S_hat>) + |g|^2 - <g,S_hat>^2]; nonnegative."""
    one_minus = 1.0 - float(np.dot(s, s_hat))
    gs = float(np.dot(g, s_hat))
    return (2.0 / c) * one_minus * ((4.0 / c ** 2) * one_minus + float(np.dot(g, g)) - gs ** 2)


def beta_intermediate(pred, label, p=2, q=2):
    """Both sides of g_n^T H_n g_n = (1/b^2){g_n^T H g_n - <g,S> |g_n|^2}, for p > 1."""
    _require_q2(q)
    if not p > 1:
        raise InvalidExponent(f"Hessian undefined at kinks for p <= 1, got {p}")
    x, y, params, sp, sl, c, g = _setup(pred, label, p)
    s_hat, s = sp.values, sl.values
    b = sp.stats.centered_norm
    H = loss_hessian_wrt_normalized(s_hat, s, p, c)
    H_n = hessian_wrt_predictions(s_hat, g, H, b)
    g_n = loss_gradient(x, y, params)
    lhs = float(g_n @ H_n @ g_n)
    rhs = (float(g_n @ H @ g_n) - float(np.dot(g, s_hat)) * float(np.dot(g_n, g_n))) / b ** 2
    return lhs, rhs


def finite_diff_hessian(pred, label, params=LossParams(p=2, q=2), h=1e-4):
    """Central second differences of the loss value with a fixed step."""
    x, y = _pair(pred, label)
    n = x.size

    def f(v):
        return norm_in_norm(v, y, params).value

    H = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            e_i = np.zeros(n)
            e_j = np.zeros(n)
            e_i[i] = h
            e_j[j] = h
            val = (f(x + e_i + e_j) - f(x + e_i - e_j) - f(x - e_i + e_j) + f(x - e_i - e_j)) / (4 * h * h)
            H[i, j] = H[j, i] = val
    return H


def explicit_hessian(pred, label, params=LossParams(p=2, q=2)):
    """H_n materialized for the given batch (q = 2, p > 1)."""
    _require_q2(params.q)
    x, y, _, sp, sl, c, g = _setup(pred, label, params.p)
    H = loss_hessian_wrt_normalized(sp.values, sl.values, params.p, c)
    return hessian_wrt_predictions(sp.values, g, H, sp.stats.centered_norm)


@dataclass(frozen=True)
class SmoothnessComparison:
    lipschitz_ratio: object
    beta_ratio: object
    b_hat: float
    grad_norm_sq: float
    normalized_grad_norm_sq: float


def _ratio(num, den):
    if abs(den) <= _ZERO_GRAD_SQ and abs(num) <= _ZERO_GRAD_SQ:
        return UNDEFINED
    return num / den


def smoothness_comparison(pred, label, params=LossParams(p=2, q=2)):
    """Normalized-over-unnormalized ratios of |grad|^2 and the Hessian quadratic form.

    Ratios below 1 mean the embedded normalization made the loss smoother.
    The beta ratio is UNDEFINED for p = 1 (no curvature away from kinks).
    """
    _require_q2(params.q)
    lip = lipschitz_identity(pred, label, params.p)
    g2 = lip.lipschitz_rhs_terms[0]
    lip_ratio = _ratio(lip.lipschitz_lhs, g2)
    beta_ratio = UNDEFINED
    if params.p > 1:
        x, y, _, sp, sl, c, g = _setup(pred, label, params.p)
        H = loss_hessian_wrt_normalized(sp.values, sl.values, params.p, c)
        H_n = hessian_wrt_predictions(sp.values, g, H, sp.stats.centered_norm)
        g_n = loss_gradient(x, y, LossParams(p=params.p, q=2))
        if g2 > _ZERO_GRAD_SQ:
            beta_ratio = float(g_n @ H_n @ g_n) / float(g @ H @ g)
    return SmoothnessComparison(
        lipschitz_ratio=lip_ratio,
        beta_ratio=beta_ratio,
        b_hat=lip.b_hat,
        grad_norm_sq=g2,
        normalized_grad_norm_sq=lip.lipschitz_lhs,
    )
