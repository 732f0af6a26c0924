"""Randomized verification suite over every library identity and invariant.

Each check draws its own random stream from the suite seed, so a check's result
does not depend on which other checks run.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from ..calibration import apply_calibration, lsr_fit, plcc, rmse, rmse_from_variant, srocc
from ..errors import InvalidSpec
from ..gradients import (
    dl_dS,
    gradient_check,
    loss_gradient,
    loss_gradient_per_entry,
    variant_gradient_check,
)
from ..loss import LossParams, norm_in_norm, normalization_factor, variant_loss
from ..scorestats import lp_norm, norm_inequality_holds, normalize
from ..smoothness import (
    beta_identity,
    beta_intermediate,
    explicit_hessian,
    finite_diff_hessian,
    lipschitz_identity,
    projection_matrix,
    reduction_term,
)

GRAD_SIZES = (4, 8, 16)
# With two scores both normalized vectors are +-(-1, 1)/sqrt(2): the loss is exactly
# 0 or its maximum and the gradient vanishes, so relative comparisons only see rounding.
MIN_RELATIVE_N = 3


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tolerance: float
    samples: int
    seconds: float = 0.0
    detail: str = ""

    def line(self):
        mark = "PASS" if self.passed else "FAIL"
        return (f"[{mark}] {self.name:<34} worst={self.worst:.3e} tol={self.tolerance:.1e} "
                f"n={self.samples} ({self.seconds:.1f}s){' ' + self.detail if self.detail else ''}")


@dataclass
class VerifyReport:
    seed: int
    sample_count: int
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def to_dict(self):
        return {
            "seed": self.seed,
            "sample_count": self.sample_count,
            "passed": self.passed,
            "checks": [
                {k: v for k, v in vars(c).items() if k != "seconds"} for c in self.checks
            ],
        }


def random_batch(rng, n):
    """Scores with random scale and offset."""
    return rng.standard_normal(n) * math.exp(rng.uniform(-1, 1)) + rng.uniform(-5, 5)


def random_pair(rng, n):
    x = random_batch(rng, n)
    t = rng.uniform(-1, 1)
    z = (x - x.mean()) / x.std()
    y = 3.0 * (t * z + math.sqrt(1 - t * t) * rng.standard_normal(n)) + rng.uniform(0, 100)
    return x, y


def _result(name, worst, tol, samples, below=True):
    passed = bool(worst <= tol) if below else bool(worst >= tol)
    return CheckResult(name, passed, float(worst), tol, samples)


CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


# -------------------------------------------------------------------------- scorestats


@check
def normalize_invariants(rng, n):
    worst = 0.0
    for _ in range(n):
        x = random_batch(rng, int(rng.integers(2, 33)))
        for q in (1, 2):
            s = normalize(x, q).values
            worst = max(worst, abs(s.sum()) / s.size, abs(lp_norm(s, q) - 1.0))
    return _result("normalize zero-mean/unit-norm", worst, 1e-9, 2 * n)


@check
def normalize_affine(rng, n):
    worst = 0.0
    for _ in range(n):
        x = random_batch(rng, int(rng.integers(2, 33)))
        k = math.copysign(math.exp(rng.uniform(-3, 3)), rng.uniform(-1, 1))
        m = rng.uniform(-10, 10)
        for q in (1, 2):
            a = normalize(k * x + m, q).values
            b = math.copysign(1.0, k) * normalize(x, q).values
            worst = max(worst, np.abs(a - b).max())
    return _result("normalize affine invariance", worst, 1e-9, 2 * n)


@check
def lp_homogeneity(rng, n):
    worst = 0.0
    for _ in range(n):
        x = rng.standard_normal(int(rng.integers(1, 33)))
        p = rng.uniform(1, 6)
        k = rng.uniform(-10, 10)
        base = lp_norm(x, p)
        worst = max(worst, abs(lp_norm(k * x, p) - abs(k) * base) / max(abs(k) * base, 1e-300))
    return _result("lp_norm homogeneity", worst, 1e-12, n)


@check
def norm_lemma(rng, n):
    failures = 0
    count = 10 * n
    for _ in range(count):
        x = rng.standard_normal(int(rng.integers(1, 33))) * math.exp(rng.uniform(-3, 3))
        p1, p2 = sorted(rng.uniform(1, 4, 2))
        if not norm_inequality_holds(x, p1, p2).holds:
            failures += 1
    return _result("norm inequality lemma", failures, 0, count)


# -------------------------------------------------------------------------------- loss


@check
def loss_range(rng, n):
    worst = -math.inf
    low = math.inf
    count = 10 * n
    for i in range(count):
        N = int(rng.integers(2, 33))
        x, y = random_pair(rng, N)
        if i % 10 == 0:
            y = -x  # anti-correlated pairs push l toward its upper bound
        for p in (1, 2):
            for q in (1, 2):
                v = norm_in_norm(x, y, LossParams(p=p, q=q)).value
                worst = max(worst, v)
                low = min(low, v)
    res = _result("loss in [0, 1] (c bound)", worst, 1.0 + 1e-12, 4 * count)
    if low < 0:
        res.passed = False
        res.detail = f"negative value {low}"
    return res


@check
def linear_invariance(rng, n):
    worst = 0.0
    for _ in range(n):
        x, y = random_pair(rng, int(rng.integers(MIN_RELATIVE_N, 33)))
        k1 = math.exp(rng.uniform(-2, 2))
        k2 = rng.uniform(-10, 10)
        for p, q in ((1, 1), (1, 2), (2, 1), (2, 2)):
            prm = LossParams(p=p, q=q)
            a = norm_in_norm(x, y, prm).value
            b = norm_in_norm(k1 * x + k2, y, prm).value
            worst = max(worst, abs(a - b) / max(a, 1e-12))
    return _result("linear invariance (k1 > 0)", worst, 1e-12, 4 * n)


@check
def plcc_bridge(rng, n):
    worst = 0.0
    prm = LossParams(p=2, q=2)
    for _ in range(n):
        x, y = random_pair(rng, int(rng.integers(2, 33)))
        worst = max(worst, abs(norm_in_norm(x, y, prm).value - (1 - plcc(x, y)) / 2))
    return _result("PLCC bridge l = (1-rho)/2", worst, 1e-12, n)


@check
def variant_dominance(rng, n):
    worst = -math.inf
    prm = LossParams(p=2, q=2)
    for _ in range(n):
        x, y = random_pair(rng, int(rng.integers(2, 33)))
        worst = max(worst, variant_loss(x, y, prm).value - norm_in_norm(x, y, prm).value)
    return _result("variant <= loss (p=q=2)", worst, 1e-12, n)


@check
def loss_symmetry(rng, n):
    worst = 0.0
    for _ in range(n):
        x, y = random_pair(rng, int(rng.integers(2, 33)))
        for p in (1, 2):
            prm = LossParams(p=p, q=p)
            worst = max(worst, abs(norm_in_norm(x, y, prm).value - norm_in_norm(y, x, prm).value))
    return _result("loss symmetry (p = q)", worst, 1e-12, 2 * n)


# --------------------------------------------------------------------------- gradients


def _grad_scale(x, y, prm):
    """Natural magnitude of the gradient: max(||dl/dS||_inf, 1/c) / b_hat.

    The p = 1 gradient is exactly zero on whole regions, so comparisons are scaled
    by this rather than by the gradient itself.
    """
    out = norm_in_norm(x, y, prm)
    g = dl_dS(out.pred_normalized, out.label_normalized, prm.p, out.c)
    return max(float(np.abs(g).max()), 1 / out.c) / out.pred_normalized.stats.centered_norm


def _grad_check(name, rng, n, p, q, tol):
    worst = 0.0
    prm = LossParams(p=p, q=q)
    for i in range(n):
        x, y = random_pair(rng, GRAD_SIZES[i % len(GRAD_SIZES)])
        worst = max(worst, gradient_check(x, y, prm))
    return _result(name, worst, tol, n)


@check
def gradient_check_p2q2(rng, n):
    return _grad_check("gradient check p=2 q=2", rng, n, 2, 2, 1e-6)


@check
def gradient_check_p1q2(rng, n):
    return _grad_check("gradient check p=1 q=2", rng, n, 1, 2, 1e-5)


@check
def gradient_check_p1q1(rng, n):
    return _grad_check("gradient check p=1 q=1", rng, n, 1, 1, 1e-5)


@check
def variant_gradient(rng, n):
    worst = 0.0
    prm = LossParams(p=2, q=2)
    m = max(1, n // 4)
    for i in range(m):
        x, y = random_pair(rng, GRAD_SIZES[i % len(GRAD_SIZES)])
        worst = max(worst, variant_gradient_check(x, y, prm))
    return _result("variant gradient (frozen rho)", worst, 1e-6, m)


@check
def chain_rule(rng, n):
    worst = 0.0
    for _ in range(n):
        x, y = random_pair(rng, int(rng.integers(MIN_RELATIVE_N, 17)))
        for p, q in ((1, 1), (1, 2), (2, 1), (2, 2), (1.5, 3)):
            prm = LossParams(p=p, q=q)
            a = loss_gradient(x, y, prm)
            b = loss_gradient_per_entry(x, y, prm)
            worst = max(worst, np.abs(a - b).max() / max(np.abs(a).max(), _grad_scale(x, y, prm)))
    return _result("chain rule: vectorized vs per-entry", worst, 1e-12, 5 * n)


@check
def gradient_projections(rng, n):
    worst = 0.0
    for _ in range(n):
        N = int(rng.integers(2, 33))
        x, y = random_pair(rng, N)
        for p in (1, 2):
            prm = LossParams(p=p, q=2)
            g = loss_gradient(x, y, prm)
            s = normalize(x, 2).values
            worst = max(worst, abs(g.sum()) / N, abs(np.dot(g, s)))
    return _result("q=2 gradient: <1,g>=0, <S,g>=0", worst, 1e-10, 2 * n)


@check
def gradient_scale_response(rng, n):
    worst = 0.0
    for _ in range(n):
        x, y = random_pair(rng, int(rng.integers(MIN_RELATIVE_N, 33)))
        k = math.exp(rng.uniform(-3, 3))
        for p, q in ((1, 2), (2, 2), (2, 1)):
            prm = LossParams(p=p, q=q)
            g = loss_gradient(x, y, prm)
            gk = loss_gradient(k * x, y, prm)
            worst = max(worst, np.abs(gk * k - g).max() / max(np.abs(g).max(), _grad_scale(x, y, prm)))
    return _result("gradient scales as 1/k", worst, 1e-10, 3 * n)


# -------------------------------------------------------------------------- smoothness


@check
def projection_properties(rng, n):
    worst = 0.0
    for _ in range(n):
        N = int(rng.integers(2, 65))
        s = normalize(random_batch(rng, N), 2).values
        K = projection_matrix(s)
        worst = max(
            worst,
            np.abs(K - K.T).max(),
            np.abs(K @ K - K).max(),
            np.abs(K @ np.ones(N)).max(),
            np.abs(K @ s).max(),
        )
    return _result("projection K: sym/idempotent/K1=KS=0", worst, 1e-10, n)


def _rel(a, b):
    return abs(a - b) / max(abs(a), 1e-12)


@check
def lipschitz_theorem(rng, n):
    worst = 0.0
    for i in range(n):
        x, y = random_pair(rng, GRAD_SIZES[i % len(GRAD_SIZES)])
        for p in (1, 2):
            r = lipschitz_identity(x, y, p)
            worst = max(worst, _rel(r.lipschitz_lhs, r.lipschitz_rhs))
    return _result("gradient-norm identity (q=2)", worst, 1e-10, 2 * n)


@check
def beta_theorem(rng, n):
    worst = 0.0
    for i in range(n):
        x, y = random_pair(rng, GRAD_SIZES[i % len(GRAD_SIZES)])
        r = beta_identity(x, y)
        worst = max(worst, _rel(r.beta_lhs, r.beta_rhs))
    return _result("Hessian quadratic form expansion", worst, 1e-10, n)


@check
def beta_intermediate_identity(rng, n):
    worst = 0.0
    for i in range(n):
        x, y = random_pair(rng, GRAD_SIZES[i % len(GRAD_SIZES)])
        for p in (2, 3):
            lhs, rhs = beta_intermediate(x, y, p)
            worst = max(worst, _rel(lhs, rhs))
    return _result("Hessian quadratic form (general p)", worst, 1e-10, 2 * n)


@check
def reduction_nonnegative(rng, n):
    worst = math.inf
    for _ in range(n):
        x, y = random_pair(rng, int(rng.integers(2, 33)))
        c = normalization_factor(x.size, 2, 2)
        s_hat = normalize(x, 2).values
        s = normalize(y, 2).values
        worst = min(worst, reduction_term((2 / c) * (s_hat - s), s_hat, s, c))
    return _result("curvature reduction term >= 0", worst, -1e-12, n, below=False)


@check
def hessian_vs_finite_diff(rng, n):
    worst = 0.0
    m = max(5, n // 20)
    prm = LossParams(p=2, q=2)
    for _ in range(m):
        x, y = random_pair(rng, int(rng.integers(2, 9)))
        worst = max(worst, np.abs(explicit_hessian(x, y, prm) - finite_diff_hessian(x, y, prm)).max())
    return _result("explicit Hessian vs finite diff", worst, 1e-4, m)


# ------------------------------------------------------------------------- calibration


@check
def rmse_bridge(rng, n):
    worst = 0.0
    prm = LossParams(p=2, q=2)
    for _ in range(n):
        N = int(rng.integers(MIN_RELATIVE_N, 33))
        x, y = random_pair(rng, N)
        direct = rmse(apply_calibration(lsr_fit(x, y), x), y)
        out = variant_loss(x, y, prm)
        bridge = rmse_from_variant(out.label_normalized.stats.centered_norm, out.value, N)
        worst = max(worst, abs(direct - bridge) / max(direct, 1e-12))
    return _result("RMSE from variant loss", worst, 1e-10, n)


@check
def lsr_optimality(rng, n):
    violations = 0
    for _ in range(n):
        x, y = random_pair(rng, int(rng.integers(3, 33)))
        line = lsr_fit(x, y)
        base = float(np.sum((line.k1 * x + line.k2 - y) ** 2))
        for d1 in (-1e-3, 0.0, 1e-3):
            for d2 in (-1e-3, 0.0, 1e-3):
                sse = float(np.sum(((line.k1 + d1) * x + line.k2 + d2 - y) ** 2))
                if sse < base - 1e-12 * max(base, 1.0):
                    violations += 1
    return _result("LSR local optimality", violations, 0, n)


@check
def plcc_sign_invariance(rng, n):
    worst = 0.0
    for _ in range(n):
        x, y = random_pair(rng, int(rng.integers(2, 33)))
        k1 = math.copysign(math.exp(rng.uniform(-2, 2)), rng.uniform(-1, 1))
        k2 = rng.uniform(-10, 10)
        worst = max(worst, abs(plcc(k1 * x + k2, y) - math.copysign(1.0, k1) * plcc(x, y)))
    return _result("PLCC affine sign invariance", worst, 1e-12, n)


@check
def srocc_monotone(rng, n):
    worst = 0.0
    for _ in range(n):
        x, y = random_pair(rng, int(rng.integers(2, 33)))
        if len(set(x)) < 2 or len(set(y)) < 2:
            continue
        base = srocc(x, y)
        z = (x - x.mean()) / x.std()
        for fx in (np.exp(z), z ** 3):
            worst = max(worst, abs(srocc(fx, y) - base))
        worst = max(worst, abs(srocc(x, y ** 3) - base))
    return _result("SROCC monotone invariance", worst, 1e-12, n)


@check
def srocc_on_permutations(rng, n):
    worst = 0.0
    for _ in range(n):
        N = int(rng.integers(2, 33))
        x = rng.permutation(N) + 1.0
        y = rng.permutation(N) + 1.0
        worst = max(worst, abs(srocc(x, y) - plcc(x, y)))
    return _result("SROCC = PLCC on permutations", worst, 1e-12, n)


# ---------------------------------------------------------------------------- examples


@check
def worked_example(rng, n):
    """The small hand-evaluated batch pred=(2,1,4,3), label=(1,2,3,4)."""
    pred, label = [2.0, 1.0, 4.0, 3.0], [1.0, 2.0, 3.0, 4.0]
    p22 = LossParams(p=2, q=2, variant_weight=0.1)
    errs = [
        abs(norm_in_norm(pred, label, p22).value - 0.2),
        abs(variant_loss(pred, label, p22).value - 0.16),
        np.abs(loss_gradient(pred, label, p22) - np.array([0.12, -0.04, 0.04, -0.12])).max(),
        abs(lipschitz_identity(pred, label, 2).lipschitz_lhs - 0.032),
        abs(beta_identity(pred, label).beta_lhs - 0.00192),
        abs(beta_identity(pred, label).beta_rhs - 0.00192),
        abs(rmse(apply_calibration(lsr_fit(pred, label), pred), label) - math.sqrt(0.8)),
        abs(rmse_from_variant(math.sqrt(5), variant_loss(pred, label, p22).value, 4) - math.sqrt(0.8)),
    ]
    return _result("worked example (2,1,4,3)/(1,2,3,4)", max(errs), 1e-12, len(errs))


def run_verify(sample_count=1000, seed=0, only=None):
    """Run every check on ``sample_count`` random instances (some checks scale this)."""
    if sample_count < 1:
        raise InvalidSpec("sample_count must be >= 1")
    children = np.random.SeedSequence(seed).spawn(len(CHECKS))
    results = []
    for fn, child in zip(CHECKS, children):
        if only is not None and fn.__name__ not in only:
            continue
        t0 = time.perf_counter()
        res = fn(np.random.default_rng(child), sample_count)
        res.seconds = time.perf_counter() - t0
        results.append(res)
    return VerifyReport(seed=seed, sample_count=sample_count, checks=results)


def check_names():
    return [fn.__name__ for fn in CHECKS]
