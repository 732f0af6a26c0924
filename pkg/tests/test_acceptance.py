"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed in the terminal
summary (and immediately when run with ``-s``).
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from norminnorm.calibration import apply_calibration, lsr_fit, rmse, rmse_from_variant
from norminnorm.gradients import loss_gradient
from norminnorm.harness.data import SyntheticSpec
from norminnorm.harness.experiments import ExperimentConfig, default_comparison_variants, run_comparison
from norminnorm.harness.verify import run_verify
from norminnorm.loss import LossParams, variant_loss
from norminnorm.smoothness import beta_identity, beta_intermediate, explicit_hessian, lipschitz_identity

PRED = (2.0, 1.0, 4.0, 3.0)
LABEL = (1.0, 2.0, 3.0, 4.0)
SAMPLES = 1000
SEEDS = [0, 1, 2, 3, 4]


def report(number, title, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert passed, line


def verify(*names):
    report_ = run_verify(SAMPLES, seed=0, only=list(names))
    return {c.name: c for c in report_.checks}, report_


def describe(checks):
    return "; ".join(f"{c.name} worst={c.worst:.2e} tol={c.tolerance:.0e} n={c.samples}" for c in checks)


def comparison(out_dir):
    cfg = ExperimentConfig(
        variants=default_comparison_variants(epochs=60, lr=1e-3, batch_size=16, optimizer="adam"),
        seeds=SEEDS,
        synthetic=SyntheticSpec(),
        out_dir=out_dir,
    )
    return run_comparison(cfg)


@pytest.fixture(scope="module")
def comparison_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("compare_a")
    t0 = time.perf_counter()
    summary, groups = comparison(out)
    return summary, groups, out, time.perf_counter() - t0


def test_criterion_1_gradient_checks():
    t0 = time.perf_counter()
    checks, rep = verify("gradient_check_p2q2", "gradient_check_p1q2", "gradient_check_p1q1")
    seconds = time.perf_counter() - t0
    ok = rep.passed and seconds < 30 and all(c.samples == SAMPLES for c in checks.values())
    report(1, "analytic vs finite-difference gradients", ok, f"{describe(checks.values())}; {seconds:.1f}s")


def test_criterion_2_gradient_norm_identity():
    checks, rep = verify("lipschitz_theorem")
    r = lipschitz_identity(PRED, LABEL, 2)
    g_n = loss_gradient(PRED, LABEL, LossParams(p=2, q=2))
    ex_norm = abs(r.lipschitz_lhs - 0.032)
    ex_grad = np.abs(g_n - np.array([0.12, -0.04, 0.04, -0.12])).max()
    ok = rep.passed and ex_norm < 1e-12 and ex_grad < 1e-12
    report(2, "gradient-norm identity", ok,
           f"{describe(checks.values())}; example |g_n|^2 err={ex_norm:.1e}, g_n err={ex_grad:.1e}")


def test_criterion_3_hessian_identities():
    checks, rep = verify("beta_theorem", "beta_intermediate_identity", "hessian_vs_finite_diff")
    r = beta_identity(PRED, LABEL)
    lhs, rhs = beta_intermediate(PRED, LABEL, 2)
    ex = max(abs(v - 0.00192) for v in (r.beta_lhs, r.beta_rhs, lhs, rhs))
    g_n = loss_gradient(PRED, LABEL, LossParams(p=2, q=2))
    ex_h = abs(float(g_n @ explicit_hessian(PRED, LABEL) @ g_n) - 0.00192)
    ok = rep.passed and ex < 1e-12 and ex_h < 1e-12
    report(3, "Hessian quadratic form identities", ok,
           f"{describe(checks.values())}; example err={max(ex, ex_h):.1e}")


def test_criterion_4_plcc_bridge():
    checks, rep = verify("plcc_bridge")
    report(4, "l = (1 - rho)/2 at p=q=2", rep.passed, describe(checks.values()))


def test_criterion_5_rmse_bridge():
    checks, rep = verify("rmse_bridge")
    direct = rmse(apply_calibration(lsr_fit(PRED, LABEL), PRED), LABEL)
    bridge = rmse_from_variant(math.sqrt(5), variant_loss(PRED, LABEL, LossParams(p=2, q=2)).value, 4)
    ex = max(abs(direct - math.sqrt(0.8)), abs(bridge - math.sqrt(0.8)))
    report(5, "RMSE from the variant loss", rep.passed and ex < 1e-12,
           f"{describe(checks.values())}; example err={ex:.1e}")


def test_criterion_6_norm_lemma_and_loss_bound():
    checks, rep = verify("norm_lemma", "loss_range")
    ok = rep.passed and checks["norm inequality lemma"].samples >= 10_000 \
        and checks["loss in [0, 1] (c bound)"].samples >= 4 * 10_000
    report(6, "norm inequality and loss range", ok, describe(checks.values()))


def test_criterion_7_convergence_speed(comparison_run):
    summary, groups, _, seconds = comparison_run
    v = summary["variants"]
    names = {k.split("_p")[0].split("_adam")[0]: k for k in v}
    nin, mae, mse = (v[names[k]] for k in ("norm_in_norm", "mae", "mse"))

    def epochs(s):
        e = s["median_epochs_to_threshold"]
        return math.inf if e == "never" else e

    faster = epochs(nin) < epochs(mae) and epochs(nin) < epochs(mse)
    better = nin["median_final_plcc"] >= max(mae["median_final_plcc"], mse["median_final_plcc"])
    ok = faster and better and seconds < 300
    detail = (f"threshold={summary['threshold_plcc']:.4f}; median epochs norm_in_norm="
              f"{nin['median_epochs_to_threshold']} mae={mae['median_epochs_to_threshold']} "
              f"mse={mse['median_epochs_to_threshold']}; final PLCC {nin['median_final_plcc']:.4f} / "
              f"{mae['median_final_plcc']:.4f} / {mse['median_final_plcc']:.4f}; {seconds:.1f}s")
    report(7, "convergence speed and final quality", ok, detail)


def test_criterion_8_stability_across_learning_rates():
    divergences = {}
    for lr in (1e-2, 1e-3, 1e-4):
        cfg = ExperimentConfig(variants=default_comparison_variants(epochs=60, lr=lr), seeds=SEEDS,
                               synthetic=SyntheticSpec())
        summary, _ = run_comparison(cfg)
        for name, s in summary["variants"].items():
            divergences[name] = len(s["divergences"])
    nin = sum(n for k, n in divergences.items() if k.startswith("norm_in_norm"))
    others = {k: n for k, n in divergences.items() if not k.startswith("norm_in_norm") and n}
    report(8, "no divergence for norm_in_norm at lr 1e-2/1e-3/1e-4", nin == 0,
           f"norm_in_norm divergences={nin}; baseline divergences recorded={others or 'none'}")


def test_criterion_9_determinism(comparison_run, tmp_path):
    _, _, first, _ = comparison_run
    comparison(tmp_path)
    a = (first / "summary.json").read_bytes()
    b = (tmp_path / "summary.json").read_bytes()
    report(9, "repeated comparison gives byte-identical summary", a == b, f"{len(a)} bytes compared")
