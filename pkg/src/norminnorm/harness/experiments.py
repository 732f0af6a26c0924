"""Experiment orchestration: loss comparisons and hyper-parameter sweeps.

Runs are independent and seeded, so they can go to a process pool; results are
always reassembled in submission order, which keeps summaries byte-identical
regardless of scheduling.
"""

import csv
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from statistics import median
from typing import Optional

from ..loss import LossParams
from ..smoothness import UNDEFINED
from ..trainer import TrainConfig, epochs_to_threshold, train
from .data import SyntheticSpec, generate_dataset, ingest_csv

log = logging.getLogger(__name__)

THREADS_ENV = "NORMINORM_THREADS"
CURVE_COLUMNS = ("epoch", "loss", "plcc", "srocc", "rmse", "b_hat")


@dataclass
class ExperimentConfig:
    variants: list  # of TrainConfig
    seeds: list
    out_dir: Optional[Path] = None
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    data_path: Optional[Path] = None
    threshold_fraction: float = 0.95
    threshold: Optional[float] = None  # absolute PLCC threshold; overrides the fraction

    def validate(self):
        from ..errors import InvalidSpec

        if not self.seeds:
            raise InvalidSpec("at least one seed is required")
        if not self.variants:
            raise InvalidSpec("empty sweep: no training variants")


def load_dataset(cfg):
    if cfg.data_path is not None:
        return ingest_csv(cfg.data_path)
    return generate_dataset(cfg.synthetic)


def worker_count(n_jobs):
    env = os.environ.get(THREADS_ENV)
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def _run_one(args):
    dataset, config = args
    return train(dataset, config)


def run_many(dataset, configs):
    """Train every config; order of results matches ``configs``."""
    jobs = [(dataset, c) for c in configs]
    n = worker_count(len(jobs))
    if n == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_run_one, jobs))


# ----------------------------------------------------------------------- serialization


def clean(obj):
    """Make a value JSON-safe: non-finite floats -> None, numpy scalars -> Python."""
    if obj is UNDEFINED:
        return "undefined"
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if hasattr(obj, "tolist"):
        return clean(obj.tolist())
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    return obj


def dump_json(obj, path):
    text = json.dumps(clean(obj), sort_keys=True, indent=2, allow_nan=False)
    Path(path).write_text(text + "\n")


def config_dict(config):
    d = asdict(config)
    d["lr_decay"] = list(config.decay())
    return d


def log_dict(run_log):
    return {
        "config": config_dict(run_log.config),
        "records": [asdict(r) for r in run_log.records],
        "calibration": asdict(run_log.calibration) if run_log.calibration else None,
        "best_epoch": run_log.best_epoch,
        "degenerate_batches": run_log.degenerate_batches,
        "divergence": asdict(run_log.divergence) if run_log.divergence else None,
        "test_metrics": run_log.test_metrics,
        "diagnostics": run_log.diagnostics,
    }


def write_curve(run_log, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CURVE_COLUMNS)
        for r in run_log.records:
            w.writerow([r.epoch] + [repr(float(getattr(r, c))) for c in CURVE_COLUMNS[1:]])


def variant_name(config):
    name = config.loss_kind
    if config.loss_kind in ("norm_in_norm", "variant", "combined"):
        name += f"_p{config.loss_params.p:g}_q{config.loss_params.q:g}"
        if config.loss_kind == "combined":
            name += f"_w{config.loss_params.variant_weight:g}"
    return f"{name}_{config.optimizer}_lr{config.learning_rate:g}_bs{config.batch_size}"


# --------------------------------------------------------------------------- summaries


def _median(values):
    vals = [v for v in values if v is not None and math.isfinite(v)]
    return median(vals) if vals else None


def _median_epochs(epochs):
    """Median of first-hit epochs; runs that never hit count as +inf."""
    vals = sorted(math.inf if e is None else e for e in epochs)
    m = median(vals)
    return "never" if math.isinf(m) else m


def final_metric(run_log, metric):
    return getattr(run_log.records[-1], metric) if run_log.records else None


def summarize(groups, threshold=None, threshold_fraction=0.95):
    """Summary per variant: median first-hit epoch for the PLCC threshold, median final
    calibrated validation metrics, divergences.

    Without an explicit threshold it is ``threshold_fraction`` times the median final
    PLCC of the best variant.
    """
    finals = {name: _median([final_metric(r, "plcc") for r in runs]) for name, runs in groups.items()}
    best = max((v for v in finals.values() if v is not None), default=None)
    if threshold is None:
        threshold = threshold_fraction * best if best is not None else None
    out = {}
    for name, runs in groups.items():
        epochs = [
            epochs_to_threshold(r, "plcc", threshold) if (r.records and threshold is not None) else None
            for r in runs
        ]
        out[name] = {
            "runs": len(runs),
            "epochs_to_threshold": ["never" if e is None else e for e in epochs],
            "median_epochs_to_threshold": _median_epochs(epochs),
            "median_final_plcc": finals[name],
            "median_final_srocc": _median([final_metric(r, "srocc") for r in runs]),
            "median_final_rmse": _median([final_metric(r, "rmse") for r in runs]),
            "median_test_plcc": _median([r.test_metrics["plcc"] for r in runs if r.test_metrics]),
            "median_mean_b_hat": _median([_median(r.series("b_hat")) for r in runs]),
            "divergences": [
                {"seed": r.config.seed, **asdict(r.divergence)} for r in runs if r.divergence
            ],
            "degenerate_batches": sum(r.degenerate_batches for r in runs),
        }
    return {"threshold_plcc": threshold, "best_median_final_plcc": best, "variants": out}


def _execute(cfg, kind):
    cfg.validate()
    dataset = load_dataset(cfg)
    jobs = [(variant_name(v), replace(v, seed=s)) for v in cfg.variants for s in cfg.seeds]
    logs = run_many(dataset, [c for _, c in jobs])
    groups = {}
    for (name, _), lg in zip(jobs, logs):
        groups.setdefault(name, []).append(lg)
    summary = summarize(groups, cfg.threshold, cfg.threshold_fraction)
    summary["kind"] = kind
    summary["seeds"] = list(cfg.seeds)
    summary["dataset"] = str(cfg.data_path) if cfg.data_path else asdict(cfg.synthetic)
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        runs_dir = out / "runs"
        runs_dir.mkdir(parents=True, exist_ok=True)
        for (name, c), lg in zip(jobs, logs):
            stem = f"{name}_seed{c.seed}"
            dump_json(log_dict(lg), runs_dir / f"{stem}.json")
            write_curve(lg, runs_dir / f"{stem}_curve.csv")
        dump_json(summary, out / "summary.json")
    return summary, groups


def run_comparison(cfg):
    """Train every (variant x seed) and summarize convergence speed and final quality."""
    return _execute(cfg, "compare")


def sweep_variants(base, loss_kinds, pq_pairs=None, learning_rates=None, batch_sizes=None):
    """Cartesian grid over the sweep axes. p/q pairs only apply to normalized losses."""
    from ..errors import InvalidSpec

    if not loss_kinds:
        raise InvalidSpec("sweep needs at least one loss kind")
    pq_pairs = pq_pairs or [(base.loss_params.p, base.loss_params.q)]
    learning_rates = learning_rates or [base.learning_rate]
    batch_sizes = batch_sizes or [base.batch_size]
    variants = []
    for kind in loss_kinds:
        pairs = pq_pairs if kind in ("norm_in_norm", "variant", "combined") else pq_pairs[:1]
        for p, q in pairs:
            for lr in learning_rates:
                for bs in batch_sizes:
                    variants.append(replace(
                        base,
                        loss_kind=kind,
                        loss_params=replace(base.loss_params, p=p, q=q),
                        learning_rate=lr,
                        batch_size=bs,
                    ))
    return variants


def run_sweep(cfg):
    return _execute(cfg, "sweep")


def default_comparison_variants(epochs=60, lr=1e-3, batch_size=16, optimizer="adam",
                                loss_kinds=("norm_in_norm", "mae", "mse"), p=1.0, q=2.0):
    base = TrainConfig(loss_params=LossParams(p=p, q=q), optimizer=optimizer,
                       learning_rate=lr, batch_size=batch_size, epochs=epochs)
    return [replace(base, loss_kind=k) for k in loss_kinds]
