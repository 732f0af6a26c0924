"""Command-line entry point.

Subcommands: gen, train, compare, sweep, verify, diag. Reports are JSON with
sorted keys; curves are CSV. Exit status: 0 success, 1 verification failure,
2 usage or invalid settings, 3 I/O error (including malformed dataset files).
"""

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from ..errors import DegenerateBatch, NormInNormError, ParseError, SchemaError
from ..loss import LossParams
from ..smoothness import UNDEFINED, smoothness_comparison
from ..trainer import (
    LOSS_KINDS,
    MODEL_KINDS,
    OPTIMIZERS,
    TrainConfig,
    init_model,
    model_forward,
    train,
    trained_model,
)
from .data import MODES, SyntheticSpec, generate_dataset, write_csv
from .experiments import (
    ExperimentConfig,
    clean,
    dump_json,
    load_dataset,
    log_dict,
    run_comparison,
    run_sweep,
    sweep_variants,
    variant_name,
    write_curve,
)
from .verify import check_names, run_verify

log = logging.getLogger("norminnorm")

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


def _csv_list(kind):
    def parse(text):
        try:
            return [kind(t) for t in text.split(",") if t.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(str(e)) from None
    return parse


def _pq_pair(text):
    try:
        p, q = text.split(":")
        return float(p), float(q)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected P:Q, got {text!r}") from None


def _add_data_args(ap):
    g = ap.add_argument_group("dataset")
    g.add_argument("--data", type=Path, help="dataset CSV (f1..fd,mos,split); synthetic if omitted")
    g.add_argument("--n-samples", type=int, default=2000)
    g.add_argument("--dim", type=int, default=8)
    g.add_argument("--mode", choices=MODES, default="warped")
    g.add_argument("--noise", type=float, default=5.0, help="MOS noise sigma")
    g.add_argument("--data-seed", type=int, default=0, help="seed of the synthetic generator")


def _add_train_args(ap, epochs=30, p=1.0):
    g = ap.add_argument_group("training")
    g.add_argument("--loss", choices=LOSS_KINDS, default="norm_in_norm")
    g.add_argument("--p", type=float, default=p)
    g.add_argument("--q", type=float, default=2.0)
    g.add_argument("--variant-weight", type=float, default=0.1, help="weight of l' in the combined loss")
    g.add_argument("--optimizer", choices=OPTIMIZERS, default="adam")
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--batch-size", type=int, default=16)
    g.add_argument("--epochs", type=int, default=epochs)
    g.add_argument("--model", choices=MODEL_KINDS, default="mlp1")
    g.add_argument("--hidden", type=int, default=16)
    g.add_argument("--seed", type=int, default=0)


def build_parser():
    ap = argparse.ArgumentParser(prog="norminnorm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic dataset CSV")
    _add_data_args(p)
    p.add_argument("--out", type=Path, required=True, help="CSV path to write")

    p = sub.add_parser("train", help="train one model and write its convergence log")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--out", type=Path, help="output directory")

    p = sub.add_parser("compare", help="compare loss kinds over several seeds")
    _add_data_args(p)
    _add_train_args(p, epochs=60)
    p.add_argument("--losses", type=_csv_list(str), default=["norm_in_norm", "mae", "mse"])
    p.add_argument("--n-seeds", type=int, default=5, help="seeds run from --seed upward")
    p.add_argument("--threshold", type=float, help="absolute PLCC threshold (default: 0.95 x best)")
    p.add_argument("--out", type=Path, help="output directory")

    p = sub.add_parser("sweep", help="grid over loss kinds, p:q pairs, learning rates, batch sizes")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--losses", type=_csv_list(str), default=["norm_in_norm"])
    p.add_argument("--pq", type=_pq_pair, nargs="+", help="p:q pairs, e.g. 1:1 1:2 2:2")
    p.add_argument("--lrs", type=_csv_list(float), help="comma-separated learning rates")
    p.add_argument("--batch-sizes", type=_csv_list(int), help="comma-separated batch sizes")
    p.add_argument("--n-seeds", type=int, default=1)
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", type=Path, help="output directory")

    p = sub.add_parser("verify", help="run the numerical identity and property checks")
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--only", type=_csv_list(str), help=f"subset of: {', '.join(check_names())}")
    p.add_argument("--out", type=Path, help="JSON report path")

    p = sub.add_parser("diag", help="smoothness ratios of the normalized loss over dataset batches")
    _add_data_args(p)
    _add_train_args(p, epochs=0, p=2.0)
    p.add_argument("--split", choices=("train", "val", "test"), default="train")
    p.add_argument("--out", type=Path, help="JSON report path")
    return ap


# --------------------------------------------------------------------------- helpers


def _synthetic(args):
    return SyntheticSpec(n_samples=args.n_samples, dim=args.dim, mode=args.mode,
                         noise_sigma=args.noise, seed=args.data_seed)


def _train_config(args):
    return TrainConfig(
        loss_kind=args.loss,
        loss_params=LossParams(p=args.p, q=args.q, variant_weight=args.variant_weight),
        optimizer=args.optimizer,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        seed=args.seed,
        model_kind=args.model,
        hidden=args.hidden,
    )


def _emit(obj, path=None):
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        dump_json(obj, path)
    print(json.dumps(clean(obj), sort_keys=True, indent=2))


def _experiment(args, variants):
    seeds = list(range(args.seed, args.seed + args.n_seeds))
    return ExperimentConfig(variants=variants, seeds=seeds, out_dir=args.out,
                            synthetic=_synthetic(args), data_path=args.data,
                            threshold=args.threshold)


# ------------------------------------------------------------------------ subcommands


def cmd_gen(args):
    ds = generate_dataset(_synthetic(args))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(ds, args.out)
    counts = {s: int(np.sum(ds.split == s)) for s in ("train", "val", "test")}
    print(f"wrote {len(ds.mos)} samples to {args.out} {counts}")
    return EXIT_OK


def cmd_train(args):
    config = _train_config(args)
    ds = load_dataset(ExperimentConfig([config], [args.seed], synthetic=_synthetic(args),
                                       data_path=args.data))
    run = train(ds, config)
    report = log_dict(run)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        stem = f"{variant_name(config)}_seed{config.seed}"
        dump_json(report, args.out / f"{stem}.json")
        write_curve(run, args.out / f"{stem}_curve.csv")
    for r in run.records:
        log.info("epoch %d loss %.5f plcc %.4f srocc %.4f rmse %.3f", r.epoch, r.loss, r.plcc, r.srocc, r.rmse)
    _emit({"final": asdict(run.records[-1]) if run.records else None,
           "best_epoch": run.best_epoch,
           "test_metrics": run.test_metrics,
           "divergence": asdict(run.divergence) if run.divergence else None})
    return EXIT_OK


def cmd_compare(args):
    base = _train_config(args)
    variants = [replace(base, loss_kind=k) for k in args.losses]
    summary, _ = run_comparison(_experiment(args, variants))
    _emit(summary)
    return EXIT_OK


def cmd_sweep(args):
    base = _train_config(args)
    variants = sweep_variants(base, args.losses, args.pq, args.lrs, args.batch_sizes)
    summary, _ = run_sweep(_experiment(args, variants))
    _emit(summary)
    return EXIT_OK


def cmd_verify(args):
    t0 = time.perf_counter()
    report = run_verify(args.samples, args.seed, only=args.only)
    for c in report.checks:
        print(c.line())
    print(f"{'ALL PASSED' if report.passed else 'FAILURES'} in {time.perf_counter() - t0:.1f}s")
    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        dump_json(report.to_dict(), args.out)
    return EXIT_OK if report.passed else EXIT_VERIFY


def _median(values):
    vals = [v for v in values if v is not UNDEFINED]
    return float(np.median(vals)) if vals else UNDEFINED


def cmd_diag(args):
    """Per-batch smoothness ratios for a freshly initialized (or briefly trained) model."""
    config = _train_config(args)
    ds = load_dataset(ExperimentConfig([config], [args.seed], synthetic=_synthetic(args),
                                       data_path=args.data))
    dim = ds.features.shape[1]
    if config.epochs > 0:
        model = trained_model(train(ds, config), dim)
    else:
        model = init_model(config.model_kind, dim, np.random.default_rng(config.seed), config.hidden)
    X, y = ds.part(args.split)
    pred = model_forward(model, X)
    order = np.random.default_rng(config.seed).permutation(len(y))
    rows, skipped = [], 0
    for start in range(0, len(order) - config.batch_size + 1, config.batch_size):
        idx = order[start:start + config.batch_size]
        try:
            rows.append(smoothness_comparison(pred[idx], y[idx], config.loss_params))
        except DegenerateBatch:
            skipped += 1
    report = {
        "split": args.split,
        "p": config.loss_params.p,
        "q": config.loss_params.q,
        "batch_size": config.batch_size,
        "trained_epochs": config.epochs,
        "batches": len(rows),
        "degenerate_batches": skipped,
        "median_lipschitz_ratio": _median([r.lipschitz_ratio for r in rows]),
        "median_beta_ratio": _median([r.beta_ratio for r in rows]),
        "median_b_hat": _median([r.b_hat for r in rows]),
        "share_lipschitz_ratio_below_1": (
            float(np.mean([r.lipschitz_ratio < 1 for r in rows if r.lipschitz_ratio is not UNDEFINED]))
            if rows else UNDEFINED
        ),
    }
    _emit(report, args.out)
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "diag": cmd_diag,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ParseError, SchemaError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except NormInNormError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
