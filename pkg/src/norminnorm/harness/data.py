"""Synthetic quality-regression datasets and the CSV dataset format.

CSV schema: header ``f1,...,fd,mos,split`` with split in {train, val, test};
floats are written with 17 significant digits so a write/read round trip is exact.
"""

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidSpec, ParseError, SchemaError
from ..trainer import Dataset

SPLITS = ("train", "val", "test")
SPLIT_FRACTIONS = (0.7, 0.1, 0.2)
MODES = ("linear", "warped")
# latent scores have standard deviation 2
LATENT_NORM = 2.0


@dataclass(frozen=True)
class SyntheticSpec:
    n_samples: int = 2000
    dim: int = 8
    mode: str = "warped"
    noise_sigma: float = 5.0
    mos_range: tuple = (0.0, 100.0)
    seed: int = 0

    def validate(self, batch_size=2):
        low, high = self.mos_range
        if self.mode not in MODES:
            raise InvalidSpec(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.dim < 1:
            raise InvalidSpec("feature dimension must be >= 1")
        if not low < high:
            raise InvalidSpec(f"mos_range needs low < high, got {self.mos_range}")
        if self.noise_sigma < 0:
            raise InvalidSpec("noise_sigma must be nonnegative")
        if self.n_samples < max(3 * batch_size, 10):
            raise InvalidSpec(f"n_samples={self.n_samples} too small for batch size {batch_size}")


def generate_dataset(spec):
    """Gaussian features, a fixed random linear latent, and a linear or logistic MOS.

    Linear mode maps the latent affinely onto the MOS range (clipping only past
    five standard deviations); warped mode applies a logistic squashing first.
    The split is a seeded shuffle into 70/10/20 train/val/test.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    low, high = spec.mos_range
    w = rng.standard_normal(spec.dim)
    w *= LATENT_NORM / np.linalg.norm(w)
    X = rng.standard_normal((spec.n_samples, spec.dim))
    latent = X @ w
    if spec.mode == "linear":
        clean = low + (high - low) * (0.5 + latent / (10.0 * LATENT_NORM))
    else:
        clean = low + (high - low) / (1.0 + np.exp(-latent))
    noise = rng.normal(0.0, spec.noise_sigma, spec.n_samples) if spec.noise_sigma > 0 else 0.0
    mos = np.clip(clean + noise, low, high)

    n = spec.n_samples
    n_train = int(round(SPLIT_FRACTIONS[0] * n))
    n_val = int(round(SPLIT_FRACTIONS[1] * n))
    labels = np.array(["train"] * n_train + ["val"] * n_val + ["test"] * (n - n_train - n_val))
    split = labels[np.argsort(rng.permutation(n))]
    return Dataset(features=X, mos=mos, split=split)


def write_csv(dataset, path):
    d = dataset.features.shape[1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow([f"f{i + 1}" for i in range(d)] + ["mos", "split"])
        for row, m, s in zip(dataset.features, dataset.mos, dataset.split):
            w.writerow([f"{v:.17g}" for v in row] + [f"{m:.17g}", s])


def ingest_csv(path):
    """Read a dataset CSV. Row numbers in errors count the header as row 1."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if "mos" not in header:
            raise SchemaError(f"{path}: missing 'mos' column")
        if "split" not in header:
            raise SchemaError(f"{path}: missing 'split' column")
        feat_cols = [i for i, h in enumerate(header) if h not in ("mos", "split")]
        if not feat_cols:
            raise SchemaError(f"{path}: no feature columns")
        for i in feat_cols:
            if not (header[i].startswith("f") and header[i][1:].isdigit()):
                raise SchemaError(f"{path}: unexpected column {header[i]!r}")
        i_mos, i_split = header.index("mos"), header.index("split")

        feats, mos, split = [], [], []
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: row {row_no} has {len(row)} fields, expected {len(header)}",
                                 row=row_no)
            vals = []
            for i in feat_cols + [i_mos]:
                try:
                    v = float(row[i])
                except ValueError:
                    raise ParseError(f"{path}: row {row_no}, column {header[i]!r}: "
                                     f"not a number: {row[i]!r}", row=row_no, column=header[i]) from None
                if not np.isfinite(v):
                    raise ParseError(f"{path}: row {row_no}, column {header[i]!r}: non-finite value",
                                     row=row_no, column=header[i])
                vals.append(v)
            s = row[i_split].strip()
            if s not in SPLITS:
                raise ParseError(f"{path}: row {row_no}: split must be one of {SPLITS}, got {s!r}",
                                 row=row_no, column="split")
            feats.append(vals[:-1])
            mos.append(vals[-1])
            split.append(s)
    if not mos:
        raise SchemaError(f"{path}: no data rows")
    return Dataset(features=np.array(feats, dtype=np.float64), mos=np.array(mos, dtype=np.float64),
                   split=np.array(split))
