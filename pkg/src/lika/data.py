"""Dataset generation, CSV ingestion, and input corruption.

Canonical on-disk format: CSV with header x0..x{m-1},y0..y{n-1}[,s0..s{n-1}]
(s* = optional ground-truth noise scale), one row per sample, plus a sidecar
JSON split manifest `<path>.splits.json` listing row indices per split.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SPLITS = ("train", "val", "test")


class DataError(ValueError):
    """Malformed or inconsistent input data; maps to exit code 2."""


@dataclass
class Dataset:
    inputs: np.ndarray            # N x m
    targets: np.ndarray           # N x n
    split: np.ndarray             # N tags in {train, val, test}
    true_sigma: np.ndarray | None = None   # N x n, generator-known noise scale

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, float))
        self.targets = np.atleast_2d(np.asarray(self.targets, float))
        if self.true_sigma is not None:
            self.true_sigma = np.atleast_2d(np.asarray(self.true_sigma, float))
        n = self.inputs.shape[0]
        if self.targets.shape[0] != n or len(self.split) != n:
            raise DataError("inputs/targets/split length mismatch")
        if n < 1:
            raise DataError("empty dataset")
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise DataError("non-finite values in dataset")

    @property
    def n_samples(self) -> int:
        return self.inputs.shape[0]

    def indices(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.split == split)

    def subset(self, split: str) -> tuple[np.ndarray, np.ndarray]:
        idx = self.indices(split)
        return self.inputs[idx], self.targets[idx]


def _random_split_tags(n: int, rng: np.random.Generator) -> np.ndarray:
    """70/15/15 split by seeded shuffle."""
    n_train = int(round(0.70 * n))
    n_val = int(round(0.15 * n))
    tags = np.array(["train"] * n_train + ["val"] * n_val
                    + ["test"] * (n - n_train - n_val), dtype="<U5")
    rng.shuffle(tags)
    return tags


# ---------------------------------------------------------------------------
# Lorenz denoising task


@dataclass(frozen=True)
class LorenzConfig:
    dt: float = 1e-5              # integration step
    sample_dt: float = 0.05       # sampling interval on the trajectory
    noise_sigma: float = 0.5
    n_samples: int = 2000         # clean samples on the trajectory
    burn_in: float = 10.0         # time units discarded before sampling
    window: int = 9               # noisy samples per input (odd, centered)
    seed: int = 0

    def __post_init__(self):
        if self.dt >= self.sample_dt:
            raise DataError("integration step must be below sample step")
        if self.window < 1:
            raise DataError("window must be >= 1")


def lorenz_rhs(z) -> np.ndarray:
    """Right-hand side of the Lorenz system (sigma=10, rho=28, beta=8/3)."""
    z1, z2, z3 = z
    return np.array([10.0 * (z2 - z1),
                     z1 * (28.0 - z3) - z2,
                     z1 * z2 - 8.0 * z3 / 3.0])


def _integrate_lorenz(cfg: LorenzConfig, rng: np.random.Generator) -> np.ndarray:
    """Forward-Euler trajectory sampled every sample_dt after burn-in.

    Plain-float inner loop: the 10^7-step integration is an order of
    magnitude faster than per-step numpy calls.
    """
    z1, z2, z3 = (1.0 + 0.1 * rng.standard_normal(),
                  1.0 + 0.1 * rng.standard_normal(),
                  1.0 + 0.1 * rng.standard_normal())
    dt = cfg.dt
    sub_steps = int(round(cfg.sample_dt / cfg.dt))
    burn_steps = int(round(cfg.burn_in / cfg.dt))
    for _ in range(burn_steps):
        d1 = 10.0 * (z2 - z1)
        d2 = z1 * (28.0 - z3) - z2
        d3 = z1 * z2 - 8.0 * z3 / 3.0
        z1 += dt * d1
        z2 += dt * d2
        z3 += dt * d3
    samples = np.empty((cfg.n_samples, 3))
    for i in range(cfg.n_samples):
        samples[i] = (z1, z2, z3)
        for _ in range(sub_steps):
            d1 = 10.0 * (z2 - z1)
            d2 = z1 * (28.0 - z3) - z2
            d3 = z1 * z2 - 8.0 * z3 / 3.0
            z1 += dt * d1
            z2 += dt * d2
            z3 += dt * d3
        if not (math.isfinite(z1) and math.isfinite(z2) and math.isfinite(z3)):
            raise DataError("Lorenz integration diverged")
    return samples


def generate_lorenz(cfg: LorenzConfig) -> Dataset:
    """Noisy-window -> clean-center denoising dataset on a Lorenz trajectory.

    Each input is a window of `cfg.window` consecutive noisy samples
    (flattened to 3*window features); the target is the clean sample at the
    window center.  The trajectory is cut chronologically 70/15/15 and
    windows are built within each block, so no sample is shared across
    splits.
    """
    rng = np.random.default_rng(cfg.seed)
    clean = _integrate_lorenz(cfg, rng)
    noisy = clean + cfg.noise_sigma * rng.standard_normal(clean.shape)
    n = cfg.n_samples
    n_train = int(round(0.70 * n))
    n_val = int(round(0.15 * n))
    blocks = [("train", 0, n_train),
              ("val", n_train, n_train + n_val),
              ("test", n_train + n_val, n)]
    w, c = cfg.window, cfg.window // 2
    inputs, targets, tags = [], [], []
    for tag, lo, hi in blocks:
        for start in range(lo, hi - w + 1):
            inputs.append(noisy[start:start + w].ravel())
            targets.append(clean[start + c])
            tags.append(tag)
    if not inputs:
        raise DataError("window too large for the requested sample count")
    inputs = np.array(inputs)
    targets = np.array(targets)
    true_sigma = np.full_like(targets, cfg.noise_sigma)
    return Dataset(inputs=inputs, targets=targets,
                   split=np.array(tags, dtype="<U5"), true_sigma=true_sigma)


# ---------------------------------------------------------------------------
# Synthetic heteroscedastic task


def synthetic_noise_scale(x):
    """Ground-truth noise scale of the synthetic task: 0.1 + 0.4|x|."""
    return 0.1 + 0.4 * np.abs(x)


def generate_synthetic(n: int, seed: int = 0) -> Dataset:
    """y = sin(2x) + N(0, (0.1 + 0.4|x|)^2), x ~ Uniform[-2, 2]."""
    if n < 10:
        raise DataError("need at least 10 samples")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-2.0, 2.0, size=n)
    sigma = synthetic_noise_scale(x)
    y = np.sin(2.0 * x) + sigma * rng.standard_normal(n)
    tags = _random_split_tags(n, rng)
    return Dataset(inputs=x[:, None], targets=y[:, None],
                   split=tags, true_sigma=sigma[:, None])


# ---------------------------------------------------------------------------
# CSV ingestion (generic tabular regression)


def load_csv(path, target_columns: list[str], normalize: bool = False,
             seed: int = 0) -> Dataset:
    """Tabular CSV with a header row; targets selected by column name.

    With normalize=True, inputs are z-scored using train-split statistics
    only.  Splits are 70/15/15 by seeded shuffle.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for col in target_columns:
            if col not in header:
                raise DataError(f"{path}: target column {col!r} not found")
        rows = []
        for i, row in enumerate(reader):
            if not row:
                continue
            values = []
            for j, cell in enumerate(row):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell at row {i + 1}, "
                        f"column {header[j] if j < len(header) else j!r}"
                    ) from None
            if len(values) != len(header):
                raise DataError(f"{path}: row {i + 1} has {len(values)} cells, "
                                f"expected {len(header)}")
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.array(rows)
    t_idx = [header.index(c) for c in target_columns]
    x_idx = [j for j in range(len(header)) if j not in t_idx]
    inputs = table[:, x_idx]
    targets = table[:, t_idx]
    rng = np.random.default_rng(seed)
    tags = _random_split_tags(len(rows), rng)
    if normalize:
        train = inputs[tags == "train"]
        mu = train.mean(axis=0)
        sd = train.std(axis=0)
        sd[sd == 0] = 1.0
        inputs = (inputs - mu) / sd
    return Dataset(inputs=inputs, targets=targets, split=tags)


# ---------------------------------------------------------------------------
# OOD corruption

NOISE_LEVELS = {"NL0": 0.0, "NL1": 0.25, "NL2": 0.5}


def corrupt(ds: Dataset, level: str, seed: int = 0) -> Dataset:
    """Additive Gaussian input noise scaled per feature by the train std.

    NL0 leaves the inputs untouched; NL1/NL2 add noise with sigma equal to
    0.25/0.5 of each feature's train-split standard deviation.  Targets are
    never modified.
    """
    if level not in NOISE_LEVELS:
        raise DataError(f"unknown noise level {level!r}")
    frac = NOISE_LEVELS[level]
    if frac == 0.0:
        return Dataset(inputs=ds.inputs.copy(), targets=ds.targets.copy(),
                       split=ds.split.copy(), true_sigma=ds.true_sigma)
    train_x = ds.inputs[ds.split == "train"]
    scale = frac * train_x.std(axis=0)
    rng = np.random.default_rng(seed)
    noisy = ds.inputs + scale * rng.standard_normal(ds.inputs.shape)
    return Dataset(inputs=noisy, targets=ds.targets.copy(),
                   split=ds.split.copy(), true_sigma=ds.true_sigma)


# ---------------------------------------------------------------------------
# Canonical dataset file I/O


def save_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    m = ds.inputs.shape[1]
    n = ds.targets.shape[1]
    header = ([f"x{j}" for j in range(m)] + [f"y{j}" for j in range(n)]
              + ([f"s{j}" for j in range(n)] if ds.true_sigma is not None else []))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n_samples):
            row = list(ds.inputs[i]) + list(ds.targets[i])
            if ds.true_sigma is not None:
                row += list(ds.true_sigma[i])
            writer.writerow(repr(float(v)) for v in row)
    manifest = {s: [int(i) for i in ds.indices(s)] for s in SPLITS}
    with open(path.with_name(path.name + ".splits.json"), "w") as fh:
        json.dump(manifest, fh)


def load_dataset(path, seed: int = 0) -> Dataset:
    """Read the canonical x*/y*/s* CSV; use the sidecar split manifest if
    present, otherwise assign a fresh seeded 70/15/15 split."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        x_cols = [j for j, h in enumerate(header) if h.startswith("x")]
        y_cols = [j for j, h in enumerate(header) if h.startswith("y")]
        s_cols = [j for j, h in enumerate(header) if h.startswith("s")]
        if not x_cols or not y_cols:
            raise DataError(f"{path}: header must contain x* and y* columns")
        rows = []
        for i, row in enumerate(reader):
            if not row:
                continue
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                bad = next(j for j, c in enumerate(row)
                           if not _is_float(c))
                raise DataError(
                    f"{path}: non-numeric cell at row {i + 1}, "
                    f"column {header[bad] if bad < len(header) else bad!r}"
                ) from None
    if not rows:
        raise DataError(f"{path}: no data rows")
    table = np.array(rows)
    inputs = table[:, x_cols]
    targets = table[:, y_cols]
    true_sigma = table[:, s_cols] if s_cols else None
    manifest_path = path.with_name(path.name + ".splits.json")
    n = len(rows)
    if manifest_path.exists():
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        tags = np.empty(n, dtype="<U5")
        tags[:] = ""
        for s in SPLITS:
            tags[manifest.get(s, [])] = s
        if np.any(tags == ""):
            raise DataError(f"{manifest_path}: splits do not cover all rows")
    else:
        tags = _random_split_tags(n, np.random.default_rng(seed))
    return Dataset(inputs=inputs, targets=targets, split=tags,
                   true_sigma=true_sigma)


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False
