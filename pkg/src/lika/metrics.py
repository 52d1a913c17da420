"""Regression and calibration metrics plus post-hoc sigma scaling.

All operations act on an EvalBatch (predicted means/sigmas and targets,
flattened over output coordinates internally) and are pure.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import special

DEFAULT_ECE_LEVELS = tuple((2 * i + 1) / 20 for i in range(10))
DEFAULT_UCE_BINS = 10

PSNR_CAP = 100.0


@dataclass(frozen=True)
class EvalBatch:
    """Predictions and targets; mean/sigma/targets all N x n (or 1-D)."""

    mean: np.ndarray
    sigma: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_2d(np.asarray(self.mean, float)))
        object.__setattr__(self, "sigma", np.atleast_2d(np.asarray(self.sigma, float)))
        object.__setattr__(self, "targets", np.atleast_2d(np.asarray(self.targets, float)))
        if not (self.mean.shape == self.sigma.shape == self.targets.shape):
            raise ValueError("mean/sigma/targets shape mismatch")
        if self.mean.size == 0:
            raise ValueError("empty evaluation batch")

    @classmethod
    def from_predictions(cls, predictions, targets) -> "EvalBatch":
        """Build from a list of per-sample PredictiveDistribution objects."""
        mean = np.stack([np.atleast_1d(p.mean) for p in predictions])
        sigma = np.stack([np.atleast_1d(p.sigma) for p in predictions])
        return cls(mean=mean, sigma=sigma, targets=targets)

    def flat(self):
        """(errors^2 implicit) flattened mean, sigma, target arrays."""
        return self.mean.ravel(), self.sigma.ravel(), self.targets.ravel()


class BinStats(NamedTuple):
    count: int
    err: float       # mean squared error inside the bin
    uncer: float     # mean predicted variance inside the bin


class CorrResult(NamedTuple):
    value: float
    degenerate: bool


@dataclass(frozen=True)
class MetricsReport:
    mae: float
    mse: float
    psnr: float
    corr_coeff: float
    uce: float
    r_uce: float
    ece: float
    sharpness: float
    log_likelihood: float

    FIELD_ORDER = ("mae", "mse", "psnr", "corr_coeff", "uce", "r_uce",
                   "ece", "sharpness", "log_likelihood")

    def row(self, method: str, dataset: str, seed: int) -> dict:
        """One summary row with the fixed serialization field order."""
        row = {"method": method, "dataset": dataset, "seed": seed}
        for name in self.FIELD_ORDER:
            row[name] = getattr(self, name)
        return row


def regression_metrics(batch: EvalBatch) -> tuple[float, float, float]:
    """(MAE, MSE, PSNR); PSNR uses the target range of the batch and is
    capped at 100 dB."""
    mean, _, y = batch.flat()
    err = mean - y
    mae = float(np.mean(np.abs(err)))
    mse = float(np.mean(err * err))
    rng = float(y.max() - y.min())
    if mse == 0.0 or rng == 0.0:
        psnr = PSNR_CAP
    else:
        psnr = min(10.0 * np.log10(rng * rng / mse), PSNR_CAP)
    return mae, mse, float(psnr)


def uce(batch: EvalBatch, m_bins: int = DEFAULT_UCE_BINS) -> tuple[float, list[BinStats]]:
    """Bin-weighted |err(B) - uncer(B)| over equal-width variance bins."""
    if m_bins < 1:
        raise ValueError("m_bins must be >= 1")
    mean, sigma, y = batch.flat()
    var = sigma * sigma
    sq_err = (mean - y) ** 2
    lo, hi = float(var.min()), float(var.max())
    if hi == lo:
        bin_idx = np.zeros(var.size, dtype=int)
    else:
        edges = np.linspace(lo, hi, m_bins + 1)
        bin_idx = np.clip(np.searchsorted(edges, var, side="right") - 1, 0, m_bins - 1)
    n = var.size
    total = 0.0
    stats = []
    for b in range(m_bins):
        mask = bin_idx == b
        count = int(mask.sum())
        if count == 0:
            stats.append(BinStats(0, 0.0, 0.0))
            continue
        err_b = float(sq_err[mask].mean())
        unc_b = float(var[mask].mean())
        total += (count / n) * abs(err_b - unc_b)
        stats.append(BinStats(count, err_b, unc_b))
    return total, stats


def ece(batch: EvalBatch, levels=DEFAULT_ECE_LEVELS) -> float:
    """100 x mean over levels of |empirical central coverage - nominal|."""
    mean, sigma, y = batch.flat()
    z = np.abs(y - mean) / sigma
    levels = np.asarray(levels, float)
    # half-widths of the central p-intervals of a standard normal
    z_p = np.sqrt(2.0) * special.erfinv(levels)
    coverage = np.mean(z[:, None] <= z_p[None, :], axis=0)
    return 100.0 * float(np.mean(np.abs(coverage - levels)))


def sharpness(batch: EvalBatch) -> float:
    """Mean predicted sigma, in target units.  Lower is sharper."""
    _, sigma, _ = batch.flat()
    return float(np.mean(sigma))


def corr_coeff(batch: EvalBatch) -> CorrResult:
    """Pearson correlation between predicted variance and squared error.
    A constant series yields (0.0, degenerate=True)."""
    mean, sigma, y = batch.flat()
    if mean.size < 2:
        return CorrResult(0.0, True)
    var = sigma * sigma
    sq_err = (mean - y) ** 2
    sv = var.std()
    se = sq_err.std()
    if sv == 0.0 or se == 0.0:
        return CorrResult(0.0, True)
    r = float(np.mean((var - var.mean()) * (sq_err - sq_err.mean())) / (sv * se))
    return CorrResult(r, False)


def log_likelihood(batch: EvalBatch) -> float:
    """Mean Gaussian predictive log density, constants included."""
    mean, sigma, y = batch.flat()
    u = y - mean
    ll = -0.5 * np.log(2.0 * np.pi * sigma * sigma) - 0.5 * u * u / (sigma * sigma)
    return float(np.mean(ll))


def sigma_scale(calibration_batch: EvalBatch) -> float:
    """Optimal post-hoc variance scaling factor.

    Minimizing N log s + (1/(2 s^2)) * sum(u_i^2 / sigma_i^2) over s gives
    s*^2 = mean(u^2 / sigma^2).
    """
    mean, sigma, y = calibration_batch.flat()
    u = mean - y
    return float(np.sqrt(np.mean(u * u / (sigma * sigma))))


def sigma_scale_objective(s: float, batch: EvalBatch) -> float:
    """The scaling objective itself; used as the oracle for sigma_scale."""
    mean, sigma, y = batch.flat()
    u = mean - y
    n = u.size
    return n * np.log(s) + 0.5 / (s * s) * float(np.sum(u * u / (sigma * sigma)))


def recalibrated_uce(test_batch: EvalBatch, s_star: float,
                     m_bins: int = DEFAULT_UCE_BINS) -> float:
    """UCE after replacing sigma^2 with s*^2 sigma^2."""
    scaled = EvalBatch(mean=test_batch.mean, sigma=s_star * test_batch.sigma,
                       targets=test_batch.targets)
    value, _ = uce(scaled, m_bins)
    return value


def evaluate(test_batch: EvalBatch, calibration_batch: EvalBatch,
             m_bins: int = DEFAULT_UCE_BINS) -> MetricsReport:
    """The full metric tuple; s* is fit on the calibration batch."""
    mae, mse, psnr = regression_metrics(test_batch)
    uce_val, _ = uce(test_batch, m_bins)
    s_star = sigma_scale(calibration_batch)
    return MetricsReport(
        mae=mae, mse=mse, psnr=psnr,
        corr_coeff=corr_coeff(test_batch).value,
        uce=uce_val,
        r_uce=recalibrated_uce(test_batch, s_star, m_bins),
        ece=ece(test_batch),
        sharpness=sharpness(test_batch),
        log_likelihood=log_likelihood(test_batch),
    )


# ---------------------------------------------------------------------------
# Serialization

SUMMARY_COLUMNS = ("method", "dataset", "seed") + MetricsReport.FIELD_ORDER


def report_to_json(report: MetricsReport, method: str, dataset: str, seed: int) -> str:
    return json.dumps(report.row(method, dataset, seed))


def reports_to_csv(rows: list[dict]) -> str:
    """Summary CSV with the fixed 12-column layout."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row[k]) for k in SUMMARY_COLUMNS})
    return buf.getvalue()


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v
