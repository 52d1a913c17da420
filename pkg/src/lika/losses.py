"""Per-sample training objectives with analytic first derivatives.

Every loss returns a LossEval carrying the scalar (or element-wise) value
together with d_mean = d(loss)/d(y_hat) and d_sigma = d(loss)/d(sigma).
All functions broadcast over numpy arrays and are pure.

Conventions:
  u = y_hat - y (the residual)
  sigma is the predicted standard deviation, floored at SIGMA_FLOOR by the
  model head; losses with a log/1/sigma^2 term require sigma >= SIGMA_FLOOR.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

SIGMA_FLOOR = 1e-6

# erf saturates to 1 beyond this argument at double precision; the log-space
# branch of the normalizer treats log1p(erf(m)) as log(2) there.
_ERF_SATURATION = 6.0


class NumericDomainError(ValueError):
    """Raised when a loss is evaluated on non-finite inputs."""


@dataclass(frozen=True)
class TemperaturePair:
    """Weights of the residual (t2) and calibration (t3) penalty terms."""

    t2: float
    t3: float

    def __post_init__(self):
        if self.t2 < 0 or self.t3 < 0:
            raise ValueError(f"temperatures must be non-negative, got {self}")


@dataclass(frozen=True)
class LossEval:
    """Loss value plus partial derivatives w.r.t. the two model heads."""

    value: np.ndarray | float
    d_mean: np.ndarray | float
    d_sigma: np.ndarray | float


def _check_finite(*arrays):
    # a non-finite element always makes the sum non-finite; one reduction
    # per array is much cheaper than an elementwise isfinite scan
    for a in arrays:
        if not np.isfinite(np.sum(a)):
            raise NumericDomainError("non-finite input to loss evaluation")


def _sign0(u):
    """sign(u) with the subgradient 0 at exactly u == 0."""
    return np.sign(u)


def gaussian_nll(y_hat, y, sigma) -> LossEval:
    """Heteroscedastic Gaussian negative log-likelihood, constant dropped.

    value = 0.5*log(sigma^2) + (y_hat - y)^2 / (2 sigma^2)
    """
    y_hat, y, sigma = np.asarray(y_hat, float), np.asarray(y, float), np.asarray(sigma, float)
    _check_finite(y_hat, y, sigma)
    u = y_hat - y
    inv_var = 1.0 / (sigma * sigma)
    value = 0.5 * np.log(sigma * sigma) + 0.5 * u * u * inv_var
    d_mean = u * inv_var
    d_sigma = 1.0 / sigma - u * u * inv_var / sigma
    return LossEval(value, d_mean, d_sigma)


def lika_reg(y_hat, y, sigma, temps: TemperaturePair) -> LossEval:
    """Temperature-weighted residual and calibration penalties.

    value = t2*u^2 + t3*(sigma - |u|)^2.  Valid for sigma >= 0 (no log term).
    """
    y_hat, y, sigma = np.asarray(y_hat, float), np.asarray(y, float), np.asarray(sigma, float)
    _check_finite(y_hat, y, sigma)
    u = y_hat - y
    gap = sigma - np.abs(u)
    value = temps.t2 * u * u + temps.t3 * gap * gap
    d_mean = 2.0 * temps.t2 * u - 2.0 * temps.t3 * gap * _sign0(u)
    d_sigma = 2.0 * temps.t3 * gap
    return LossEval(value, d_mean, d_sigma)


def lika_loss(y_hat, y, sigma, temps: TemperaturePair) -> LossEval:
    """Annealed objective: gaussian_nll plus lika_reg.

    Reduces exactly to gaussian_nll when both temperatures are zero.
    """
    base = gaussian_nll(y_hat, y, sigma)
    reg = lika_reg(y_hat, y, sigma, temps)
    return LossEval(base.value + reg.value,
                    base.d_mean + reg.d_mean,
                    base.d_sigma + reg.d_sigma)


def lika_loss_piecewise(y_hat, y, sigma, temps: TemperaturePair) -> LossEval:
    """Two-branch form of the annealed objective.

    The calibration term is written as |y_hat - (y + sigma)|^2 when
    y_hat >= y and |y_hat - (y - sigma)|^2 otherwise; algebraically equal to
    (sigma - |u|)^2.  Kept as a separate evaluation path so the equivalence
    can be tested rather than assumed.
    """
    y_hat, y, sigma = np.asarray(y_hat, float), np.asarray(y, float), np.asarray(sigma, float)
    _check_finite(y_hat, y, sigma)
    u = y_hat - y
    base = gaussian_nll(y_hat, y, sigma)
    upper = u >= 0
    # branch residual: u - sigma on the upper branch, u + sigma on the lower
    branch = np.where(upper, u - sigma, u + sigma)
    value = base.value + temps.t2 * u * u + temps.t3 * branch * branch
    d_mean = base.d_mean + 2.0 * temps.t2 * u + 2.0 * temps.t3 * branch
    d_sigma = base.d_sigma + 2.0 * temps.t3 * branch * np.where(upper, -1.0, 1.0)
    return LossEval(value, d_mean, d_sigma)


def _norm_parts(sigma, temps: TemperaturePair):
    """Shared pieces of the closed-form normalizer and their d/d(sigma).

    With a = 1/(2 sigma^2) + t2 and b = a + t3:
      excess = t3 * sigma^2 * a / b      (exponent of the normalizer)
      m      = t3 * sigma / sqrt(b)      (erf argument)
    """
    t2, t3 = temps.t2, temps.t3
    sig2 = sigma * sigma
    b = t2 + t3 + 0.5 / sig2
    num = t2 * sig2 + 0.5          # sigma^2 * a
    excess = t3 * num / b
    sqrt_b = np.sqrt(b)
    m = t3 * sigma / sqrt_b
    # derivatives w.r.t. sigma (db/dsigma = -1/sigma^3)
    d_excess = t3 * (2.0 * t2 * sigma * b + num / sig2 / sigma) / (b * b)
    d_m = t3 / sqrt_b + t3 / (2.0 * sig2 * b * sqrt_b)
    return b, excess, d_excess, m, d_m


def _log1p_erf(m):
    """log(1 + erf(m)) with saturation for large arguments."""
    m = np.asarray(m, float)
    out = np.where(m > _ERF_SATURATION, np.log(2.0), np.log1p(special.erf(m)))
    return out


def log_norm_constant(sigma, temps: TemperaturePair):
    """log Z where Z = integral over u of exp(-(1/(2 sigma^2)+t2) u^2
    - t3 (|u| - sigma)^2).

    Closed form: Z = sqrt(pi/b) * exp(-excess) * (1 + erf(m)).
    Evaluated in log space so large temperature/sigma products cannot
    overflow or underflow.
    """
    sigma = np.asarray(sigma, float)
    _check_finite(sigma)
    b, excess, _, m, _ = _norm_parts(sigma, temps)
    return 0.5 * np.log(np.pi) - 0.5 * np.log(b) - excess + _log1p_erf(m)


def norm_constant(sigma, temps: TemperaturePair):
    """The normalizing constant Z itself (exp of log_norm_constant)."""
    return np.exp(log_norm_constant(sigma, temps))


def lika_norm_loss(y_hat, y, sigma, temps: TemperaturePair) -> LossEval:
    """Normalized-objective variant, evaluated exactly as printed:

    value = -excess + log(1 + erf(m)) - 0.5*log(sigma^2)
            + u^2/(2 sigma^2) + t2*u^2 + t3*(sigma - |u|)^2

    Note the -0.5*log(sigma^2) sign: this form is kept verbatim and does not
    reduce to gaussian_nll at zero temperatures.  See exact_norm_nll for the
    properly normalized density.
    """
    y_hat, y, sigma = np.asarray(y_hat, float), np.asarray(y, float), np.asarray(sigma, float)
    _check_finite(y_hat, y, sigma)
    t2, t3 = temps.t2, temps.t3
    u = y_hat - y
    sig2 = sigma * sigma
    _, excess, d_excess, m, d_m = _norm_parts(sigma, temps)
    erf_m = special.erf(m)
    gap = sigma - np.abs(u)
    value = (-excess + _log1p_erf(m) - 0.5 * np.log(sig2)
             + 0.5 * u * u / sig2 + t2 * u * u + t3 * gap * gap)
    d_mean = u / sig2 + 2.0 * t2 * u - 2.0 * t3 * gap * _sign0(u)
    d_erf_term = (2.0 / np.sqrt(np.pi)) * np.exp(-m * m) * d_m / (1.0 + erf_m)
    d_sigma = (-d_excess + d_erf_term - 1.0 / sigma
               - u * u / (sig2 * sigma) + 2.0 * t3 * gap)
    return LossEval(value, d_mean, d_sigma)


def exact_norm_nll(y_hat, y, sigma, temps: TemperaturePair) -> LossEval:
    """Exact negative log of the unit-mass normalized density.

    value = log Z(sigma, temps) + (1/(2 sigma^2) + t2) u^2 + t3 (|u|-sigma)^2
    so that exp(-value) integrates to 1 over the residual u.
    """
    y_hat, y, sigma = np.asarray(y_hat, float), np.asarray(y, float), np.asarray(sigma, float)
    _check_finite(y_hat, y, sigma)
    t2, t3 = temps.t2, temps.t3
    u = y_hat - y
    sig2 = sigma * sigma
    b, excess, d_excess, m, d_m = _norm_parts(sigma, temps)
    erf_m = special.erf(m)
    gap = np.abs(u) - sigma
    a = t2 + 0.5 / sig2
    log_z = 0.5 * np.log(np.pi) - 0.5 * np.log(b) - excess + _log1p_erf(m)
    value = log_z + a * u * u + t3 * gap * gap
    d_mean = 2.0 * a * u + 2.0 * t3 * gap * _sign0(u)
    d_erf_term = (2.0 / np.sqrt(np.pi)) * np.exp(-m * m) * d_m / (1.0 + erf_m)
    # d(log Z)/dsigma: the -0.5 log b term contributes +0.5/(sigma^3 b)
    d_log_z = 0.5 / (sig2 * sigma * b) - d_excess + d_erf_term
    d_sigma = d_log_z - u * u / (sig2 * sigma) - 2.0 * t3 * gap
    return LossEval(value, d_mean, d_sigma)


LOSS_FUNCTIONS = {
    "nll": lambda y_hat, y, sigma, temps: gaussian_nll(y_hat, y, sigma),
    "lika": lika_loss,
    "lika-norm": lika_norm_loss,
    "lika-exact": exact_norm_nll,
}
