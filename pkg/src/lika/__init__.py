"""Calibrated-uncertainty regression with likelihood-annealed objectives."""

from .losses import (SIGMA_FLOOR, LossEval, TemperaturePair, gaussian_nll,
                     lika_loss, lika_loss_piecewise, lika_norm_loss,
                     lika_reg, exact_norm_nll, norm_constant)
from .optim import TemperatureSchedule, cosine_lr, temperature_at
from .models import ModelSpec, PredictiveDistribution, init_model, predict, train
from .data import Dataset, LorenzConfig, generate_lorenz, generate_synthetic
from .metrics import EvalBatch, MetricsReport, evaluate
from .harness import TrainConfig, run_experiment

__all__ = [
    "SIGMA_FLOOR", "LossEval", "TemperaturePair", "gaussian_nll",
    "lika_loss", "lika_loss_piecewise", "lika_norm_loss", "lika_reg",
    "exact_norm_nll", "norm_constant", "TemperatureSchedule", "cosine_lr",
    "temperature_at", "ModelSpec", "PredictiveDistribution", "init_model",
    "predict", "train", "Dataset", "LorenzConfig", "generate_lorenz",
    "generate_synthetic", "EvalBatch", "MetricsReport", "evaluate",
    "TrainConfig", "run_experiment",
]
