"""Experiment orchestration: single runs, convergence measurement, the
temperature/prior ablation grid, and the OOD noise sweep."""

from __future__ import annotations

import dataclasses
import io
import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import metrics as _metrics
from .data import Dataset, corrupt
from .metrics import EvalBatch, MetricsReport
from .models import (ModelSpec, TrainingTrace, ensemble_predict,
                     mc_dropout_predict, predict, train, ttda_predict)
from .optim import TemperatureSchedule

METHODS = ("nll", "lika", "lika-norm", "lika-exact",
           "do-nll", "do-lika", "ens-nll", "ens-lika", "ttda")

PRIORS = ("uniform", "gaussian", "laplace")

# base loss trained by each method
_METHOD_LOSS = {
    "nll": "nll", "lika": "lika", "lika-norm": "lika-norm",
    "lika-exact": "lika-exact",
    "do-nll": "nll", "do-lika": "lika",
    "ens-nll": "nll", "ens-lika": "lika",
    "ttda": "nll",
}


@dataclass(frozen=True)
class TrainConfig:
    method: str = "lika"
    epochs: int = 2000
    batch_size: int = 64
    lr0: float = 2e-4
    lr_min: float = 0.0
    schedule: TemperatureSchedule | None = None
    seed: int = 0
    ensemble_size: int = 5
    dropout_rate: float = 0.1
    n_passes: int = 100
    ttda_n_aug: int = 32
    ttda_aug_frac: float = 0.1
    prior: str = "uniform"
    prior_lambda: float = 1e-5
    grad_clip: float = 0.0
    normalize_inputs: bool = True
    bins: int = 10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; "
                             f"choose from {', '.join(METHODS)}")
        if self.prior not in PRIORS:
            raise ValueError(f"unknown prior {self.prior!r}; "
                             f"choose from {', '.join(PRIORS)}")
        if self.method.startswith("ens-") and self.ensemble_size < 2:
            raise ValueError("ensemble methods need ensemble_size >= 2")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.schedule is None:
            object.__setattr__(self, "schedule",
                               TemperatureSchedule(total_epochs=self.epochs))

    @property
    def loss_name(self) -> str:
        return _METHOD_LOSS[self.method]


@dataclass
class ExperimentReport:
    config: TrainConfig
    dataset_name: str
    metrics: MetricsReport
    trace: TrainingTrace
    epochs_to_converge: int
    wall_seconds: float


def epochs_to_converge(trace: TrainingTrace, rel_delta: float = 0.10,
                       patience: int = 20) -> int:
    """First epoch (1-indexed) where validation MAE enters the band
    (1 + rel_delta) * best MAE and stays there for `patience` consecutive
    epochs (window clipped at the trace end).  Returns the trace length as
    a sentinel if the band is never held."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    if rel_delta <= 0 or patience < 1:
        raise ValueError("need rel_delta > 0 and patience >= 1")
    mae = trace.val_mae_series()
    band = (1.0 + rel_delta) * mae.min()
    ok = mae <= band
    n = len(ok)
    for i in range(n):
        if ok[i:min(i + patience, n)].all():
            return i + 1
    return n


def _build_spec(dataset: Dataset, config: TrainConfig,
                model_spec: ModelSpec | None) -> ModelSpec:
    if model_spec is None:
        model_spec = ModelSpec(input_dim=dataset.inputs.shape[1],
                               output_dim=dataset.targets.shape[1])
    if config.method.startswith("do-"):
        model_spec = dataclasses.replace(model_spec,
                                         dropout_rate=config.dropout_rate)
    elif model_spec.dropout_rate != 0.0:
        model_spec = dataclasses.replace(model_spec, dropout_rate=0.0)
    return model_spec


def fit_method(dataset: Dataset, config: TrainConfig,
               model_spec: ModelSpec | None = None):
    """Train per the configured method.  Returns (predict_fn, trace) where
    predict_fn maps an N x m input matrix to (mean, sigma) matrices."""
    spec = _build_spec(dataset, config, model_spec)
    method = config.method

    if method.startswith("ens-"):
        members = []
        trace = None
        for k in range(config.ensemble_size):
            member_cfg = replace(config, seed=config.seed + k)
            params, t = train(spec, dataset, member_cfg)
            members.append(params)
            if trace is None:
                trace = t
        def predict_fn(x):
            pred = ensemble_predict(members, spec, x)
            return pred.mean, pred.sigma
        return predict_fn, trace

    params, trace = train(spec, dataset, config)

    if method.startswith("do-"):
        def predict_fn(x):
            pred = mc_dropout_predict(params, spec, x,
                                      n_passes=config.n_passes,
                                      seed=config.seed)
            return pred.mean, pred.sigma
        return predict_fn, trace

    if method == "ttda":
        train_x, _ = dataset.subset("train")
        aug_sigma = config.ttda_aug_frac * train_x.std(axis=0)
        def predict_fn(x):
            pred = ttda_predict(params, spec, x, n_aug=config.ttda_n_aug,
                                aug_sigma=aug_sigma, seed=config.seed)
            return pred.mean, pred.sigma
        return predict_fn, trace

    def predict_fn(x):
        pred = predict(params, spec, x)
        return pred.mean, pred.sigma
    return predict_fn, trace


def run_experiment(dataset: Dataset, config: TrainConfig,
                   model_spec: ModelSpec | None = None,
                   dataset_name: str = "dataset") -> ExperimentReport:
    """Train, evaluate the full metric suite on test, fit s* on validation."""
    start = time.perf_counter()
    predict_fn, trace = fit_method(dataset, config, model_spec)
    x_val, y_val = dataset.subset("val")
    x_test, y_test = dataset.subset("test")
    val_mean, val_sigma = predict_fn(x_val)
    test_mean, test_sigma = predict_fn(x_test)
    report = _metrics.evaluate(
        EvalBatch(mean=test_mean, sigma=test_sigma, targets=y_test),
        EvalBatch(mean=val_mean, sigma=val_sigma, targets=y_val),
        m_bins=config.bins)
    return ExperimentReport(
        config=config, dataset_name=dataset_name, metrics=report,
        trace=trace, epochs_to_converge=epochs_to_converge(trace),
        wall_seconds=time.perf_counter() - start)


# ---------------------------------------------------------------------------
# Ablation grid

# (label, t2_init, t3_init, t2_anneal, t3_anneal, prior); order is fixed
ABLATION_ROWS = (
    ("t2=0,t3=0", 0.0, 0.0, False, False, "uniform"),
    ("t2=10,t3=10 fixed", 10.0, 10.0, False, False, "uniform"),
    ("t2=100 fixed,t3=0", 100.0, 0.0, False, False, "uniform"),
    ("t2=0,t3=100 fixed", 0.0, 100.0, False, False, "uniform"),
    ("t2=100 dec,t3=0", 100.0, 0.0, True, False, "uniform"),
    ("t2=0,t3=100 dec", 0.0, 100.0, False, True, "uniform"),
    ("t2=100 dec,t3=100 dec", 100.0, 100.0, True, True, "uniform"),
    ("t2=100 dec,t3=100 dec gaussian prior", 100.0, 100.0, True, True, "gaussian"),
    ("t2=100 dec,t3=100 dec laplace prior", 100.0, 100.0, True, True, "laplace"),
)


def ablation_row_config(base: TrainConfig, row) -> TrainConfig:
    label, t2, t3, t2_anneal, t3_anneal, prior = row
    sched = TemperatureSchedule(total_epochs=base.epochs,
                                t2_init=t2, t3_init=t3,
                                t2_anneal=t2_anneal, t3_anneal=t3_anneal)
    return replace(base, method="lika", schedule=sched, prior=prior)


def ablation_grid(dataset: Dataset, base_config: TrainConfig,
                  model_spec: ModelSpec | None = None) -> list[dict]:
    """The nine-row temperature/prior grid.  Per-row failures are recorded
    and the grid continues."""
    results = []
    for row in ABLATION_ROWS:
        label = row[0]
        cfg = ablation_row_config(base_config, row)
        try:
            report = run_experiment(dataset, cfg, model_spec)
            results.append({"row": label, "report": report, "error": None})
        except Exception as err:  # keep going; the row records its failure
            results.append({"row": label, "report": None, "error": str(err)})
    return results


# ---------------------------------------------------------------------------
# OOD sweep

OOD_LEVELS = ("NL0", "NL1", "NL2")


def ood_sweep(dataset: Dataset, configs: list[TrainConfig],
              seeds: list[int],
              model_spec: ModelSpec | None = None) -> list[dict]:
    """Train each config on clean data per seed; evaluate the test split
    under each corruption level.  Rows carry the median-over-seeds MAE and
    UCE per (method, level), merged by key so execution order is
    irrelevant."""
    if not configs or not seeds:
        raise ValueError("need at least one config and one seed")
    per_key: dict[tuple[str, str], dict[str, list[float]]] = {}
    for config in configs:
        for seed in seeds:
            cfg = replace(config, seed=seed)
            predict_fn, _ = fit_method(dataset, cfg, model_spec)
            for level in OOD_LEVELS:
                corrupted = corrupt(dataset, level, seed=seed)
                x_test, y_test = corrupted.subset("test")
                mean, sigma = predict_fn(x_test)
                batch = EvalBatch(mean=mean, sigma=sigma, targets=y_test)
                mae, _, _ = _metrics.regression_metrics(batch)
                uce_val, _ = _metrics.uce(batch, config.bins)
                cell = per_key.setdefault((config.method, level),
                                          {"mae": [], "uce": []})
                cell["mae"].append(mae)
                cell["uce"].append(uce_val)
    rows = []
    for config in configs:
        for level in OOD_LEVELS:
            cell = per_key[(config.method, level)]
            rows.append({"method": config.method, "level": level,
                         "mae": float(np.median(cell["mae"])),
                         "uce": float(np.median(cell["uce"]))})
    return rows


# ---------------------------------------------------------------------------
# Serialization helpers (kebab-case config schema, trace CSV, report JSON)

TRACE_COLUMNS = ("epoch", "lr", "t2", "t3", "train_loss", "val_loss",
                 "val_mae", "val_uce", "val_ece")


def trace_to_csv(trace: TrainingTrace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for r in trace.records:
        writer.writerow([r.epoch, repr(r.lr), repr(r.t2), repr(r.t3),
                         repr(r.train_loss), repr(r.val_loss),
                         repr(r.val_mae), repr(r.val_uce), repr(r.val_ece)])
    return buf.getvalue()


def schedule_to_dict(sched: TemperatureSchedule) -> dict:
    return {"t0": sched.t0, "t-end": sched.t_end,
            "total-epochs": sched.total_epochs, "law": sched.law,
            "t2-init": sched.t2_init, "t3-init": sched.t3_init,
            "t2-anneal": sched.t2_anneal, "t3-anneal": sched.t3_anneal}


def schedule_from_dict(d: dict) -> TemperatureSchedule:
    return TemperatureSchedule(
        t0=d.get("t0", 100.0), t_end=d.get("t-end", 1e-3),
        total_epochs=d.get("total-epochs", 2000), law=d.get("law", "exponential"),
        t2_init=d.get("t2-init"), t3_init=d.get("t3-init"),
        t2_anneal=d.get("t2-anneal", True), t3_anneal=d.get("t3-anneal", True))


def config_to_dict(config: TrainConfig) -> dict:
    out = {}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if f.name == "schedule":
            value = schedule_to_dict(value)
        out[f.name.replace("_", "-")] = value
    return out


def config_from_dict(d: dict) -> TrainConfig:
    kwargs = {}
    for f in dataclasses.fields(TrainConfig):
        key = f.name.replace("_", "-")
        if key not in d:
            continue
        value = d[key]
        if f.name == "schedule" and value is not None:
            value = schedule_from_dict(value)
        kwargs[f.name] = value
    return TrainConfig(**kwargs)


def report_to_dict(report: ExperimentReport) -> dict:
    """JSON-ready record.  Wall-clock time is deliberately excluded so that
    repeated runs serialize byte-identically."""
    return {
        "config": config_to_dict(report.config),
        "dataset": report.dataset_name,
        "metrics": {name: getattr(report.metrics, name)
                    for name in MetricsReport.FIELD_ORDER},
        "epochs-to-converge": report.epochs_to_converge,
    }
