"""Small feed-forward mean/sigma networks with hand-rolled backprop.

Parameters live in a single flat vector (views are reshaped per layer), so
the Adam update and the finite-difference gradient checker both operate on
one array.  The sigma head goes through softplus and is floored at
SIGMA_FLOOR, keeping every loss and its gradients finite.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
import json
from pathlib import Path

import numpy as np

from .losses import SIGMA_FLOOR, LOSS_FUNCTIONS, TemperaturePair
from .optim import AdamState, NumericFailure, adam_step, cosine_lr, temperature_at
from . import metrics as _metrics

# softplus(bias) == 1 at this bias, so a fresh model starts near sigma = 1
_SIGMA_HEAD_BIAS = float(np.log(np.e - 1.0))


@dataclass(frozen=True)
class ModelSpec:
    input_dim: int
    output_dim: int
    hidden_layers: tuple[int, ...] = (64, 64)
    activation: str = "tanh"
    dropout_rate: float = 0.0
    head: str = "mean_sigma"

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("dimensions must be positive")
        if any(w < 1 for w in self.hidden_layers):
            raise ValueError("hidden widths must be >= 1")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.head != "mean_sigma":
            raise ValueError(f"unknown head {self.head!r}")

    def layer_dims(self) -> list[int]:
        return [self.input_dim, *self.hidden_layers, 2 * self.output_dim]

    def n_params(self) -> int:
        dims = self.layer_dims()
        return sum(dims[i] * dims[i + 1] + dims[i + 1] for i in range(len(dims) - 1))

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "output_dim": self.output_dim,
                "hidden_layers": list(self.hidden_layers),
                "activation": self.activation,
                "dropout_rate": self.dropout_rate, "head": self.head}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["hidden_layers"] = tuple(d["hidden_layers"])
        return cls(**d)


@dataclass
class ModelParams:
    """Flat parameter vector plus input-standardization constants."""

    flat: np.ndarray
    x_mean: np.ndarray
    x_std: np.ndarray


@dataclass(frozen=True)
class PredictiveDistribution:
    mean: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class TraceRecord:
    epoch: int
    lr: float
    t2: float
    t3: float
    train_loss: float
    val_loss: float
    val_mae: float
    val_uce: float
    val_ece: float


@dataclass
class TrainingTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def val_mae_series(self) -> np.ndarray:
        return np.array([r.val_mae for r in self.records])


def _layer_views(spec: ModelSpec, flat: np.ndarray):
    """(W, b) views into the flat vector, one pair per layer."""
    dims = spec.layer_dims()
    views = []
    pos = 0
    for i in range(len(dims) - 1):
        n_in, n_out = dims[i], dims[i + 1]
        w = flat[pos:pos + n_in * n_out].reshape(n_in, n_out)
        pos += n_in * n_out
        b = flat[pos:pos + n_out]
        pos += n_out
        views.append((w, b))
    return views


class _Workspace:
    """Cached layer views into a parameter vector and a reusable gradient
    buffer.  Valid while the flat buffer object is updated in place."""

    def __init__(self, spec: ModelSpec, params: "ModelParams"):
        self.spec = spec
        self.params = params
        self.layers = _layer_views(spec, params.flat)
        self.grad = np.zeros_like(params.flat)
        self.grad_views = _layer_views(spec, self.grad)


def init_model(spec: ModelSpec, seed: int) -> ModelParams:
    """Deterministic scaled-uniform init; sigma-head bias gives sigma ~ 1."""
    rng = np.random.default_rng(seed)
    flat = np.empty(spec.n_params())
    for w, b in _layer_views(spec, flat):
        scale = 1.0 / np.sqrt(w.shape[0])
        w[:] = rng.uniform(-scale, scale, size=w.shape)
        b[:] = 0.0
    # last-layer bias: second half feeds the sigma head
    _, b_last = _layer_views(spec, flat)[-1]
    b_last[spec.output_dim:] = _SIGMA_HEAD_BIAS
    return ModelParams(flat=flat,
                       x_mean=np.zeros(spec.input_dim),
                       x_std=np.ones(spec.input_dim))


def _softplus(x):
    return np.where(x > 30.0, x, np.log1p(np.exp(np.minimum(x, 30.0))))


def _forward(params: ModelParams, spec: ModelSpec, x: np.ndarray,
             dropout_rng: np.random.Generator | None = None,
             ws: _Workspace | None = None):
    """Batch forward pass.  Returns (mean, sigma, cache) where cache holds
    everything backprop needs.  Dropout is applied (inverted scaling) only
    when dropout_rng is given and spec.dropout_rate > 0."""
    h = (x - params.x_mean) / params.x_std
    layers = ws.layers if ws is not None else _layer_views(spec, params.flat)
    acts = [h]          # post-activation (and post-dropout) inputs per layer
    pre_acts = []
    masks = []
    for i, (w, b) in enumerate(layers[:-1]):
        z = h @ w + b
        pre_acts.append(z)
        h = np.tanh(z) if spec.activation == "tanh" else np.maximum(z, 0.0)
        if dropout_rng is not None and spec.dropout_rate > 0.0:
            keep = 1.0 - spec.dropout_rate
            mask = (dropout_rng.random(h.shape) < keep) / keep
            h = h * mask
            masks.append(mask)
        else:
            masks.append(None)
        acts.append(h)
    w, b = layers[-1]
    out = h @ w + b
    n = spec.output_dim
    mean = out[:, :n]
    raw = out[:, n:]
    sigma = _softplus(raw) + SIGMA_FLOOR
    cache = (acts, pre_acts, masks, raw)
    return mean, sigma, cache


def _backward(params: ModelParams, spec: ModelSpec, cache,
              d_mean: np.ndarray, d_sigma: np.ndarray,
              ws: _Workspace | None = None) -> np.ndarray:
    """Compose head derivatives with the layer Jacobians; returns flat grad."""
    acts, pre_acts, masks, raw = cache
    # d sigma / d raw = sigmoid(raw)
    d_raw = d_sigma / (1.0 + np.exp(-raw))
    delta = np.concatenate([d_mean, d_raw], axis=1)
    if ws is not None:
        layers, grad, grad_views = ws.layers, ws.grad, ws.grad_views
    else:
        layers = _layer_views(spec, params.flat)
        grad = np.zeros_like(params.flat)
        grad_views = _layer_views(spec, grad)
    # output layer
    w, _ = layers[-1]
    gw, gb = grad_views[-1]
    gw[:] = acts[-1].T @ delta
    gb[:] = delta.sum(axis=0)
    d_h = delta @ w.T
    # hidden layers, back to front
    for i in range(len(layers) - 2, -1, -1):
        if masks[i] is not None:
            d_h = d_h * masks[i]
        z = pre_acts[i]
        if spec.activation == "tanh":
            d_z = d_h * (1.0 - np.tanh(z) ** 2)
        else:
            d_z = d_h * (z > 0.0)
        w, _ = layers[i]
        gw, gb = grad_views[i]
        gw[:] = acts[i].T @ d_z
        gb[:] = d_z.sum(axis=0)
        d_h = d_z @ w.T
    return grad


def predict(params: ModelParams, spec: ModelSpec, x) -> PredictiveDistribution:
    """Deterministic prediction.  Accepts a single input vector or an N x m
    batch; output shapes follow the input (order-preserving)."""
    x = np.asarray(x, float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.shape[1] != spec.input_dim:
        raise ValueError(f"expected {spec.input_dim} features, got {xb.shape[1]}")
    if not np.all(np.isfinite(xb)):
        raise ValueError("non-finite input to predict")
    mean, sigma, _ = _forward(params, spec, xb)
    if single:
        return PredictiveDistribution(mean=mean[0], sigma=sigma[0])
    return PredictiveDistribution(mean=mean, sigma=sigma)


# ---------------------------------------------------------------------------
# Training


def _prior_penalty(flat: np.ndarray, prior: str, lam: float):
    """Optional weight prior as (penalty value, gradient)."""
    if prior == "uniform" or lam == 0.0:
        return 0.0, 0.0
    if prior == "gaussian":        # l2
        return lam * float(np.sum(flat * flat)), 2.0 * lam * flat
    if prior == "laplace":         # l1
        return lam * float(np.sum(np.abs(flat))), lam * np.sign(flat)
    raise ValueError(f"unknown prior {prior!r}")


def batch_loss_and_grad(params: ModelParams, spec: ModelSpec,
                        x: np.ndarray, y: np.ndarray, loss_name: str,
                        temps: TemperaturePair,
                        dropout_rng: np.random.Generator | None = None,
                        prior: str = "uniform", prior_lambda: float = 0.0,
                        ws: _Workspace | None = None):
    """Mean per-sample loss over the batch (and over output coordinates),
    with its gradient w.r.t. the flat parameter vector."""
    loss_fn = LOSS_FUNCTIONS[loss_name]
    mean, sigma, cache = _forward(params, spec, x, dropout_rng, ws=ws)
    le = loss_fn(mean, y, sigma, temps)
    scale = 1.0 / le.value.size
    value = float(np.sum(le.value)) * scale
    grad = _backward(params, spec, cache, le.d_mean * scale,
                     le.d_sigma * scale, ws=ws)
    pv, pg = _prior_penalty(params.flat, prior, prior_lambda)
    if isinstance(pg, float):
        return value, grad
    return value + pv, grad + pg


def train(spec: ModelSpec, dataset, config) -> tuple[ModelParams, TrainingTrace]:
    """Mini-batch Adam training of one network.

    `config` carries: loss_name (nll/lika/lika-norm/lika-exact), epochs,
    batch_size, lr0, lr_min, schedule (TemperatureSchedule), seed, prior,
    prior_lambda, grad_clip (0 disables), normalize_inputs.
    Deterministic given the seed.  On a non-finite loss the partial trace is
    attached to the raised NumericFailure.
    """
    loss_name = config.loss_name
    if loss_name not in LOSS_FUNCTIONS:
        raise ValueError(f"unknown loss {loss_name!r}")
    x_tr, y_tr = dataset.subset("train")
    x_val, y_val = dataset.subset("val")
    if len(x_tr) == 0 or len(x_val) == 0:
        raise ValueError("dataset needs non-empty train and val splits")

    params = init_model(spec, config.seed)
    if getattr(config, "normalize_inputs", True):
        params.x_mean = x_tr.mean(axis=0)
        sd = x_tr.std(axis=0)
        sd[sd == 0] = 1.0
        params.x_std = sd
    rng = np.random.default_rng(config.seed)
    adam = AdamState.init(params.flat.size)
    epochs = config.epochs
    batch_size = config.batch_size
    grad_clip = getattr(config, "grad_clip", 0.0)
    trace = TrainingTrace()
    n_tr = len(x_tr)
    use_dropout = spec.dropout_rate > 0.0
    ws = _Workspace(spec, params)

    for epoch in range(epochs):
        lr = cosine_lr(epoch, epochs, config.lr0, getattr(config, "lr_min", 0.0))
        if loss_name == "nll":
            temps = TemperaturePair(0.0, 0.0)
        else:
            temps = temperature_at(epoch, config.schedule)
        perm = rng.permutation(n_tr)
        epoch_loss = 0.0
        n_batches = 0
        for start in range(0, n_tr, batch_size):
            idx = perm[start:start + batch_size]
            value, grad = batch_loss_and_grad(
                params, spec, x_tr[idx], y_tr[idx], loss_name, temps,
                dropout_rng=rng if use_dropout else None,
                prior=config.prior, prior_lambda=config.prior_lambda, ws=ws)
            if not np.isfinite(value):
                err = NumericFailure(f"non-finite loss at epoch {epoch}")
                err.trace = trace
                raise err
            if grad_clip > 0.0:
                norm = float(np.linalg.norm(grad))
                if norm > grad_clip:
                    grad = grad * (grad_clip / norm)
            try:
                adam, new_flat = adam_step(adam, params.flat, grad, lr)
            except NumericFailure as err:
                err.trace = trace
                raise
            params.flat[:] = new_flat  # in place, keeping workspace views valid
            epoch_loss += value
            n_batches += 1

        # validation bookkeeping (deterministic heads, no dropout)
        mean_v, sigma_v, _ = _forward(params, spec, x_val)
        le_val = LOSS_FUNCTIONS[loss_name](mean_v, y_val, sigma_v, temps)
        batch = _metrics.EvalBatch(mean=mean_v, sigma=sigma_v, targets=y_val)
        val_uce, _ = _metrics.uce(batch, 10)
        trace.records.append(TraceRecord(
            epoch=epoch, lr=float(lr), t2=temps.t2, t3=temps.t3,
            train_loss=epoch_loss / max(n_batches, 1),
            val_loss=float(np.mean(le_val.value)),
            val_mae=float(np.mean(np.abs(mean_v - y_val))),
            val_uce=float(val_uce),
            val_ece=float(_metrics.ece(batch)),
        ))
    return params, trace


# ---------------------------------------------------------------------------
# Prediction wrappers for the baseline methods


def ensemble_predict(member_params: list[ModelParams], spec: ModelSpec,
                     x) -> PredictiveDistribution:
    """Mean of member means; variance = mean of member sigma^2 heads."""
    if not member_params:
        raise ValueError("ensemble needs at least one member")
    preds = [predict(p, spec, x) for p in member_params]
    mean = np.mean([p.mean for p in preds], axis=0)
    var = np.mean([p.sigma**2 for p in preds], axis=0)
    return PredictiveDistribution(mean=mean, sigma=np.sqrt(var))


def mc_dropout_predict(params: ModelParams, spec: ModelSpec, x,
                       n_passes: int = 100, seed: int = 0) -> PredictiveDistribution:
    """Stochastic forward passes with dropout active; mean of pass means,
    variance = mean of pass sigma^2 heads."""
    if n_passes < 1:
        raise ValueError("n_passes must be >= 1")
    x = np.asarray(x, float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if spec.dropout_rate == 0.0:
        return predict(params, spec, x)
    rng = np.random.default_rng(seed)
    means, variances = [], []
    for _ in range(n_passes):
        mean, sigma, _ = _forward(params, spec, xb, dropout_rng=rng)
        means.append(mean)
        variances.append(sigma**2)
    mean = np.mean(means, axis=0)
    sigma = np.maximum(np.sqrt(np.mean(variances, axis=0)), SIGMA_FLOOR)
    if single:
        return PredictiveDistribution(mean=mean[0], sigma=sigma[0])
    return PredictiveDistribution(mean=mean, sigma=sigma)


def ttda_predict(params: ModelParams, spec: ModelSpec, x,
                 n_aug: int = 32, aug_sigma=0.1, seed: int = 0) -> PredictiveDistribution:
    """Test-time augmentation: the input plus n_aug Gaussian-perturbed
    copies through a deterministic model; uncertainty = sample std of the
    predicted means across copies."""
    x = np.asarray(x, float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    rng = np.random.default_rng(seed)
    aug_sigma = np.broadcast_to(np.asarray(aug_sigma, float), (spec.input_dim,))
    means = [predict(params, spec, xb).mean]
    for _ in range(n_aug):
        noisy = xb + aug_sigma * rng.standard_normal(xb.shape)
        means.append(predict(params, spec, noisy).mean)
    stack = np.stack(means)
    mean = stack.mean(axis=0)
    if len(means) > 1:
        var = stack.var(axis=0, ddof=1)
    else:
        var = np.zeros_like(mean)
    sigma = np.maximum(np.sqrt(var), SIGMA_FLOOR)
    if single:
        return PredictiveDistribution(mean=mean[0], sigma=sigma[0])
    return PredictiveDistribution(mean=mean, sigma=sigma)


# ---------------------------------------------------------------------------
# Checkpoints

_CHECKPOINT_VERSION = 1


def save_model(params: ModelParams, spec: ModelSpec, path) -> None:
    """JSON checkpoint; float repr round-trips IEEE doubles losslessly."""
    record = {
        "version": _CHECKPOINT_VERSION,
        "spec": spec.to_dict(),
        "flat": [float(v) for v in params.flat],
        "x_mean": [float(v) for v in params.x_mean],
        "x_std": [float(v) for v in params.x_std],
    }
    with open(path, "w") as fh:
        json.dump(record, fh)


def load_model(path) -> tuple[ModelParams, ModelSpec]:
    with open(path) as fh:
        record = json.load(fh)
    if record.get("version") != _CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {record.get('version')}")
    spec = ModelSpec.from_dict(record["spec"])
    params = ModelParams(flat=np.array(record["flat"]),
                         x_mean=np.array(record["x_mean"]),
                         x_std=np.array(record["x_std"]))
    if params.flat.size != spec.n_params():
        raise ValueError("checkpoint parameter count does not match spec")
    return params, spec
