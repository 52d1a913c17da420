"""Acceptance suite.

Each criterion prints exactly one pass/fail line.  The long-running
criteria share module-scoped fixtures: ten full-budget synthetic runs
(criteria 7, 8, 10), a six-run ablation block (criterion 10), and a
Lorenz dataset reused by criteria 9 and 11.
"""

import time
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, optimize

from lika.cli import parse_and_dispatch
from lika.data import LorenzConfig, generate_lorenz, generate_synthetic
from lika.harness import (ABLATION_ROWS, METHODS, OOD_LEVELS, TrainConfig,
                          ablation_row_config, epochs_to_converge, fit_method,
                          ood_sweep, run_experiment)
from lika.losses import (TemperaturePair, exact_norm_nll, gaussian_nll,
                         lika_loss, lika_loss_piecewise, log_norm_constant)
from lika.metrics import (EvalBatch, ece, log_likelihood, sigma_scale,
                          sigma_scale_objective, uce)
from lika.models import ModelSpec, batch_loss_and_grad, init_model
from lika.optim import TemperatureSchedule, grad_check

SEEDS = (0, 1, 2, 3, 4)


def _criterion(num, ok, detail):
    status = "PASS" if ok else "FAIL"
    line = f"[criterion {num:02d}] {status}: {detail}"
    print(line)
    assert ok, line


def _batch(mean, sigma, targets):
    return EvalBatch(mean=np.asarray(mean, float),
                     sigma=np.asarray(sigma, float),
                     targets=np.asarray(targets, float))


# ---------------------------------------------------------------------------
# shared fixtures


@pytest.fixture(scope="module")
def synth_runs():
    """Full-budget nll and lika runs, five seeds each, on the synthetic
    heteroscedastic task (n=2000, [64,64], 2000 epochs)."""
    ds = generate_synthetic(2000, seed=0)
    spec = ModelSpec(input_dim=1, output_dim=1, hidden_layers=(64, 64))
    true_sigma_test = ds.true_sigma[ds.split == "test"]
    x_test, y_test = ds.subset("test")
    x_val, y_val = ds.subset("val")
    runs = {}
    start = time.perf_counter()
    for method in ("nll", "lika"):
        for seed in SEEDS:
            cfg = TrainConfig(method=method, epochs=2000, seed=seed)
            predict_fn, trace = fit_method(ds, cfg, spec)
            mean_t, sigma_t = predict_fn(x_test)
            batch = _batch(mean_t, sigma_t, y_test)
            uce_val, _ = uce(batch)
            runs[(method, seed)] = {
                "trace": trace,
                "uce": uce_val,
                "mae": float(np.mean(np.abs(mean_t - y_test))),
                "corr_true": float(np.corrcoef(sigma_t.ravel(),
                                               true_sigma_test.ravel())[0, 1]),
                "converge": epochs_to_converge(trace),
            }
    elapsed = time.perf_counter() - start
    return {"dataset": ds, "spec": spec, "runs": runs, "elapsed": elapsed}


@pytest.fixture(scope="module")
def ablation_runs(synth_runs):
    """The two extra temperature configurations criterion 10 needs.  The
    (0,0) row is the nll baseline and the annealed row is the default lika
    schedule, both already trained in synth_runs."""
    ds = synth_runs["dataset"]
    spec = synth_runs["spec"]
    base = TrainConfig(method="lika", epochs=2000)
    out = {}
    for row in (ABLATION_ROWS[2], ABLATION_ROWS[3]):   # (100 fixed,0), (0,100 fixed)
        for seed in (0, 1, 2):
            cfg = replace(ablation_row_config(base, row), seed=seed)
            report = run_experiment(ds, cfg, spec, "synthetic")
            out[(row[0], seed)] = {"uce": report.metrics.uce,
                                   "mae": report.metrics.mae}
    return out


@pytest.fixture(scope="module")
def lorenz_dataset():
    return generate_lorenz(LorenzConfig(seed=0))


# ---------------------------------------------------------------------------
# criteria


def test_criterion_01_loss_identity():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    n = 100_000
    y_hat = rng.uniform(-10, 10, n)
    y = rng.uniform(-10, 10, n)
    sigma = rng.uniform(1e-3, 10, n)
    worst = 0.0
    for t2, t3 in [(0.0, 0.0), (0.5, 7.0), (100.0, 100.0)]:
        temps = TemperaturePair(t2, t3)
        a = lika_loss(y_hat, y, sigma, temps).value
        b = lika_loss_piecewise(y_hat, y, sigma, temps).value
        worst = max(worst, float(np.max(np.abs(a - b)
                                        / np.maximum(1.0, np.abs(a)))))
    elapsed = time.perf_counter() - start
    _criterion(1, worst < 1e-12 and elapsed < 1.0,
               f"max rel diff {worst:.2e} (< 1e-12), {elapsed:.2f}s (< 1s)")


def test_criterion_02_zero_temperature_reduction():
    rng = np.random.default_rng(1)
    n = 10_000
    y_hat = rng.uniform(-10, 10, n)
    y = rng.uniform(-10, 10, n)
    sigma = rng.uniform(1e-3, 10, n)
    zero = TemperaturePair(0.0, 0.0)
    a = lika_loss(y_hat, y, sigma, zero).value
    b = gaussian_nll(y_hat, y, sigma).value
    worst = float(np.max(np.abs(a - b)))

    ds = generate_synthetic(200, seed=0)
    spec = ModelSpec(input_dim=1, output_dim=1, hidden_layers=(16,))
    frozen = TemperatureSchedule(total_epochs=30, t2_init=0.0, t3_init=0.0)
    _, trace_l = fit_method(ds, TrainConfig(method="lika", epochs=30,
                                            schedule=frozen, seed=3), spec)
    _, trace_n = fit_method(ds, TrainConfig(method="nll", epochs=30,
                                            seed=3), spec)
    traces_equal = trace_l.records == trace_n.records
    _criterion(2, worst < 1e-15 and traces_equal,
               f"max abs diff {worst:.2e} (< 1e-15), "
               f"frozen-zero trace identical to nll: {traces_equal}")


def test_criterion_03_gradient_fidelity():
    start = time.perf_counter()
    spec = ModelSpec(input_dim=2, output_dim=2, hidden_layers=(6,))
    assert spec.n_params() <= 200
    rng = np.random.default_rng(2)
    x = rng.normal(size=(5, 2))
    y = rng.normal(size=(5, 2))
    temps = TemperaturePair(3.0, 2.0)
    worst = 0.0
    for loss_name in ("nll", "lika", "lika-norm", "lika-exact"):
        params = init_model(spec, seed=7)
        params.flat[:] += 0.05 * rng.normal(size=spec.n_params())

        def loss(flat, _loss=loss_name):
            p = replace(params, flat=flat)
            value, grad = batch_loss_and_grad(p, spec, x, y, _loss, temps)
            return value, grad

        worst = max(worst, grad_check(loss, params.flat.copy()))
    elapsed = time.perf_counter() - start
    _criterion(3, worst < 1e-4 and elapsed < 10.0,
               f"worst end-to-end rel error {worst:.2e} (< 1e-4), "
               f"{elapsed:.1f}s (< 10s)")


def test_criterion_04_normalization_oracle():
    start = time.perf_counter()
    worst = 0.0
    for sigma in (0.3, 1.0, 2.5):
        for t2 in (0.0, 0.7, 5.0, 50.0):
            for t3 in (0.0, 0.7, 5.0, 50.0):
                # scale the peak out so quad's absolute tolerance cannot
                # swamp astronomically small Z values
                a = 0.5 / sigma**2 + t2
                u0 = t3 * sigma / (a + t3)

                def logf(u):
                    return -(a * u * u + t3 * (abs(u) - sigma) ** 2)

                peak = logf(u0)
                integral, _ = integrate.quad(
                    lambda u: np.exp(logf(u) - peak), 0.0, sigma + 50.0,
                    points=sorted({sigma, u0}), limit=200)
                log_expected = peak + np.log(2.0 * integral)
                rel = abs(np.expm1(
                    log_norm_constant(sigma, TemperaturePair(t2, t3))
                    - log_expected))
                worst = max(worst, rel)
    mass_err = 0.0
    for sigma, t2, t3 in [(1.0, 0.0, 0.0), (0.5, 2.0, 1.0), (2.0, 0.3, 4.0)]:
        temps = TemperaturePair(t2, t3)
        mass, _ = integrate.quad(
            lambda u: np.exp(-exact_norm_nll(u, 0.0, sigma, temps).value),
            -np.inf, np.inf)
        mass_err = max(mass_err, abs(mass - 1.0))
    elapsed = time.perf_counter() - start
    _criterion(4, worst < 1e-6 and mass_err < 1e-6 and elapsed < 10.0,
               f"Z rel err {worst:.2e} (< 1e-6), unit-mass err {mass_err:.2e} "
               f"(< 1e-6), {elapsed:.1f}s (< 10s)")


def test_criterion_05_sigma_scaling():
    worked = sigma_scale(_batch([2.0, -2.0], [1.0, 1.0], [0.0, 0.0]))
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(10, 200))
        mean = rng.normal(size=n)
        sigma = rng.uniform(0.1, 3.0, size=n)
        batch = _batch(mean, sigma, mean + sigma * rng.standard_normal(n))
        s_star = sigma_scale(batch)
        res = optimize.minimize_scalar(
            lambda s: sigma_scale_objective(s, batch),
            bounds=(1e-3, 100.0), method="bounded", options={"xatol": 1e-10})
        worst = max(worst, abs(s_star - res.x))
    _criterion(5, worked == 2.0 and worst < 1e-6,
               f"worked case s*={worked} (exact 2), worst |s* - argmin| "
               f"{worst:.2e} (< 1e-6)")


def test_criterion_06_metric_unit_cases():
    perfect, _ = uce(_batch([0.5], [0.5], [0.0]), m_bins=1)
    one_bin, _ = uce(_batch(np.zeros(4), np.full(4, np.sqrt(0.5)),
                            np.full(4, np.sqrt(0.3))), m_bins=1)
    two_bin, _ = uce(_batch(np.zeros(4), np.sqrt([0.04, 0.04, 0.04, 1.0]),
                            np.sqrt([0.14, 0.14, 0.14, 0.5])), m_bins=2)
    over = ece(_batch(np.zeros(10), np.full(10, 1e-6), np.ones(10)))
    under = ece(_batch(np.zeros(10), np.full(10, 1e6), np.full(10, 1e-3)))
    ll = log_likelihood(_batch([0.0], [1.0], [0.0]))
    ok = (abs(perfect) < 1e-12 and abs(one_bin - 0.2) < 1e-12
          and abs(two_bin - 0.2) < 1e-12
          and abs(over - 50.0) < 1e-9 and abs(under - 50.0) < 1e-9
          and abs(ll + 0.91894) < 1e-5)
    _criterion(6, ok,
               f"UCE cases ({perfect:.1e}, {one_bin}, {two_bin}), "
               f"degenerate ECE ({over}, {under}), log-lik {ll:.5f}")


def test_criterion_07_calibration_recovery(synth_runs):
    runs = synth_runs["runs"]
    corr = float(np.median([runs[("lika", s)]["corr_true"] for s in SEEDS]))
    lika_uce = float(np.median([runs[("lika", s)]["uce"] for s in SEEDS]))
    nll_uce = float(np.median([runs[("nll", s)]["uce"] for s in SEEDS]))
    elapsed = synth_runs["elapsed"]
    ok = corr > 0.9 and lika_uce < nll_uce and elapsed < 180.0
    _criterion(7, ok,
               f"median corr(sigma_hat, true sigma) {corr:.4f} (> 0.9), "
               f"median UCE lika {lika_uce:.4f} vs nll {nll_uce:.4f} "
               f"(lika < nll), {elapsed:.0f}s (< 180s)")


def test_criterion_08_convergence_speed_ratio(synth_runs):
    runs = synth_runs["runs"]
    ratios = [runs[("nll", s)]["converge"] / runs[("lika", s)]["converge"]
              for s in SEEDS]
    ratio = float(np.median(ratios))
    _criterion(8, ratio >= 1.2,
               f"median epochs-to-converge ratio nll/lika {ratio:.2f} "
               f"(>= 1.2); per-seed {[round(r, 2) for r in ratios]}")


def test_criterion_09_lorenz_denoising(lorenz_dataset):
    start = time.perf_counter()
    ds = lorenz_dataset
    spec = ModelSpec(input_dim=ds.inputs.shape[1],
                     output_dim=ds.targets.shape[1],
                     hidden_layers=(64, 64), activation="tanh")
    cfg = TrainConfig(method="lika", epochs=2000, lr0=1e-2, seed=0)
    predict_fn, _ = fit_method(ds, cfg, spec)
    x_test, y_test = ds.subset("test")
    mean, _ = predict_fn(x_test)
    per_coord = np.mean(np.abs(mean - y_test), axis=0)
    worst = float(per_coord.max())
    noisy_floor = 0.5 * np.sqrt(2.0 / np.pi)    # E|N(0, 0.5^2)|
    elapsed = time.perf_counter() - start
    ok = worst < noisy_floor and worst < 0.30 and elapsed < 600.0
    _criterion(9, ok,
               f"worst per-coordinate test MAE {worst:.4f} "
               f"(< {noisy_floor:.3f} hard, < 0.30 soft), {elapsed:.0f}s "
               f"(< 600s)")


def test_criterion_10_ablation_directionality(synth_runs, ablation_runs):
    runs = synth_runs["runs"]
    seeds3 = (0, 1, 2)

    def agg(values):
        return float(np.mean(values))

    uce_zero = agg([runs[("nll", s)]["uce"] for s in seeds3])
    uce_anneal = agg([runs[("lika", s)]["uce"] for s in seeds3])
    uce_t2fix = agg([ablation_runs[(ABLATION_ROWS[2][0], s)]["uce"]
                     for s in seeds3])
    mae_zero = agg([runs[("nll", s)]["mae"] for s in seeds3])
    mae_t3fix = agg([ablation_runs[(ABLATION_ROWS[3][0], s)]["mae"]
                     for s in seeds3])
    ok = uce_anneal < uce_zero and uce_anneal < uce_t2fix \
        and mae_t3fix > mae_zero
    _criterion(10, ok,
               f"UCE annealed {uce_anneal:.4f} < zero {uce_zero:.4f} and "
               f"< T2-fixed {uce_t2fix:.4f}; MAE T3-fixed {mae_t3fix:.4f} "
               f"> zero {mae_zero:.4f}")


def test_criterion_11_ood_monotonicity(lorenz_dataset):
    configs = [TrainConfig(method=m, epochs=1000, lr0=1e-2) for m in METHODS]
    spec = ModelSpec(input_dim=lorenz_dataset.inputs.shape[1],
                     output_dim=lorenz_dataset.targets.shape[1],
                     hidden_layers=(64, 64), activation="tanh")
    rows = ood_sweep(lorenz_dataset, configs, seeds=list(SEEDS),
                     model_spec=spec)
    cell = {(r["method"], r["level"]): r for r in rows}
    non_monotone = []
    for method in METHODS:
        for metric in ("mae", "uce"):
            series = [cell[(method, lvl)][metric] for lvl in OOD_LEVELS]
            if not all(a <= b + 1e-12 for a, b in zip(series, series[1:])):
                non_monotone.append(f"{method}/{metric}")
    uce_ok = all(cell[("lika", lvl)]["uce"] <= cell[("nll", lvl)]["uce"]
                 for lvl in OOD_LEVELS)
    ok = not non_monotone and uce_ok
    _criterion(11, ok,
               f"non-monotone series: {non_monotone or 'none'}; "
               f"lika UCE <= nll UCE at every level: {uce_ok} "
               + str([(lvl, round(cell[('lika', lvl)]['uce'], 3),
                       round(cell[('nll', lvl)]['uce'], 3))
                      for lvl in OOD_LEVELS]))


def test_criterion_12_determinism(tmp_path):
    data_dir = tmp_path / "data"
    assert parse_and_dispatch(["gen-synth", "--n", "120", "--seed", "0",
                               "--out-dir", str(data_dir)]) == 0
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = parse_and_dispatch(
            ["train", "--data", str(data_dir / "synth.csv"),
             "--method", "lika", "--epochs", "20", "--batch-size", "32",
             "--hidden", "16", "--out-dir", str(out)])
        assert code == 0
        outs.append(out)
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
               for f in ("summary.csv", "report.json"))
    _criterion(12, same,
               "re-run emits byte-identical summary.csv and report.json: "
               f"{same}")
