"""Dataset generators, CSV ingestion, corruption, and file round-trips."""

import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lika.data import (DataError, Dataset, LorenzConfig, NOISE_LEVELS,
                       corrupt, generate_lorenz, generate_synthetic,
                       load_csv, load_dataset, lorenz_rhs, save_dataset,
                       synthetic_noise_scale)

# a coarse but fast Lorenz configuration for unit tests; the acceptance
# suite runs the default dt = 1e-5
FAST_LORENZ = dict(dt=1e-3, burn_in=1.0)


# ---------------------------------------------------------------------------
# synthetic heteroscedastic task


def test_noise_scale_minimum_at_origin():
    assert synthetic_noise_scale(0.0) == pytest.approx(0.1)
    assert synthetic_noise_scale(2.0) == pytest.approx(0.9)
    assert synthetic_noise_scale(-2.0) == pytest.approx(0.9)


def test_synthetic_shapes_and_split_fractions():
    ds = generate_synthetic(1000, seed=3)
    assert ds.inputs.shape == (1000, 1)
    assert ds.targets.shape == (1000, 1)
    assert ds.true_sigma.shape == (1000, 1)
    assert len(ds.indices("train")) == 700
    assert len(ds.indices("val")) == 150
    assert len(ds.indices("test")) == 150


def test_synthetic_deterministic_by_seed():
    a = generate_synthetic(200, seed=9)
    b = generate_synthetic(200, seed=9)
    c = generate_synthetic(200, seed=10)
    assert np.array_equal(a.inputs, b.inputs)
    assert np.array_equal(a.targets, b.targets)
    assert np.array_equal(a.split, b.split)
    assert not np.array_equal(a.inputs, c.inputs)


def test_synthetic_residual_std_near_edge():
    # empirical residual sd in a bin around x = 2 approaches 0.9
    ds = generate_synthetic(100_000, seed=0)
    x = ds.inputs.ravel()
    resid = ds.targets.ravel() - np.sin(2.0 * x)
    edge = np.abs(x) > 1.9
    assert resid[edge].std() == pytest.approx(0.1 + 0.4 * 1.95, abs=0.05)


def test_synthetic_minimum_size():
    with pytest.raises(DataError):
        generate_synthetic(5)


# ---------------------------------------------------------------------------
# Lorenz denoising task


def test_lorenz_rhs_fixed_point_at_origin():
    assert np.allclose(lorenz_rhs(np.zeros(3)), 0.0)


def test_lorenz_zero_noise_center_equals_target():
    cfg = LorenzConfig(noise_sigma=0.0, n_samples=80, window=9, seed=1,
                       **FAST_LORENZ)
    ds = generate_lorenz(cfg)
    center = ds.inputs[:, 12:15]      # coordinates of the middle sample
    assert np.allclose(center, ds.targets)


def test_lorenz_noise_std_matches_config():
    cfg = LorenzConfig(n_samples=4000, seed=2, **FAST_LORENZ)
    ds = generate_lorenz(cfg)
    noise = ds.inputs[:, 12:15] - ds.targets
    assert noise.std() == pytest.approx(0.5, abs=0.01)


def test_lorenz_attractor_bounds():
    cfg = LorenzConfig(n_samples=3000, seed=0, **FAST_LORENZ)
    ds = generate_lorenz(cfg)
    clean = ds.targets
    assert np.all(np.abs(clean[:, 0]) < 30.0)
    assert np.all(np.abs(clean[:, 1]) < 30.0)
    assert np.all((clean[:, 2] > 0.0) & (clean[:, 2] < 60.0))


def test_lorenz_split_blocks_are_chronological():
    cfg = LorenzConfig(n_samples=200, seed=0, **FAST_LORENZ)
    ds = generate_lorenz(cfg)
    tags = list(ds.split)
    # all train windows precede all val windows precede all test windows
    assert tags == (["train"] * tags.count("train") + ["val"] * tags.count("val")
                    + ["test"] * tags.count("test"))


def test_lorenz_deterministic_by_seed():
    cfg = LorenzConfig(n_samples=60, seed=5, **FAST_LORENZ)
    assert np.array_equal(generate_lorenz(cfg).inputs,
                          generate_lorenz(cfg).inputs)


def test_lorenz_config_validation():
    with pytest.raises(DataError):
        LorenzConfig(dt=0.1, sample_dt=0.05)
    with pytest.raises(DataError):
        LorenzConfig(window=0)
    with pytest.raises(DataError):
        generate_lorenz(LorenzConfig(n_samples=4, window=9, **FAST_LORENZ))


# ---------------------------------------------------------------------------
# CSV ingestion


def _write_csv(path, text):
    path.write_text(text)
    return path


def test_load_csv_basic(tmp_path):
    p = _write_csv(tmp_path / "d.csv", "a,b,target\n1,2,3\n4,5,6\n" * 1 +
                   "".join(f"{i},{i+1},{i+2}\n" for i in range(20)))
    ds = load_csv(p, ["target"])
    assert ds.inputs.shape[1] == 2
    assert ds.targets.shape[1] == 1
    assert set(ds.split) <= {"train", "val", "test"}


def test_load_csv_missing_target_column(tmp_path):
    p = _write_csv(tmp_path / "d.csv", "a,b\n1,2\n")
    with pytest.raises(DataError, match="not found"):
        load_csv(p, ["price"])


def test_load_csv_non_numeric_cell_names_row_and_column(tmp_path):
    p = _write_csv(tmp_path / "d.csv", "a,b\n1,2\n3,oops\n")
    with pytest.raises(DataError, match="row 2.*column 'b'"):
        load_csv(p, ["b"])


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        load_csv(tmp_path / "absent.csv", ["y"])


def test_load_csv_normalization_uses_train_stats_only(tmp_path):
    rows = "".join(f"{i},{2*i}\n" for i in range(100))
    p = _write_csv(tmp_path / "d.csv", "a,y\n" + rows)
    ds = load_csv(p, ["y"], normalize=True, seed=0)
    train = ds.inputs[ds.split == "train"]
    assert train.mean() == pytest.approx(0.0, abs=1e-12)
    assert train.std() == pytest.approx(1.0, abs=1e-12)
    # full-dataset stats differ from the train stats, so the others are
    # generally not exactly standard
    assert ds.inputs[ds.split == "test"].mean() != pytest.approx(0.0, abs=1e-6)


# ---------------------------------------------------------------------------
# corruption


def test_corrupt_nl0_is_identity():
    ds = generate_synthetic(100, seed=0)
    clean = corrupt(ds, "NL0")
    assert np.array_equal(clean.inputs, ds.inputs)
    assert clean.inputs is not ds.inputs      # still a defensive copy


def test_corrupt_unknown_level():
    ds = generate_synthetic(50, seed=0)
    with pytest.raises(DataError):
        corrupt(ds, "NL9")


def test_corrupt_targets_untouched_and_noise_scaled():
    ds = generate_synthetic(20_000, seed=1)
    train_std = ds.inputs[ds.split == "train"].std(axis=0)
    for level, frac in NOISE_LEVELS.items():
        noisy = corrupt(ds, level, seed=7)
        assert np.array_equal(noisy.targets, ds.targets)
        delta = noisy.inputs - ds.inputs
        assert delta.std() == pytest.approx(frac * train_std[0], rel=0.05, abs=1e-12)


def test_corrupt_deterministic_by_seed():
    ds = generate_synthetic(100, seed=0)
    a = corrupt(ds, "NL2", seed=3)
    b = corrupt(ds, "NL2", seed=3)
    c = corrupt(ds, "NL2", seed=4)
    assert np.array_equal(a.inputs, b.inputs)
    assert not np.array_equal(a.inputs, c.inputs)


# ---------------------------------------------------------------------------
# dataset file round-trip


def test_save_load_round_trip_is_lossless(tmp_path):
    ds = generate_synthetic(120, seed=4)
    path = tmp_path / "synth.csv"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert np.array_equal(back.inputs, ds.inputs)
    assert np.array_equal(back.targets, ds.targets)
    assert np.array_equal(back.true_sigma, ds.true_sigma)
    assert np.array_equal(back.split, ds.split)


def test_load_dataset_without_manifest_assigns_seeded_split(tmp_path):
    ds = generate_synthetic(100, seed=0)
    path = tmp_path / "synth.csv"
    save_dataset(ds, path)
    (tmp_path / "synth.csv.splits.json").unlink()
    back = load_dataset(path, seed=11)
    again = load_dataset(path, seed=11)
    assert np.array_equal(back.split, again.split)
    assert len(back.indices("train")) == 70


def test_load_dataset_bad_manifest(tmp_path):
    ds = generate_synthetic(50, seed=0)
    path = tmp_path / "synth.csv"
    save_dataset(ds, path)
    manifest = path.with_name("synth.csv.splits.json")
    partial = json.loads(manifest.read_text())
    partial["test"] = partial["test"][:-1]     # drop one row from the cover
    manifest.write_text(json.dumps(partial))
    with pytest.raises(DataError, match="cover"):
        load_dataset(path)


def test_load_dataset_requires_xy_headers(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError, match="x\\* and y\\*"):
        load_dataset(p)


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(inputs=np.ones((3, 1)), targets=np.ones((2, 1)),
                split=np.array(["train", "val", "test"]))
    with pytest.raises(DataError):
        Dataset(inputs=np.array([[np.nan]]), targets=np.array([[1.0]]),
                split=np.array(["train"]))


@given(n=st.integers(10, 400))
@settings(max_examples=20, deadline=None)
def test_split_fractions_property(n):
    ds = generate_synthetic(n, seed=0)
    assert len(ds.indices("train")) == int(round(0.70 * n))
    assert len(ds.indices("val")) == int(round(0.15 * n))
    total = sum(len(ds.indices(s)) for s in ("train", "val", "test"))
    assert total == n
