"""Shared fixtures: tiny datasets and model specs that keep unit tests fast."""

import numpy as np
import pytest

from lika.data import generate_synthetic
from lika.models import ModelSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_dataset():
    """60-sample synthetic dataset; enough for smoke training."""
    return generate_synthetic(60, seed=0)


@pytest.fixture
def tiny_spec():
    """A model under 200 parameters (1-8-8-2 heads)."""
    return ModelSpec(input_dim=1, output_dim=1, hidden_layers=(8, 8))
