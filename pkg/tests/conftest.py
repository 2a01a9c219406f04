"""Shared fixtures: small seeded cohorts, models and grids."""

import numpy as np
import pytest

from logger import RunLogger
from longitudinal import ReferenceTrajectories
from model import Autoencoder
from som import SomGrid
from synthdata import generate_cohort
from trainer import TrainConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_cohort():
    return generate_cohort(24, visits_range=(2, 4), input_dim=6, seed=3)


@pytest.fixture
def tiny_config():
    return TrainConfig(pretrain_epochs=2, train_epochs=3, batch_size=16, n_rows=2, n_cols=3,
                       latent_dim=4, hidden_dims=[8], checkpoint_every=2, seed=5)


@pytest.fixture
def small_model(rng):
    return Autoencoder.initialize(6, 4, [8], rng)


@pytest.fixture
def small_grid(rng):
    return SomGrid.random(2, 3, 4, rng)


@pytest.fixture
def small_refs():
    return ReferenceTrajectories(2, 3, 4)


@pytest.fixture
def memory_logger():
    logger = RunLogger(log_file=None, console=False, name="lsor.test")
    yield logger
    logger.close()
