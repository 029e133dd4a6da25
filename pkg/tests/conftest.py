"""Shared fixtures. Heavy end-to-end runs live in test_acceptance.py with
their own module-scoped fixtures; everything here is sized for speed."""

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

from ctfas import (
    GeneratorConfig,
    Scenario,
    TrainConfig,
    generate_synthetic_dataset,
)
from ctfas.trainer import train

settings.register_profile(
    "ci",
    max_examples=50,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


TINY_TRAIN = GeneratorConfig(n_live=30, n_spoof=30, image_side=16, seed=5)
TINY_TEST = GeneratorConfig(n_live=16, n_spoof=16, image_side=16, seed=6)
TINY_NET = dict(feature_dim=16, channels=(8, 16), batch_size=16)


@pytest.fixture(scope="session")
def tiny_train_dataset():
    return generate_synthetic_dataset(TINY_TRAIN, "train")


@pytest.fixture(scope="session")
def tiny_test_dataset():
    return generate_synthetic_dataset(TINY_TEST, "test")


@pytest.fixture(scope="session")
def tiny_missing_ckpt(tiny_train_dataset):
    config = TrainConfig(scenario=Scenario.MISSING_MODAL, epochs=3, seed=11, **TINY_NET)
    return train(config, tiny_train_dataset)


@pytest.fixture(scope="session")
def tiny_fixed_ckpt(tiny_train_dataset):
    config = TrainConfig(scenario=Scenario.FIXED_MODAL, epochs=3, seed=11, **TINY_NET)
    return train(config, tiny_train_dataset)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
