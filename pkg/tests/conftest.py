"""Shared fixtures: toy configs, a tiny generated dataset and seeded streams."""

import numpy as np
import pytest

from src.config import EncoderConfig, GeneratorConfig, LossConfig, ModelConfig, PromptConfig, TrainConfig
from src.logging_setup import configure_logging
from src.numcore import Rng
from src.synthdata import generate, save_dataset


@pytest.fixture(scope="session", autouse=True)
def _logging():
    configure_logging("WARNING", "console")


@pytest.fixture
def rng():
    return Rng(1234)


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)


def small_config(method: str = "ego-vpa", **train) -> ModelConfig:
    """A model small enough for several training steps per test."""
    return ModelConfig(
        encoder=EncoderConfig(L=2, d_txt=16, d_vid=16, embed_dim=16, heads=2, T=4, N_p=4, N_w=8, vocab=64, patch_dim=16),
        prompting=PromptConfig(M_v=2, M_t=2, K=1, B=6, d_f=8),
        loss=LossConfig(tau=0.1),
        train=TrainConfig(method=method, **{"epochs": 2, "batch_size": 8, "lr": 5e-3, **train}),
    )


@pytest.fixture
def toy_config():
    return small_config()


@pytest.fixture(scope="session")
def tiny_data_config():
    return GeneratorConfig(n_concepts=4, n_items=64, seed=7)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_data_config):
    return generate(tiny_data_config)


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory, tiny_dataset):
    return save_dataset(tiny_dataset, tmp_path_factory.mktemp("dataset"))


@pytest.fixture
def make_config():
    return small_config
