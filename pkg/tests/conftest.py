import numpy as np
import pytest
import torch

from brightcolor.data import generate_synthetic_dataset
from brightcolor.inference import save_checkpoint
from brightcolor.network import ModelConfig, build_model


@pytest.fixture(scope="session")
def synthetic_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    return generate_synthetic_dataset(root, count=4, size=64, seed=11)


@pytest.fixture(scope="session")
def tiny_config():
    return ModelConfig(base_channels=4)


@pytest.fixture(scope="session")
def tiny_model(tiny_config):
    torch.manual_seed(0)
    model = build_model(tiny_config)
    model.eval()
    return model


@pytest.fixture(scope="session")
def tiny_checkpoint(tmp_path_factory, tiny_model, tiny_config):
    path = tmp_path_factory.mktemp("ckpt") / "tiny.pt"
    save_checkpoint(path, tiny_model, tiny_config, step=0)
    return path


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
