import numpy as np
import pytest

from config import BackboneKind, NavarConfig
from logger import RunLogger
from model import build_model


@pytest.fixture
def quiet_logger():
    return RunLogger(log_to_file=False, verbose=False)


@pytest.fixture
def random_model():
    """Factory for untrained models with a random β."""

    def make(N=3, K=2, hidden=8, kind=BackboneKind.MLP, seed=0, layers=1, penalty=0.1):
        navar_config = NavarConfig(
            backbone_kind=kind,
            K=K,
            hidden_units=hidden,
            hidden_layers=layers,
            penalty=penalty,
            seed=seed,
        )
        model = build_model(navar_config, N)
        model.beta[:] = np.random.default_rng(seed + 1000).normal(size=N)
        return model

    return make


@pytest.fixture
def small_config():
    return NavarConfig(K=2, hidden_units=8, batch_size=32, learning_rate=0.01, penalty=0.05, epochs=3, seed=0)
