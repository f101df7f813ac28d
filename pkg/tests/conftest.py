import numpy as np
import pytest

from pdedag.config import ModelConfig


@pytest.fixture
def micro_cfg() -> ModelConfig:
    """Smallest config that still exercises every architectural piece."""
    return ModelConfig(
        d_f=4, n_patches=1, n_mod=1, d_e=8, n_layers=1, n_heads=2,
        ffn_dim=8, feat_hidden=8, d_h=4, hyper_hidden=8,
    )


@pytest.fixture
def small_cfg() -> ModelConfig:
    return ModelConfig(
        d_f=4, n_patches=4, n_mod=2, d_e=16, n_layers=2, n_heads=4,
        ffn_dim=16, feat_hidden=16, d_h=8, hyper_hidden=16,
    )


@pytest.fixture
def sine_ic():
    def make(n_x: int) -> np.ndarray:
        x = -1.0 + 2.0 * np.arange(n_x) / n_x
        return np.sin(np.pi * x).astype(np.float32)

    return make
