import numpy as np
import pytest

from kgalign import kg


@pytest.fixture(scope="session")
def small_task():
    return kg.generate_synthetic_pair(
        60, 6, 4, drop_triple_prob=0.1, emb_noise_sigma=0.4, emb_dim=12, rng_seed=21
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
