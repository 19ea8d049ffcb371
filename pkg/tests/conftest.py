import json

import numpy as np
import pytest

from kgchain.model import ChainState, DisorderLaw, DisorderRealization, ModelConfig, sample_disorder
from kgchain.spectral import solve
from kgchain.streams import derive_stream


@pytest.fixture
def rng():
    """Seeded generator for test-local randomness"""
    return np.random.default_rng(12345)


@pytest.fixture
def model_config():
    """Small uniform-disorder chain on [-5, 5]"""
    return ModelConfig(L=5, eta=1.0, lam=0.1, disorder=DisorderLaw("uniform", 0.5, 1.5), seed=7)


@pytest.fixture
def realization(model_config):
    """Quenched disorder on [-5, 5]"""
    return sample_disorder(model_config, model_config.interval, derive_stream(model_config.seed, "test", "disorder"))


@pytest.fixture
def eigensystem(realization):
    return solve(realization)


@pytest.fixture
def tiny_realization():
    """Three-site chain with hand-picked frequencies"""
    return DisorderRealization(interval=(-1, 1), omega_sq=np.array([0.7, 1.3, 0.9]), eta=1.0)


@pytest.fixture
def tiny_eigensystem(tiny_realization):
    return solve(tiny_realization)


@pytest.fixture
def random_state(realization, rng):
    """Single Gaussian phase-space point"""
    return ChainState(rng.standard_normal(realization.size), rng.standard_normal(realization.size))


@pytest.fixture
def random_batch(realization, rng):
    """Batch of 8 Gaussian phase-space points"""
    shape = (8, realization.size)
    return ChainState(rng.standard_normal(shape), rng.standard_normal(shape))


@pytest.fixture
def write_config(tmp_path):
    """Write an experiment config JSON and return its path"""
    def _write(data: dict, name: str = "kgchain.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding="utf-8")
        return path
    return _write
