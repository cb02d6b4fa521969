import numpy as np
import pytest


def random_prob_matrix(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    """Row-stochastic matrix with occasional near-one-hot rows."""
    raw = rng.random((n, k)) ** 3 + 1e-9
    return raw / raw.sum(axis=1, keepdims=True)


def random_labels(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return rng.integers(0, k, size=n)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
