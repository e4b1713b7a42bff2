from __future__ import annotations

import numpy as np
import pytest

from tools.measure import MeasureSpec


def pytest_configure(config: pytest.Config) -> None:
    config.addinivalue_line("markers", "slow: end-to-end runs that take more than a few seconds")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


@pytest.fixture
def lebesgue2() -> MeasureSpec:
    return MeasureSpec.lebesgue(2)


@pytest.fixture
def bernoulli_quarter() -> MeasureSpec:
    return MeasureSpec.bernoulli([0.25, 0.75])


@pytest.fixture
def markov_chain() -> MeasureSpec:
    return MeasureSpec.markov([0.5, 0.5], [[0.6, 0.4], [0.3, 0.7]])
