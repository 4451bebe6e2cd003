import numpy as np
import pytest

from .helpers import random_instance


@pytest.fixture
def make_instance():
    return random_instance


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
