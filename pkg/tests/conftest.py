import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lassoboot.lasso import Dataset  # noqa: E402


def random_dataset(rng, n, p, noise=1.0) -> Dataset:
    X = rng.standard_normal((n, p))
    beta = rng.uniform(-2, 2, p) * (rng.random(p) < 0.6)
    return Dataset(X, X @ beta + noise * rng.standard_normal(n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
