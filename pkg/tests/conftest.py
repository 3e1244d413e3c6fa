import numpy as np
import pytest

from pathfx.core import PairCoding, TreatmentPair, dataset_from_arrays


@pytest.fixture
def normal_coding():
    return PairCoding(pair=TreatmentPair(1, 0))


@pytest.fixture
def small_dataset():
    rng = np.random.default_rng(42)
    n = 60
    c0 = rng.uniform(0, 2, (n, 1))
    e = (rng.random(n) < 0.5).astype(int)
    c1 = rng.standard_normal((n, 3))
    m = rng.standard_normal(n)
    y = rng.standard_normal(n)
    return dataset_from_arrays(c0, e, c1, m, y)
