from __future__ import annotations

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_loop(rng, N, scale=1.0):
    return scale * (rng.standard_normal((N, 3)) + 1j * rng.standard_normal((N, 3)))
