import itertools
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def labelled_partitions(N):
    """Every labelling of N elements that uses labels 0..B-1, each at least once."""
    for b in itertools.product(range(N), repeat=N):
        b = np.array(b, dtype=np.int64)
        if len(np.unique(b)) == b.max() + 1:
            yield b


@pytest.fixture(scope="session")
def karate():
    from netrecon.datasets import karate_club

    return karate_club()
