import math

import numpy as np
import pytest

from bootsprt.metrics import Block, SessionData


def session_data(queries=None, successes=None, revenue=None, timestamps=None,
                 validate=True) -> SessionData:
    """Build SessionData from whichever columns a test cares about."""
    for col in (queries, successes, revenue, timestamps):
        if col is not None:
            n = len(col)
            break
    else:
        raise ValueError("give at least one column")
    if queries is None:
        queries = np.ones(n, dtype=np.int64)
    if successes is None:
        successes = np.zeros(n, dtype=np.int64)
    if revenue is None:
        revenue = np.zeros(n)
    if timestamps is None:
        timestamps = np.arange(n, dtype=np.int64)
    return SessionData(timestamps, queries, successes, revenue, validate=validate)


def block(queries=None, successes=None, revenue=None, timestamps=None, index=0) -> Block:
    return Block(index, session_data(queries, successes, revenue, timestamps))


def mc_margin(p: float, n_trials: int, z: float = 2.0) -> float:
    """Two-sided binomial Monte Carlo margin around probability p."""
    return z * math.sqrt(p * (1.0 - p) / n_trials)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
