"""Reproducible algebraic-multigrid setup."""

from __future__ import annotations

import threading

import numpy as np
import pyamg

_LOCK = threading.Lock()


def smoothed_aggregation(A, **kwargs):
    """``pyamg.smoothed_aggregation_solver`` with its random start vectors pinned.

    pyamg draws the start vectors of its spectral-radius estimates from the
    global NumPy generator; the global state is seeded for the setup and then
    restored under a lock, so results are reproducible without side effects.
    """
    with _LOCK:
        state = np.random.get_state()
        np.random.seed(0)
        try:
            return pyamg.smoothed_aggregation_solver(A, **kwargs)
        finally:
            np.random.set_state(state)
