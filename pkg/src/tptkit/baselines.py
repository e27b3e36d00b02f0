"""Reference predictors and rollout.

Persistence carries the current fluctuation forward unchanged; the
climatology baseline predicts zero fluctuation. Rollout iterates a model
trained for a short lead, feeding each prediction back as the next input
(mesh states are re-zeroed outside the enlarged mask every step).
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .gridding import MaskSet


def persistence_predict(state):
    """The fluctuation at t is the forecast for t + h, for any h."""
    return np.array(state, dtype=np.float64)


def climatology_predict(state):
    """Zero fluctuation everywhere (the recomposed forecast is <T>)."""
    return np.zeros_like(np.asarray(state, dtype=np.float64))


def rollout(predict_fn, state, repetitions: int, masks: MaskSet = None):
    """Apply ``predict_fn`` ``repetitions`` times, feeding predictions back.

    With ``masks`` given, every intermediate state is re-zeroed outside the
    enlarged mask before the next step (mesh mode).
    """
    if repetitions < 1:
        raise ConfigError("rollout needs k >= 1")
    state = np.asarray(state, dtype=np.float64)
    for _ in range(repetitions):
        state = np.asarray(predict_fn(state), dtype=np.float64)
        if masks is not None:
            state = np.where(masks.enlarged, state, 0.0)
    return state
