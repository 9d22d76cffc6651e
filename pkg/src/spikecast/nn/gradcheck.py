"""Finite-difference verification of analytic gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import NumericError

FD_STEP = 1e-5
# Coordinates where |analytic| + |fd| falls below this floor are compared
# against the floor itself, which bounds noise amplification near zero.
REL_FLOOR = 1e-4


def grad_check(
    loss_and_grads: Callable[[], tuple[float, dict[str, np.ndarray]]],
    params: dict[str, np.ndarray],
    step: float = FD_STEP,
    max_coords: int = 2000,
    sample_size: int = 400,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    `loss_and_grads` must be deterministic (dropout off) and read `params`
    by reference: this routine perturbs entries in place, re-evaluates, and
    restores them. All coordinates are checked unless the bundle holds more
    than `max_coords`, in which case a random subsample of `sample_size`
    coordinates is used.
    """
    loss0, analytic = loss_and_grads()
    if not np.isfinite(loss0):
        raise NumericError("non-finite loss at the evaluation point")

    coords = [
        (name, idx)
        for name, arr in params.items()
        for idx in range(arr.size)
    ]
    if len(coords) > max_coords:
        rng = rng or np.random.default_rng(0)
        picks = rng.choice(len(coords), size=min(sample_size, len(coords)),
                           replace=False)
        coords = [coords[i] for i in picks]

    worst = 0.0
    for name, idx in coords:
        flat = params[name].reshape(-1)
        saved = flat[idx]
        flat[idx] = saved + step
        loss_plus, _ = loss_and_grads()
        flat[idx] = saved - step
        loss_minus, _ = loss_and_grads()
        flat[idx] = saved
        if not (np.isfinite(loss_plus) and np.isfinite(loss_minus)):
            raise NumericError(f"non-finite loss while perturbing {name!r}")
        fd = (loss_plus - loss_minus) / (2.0 * step)
        a = float(analytic[name].reshape(-1)[idx])
        rel = abs(a - fd) / max(abs(a) + abs(fd), REL_FLOOR)
        worst = max(worst, rel)
    return worst
