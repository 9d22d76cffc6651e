"""Binary cross-entropy with clamped probabilities."""
from __future__ import annotations

import numpy as np

from ..errors import ContractError

CLAMP_EPS = 1e-7


def bce_loss(
    preds, targets, pos_weight: float | None = None
) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy and its gradient w.r.t. each prediction.

    Predictions are clamped to [CLAMP_EPS, 1 - CLAMP_EPS] before the logs;
    the gradient is taken at the clamped value. `pos_weight` scales the
    positive-class term to counter class imbalance (None = unweighted).
    """
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if preds.shape != targets.shape or preds.ndim != 1:
        raise ContractError(
            f"preds shape {preds.shape} vs targets shape {targets.shape}"
        )
    if preds.size == 0:
        raise ContractError("empty batch")
    if not np.isin(targets, (0.0, 1.0)).all():
        raise ContractError("targets must be 0 or 1")

    w = 1.0 if pos_weight is None else float(pos_weight)
    n = preds.size
    p = np.clip(preds, CLAMP_EPS, 1.0 - CLAMP_EPS)
    loss = -np.mean(w * targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p))
    d_preds = -(w * targets / p - (1.0 - targets) / (1.0 - p)) / n
    return float(loss), d_preds
