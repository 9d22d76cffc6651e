"""Dense -> ReLU -> dropout -> sigmoid classification head."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, ContractError
from .ops import relu, sigmoid


@dataclass
class HeadParams:
    """Fused-vector classifier: one hidden dense layer plus a sigmoid output."""

    w1: np.ndarray      # (n_in, n_hidden)
    b1: np.ndarray      # (n_hidden,)
    w2: np.ndarray      # (n_hidden,)
    b2: np.ndarray      # (1,)
    dropout: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def input_size(self) -> int:
        return self.w1.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


def init_head_params(
    n_in: int, n_hidden: int, dropout: float, rng: np.random.Generator
) -> HeadParams:
    b_in = 1.0 / np.sqrt(n_in)
    b_hid = 1.0 / np.sqrt(n_hidden)
    return HeadParams(
        w1=rng.uniform(-b_in, b_in, size=(n_in, n_hidden)),
        b1=np.zeros(n_hidden),
        w2=rng.uniform(-b_hid, b_hid, size=n_hidden),
        b2=np.zeros(1),
        dropout=dropout,
    )


def head_forward(
    fused: np.ndarray,
    params: HeadParams,
    train: bool = False,
    rng: np.random.Generator | None = None,
) -> tuple[float, dict]:
    """Probability of a spike for one fused vector.

    Dropout uses inverted scaling (kept units divided by 1 - p) and is active
    only in train mode; inference is deterministic.
    """
    fused = np.asarray(fused, dtype=float)
    if fused.shape != (params.input_size,):
        raise ContractError(
            f"fused vector shape {fused.shape}, head expects ({params.input_size},)"
        )
    pre = fused @ params.w1 + params.b1
    act = relu(pre)
    if train and params.dropout > 0.0:
        if rng is None:
            raise ConfigError("train-mode dropout requires an rng")
        keep = rng.random(act.shape[0]) >= params.dropout
        mask = keep / (1.0 - params.dropout)
    else:
        mask = np.ones_like(act)
    dropped = act * mask
    logit = float(dropped @ params.w2 + params.b2[0])
    prob = float(sigmoid(np.array([logit]))[0])
    cache = {
        "fused": fused, "pre": pre, "mask": mask,
        "dropped": dropped, "prob": prob,
    }
    return prob, cache


def head_backward(
    params: HeadParams, cache: dict, d_prob: float
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients given dLoss/dprobability; returns (grads, dLoss/dfused)."""
    prob = cache["prob"]
    d_logit = d_prob * prob * (1.0 - prob)
    d_dropped = d_logit * params.w2
    d_act = d_dropped * cache["mask"]
    d_pre = d_act * (cache["pre"] > 0.0)
    grads = {
        "w1": np.outer(cache["fused"], d_pre),
        "b1": d_pre,
        "w2": d_logit * cache["dropped"],
        "b2": np.array([d_logit]),
    }
    d_fused = params.w1 @ d_pre
    return grads, d_fused
