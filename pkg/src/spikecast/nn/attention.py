"""Single-head scaled dot-product attention over LSTM states.

The context vector is the mean over query positions of the attention-weighted
values: context = (1/k) * sum_i sum_j A[i, j] * V[j].
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, NumericError
from .ops import softmax_rows


@dataclass
class AttentionParams:
    """Query/key/value projections, each (h, h_a)."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray

    @property
    def h(self) -> int:
        return self.w_q.shape[0]

    @property
    def h_a(self) -> int:
        return self.w_q.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {"w_q": self.w_q, "w_k": self.w_k, "w_v": self.w_v}


def init_attention_params(
    h: int, h_a: int, rng: np.random.Generator
) -> AttentionParams:
    bound = 1.0 / np.sqrt(h)
    return AttentionParams(
        w_q=rng.uniform(-bound, bound, size=(h, h_a)),
        w_k=rng.uniform(-bound, bound, size=(h, h_a)),
        w_v=rng.uniform(-bound, bound, size=(h, h_a)),
    )


def attention_forward(
    states: np.ndarray, params: AttentionParams
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Attend over (k, h) states; returns (context (h_a,), weights (k, k), cache)."""
    states = np.asarray(states, dtype=float)
    if states.ndim != 2 or states.shape[1] != params.h:
        raise ContractError(
            f"states shape {states.shape} does not match projection rows {params.h}"
        )
    k = states.shape[0]
    if k < 1:
        raise ContractError("attention needs at least one state")

    q = states @ params.w_q
    key = states @ params.w_k
    v = states @ params.w_v
    logits = q @ key.T / np.sqrt(params.h_a)
    if not np.isfinite(logits).all():
        raise NumericError("non-finite attention logits")
    weights = softmax_rows(logits)
    context = (weights @ v).sum(axis=0) / k

    cache = {"states": states, "q": q, "k": key, "v": v, "weights": weights}
    return context, weights, cache


def attention_backward(
    params: AttentionParams, cache: dict, d_context: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients of the projections plus the upstream (k, h) state gradient."""
    states, q, key, v, weights = (
        cache["states"], cache["q"], cache["k"], cache["v"], cache["weights"]
    )
    k = states.shape[0]
    scale = 1.0 / np.sqrt(params.h_a)

    # context = mean over rows of (weights @ v)
    d_av = np.tile(np.asarray(d_context, dtype=float) / k, (k, 1))  # (k, h_a)
    d_weights = d_av @ v.T                                          # (k, k)
    d_v = weights.T @ d_av                                          # (k, h_a)

    # softmax backward, row-wise
    d_logits = weights * (d_weights - (d_weights * weights).sum(axis=1, keepdims=True))
    d_q = d_logits @ key * scale
    d_k = d_logits.T @ q * scale

    grads = {
        "w_q": states.T @ d_q,
        "w_k": states.T @ d_k,
        "w_v": states.T @ d_v,
    }
    d_states = d_q @ params.w_q.T + d_k @ params.w_k.T + d_v @ params.w_v.T
    return grads, d_states
