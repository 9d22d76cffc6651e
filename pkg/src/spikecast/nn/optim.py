"""Adam with bias correction and selective L2 weight decay."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ContractError, NumericError


@dataclass
class AdamState:
    """First/second-moment accumulators plus hyperparameters.

    `decay_keys` names the parameters that receive L2 decay (the dense-layer
    weights); decay is added to their gradients as lambda * theta.
    """

    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    decay_keys: frozenset = frozenset()
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam(
    params: dict[str, np.ndarray],
    alpha: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    decay_keys=(),
) -> AdamState:
    state = AdamState(
        alpha=alpha, beta1=beta1, beta2=beta2, eps=eps,
        weight_decay=weight_decay, decay_keys=frozenset(decay_keys),
    )
    for name, arr in params.items():
        state.m[name] = np.zeros_like(arr)
        state.v[name] = np.zeros_like(arr)
    return state


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update, applied to `params` in place.

    Refuses the whole step (no mutation) if any gradient is non-finite.
    """
    if set(params) != set(state.m):
        raise ContractError("parameter keys do not match optimizer state")
    for name in params:
        if name not in grads:
            raise ContractError(f"missing gradient for {name!r}")
        if params[name].shape != grads[name].shape:
            raise ContractError(
                f"gradient shape mismatch for {name!r}: "
                f"{grads[name].shape} vs {params[name].shape}"
            )
        if not np.isfinite(grads[name]).all():
            raise NumericError(f"non-finite gradient for {name!r}; step refused")

    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, theta in params.items():
        g = grads[name]
        if state.weight_decay and name in state.decay_keys:
            g = g + state.weight_decay * theta
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        theta -= state.alpha * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so the global L2 norm is <= max_norm."""
    total = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total
