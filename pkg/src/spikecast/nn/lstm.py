"""Unidirectional LSTM with manual backpropagation through time.

Gate convention: i = input, f = forget, g = candidate cell, o = output.
Per step, with x the input row and h/c the previous hidden and cell state:

    i = sigmoid(x W_i + h U_i + b_i)     f = sigmoid(x W_f + h U_f + b_f)
    g = tanh   (x W_g + h U_g + b_g)     o = sigmoid(x W_o + h U_o + b_o)
    c' = f * c + i * g                   h' = o * tanh(c')

Initial hidden and cell state are zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError, NumericError
from .ops import sigmoid

GATES = ("i", "f", "g", "o")


@dataclass
class LstmParams:
    """Weights for one LSTM: input->gate, hidden->gate, and gate biases."""

    w_i: np.ndarray  # (m, h)
    w_f: np.ndarray
    w_g: np.ndarray
    w_o: np.ndarray
    u_i: np.ndarray  # (h, h)
    u_f: np.ndarray
    u_g: np.ndarray
    u_o: np.ndarray
    b_i: np.ndarray  # (h,)
    b_f: np.ndarray
    b_g: np.ndarray
    b_o: np.ndarray

    @property
    def input_size(self) -> int:
        return self.w_i.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.w_i.shape[1]

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            name: getattr(self, name)
            for name in (
                "w_i", "w_f", "w_g", "w_o",
                "u_i", "u_f", "u_g", "u_o",
                "b_i", "b_f", "b_g", "b_o",
            )
        }


def init_lstm_params(
    input_size: int, hidden_size: int, rng: np.random.Generator
) -> LstmParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init; forget-gate bias +1."""
    def mat(fan_in, shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    m, h = input_size, hidden_size
    params = LstmParams(
        w_i=mat(m, (m, h)), w_f=mat(m, (m, h)),
        w_g=mat(m, (m, h)), w_o=mat(m, (m, h)),
        u_i=mat(h, (h, h)), u_f=mat(h, (h, h)),
        u_g=mat(h, (h, h)), u_o=mat(h, (h, h)),
        b_i=np.zeros(h), b_f=np.ones(h), b_g=np.zeros(h), b_o=np.zeros(h),
    )
    return params


def lstm_forward(
    sequence: np.ndarray, params: LstmParams
) -> tuple[np.ndarray, np.ndarray, dict]:
    """Run the recurrence over a (k, m) sequence.

    Returns (all hidden states (k, h), final hidden state (h,), cache for
    backprop).
    """
    sequence = np.asarray(sequence, dtype=float)
    if sequence.ndim != 2 or sequence.shape[1] != params.input_size:
        raise ContractError(
            f"sequence shape {sequence.shape} does not match "
            f"declared input size {params.input_size}"
        )
    if not np.isfinite(sequence).all():
        raise NumericError("non-finite value in LSTM input sequence")
    k = sequence.shape[0]
    h = params.hidden_size

    hs = np.zeros((k, h))
    i_g = np.zeros((k, h))
    f_g = np.zeros((k, h))
    g_g = np.zeros((k, h))
    o_g = np.zeros((k, h))
    cs = np.zeros((k, h))
    tanh_cs = np.zeros((k, h))

    h_prev = np.zeros(h)
    c_prev = np.zeros(h)
    for t in range(k):
        x = sequence[t]
        i_g[t] = sigmoid(x @ params.w_i + h_prev @ params.u_i + params.b_i)
        f_g[t] = sigmoid(x @ params.w_f + h_prev @ params.u_f + params.b_f)
        g_g[t] = np.tanh(x @ params.w_g + h_prev @ params.u_g + params.b_g)
        o_g[t] = sigmoid(x @ params.w_o + h_prev @ params.u_o + params.b_o)
        cs[t] = f_g[t] * c_prev + i_g[t] * g_g[t]
        tanh_cs[t] = np.tanh(cs[t])
        hs[t] = o_g[t] * tanh_cs[t]
        h_prev = hs[t]
        c_prev = cs[t]

    cache = {
        "sequence": sequence,
        "hs": hs, "cs": cs, "tanh_cs": tanh_cs,
        "i": i_g, "f": f_g, "g": g_g, "o": o_g,
    }
    return hs, hs[-1].copy(), cache


def lstm_backward(
    params: LstmParams, cache: dict, d_hs: np.ndarray
) -> dict[str, np.ndarray]:
    """BPTT given upstream gradients for every hidden state.

    `d_hs` is (k, h); for a final-state-only consumer all rows but the last
    are zero. Returns gradients keyed like LstmParams.arrays().
    """
    seq = cache["sequence"]
    hs, cs, tanh_cs = cache["hs"], cache["cs"], cache["tanh_cs"]
    i_g, f_g, g_g, o_g = cache["i"], cache["f"], cache["g"], cache["o"]
    k, h = hs.shape
    d_hs = np.asarray(d_hs, dtype=float)
    if d_hs.shape != (k, h):
        raise ContractError(f"d_hs shape {d_hs.shape}, expected {(k, h)}")

    grads = {name: np.zeros_like(arr) for name, arr in params.arrays().items()}
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)
    for t in reversed(range(k)):
        h_prev = hs[t - 1] if t > 0 else np.zeros(h)
        c_prev = cs[t - 1] if t > 0 else np.zeros(h)
        dh = d_hs[t] + dh_next
        do = dh * tanh_cs[t]
        dc = dc_next + dh * o_g[t] * (1.0 - tanh_cs[t] ** 2)
        df = dc * c_prev
        di = dc * g_g[t]
        dg = dc * i_g[t]

        da_i = di * i_g[t] * (1.0 - i_g[t])
        da_f = df * f_g[t] * (1.0 - f_g[t])
        da_g = dg * (1.0 - g_g[t] ** 2)
        da_o = do * o_g[t] * (1.0 - o_g[t])

        x = seq[t]
        for name, da in zip(GATES, (da_i, da_f, da_g, da_o)):
            grads[f"w_{name}"] += np.outer(x, da)
            grads[f"u_{name}"] += np.outer(h_prev, da)
            grads[f"b_{name}"] += da

        dh_next = (
            da_i @ params.u_i.T
            + da_f @ params.u_f.T
            + da_g @ params.u_g.T
            + da_o @ params.u_o.T
        )
        dc_next = dc * f_g[t]
    return grads
