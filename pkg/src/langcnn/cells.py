"""Recurrent cells: simple RNN, LSTM (stackable), GRU, recurrent highway.

Every cell consumes z = [fused multimodal vector; previous word embedding]
(width 2K) and carries a hidden vector of width d. The LSTM additionally
carries a memory vector; stacked LSTM layers feed each layer the hidden
sequence of the layer below.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import DimensionError

CELL_KINDS = ("simple_rnn", "lstm", "gru", "rhn")
WEIGHT_INIT_RANGE = 0.08
LSTM_FORGET_BIAS = 1.0


@dataclass
class CellState:
    """Hidden vector r, plus the LSTM memory when the cell keeps one."""

    r: Tensor
    c_mem: Tensor | None = None


def make_input_z(m_t: Tensor, x_prev: Tensor) -> Tensor:
    """Concatenate the fused vector and the previous word embedding."""
    if m_t.ndim != 1 or x_prev.ndim != 1 or m_t.shape != x_prev.shape:
        raise DimensionError(
            f"z halves must be equal-width vectors, got {m_t.shape} and "
            f"{x_prev.shape}"
        )
    return ag.concat_vec([m_t, x_prev])


def initial_state(kind: str, layers: int, hidden_dim: int) -> list[CellState]:
    zeros = lambda: Tensor(np.zeros(hidden_dim))
    if kind == "lstm":
        return [CellState(zeros(), zeros()) for _ in range(layers)]
    return [CellState(zeros()) for _ in range(layers)]


def init_cell_params(
    kind: str,
    input_dim: int,
    hidden_dim: int,
    rng: np.random.Generator,
    layers: int = 1,
) -> dict[str, Tensor]:
    """Weights and biases uniform in [-0.08, 0.08], except the LSTM forget
    gate bias, which starts at 1.0 so early training does not wipe the
    memory."""
    if kind not in CELL_KINDS:
        raise ValueError(f"unknown cell kind {kind!r}")
    if layers < 1 or (layers > 1 and kind != "lstm"):
        raise ValueError(f"{kind} supports a single layer, got layers={layers}")

    def uniform(*shape):
        return Tensor(
            rng.uniform(-WEIGHT_INIT_RANGE, WEIGHT_INIT_RANGE, size=shape),
            requires_grad=True,
        )

    d = hidden_dim
    params: dict[str, Tensor] = {}
    if kind == "simple_rnn":
        params["l0_w_r"] = uniform(d, d)
        params["l0_w_z"] = uniform(d, input_dim)
        params["l0_b"] = uniform(d)
    elif kind == "lstm":
        for layer in range(layers):
            in_dim = input_dim if layer == 0 else d
            for gate in ("i", "f", "o", "g"):
                params[f"l{layer}_w_{gate}"] = uniform(d, in_dim)
                params[f"l{layer}_u_{gate}"] = uniform(d, d)
                params[f"l{layer}_b_{gate}"] = (
                    Tensor(np.full(d, LSTM_FORGET_BIAS), requires_grad=True)
                    if gate == "f"
                    else uniform(d)
                )
    elif kind == "gru":
        for gate in ("u", "s", "h"):
            params[f"l0_w_{gate}"] = uniform(d, input_dim)
            params[f"l0_u_{gate}"] = uniform(d, d)
            params[f"l0_b_{gate}"] = uniform(d)
    else:  # rhn
        params["l0_m_w"] = uniform(3 * d, input_dim + d)
        params["l0_m_b"] = uniform(3 * d)
    return params


def _affine(w: Tensor, x: Tensor, b: Tensor) -> Tensor:
    return ag.add(ag.matmul(w, x), b)


def _gate(w: Tensor, z: Tensor, u: Tensor, r: Tensor, b: Tensor, act) -> Tensor:
    return act(ag.add(ag.add(ag.matmul(w, z), ag.matmul(u, r)), b))


def rnn_step(state: CellState, z: Tensor, params, prefix: str = "l0_") -> CellState:
    """r' = tanh(W_r r + W_z z + b)."""
    pre = ag.add(
        ag.add(
            ag.matmul(params[prefix + "w_r"], state.r),
            ag.matmul(params[prefix + "w_z"], z),
        ),
        params[prefix + "b"],
    )
    return CellState(ag.tanh(pre))


def lstm_step(state: CellState, z: Tensor, params, prefix: str = "l0_") -> CellState:
    if state.c_mem is None:
        raise ValueError("lstm step needs a memory vector in the state")
    p = lambda name: params[prefix + name]
    i = _gate(p("w_i"), z, p("u_i"), state.r, p("b_i"), ag.sigmoid)
    f = _gate(p("w_f"), z, p("u_f"), state.r, p("b_f"), ag.sigmoid)
    o = _gate(p("w_o"), z, p("u_o"), state.r, p("b_o"), ag.sigmoid)
    g = _gate(p("w_g"), z, p("u_g"), state.r, p("b_g"), ag.tanh)
    c_new = ag.add(ag.mul(f, state.c_mem), ag.mul(i, g))
    return CellState(ag.mul(o, ag.tanh(c_new)), c_new)


def gru_step(state: CellState, z: Tensor, params, prefix: str = "l0_") -> CellState:
    p = lambda name: params[prefix + name]
    u = _gate(p("w_u"), z, p("u_u"), state.r, p("b_u"), ag.sigmoid)
    s = _gate(p("w_s"), z, p("u_s"), state.r, p("b_s"), ag.sigmoid)
    cand = ag.tanh(
        ag.add(
            ag.add(
                ag.matmul(p("w_h"), z),
                ag.matmul(p("u_h"), ag.mul(s, state.r)),
            ),
            p("b_h"),
        )
    )
    keep = ag.scale_shift(u, -1.0, 1.0)
    return CellState(ag.add(ag.mul(keep, state.r), ag.mul(u, cand)))


def rhn_step(state: CellState, z: Tensor, params, prefix: str = "l0_") -> CellState:
    """One highway recurrence: r' = h*t + r*c with (t, c, h) cut from one
    affine map of [r; z]."""
    d = state.r.shape[0]
    joint = ag.concat_vec([state.r, z])
    a = _affine(params[prefix + "m_w"], joint, params[prefix + "m_b"])
    t_gate = ag.sigmoid(ag.slice_vec(a, 0, d))
    c_gate = ag.sigmoid(ag.slice_vec(a, d, 2 * d))
    h = ag.tanh(ag.slice_vec(a, 2 * d, 3 * d))
    return CellState(ag.add(ag.mul(h, t_gate), ag.mul(c_gate, state.r)))


_STEP_FNS = {
    "simple_rnn": rnn_step,
    "lstm": lstm_step,
    "gru": gru_step,
    "rhn": rhn_step,
}


def step_stack(
    kind: str, states: list[CellState], z: Tensor, params, base: str = ""
) -> list[CellState]:
    """Advance every layer; layer n > 0 consumes layer n-1's new hidden.

    ``base`` prefixes every parameter name, so the cell block can live
    inside a larger parameter dictionary.
    """
    step_fn = _STEP_FNS[kind]
    new_states: list[CellState] = []
    layer_input = z
    for layer, state in enumerate(states):
        new = step_fn(state, layer_input, params, prefix=f"{base}l{layer}_")
        new_states.append(new)
        layer_input = new.r
    return new_states
