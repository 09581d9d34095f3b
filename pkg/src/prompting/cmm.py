"""Context modeling module: a bidirectional LSTM that writes frame-specific prompts."""

from typing import Dict, Optional, Tuple

from ..encoders import ParameterStore, frame_context
from ..numcore import DiffArray, concat, linear, sigmoid, tanh

Shape = Tuple[int, ...]
DIRECTIONS = ("fwd", "bwd")


def cmm_shapes(d: int, T: int, M_v: int) -> Dict[str, Shape]:
    """Two directions of 4-gate recurrences plus one head per frame."""
    shapes: Dict[str, Shape] = {}
    for direction in DIRECTIONS:
        shapes[f"cmm.{direction}.w_ih"] = (d, 4 * d)
        shapes[f"cmm.{direction}.w_hh"] = (d, 4 * d)
        shapes[f"cmm.{direction}.bias"] = (4 * d,)
    for f in range(T):
        shapes[f"cmm.head.f{f}.weight"] = (2 * d, M_v * d)
        shapes[f"cmm.head.f{f}.bias"] = (M_v * d,)
    return shapes


def _run_direction(contexts: DiffArray, store: ParameterStore, direction: str, reverse: bool):
    _, T, d = contexts.shape
    w_ih = store[f"cmm.{direction}.w_ih"]
    w_hh = store[f"cmm.{direction}.w_hh"]
    bias = store[f"cmm.{direction}.bias"]
    h = None
    c = None
    states = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        gates = linear(contexts[:, t], w_ih, bias)
        if h is not None:
            gates = gates + linear(h, w_hh)
        i = sigmoid(gates[:, :d])
        f = sigmoid(gates[:, d : 2 * d])
        g = tanh(gates[:, 2 * d : 3 * d])
        o = sigmoid(gates[:, 3 * d :])
        c = i * g if c is None else f * c + i * g
        h = o * tanh(c)
        states[t] = h
    return states


def _stack(states) -> DiffArray:
    n, d = states[0].shape
    return concat([h.reshape(n, 1, d) for h in states], axis=1)


def cmm_hidden(contexts: DiffArray, store: ParameterStore) -> Tuple[DiffArray, DiffArray]:
    """Forward and backward hidden states, each [n, T, d]."""
    fwd = _run_direction(contexts, store, "fwd", reverse=False)
    bwd = _run_direction(contexts, store, "bwd", reverse=True)
    return _stack(fwd), _stack(bwd)


def cmm_generate(contexts: DiffArray, store: ParameterStore, M_v: int) -> DiffArray:
    """Frame contexts [n, T, d] (or [T, d]) -> prompts [n, T, M_v, d] (or [T, M_v, d])."""
    single = contexts.ndim == 2
    if single:
        contexts = contexts.reshape((1,) + contexts.shape)
    n, T, d = contexts.shape
    fwd, bwd = cmm_hidden(contexts, store)
    hidden = concat([fwd, bwd], axis=-1)
    per_frame = [
        linear(hidden[:, f], store[f"cmm.head.f{f}.weight"], store[f"cmm.head.f{f}.bias"]).reshape(n, 1, M_v, d)
        for f in range(T)
    ]
    prompts = concat(per_frame, axis=1)
    return prompts.reshape(T, M_v, d) if single else prompts


class CMMPrompts:
    """Video prompt source running the CMM on each layer's incoming frame contexts."""

    def __init__(self, store: ParameterStore, T: int, N_p: int, M_v: int):
        self.store = store
        self.T = T
        self.N_p = N_p
        self.M_v = M_v

    def video_prompts(self, layer: int, tokens: DiffArray) -> Optional[DiffArray]:
        if self.M_v == 0:
            return None
        return cmm_generate(frame_context(tokens, self.T, self.N_p), self.store, self.M_v)
