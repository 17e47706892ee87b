"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def init_adam_state(params: list[Tensor]) -> dict:
    return {
        "m": [np.zeros_like(p.data) for p in params],
        "v": [np.zeros_like(p.data) for p in params],
        "t": 0,
    }


def adam_step(params: list[Tensor], grads: list[np.ndarray], state: dict,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> dict:
    """One in-place Adam update; returns the mutated state for chaining."""
    if len(params) != len(grads):
        raise ValueError(f"adam_step: {len(params)} params but {len(grads)} grads")
    state["t"] += 1
    t = state["t"]
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g.shape != p.data.shape:
            raise ValueError(f"adam_step: grad shape {g.shape} != param shape {p.data.shape}")
        m = state["m"][i]
        v = state["v"][i]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return state


class Adam:
    """Convenience wrapper tying params, their .grad buffers and Adam state."""

    def __init__(self, params: list[Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = init_adam_state(self.params)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = []
        for p in self.params:
            grads.append(p.grad if p.grad is not None else np.zeros_like(p.data))
        adam_step(self.params, grads, self.state, self.lr, self.beta1, self.beta2, self.eps)

    def state_arrays(self, prefix: str) -> dict:
        """Flatten optimizer state into named arrays for checkpointing."""
        out = {f"{prefix}/t": np.asarray([self.state["t"]], dtype=np.float64)}
        for i, (m, v) in enumerate(zip(self.state["m"], self.state["v"])):
            out[f"{prefix}/m{i}"] = m
            out[f"{prefix}/v{i}"] = v
        return out

    def load_state_arrays(self, arrays: dict, prefix: str):
        self.state["t"] = int(arrays[f"{prefix}/t"][0])
        for i in range(len(self.params)):
            self.state["m"][i] = arrays[f"{prefix}/m{i}"].astype(self.params[i].dtype, copy=True)
            self.state["v"][i] = arrays[f"{prefix}/v{i}"].astype(self.params[i].dtype, copy=True)
