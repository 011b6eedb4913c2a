"""Adam optimizer over named parameter dicts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    """First/second moment estimates plus the step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, params: dict[str, Tensor], beta1: float = 0.9,
             beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            beta1=beta1, beta2=beta2, eps=eps, t=0,
            m={k: np.zeros(p.shape, dtype=p.dtype) for k, p in params.items()},
            v={k: np.zeros(p.shape, dtype=p.dtype) for k, p in params.items()},
        )


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray],
              state: AdamState, lr: float) -> dict[str, Tensor]:
    """One Adam update with bias correction; returns fresh parameter tensors."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    out: dict[str, Tensor] = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != param shape {p.shape} for {name}")
        m = state.m[name] = b1 * state.m[name] + (1 - b1) * g
        v = state.v[name] = b2 * state.v[name] + (1 - b2) * g * g
        m_hat = m / (1 - b1 ** state.t)
        v_hat = v / (1 - b2 ** state.t)
        out[name] = Tensor(p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps),
                           dtype=p.dtype)
    return out
