"""Finite-difference gradient checking for tape-recorded closures."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import DOUBLE, Tape, Tensor, backward, grad_of


def grad_check(f: Callable[[dict[str, Tensor], Tape | None], Tensor],
               params: dict[str, Tensor],
               eps: float = 1e-5,
               max_coords_per_param: int = 20,
               rng: np.random.Generator | None = None) -> float:
    """Compare analytic gradients against central finite differences.

    `f(params, tape)` must be a deterministic scalar closure (dropout off,
    fixed inputs); passing tape=None evaluates forward-only. Parameters are
    promoted to double precision. Checks a random subsample of coordinates
    per parameter and returns the worst relative error.
    """
    rng = rng or np.random.default_rng(0)
    dparams = {k: p.astype(DOUBLE) for k, p in params.items()}

    v1 = f(dparams, None).item()
    v2 = f(dparams, None).item()
    if v1 != v2:
        raise ValueError("closure is not deterministic: repeated evaluations differ")

    tape = Tape()
    loss = f(dparams, tape)
    grads = backward(tape, loss, dparams.values())

    worst = 0.0
    for name, p in dparams.items():
        analytic = grad_of(grads, p).reshape(-1)
        n = p.data.size
        coords = (np.arange(n) if n <= max_coords_per_param
                  else rng.choice(n, size=max_coords_per_param, replace=False))
        flat = p.data.reshape(-1)
        for c in coords:
            bumped = flat.copy()
            bumped[c] += eps
            plus = _eval_with(f, dparams, name, bumped.reshape(p.shape))
            bumped[c] -= 2 * eps
            minus = _eval_with(f, dparams, name, bumped.reshape(p.shape))
            numeric = (plus - minus) / (2 * eps)
            a = analytic[c]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


def _eval_with(f, params: dict[str, Tensor], name: str, value: np.ndarray) -> float:
    patched = dict(params)
    patched[name] = Tensor(value, dtype=DOUBLE)
    return f(patched, None).item()
