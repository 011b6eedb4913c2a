"""Minimal dense-tensor engine with reverse-mode differentiation.

The op set is fixed: exactly the operations the tracking model needs.
Tensors wrap numpy arrays (rank <= 3), are immutable once created, and
every forward result is checked for NaN/Inf. Gradients are recorded on an
explicit Tape; one backward pass per forward pass.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

SINGLE = np.float32
DOUBLE = np.float64

# Additive mask value; large enough to zero out softmax entries in float32
# without producing inf (a true -inf would turn 0*inf into NaN in backward).
_NEG_MASK = -1e9


class TensorError(Exception):
    pass


class ShapeError(TensorError):
    pass


class NonFiniteError(TensorError):
    pass


class TapeError(TensorError):
    pass


class Tensor:
    """Immutable dense array, rank <= 3, float32 or float64."""

    __slots__ = ("data",)

    def __init__(self, data, dtype=SINGLE):
        arr = np.array(data, dtype=dtype)
        self._check(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # Internal fast path: takes ownership of a freshly created array.
        cls._check(arr)
        arr.setflags(write=False)
        obj = object.__new__(cls)
        object.__setattr__(obj, "data", arr)
        return obj

    @staticmethod
    def _check(arr: np.ndarray) -> None:
        if arr.ndim > 3:
            raise ShapeError(f"rank {arr.ndim} > 3 not supported (shape {arr.shape})")
        if arr.dtype not in (SINGLE, DOUBLE):
            raise TensorError(f"unsupported dtype {arr.dtype}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError("non-finite values in tensor")

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def astype(self, dtype) -> "Tensor":
        return Tensor._wrap(self.data.astype(dtype))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype})"


class Tape:
    """Ordered record of forward ops, consumed by a single backward pass."""

    def __init__(self):
        self._nodes: list[tuple[int, Callable]] = []
        # Keeps output tensors alive so id() keys stay unique.
        self._outputs: list[Tensor] = []
        self._consumed = False

    def record(self, out: Tensor, backward_fn: Callable) -> None:
        if self._consumed:
            raise TapeError("tape already consumed by backward; start a new forward pass")
        self._nodes.append((id(out), backward_fn))
        self._outputs.append(out)

    def __len__(self) -> int:
        return len(self._nodes)


def backward(tape: Tape, loss: Tensor, params: Iterable[Tensor] = ()) -> dict[int, np.ndarray]:
    """Run reverse-mode accumulation from `loss` over the tape.

    Returns gradients keyed by id(tensor). Parameters in `params` that are
    unreachable from the loss get explicit zero gradients. The tape is
    consumed and cleared; a second backward raises.
    """
    if tape._consumed:
        raise TapeError("double backward without a new forward pass")
    if loss.data.ndim != 0:
        raise ShapeError(f"backward expects a scalar loss, got shape {loss.shape}")
    params = list(params)
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
    for out_id, fn in reversed(tape._nodes):
        g = grads.get(out_id)
        if g is None:
            continue
        fn(g, grads)
    for p in params:
        if id(p) not in grads:
            grads[id(p)] = np.zeros(p.shape, dtype=p.dtype)
    tape._consumed = True
    tape._nodes.clear()
    tape._outputs.clear()
    return grads


def grad_of(grads: dict[int, np.ndarray], t: Tensor) -> np.ndarray:
    return grads[id(t)]


def _accumulate(grads: dict[int, np.ndarray], t: Tensor, g: np.ndarray) -> None:
    key = id(t)
    if key in grads:
        grads[key] = grads[key] + g
    else:
        grads[key] = g


# ---------------------------------------------------------------------------
# Ops


def matmul(a: Tensor, b: Tensor, transpose_b: bool = False, tape: Tape | None = None) -> Tensor:
    """Matrix product, optionally with b transposed on its last two axes.

    Supported shapes: (m,k)x(k,n), (B,m,k)x(k,n), (B,m,k)x(B,k,n). When b
    is 2-D and a is batched, b is shared across the batch and its gradient
    sums over it.
    """
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ShapeError(f"matmul needs matrices, got {ad.shape} x {bd.shape}")
    bt = np.swapaxes(bd, -1, -2) if transpose_b else bd
    if ad.shape[-1] != bt.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {ad.shape} x {bd.shape}"
                         f"{' (transposed)' if transpose_b else ''}")
    if ad.ndim == 2 and bd.ndim == 3:
        raise ShapeError(f"2-D x batched not supported: {ad.shape} x {bd.shape}")
    if ad.ndim == 3 and bd.ndim == 3 and ad.shape[0] != bd.shape[0]:
        raise ShapeError(f"batch dims disagree: {ad.shape} x {bd.shape}")
    out = Tensor._wrap(np.matmul(ad, bt))

    if tape is not None:
        def bwd(g, grads):
            da = np.matmul(g, np.swapaxes(bt, -1, -2))
            dbt = np.matmul(np.swapaxes(ad, -1, -2), g)
            if bd.ndim == 2 and dbt.ndim == 3:
                dbt = dbt.sum(axis=0)
            db = np.swapaxes(dbt, -1, -2) if transpose_b else dbt
            _accumulate(grads, a, da)
            _accumulate(grads, b, db)
        tape.record(out, bwd)
    return out


def _binary_check(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shapes differ {a.shape} vs {b.shape}")


def add(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _binary_check(a, b, "add")
    out = Tensor._wrap(a.data + b.data)
    if tape is not None:
        def bwd(g, grads):
            _accumulate(grads, a, g)
            _accumulate(grads, b, g)
        tape.record(out, bwd)
    return out


def sub(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _binary_check(a, b, "sub")
    out = Tensor._wrap(a.data - b.data)
    if tape is not None:
        def bwd(g, grads):
            _accumulate(grads, a, g)
            _accumulate(grads, b, -g)
        tape.record(out, bwd)
    return out


def hadamard(a: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    _binary_check(a, b, "hadamard")
    out = Tensor._wrap(a.data * b.data)
    if tape is not None:
        def bwd(g, grads):
            _accumulate(grads, a, g * b.data)
            _accumulate(grads, b, g * a.data)
        tape.record(out, bwd)
    return out


def relu(a: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(np.maximum(a.data, 0))
    if tape is not None:
        # Subgradient 0 at 0.
        keep = (a.data > 0).astype(a.dtype)

        def bwd(g, grads):
            _accumulate(grads, a, g * keep)
        tape.record(out, bwd)
    return out


def scale(a: Tensor, c: float, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(a.data * a.dtype.type(c))
    if tape is not None:
        def bwd(g, grads):
            _accumulate(grads, a, g * a.dtype.type(c))
        tape.record(out, bwd)
    return out


def concat_last(tensors: Sequence[Tensor], tape: Tape | None = None) -> Tensor:
    if not tensors:
        raise ShapeError("concat_last of zero tensors")
    lead = tensors[0].shape[:-1]
    for t in tensors[1:]:
        if t.shape[:-1] != lead:
            raise ShapeError(f"concat_last: leading dims differ "
                             f"{tensors[0].shape} vs {t.shape}")
    out = Tensor._wrap(np.concatenate([t.data for t in tensors], axis=-1))
    if tape is not None:
        sizes = [t.shape[-1] for t in tensors]

        def bwd(g, grads):
            offset = 0
            for t, sz in zip(tensors, sizes):
                _accumulate(grads, t, g[..., offset:offset + sz])
                offset += sz
        tape.record(out, bwd)
    return out


def split_last(t: Tensor, sizes: Sequence[int]) -> list[Tensor]:
    """Inverse of concat_last (forward-only helper)."""
    if sum(sizes) != t.shape[-1]:
        raise ShapeError(f"split_last sizes {sizes} do not sum to {t.shape[-1]}")
    parts, offset = [], 0
    for sz in sizes:
        parts.append(Tensor._wrap(np.ascontiguousarray(t.data[..., offset:offset + sz])))
        offset += sz
    return parts


def softmax_rows(x: Tensor, mask: np.ndarray | None = None, tape: Tape | None = None) -> Tensor:
    """Row-wise (last axis) softmax with boolean masking.

    Masked entries are exactly 0 in the output; each row's unmasked entries
    sum to 1. A fully masked row is an error.
    """
    xd = x.data
    if mask is not None:
        m = np.broadcast_to(np.asarray(mask, dtype=bool), xd.shape)
        if not m.any(axis=-1).all():
            raise ShapeError("softmax_rows: fully masked row")
        shifted = np.where(m, xd, xd.dtype.type(_NEG_MASK))
    else:
        m = None
        shifted = xd
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    if m is not None:
        e = np.where(m, e, 0)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor._wrap(y)
    if tape is not None:
        def bwd(g, grads):
            gy = g * y
            dx = gy - y * gy.sum(axis=-1, keepdims=True)
            _accumulate(grads, x, dx)
        tape.record(out, bwd)
    return out


def dropout(x: Tensor, rate: float, training: bool,
            rng: np.random.Generator | None = None, tape: Tape | None = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-rate); identity in eval mode."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0:
        return x
    if rng is None:
        raise ValueError("training-mode dropout needs an explicit rng")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1 - rate)
    out = Tensor._wrap(x.data * keep)
    if tape is not None:
        def bwd(g, grads):
            _accumulate(grads, x, g * keep)
        tape.record(out, bwd)
    return out


def gather_rows(table: Tensor, ids: np.ndarray, tape: Tape | None = None) -> Tensor:
    """Embedding lookup: out[..., :] = table[ids[...], :]."""
    ids = np.asarray(ids)
    if table.ndim != 2:
        raise ShapeError(f"gather_rows table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"row id out of range for table with {table.shape[0]} rows")
    out = Tensor._wrap(table.data[ids])
    if tape is not None:
        def bwd(g, grads):
            dt = np.zeros(table.shape, dtype=table.dtype)
            np.add.at(dt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
            _accumulate(grads, table, dt)
        tape.record(out, bwd)
    return out


def tsum(x: Tensor, tape: Tape | None = None) -> Tensor:
    out = Tensor._wrap(np.asarray(x.data.sum(), dtype=x.dtype))
    if tape is not None:
        def bwd(g, grads):
            _accumulate(grads, x, np.broadcast_to(g, x.shape).astype(x.dtype))
        tape.record(out, bwd)
    return out


def cross_entropy_sum(logits: Tensor, labels: np.ndarray, mask: np.ndarray,
                      tape: Tape | None = None) -> Tensor:
    """Sum over unmasked positions of -log softmax(logits)[label].

    logits has shape (..., 2); labels and mask share the leading shape.
    Gradient flows only to unmasked rows.
    """
    labels = np.asarray(labels)
    maskf = np.asarray(mask, dtype=logits.dtype)
    ld = logits.data
    if ld.shape[-1] != 2:
        raise ShapeError(f"cross_entropy_sum expects (...,2) logits, got {ld.shape}")
    if labels.shape != ld.shape[:-1] or maskf.shape != ld.shape[:-1]:
        raise ShapeError(f"labels/mask shape {labels.shape}/{maskf.shape} "
                         f"does not match logits {ld.shape}")
    if labels.size and not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    shifted = ld - ld.max(axis=-1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    logp = shifted - logz
    picked = np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]
    out = Tensor._wrap(np.asarray(-(maskf * picked).sum(), dtype=ld.dtype))
    if tape is not None:
        prob = np.exp(logp)
        onehot = np.zeros_like(ld)
        np.put_along_axis(onehot, labels[..., None], 1, axis=-1)

        def bwd(g, grads):
            _accumulate(grads, logits, g * maskf[..., None] * (prob - onehot))
        tape.record(out, bwd)
    return out


_ELEMENTWISE = {"add": add, "sub": sub, "hadamard": hadamard}


def elementwise(kind: str, a: Tensor, b: Tensor | None = None,
                tape: Tape | None = None) -> Tensor:
    """Dispatch wrapper for the pointwise op family."""
    if kind == "relu":
        if b is not None:
            raise TensorError("relu is unary")
        return relu(a, tape=tape)
    try:
        fn = _ELEMENTWISE[kind]
    except KeyError:
        raise TensorError(f"unknown elementwise kind {kind!r}") from None
    if b is None:
        raise TensorError(f"{kind} is binary")
    return fn(a, b, tape=tape)
