"""Dense float64 tensors with reverse-mode differentiation.

Operations record their inputs and a local backward rule as they execute
(define-by-run), so the recorded program is rebuilt on every forward pass.
``backward(loss)`` linearises the recording reachable from ``loss`` into
creation order and replays it in reverse, accumulating into ``.grad``.
Gradients are summed over every use of a tensor, never overwritten.

Broadcasting is deliberately restricted: binary elementwise ops accept
exactly matching shapes, or a matrix paired with a vector whose length
equals the matrix row width (the vector is applied to every row).
Anything else raises DimensionError rather than silently broadcasting.

A recording and the tensors it references belong to a single thread; the
grad-mode switch below is thread-local so inference threads can run with
recording disabled without racing trainers.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable recording inside the block; forward values are unaffected."""
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """A float64 array plus an optional gradient accumulator.

    ``grad`` is allocated (zero-filled) exactly when ``requires_grad`` is
    set, and always has the same shape as ``data``.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_rule")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._rule: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(data: np.ndarray, parents: Sequence[Tensor], rule) -> Tensor:
    """Wrap an op result, attaching the backward rule when recording."""
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.grad = np.zeros_like(out.data)
        out._parents = tuple(parents)
        out._rule = rule
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into every reachable ``requires_grad`` tensor.

    ``loss`` must be a scalar (a single element). Visits each recorded
    operation exactly once, in reverse creation order.
    """
    if loss.data.size != 1:
        raise ValueError(
            f"backward expects a scalar loss, got shape {loss.data.shape}"
        )
    # Iterative topological sort; recursion would overflow on long programs.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    if loss.grad is None:
        loss.grad = np.zeros_like(loss.data)
    loss.grad += 1.0
    for node in reversed(order):
        if node._rule is not None:
            node._rule(node.grad)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.requires_grad:
        t.grad += g


# ---------------------------------------------------------------------------
# binary elementwise


def _broadcast_mode(a: Tensor, b: Tensor) -> str:
    if a.data.shape == b.data.shape:
        return "exact"
    if a.ndim == 2 and b.ndim == 1 and a.shape[1] == b.shape[0]:
        return "row_b"  # b applied to every row of a
    if a.ndim == 1 and b.ndim == 2 and b.shape[1] == a.shape[0]:
        return "row_a"
    raise DimensionError(
        f"cannot combine shapes {a.data.shape} and {b.data.shape}; only "
        "exact-shape and vector-over-rows broadcasting are supported"
    )


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    mode = _broadcast_mode(a, b)
    data = a.data + b.data

    def rule(g: np.ndarray) -> None:
        _accumulate(a, g.sum(axis=0) if mode == "row_a" else g)
        _accumulate(b, g.sum(axis=0) if mode == "row_b" else g)

    return _record(data, (a, b), rule)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    mode = _broadcast_mode(a, b)
    data = a.data * b.data

    def rule(g: np.ndarray) -> None:
        ga = g * b.data
        gb = g * a.data
        _accumulate(a, ga.sum(axis=0) if mode == "row_a" else ga)
        _accumulate(b, gb.sum(axis=0) if mode == "row_b" else gb)

    return _record(data, (a, b), rule)


def scale_shift(x: Tensor, alpha: float, beta: float = 0.0) -> Tensor:
    """alpha * x + beta with scalar constants."""
    x = _as_tensor(x)
    data = alpha * x.data + beta

    def rule(g: np.ndarray) -> None:
        _accumulate(x, alpha * g)

    return _record(data, (x,), rule)


# ---------------------------------------------------------------------------
# unary elementwise


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    with np.errstate(over="ignore"):
        data = 1.0 / (1.0 + np.exp(-x.data))

    def rule(g: np.ndarray) -> None:
        _accumulate(x, g * data * (1.0 - data))

    return _record(data, (x,), rule)


def tanh(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.tanh(x.data)

    def rule(g: np.ndarray) -> None:
        _accumulate(x, g * (1.0 - data * data))

    return _record(data, (x,), rule)


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.maximum(x.data, 0.0)

    def rule(g: np.ndarray) -> None:
        _accumulate(x, g * (x.data > 0.0))

    return _record(data, (x,), rule)


SCALED_TANH_GAIN = 1.7159
SCALED_TANH_SLOPE = 2.0 / 3.0


def scaled_tanh(x: Tensor) -> Tensor:
    """1.7159 * tanh(2x/3); range (-1.7159, 1.7159)."""
    x = _as_tensor(x)
    inner = np.tanh(SCALED_TANH_SLOPE * x.data)
    data = SCALED_TANH_GAIN * inner

    def rule(g: np.ndarray) -> None:
        _accumulate(
            x, g * (SCALED_TANH_GAIN * SCALED_TANH_SLOPE) * (1.0 - inner * inner)
        )

    return _record(data, (x,), rule)


# ---------------------------------------------------------------------------
# linear algebra and structure


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D @ 2-D or 2-D @ 1-D product."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim not in (1, 2):
        raise DimensionError(
            f"matmul supports (m,k)@(k,n) or (m,k)@(k,), got {a.shape} and {b.shape}"
        )
    if a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul inner dimensions differ: {a.shape} vs {b.shape}"
        )
    data = a.data @ b.data

    def rule(g: np.ndarray) -> None:
        if b.ndim == 2:
            _accumulate(a, g @ b.data.T)
            _accumulate(b, a.data.T @ g)
        else:
            _accumulate(a, np.outer(g, b.data))
            _accumulate(b, a.data.T @ g)

    return _record(data, (a, b), rule)


def sum_all(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = np.asarray(x.data.sum())

    def rule(g: np.ndarray) -> None:
        _accumulate(x, np.full_like(x.data, float(g)))

    return _record(data, (x,), rule)


def mean_rows(x: Tensor) -> Tensor:
    """Column-wise mean of a 2-D tensor, as a vector."""
    x = _as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"mean_rows expects a matrix, got shape {x.shape}")
    m = x.shape[0]
    data = x.data.mean(axis=0)

    def rule(g: np.ndarray) -> None:
        _accumulate(x, np.tile(g / m, (m, 1)))

    return _record(data, (x,), rule)


def concat_rows(parts: Sequence[Tensor]) -> Tensor:
    """Stack parts vertically into a matrix.

    1-D parts of width K count as single rows; 2-D parts must share the
    same column width. Gradients split back to the original shapes.
    """
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat_rows needs at least one part")
    width = parts[0].shape[-1]
    rows = []
    for p in parts:
        if p.ndim not in (1, 2) or p.shape[-1] != width:
            raise DimensionError(
                f"concat_rows parts must share column width {width}, "
                f"got shape {p.shape}"
            )
        rows.append(p.data.reshape(-1, width))
    data = np.concatenate(rows, axis=0)

    def rule(g: np.ndarray) -> None:
        at = 0
        for p in parts:
            n = 1 if p.ndim == 1 else p.shape[0]
            chunk = g[at : at + n]
            _accumulate(p, chunk[0] if p.ndim == 1 else chunk)
            at += n

    return _record(data, tuple(parts), rule)


def concat_vec(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate 1-D tensors end to end."""
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat_vec needs at least one part")
    for p in parts:
        if p.ndim != 1:
            raise DimensionError(f"concat_vec expects vectors, got shape {p.shape}")
    data = np.concatenate([p.data for p in parts])

    def rule(g: np.ndarray) -> None:
        at = 0
        for p in parts:
            n = p.shape[0]
            _accumulate(p, g[at : at + n])
            at += n

    return _record(data, tuple(parts), rule)


def slice_vec(x: Tensor, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    if x.ndim != 1:
        raise DimensionError(f"slice_vec expects a vector, got shape {x.shape}")
    if not (0 <= start <= stop <= x.shape[0]):
        raise DimensionError(
            f"slice [{start}:{stop}] out of range for length {x.shape[0]}"
        )
    data = x.data[start:stop].copy()

    def rule(g: np.ndarray) -> None:
        if x.requires_grad:
            x.grad[start:stop] += g

    return _record(data, (x,), rule)


def flatten(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    data = x.data.reshape(-1).copy()

    def rule(g: np.ndarray) -> None:
        _accumulate(x, g.reshape(x.data.shape))

    return _record(data, (x,), rule)


def embedding_lookup(table: Tensor, index: int) -> Tensor:
    """Select one row of a 2-D table; the gradient scatters back to it."""
    table = _as_tensor(table)
    if table.ndim != 2:
        raise DimensionError(f"embedding table must be 2-D, got {table.shape}")
    index = int(index)
    if not (0 <= index < table.shape[0]):
        raise IndexError(
            f"embedding index {index} out of range for table with "
            f"{table.shape[0]} rows"
        )
    data = table.data[index].copy()

    def rule(g: np.ndarray) -> None:
        if table.requires_grad:
            table.grad[index] += g

    return _record(data, (table,), rule)


def unfold_windows(x: Tensor, kernel: int) -> Tensor:
    """Flatten every run of ``kernel`` consecutive rows into one output row.

    (M, K) -> (M - kernel + 1, kernel*K); row i is x[i : i+kernel] flattened.
    """
    x = _as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"unfold_windows expects a matrix, got {x.shape}")
    m, k = x.shape
    if not (1 <= kernel <= m):
        raise DimensionError(f"kernel {kernel} does not fit temporal length {m}")
    m_out = m - kernel + 1
    data = np.empty((m_out, kernel * k))
    for j in range(kernel):
        data[:, j * k : (j + 1) * k] = x.data[j : j + m_out]

    def rule(g: np.ndarray) -> None:
        if x.requires_grad:
            for j in range(kernel):
                x.grad[j : j + m_out] += g[:, j * k : (j + 1) * k]

    return _record(data, (x,), rule)


def max_pool_rows(x: Tensor, kernel: int = 2, stride: int = 2) -> Tensor:
    """Temporal max over row blocks, per column. Ties route to the first row."""
    x = _as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"max_pool_rows expects a matrix, got {x.shape}")
    m, k = x.shape
    if kernel > m:
        raise DimensionError(f"pool kernel {kernel} does not fit length {m}")
    m_out = (m - kernel) // stride + 1
    data = np.empty((m_out, k))
    argrows = np.empty((m_out, k), dtype=np.intp)
    for i in range(m_out):
        block = x.data[i * stride : i * stride + kernel]
        local = block.argmax(axis=0)
        argrows[i] = i * stride + local
        data[i] = block[local, np.arange(k)]

    def rule(g: np.ndarray) -> None:
        if x.requires_grad:
            cols = np.broadcast_to(np.arange(k), (m_out, k))
            np.add.at(x.grad, (argrows, cols), g)

    return _record(data, (x,), rule)


# ---------------------------------------------------------------------------
# softmax family


def softmax(logits: np.ndarray) -> np.ndarray:
    """Numerically stable softmax of a 1-D array (plain numpy, no recording)."""
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def softmax_cross_entropy(logits: Tensor, target: int) -> Tensor:
    """-log softmax(logits)[target] as a scalar; stable via max subtraction.

    Backward is softmax(logits) minus the one-hot target.
    """
    logits = _as_tensor(logits)
    if logits.ndim != 1:
        raise DimensionError(
            f"softmax_cross_entropy expects a logit vector, got {logits.shape}"
        )
    if not np.all(np.isfinite(logits.data)):
        raise ValueError("softmax_cross_entropy requires finite logits")
    target = int(target)
    if not (0 <= target < logits.shape[0]):
        raise IndexError(
            f"target {target} out of range for {logits.shape[0]} classes"
        )
    shifted = logits.data - logits.data.max()
    lse = np.log(np.exp(shifted).sum())
    data = np.asarray(lse - shifted[target])
    probs = np.exp(shifted - lse)

    def rule(g: np.ndarray) -> None:
        if logits.requires_grad:
            gg = probs * float(g)
            gg[target] -= float(g)
            logits.grad += gg

    return _record(data, (logits,), rule)
